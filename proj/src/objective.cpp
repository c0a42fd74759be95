#include "npgflow/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "npgflow/common.hpp"

namespace npgflow {

namespace {

// Importance weight denominator for one record, with the floor re-checked so
// a view over a foreign dataset cannot smuggle in near-zero propensities.
double checked_propensity(const DatasetView& split, std::size_t k,
                          const LoggedInteraction& r) {
  double pb = r.propensities[r.action];
  if (pb < split.dataset().overlap_floor() - 1e-15)
    throw std::runtime_error("record " + std::to_string(split.indices()[k]) +
                             ": behavior propensity " + std::to_string(pb) +
                             " below overlap floor");
  return pb;
}

}  // namespace

double entropy_of_policy_at_context(const Eigen::VectorXd& probs) {
  if (probs.size() == 0) throw std::invalid_argument("entropy: empty distribution");
  double s = 0.0;
  double h = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    double p = probs[a];
    if (!(p > 0.0))
      throw std::invalid_argument("entropy estimator requires interior policies "
                                  "(zero probability in support)");
    h += p * std::log(p);
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("entropy: probabilities do not sum to 1");
  return h;
}

double empirical_soft_value(const DatasetView& split, const PolicyClass& pc,
                            const PolicyParams& params, const SoftValueConfig& config) {
  if (split.size() == 0) throw std::invalid_argument("empirical_soft_value: empty split");
  const double lambda = config.lambda;
  KahanSum value_sum;
  KahanSum entropy_sum;
  for (std::size_t k = 0; k < split.size(); ++k) {
    const LoggedInteraction& r = split.record(k);
    double pb = checked_propensity(split, k, r);
    Eigen::VectorXd probs = pc.action_probabilities(params, r.context);
    double w = probs[r.action] / pb;
    value_sum.add(w * r.reward);
    if (config.entropy_estimator == EntropyEstimator::ExactContextAverage) {
      entropy_sum.add(entropy_of_policy_at_context(probs));
    } else {
      entropy_sum.add(w * clamped_log(probs[r.action]));
    }
  }
  const double n = static_cast<double>(split.size());
  return value_sum.value() / n - lambda * (entropy_sum.value() / n);
}

double population_soft_value(const SyntheticEnv& env, const PolicyClass& pc,
                             const PolicyParams& params, double lambda) {
  double j = 0.0;
  for (int m = 0; m < env.num_contexts(); ++m) {
    Eigen::VectorXd probs = pc.action_probabilities(params, env.context(m));
    double inner = 0.0;
    for (int a = 0; a < env.num_actions(); ++a)
      inner += probs[a] * (env.mean_reward()(m, a) - lambda * clamped_log(probs[a]));
    j += env.context_weights()[m] * inner;
  }
  return j;
}

double population_value(const SyntheticEnv& env, const PolicyClass& pc,
                        const PolicyParams& params) {
  double v = 0.0;
  for (int m = 0; m < env.num_contexts(); ++m) {
    Eigen::VectorXd probs = pc.action_probabilities(params, env.context(m));
    v += env.context_weights()[m] * probs.dot(env.mean_reward().row(m).transpose());
  }
  return v;
}

std::optional<DiscreteMoments> build_discrete_moments(const DatasetView& split,
                                                      int num_contexts) {
  if (split.size() == 0) throw std::invalid_argument("build_discrete_moments: empty split");
  if (split.dataset().context_kind() != ContextKind::Discrete) return std::nullopt;
  const int k_actions = split.num_actions();
  std::vector<KahanSum> wsum(static_cast<std::size_t>(num_contexts) * k_actions);
  std::vector<KahanSum> wy(static_cast<std::size_t>(num_contexts) * k_actions);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(num_contexts);
  for (std::size_t k = 0; k < split.size(); ++k) {
    const LoggedInteraction& r = split.record(k);
    int m = r.context.id();
    if (m >= num_contexts)
      throw std::invalid_argument("build_discrete_moments: context id " +
                                  std::to_string(m) + " outside [0, " +
                                  std::to_string(num_contexts) + ")");
    double pb = checked_propensity(split, k, r);
    std::size_t cell = static_cast<std::size_t>(m) * k_actions + r.action;
    wsum[cell].add(1.0 / pb);
    wy[cell].add(r.reward / pb);
    count[m] += 1.0;
  }
  DiscreteMoments out;
  out.n = static_cast<Eigen::Index>(split.size());
  out.inv_propensity_sum.resize(num_contexts, k_actions);
  out.weighted_reward_sum.resize(num_contexts, k_actions);
  for (int m = 0; m < num_contexts; ++m) {
    for (int a = 0; a < k_actions; ++a) {
      std::size_t cell = static_cast<std::size_t>(m) * k_actions + a;
      out.inv_propensity_sum(m, a) = wsum[cell].value();
      out.weighted_reward_sum(m, a) = wy[cell].value();
    }
  }
  out.context_count = count;
  return out;
}

double empirical_soft_value_from_moments(const DiscreteMoments& m, const PolicyClass& pc,
                                         const PolicyParams& params,
                                         const SoftValueConfig& config) {
  const int contexts = static_cast<int>(m.inv_propensity_sum.rows());
  const int k_actions = static_cast<int>(m.inv_propensity_sum.cols());
  double value = 0.0;
  double entropy = 0.0;
  for (int ctx = 0; ctx < contexts; ++ctx) {
    if (m.context_count[ctx] == 0.0) continue;
    Eigen::VectorXd probs = pc.action_probabilities(params, Context::discrete(ctx));
    for (int a = 0; a < k_actions; ++a) {
      value += probs[a] * m.weighted_reward_sum(ctx, a);
      if (config.entropy_estimator == EntropyEstimator::ISWeighted)
        entropy += probs[a] * clamped_log(probs[a]) * m.inv_propensity_sum(ctx, a);
    }
    if (config.entropy_estimator == EntropyEstimator::ExactContextAverage)
      entropy += m.context_count[ctx] * entropy_of_policy_at_context(probs);
  }
  const double n = static_cast<double>(m.n);
  return value / n - config.lambda * (entropy / n);
}

namespace {

// Shared gradient accumulation: given per-(context, action) coefficients
// c_value on w*Y*s and the entropy mode, pushes the contribution of context
// ctx into grad. probs and score rows are evaluated once per context.
void accumulate_gradient_for_context(const PolicyClass& pc, const Context& x,
                                     const Eigen::VectorXd& probs,
                                     const Eigen::VectorXd& value_coeff,
                                     double exact_entropy_weight,
                                     const Eigen::VectorXd& is_entropy_coeff,
                                     double lambda, Eigen::VectorXd& grad,
                                     Eigen::VectorXd& scratch) {
  const int k_actions = static_cast<int>(probs.size());
  for (int a = 0; a < k_actions; ++a) {
    double coeff = value_coeff[a];
    if (exact_entropy_weight != 0.0)
      coeff -= lambda * exact_entropy_weight * probs[a] * clamped_log(probs[a]);
    if (is_entropy_coeff.size() > 0)
      coeff -= lambda * is_entropy_coeff[a] * (clamped_log(probs[a]) + 1.0);
    if (coeff == 0.0) continue;
    pc.score_row(x, a, probs, scratch);
    grad += coeff * scratch;
  }
}

}  // namespace

ValueAndGrad empirical_value_and_gradient_from_moments(const DiscreteMoments& m,
                                                       const PolicyClass& pc,
                                                       const PolicyParams& params,
                                                       const SoftValueConfig& config) {
  const int contexts = static_cast<int>(m.inv_propensity_sum.rows());
  const int k_actions = static_cast<int>(m.inv_propensity_sum.cols());
  const double n = static_cast<double>(m.n);
  ValueAndGrad out;
  out.grad = Eigen::VectorXd::Zero(pc.param_dim());
  Eigen::VectorXd scratch(pc.param_dim());
  double value = 0.0;
  double entropy = 0.0;
  Eigen::VectorXd value_coeff(k_actions);
  Eigen::VectorXd is_coeff;
  for (int ctx = 0; ctx < contexts; ++ctx) {
    if (m.context_count[ctx] == 0.0) continue;
    Context x = Context::discrete(ctx);
    Eigen::VectorXd probs = pc.action_probabilities(params, x);
    double exact_w = 0.0;
    if (config.entropy_estimator == EntropyEstimator::ExactContextAverage) {
      entropy += m.context_count[ctx] * entropy_of_policy_at_context(probs);
      exact_w = m.context_count[ctx];
      is_coeff.resize(0);
    } else {
      is_coeff.resize(k_actions);
    }
    for (int a = 0; a < k_actions; ++a) {
      value += probs[a] * m.weighted_reward_sum(ctx, a);
      value_coeff[a] = probs[a] * m.weighted_reward_sum(ctx, a);
      if (config.entropy_estimator == EntropyEstimator::ISWeighted) {
        entropy += probs[a] * clamped_log(probs[a]) * m.inv_propensity_sum(ctx, a);
        is_coeff[a] = probs[a] * m.inv_propensity_sum(ctx, a);
      }
    }
    accumulate_gradient_for_context(pc, x, probs, value_coeff, exact_w, is_coeff,
                                    config.lambda, out.grad, scratch);
  }
  out.value = value / n - config.lambda * (entropy / n);
  out.grad /= n;
  return out;
}

ValueAndGrad empirical_value_and_gradient(const DatasetView& split, const PolicyClass& pc,
                                          const PolicyParams& params,
                                          const SoftValueConfig& config) {
  if (split.size() == 0)
    throw std::invalid_argument("empirical_value_and_gradient: empty split");
  const double lambda = config.lambda;
  const int d = pc.param_dim();
  ValueAndGrad out;
  out.grad = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd scratch(d);
  KahanSum value_sum;
  KahanSum entropy_sum;
  for (std::size_t k = 0; k < split.size(); ++k) {
    const LoggedInteraction& r = split.record(k);
    double pb = checked_propensity(split, k, r);
    Eigen::VectorXd probs = pc.action_probabilities(params, r.context);
    double w = probs[r.action] / pb;
    value_sum.add(w * r.reward);
    // d/dtheta of w * Y: Y/pi_b * pi(a) * s(a) = w * Y * s(a).
    pc.score_row(r.context, r.action, probs, scratch);
    out.grad += (w * r.reward) * scratch;
    if (config.entropy_estimator == EntropyEstimator::ExactContextAverage) {
      entropy_sum.add(entropy_of_policy_at_context(probs));
      // d/dtheta H(pi)(x) = sum_a pi(a) log pi(a) s(a); the +1 term cancels
      // against the centered scores.
      for (int a = 0; a < pc.num_actions(); ++a) {
        double coeff = probs[a] * clamped_log(probs[a]);
        if (coeff == 0.0) continue;
        pc.score_row(r.context, a, probs, scratch);
        out.grad -= lambda * coeff * scratch;
      }
    } else {
      entropy_sum.add(w * clamped_log(probs[r.action]));
      pc.score_row(r.context, r.action, probs, scratch);
      out.grad -= lambda * w * (clamped_log(probs[r.action]) + 1.0) * scratch;
    }
  }
  const double n = static_cast<double>(split.size());
  out.value = value_sum.value() / n - lambda * (entropy_sum.value() / n);
  out.grad /= n;
  return out;
}

}  // namespace npgflow
