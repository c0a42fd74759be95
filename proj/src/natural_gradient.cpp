#include "npgflow/natural_gradient.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "npgflow/common.hpp"

namespace npgflow {

namespace {

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

FisherAndLinear assemble_fisher_and_linear(const DatasetView& split, const PolicyClass& pc,
                                           const PolicyParams& params, double lambda) {
  if (split.size() == 0) throw std::invalid_argument("assemble: empty split");
  const int d = pc.param_dim();
  FisherAndLinear out;
  out.fisher = Eigen::MatrixXd::Zero(d, d);
  out.linear = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd s(d);
  for (std::size_t k = 0; k < split.size(); ++k) {
    const LoggedInteraction& r = split.record(k);
    double pb = checked_propensity(split, k, r);
    Eigen::VectorXd probs = pc.action_probabilities(params, r.context);
    double w = probs[r.action] / pb;
    pc.score_row(r.context, r.action, probs, s);
    out.fisher.selfadjointView<Eigen::Lower>().rankUpdate(s, w);
    out.linear += w * (r.reward - lambda * clamped_log(probs[r.action])) * s;
  }
  const double n = static_cast<double>(split.size());
  Eigen::MatrixXd full = out.fisher.selfadjointView<Eigen::Lower>();
  out.fisher = full / n;
  out.linear /= n;
  return out;
}

FisherAndLinear assemble_fisher_and_linear_from_moments(const DiscreteMoments& m,
                                                        const PolicyClass& pc,
                                                        const PolicyParams& params,
                                                        double lambda) {
  const int contexts = static_cast<int>(m.inv_propensity_sum.rows());
  const int k_actions = static_cast<int>(m.inv_propensity_sum.cols());
  const int d = pc.param_dim();
  FisherAndLinear out;
  out.fisher = Eigen::MatrixXd::Zero(d, d);
  out.linear = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd s(d);
  for (int ctx = 0; ctx < contexts; ++ctx) {
    if (m.context_count[ctx] == 0.0) continue;
    Context x = Context::discrete(ctx);
    Eigen::VectorXd probs = pc.action_probabilities(params, x);
    for (int a = 0; a < k_actions; ++a) {
      double wsum = m.inv_propensity_sum(ctx, a);
      double wy = m.weighted_reward_sum(ctx, a);
      if (wsum == 0.0 && wy == 0.0) continue;
      pc.score_row(x, a, probs, s);
      out.fisher.selfadjointView<Eigen::Lower>().rankUpdate(s, probs[a] * wsum);
      out.linear += probs[a] * (wy - lambda * clamped_log(probs[a]) * wsum) * s;
    }
  }
  const double n = static_cast<double>(m.n);
  Eigen::MatrixXd full = out.fisher.selfadjointView<Eigen::Lower>();
  out.fisher = full / n;
  out.linear /= n;
  return out;
}

Eigen::MatrixXd assemble_fisher(const DatasetView& split, const PolicyClass& pc,
                                const PolicyParams& params) {
  return assemble_fisher_and_linear(split, pc, params, 0.0).fisher;
}

Eigen::VectorXd assemble_linear_term(const DatasetView& split, const PolicyClass& pc,
                                     const PolicyParams& params, double lambda) {
  return assemble_fisher_and_linear(split, pc, params, lambda).linear;
}

double auto_ridge(const Eigen::MatrixXd& fisher) {
  return 1e-8 * fisher.trace() / static_cast<double>(fisher.rows());
}

GradientSolve solve_natural_gradient(const Eigen::MatrixXd& fisher,
                                     const Eigen::VectorXd& linear_term, double ridge,
                                     bool check_conditioning) {
  const Eigen::Index d = fisher.rows();
  if (fisher.cols() != d || linear_term.size() != d)
    throw std::invalid_argument("solve_natural_gradient: dimension mismatch");
  if (ridge < 0.0) throw std::invalid_argument("solve_natural_gradient: ridge must be >= 0");

  GradientSolve out;
  out.fisher = fisher;
  out.linear_term = linear_term;
  out.ridge = ridge;

  Eigen::MatrixXd a = fisher;
  a.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("Fisher singular; increase ridge");

  const double gnorm = linear_term.norm();
  Eigen::VectorXd u = llt.solve(linear_term);
  double rel = 0.0;
  if (gnorm > 0.0) {
    // Iterative refinement until the relative residual meets the contract.
    for (int pass = 0; pass < 4; ++pass) {
      Eigen::VectorXd resid = linear_term - a * u;
      rel = resid.norm() / gnorm;
      if (rel <= 1e-10) break;
      u += llt.solve(resid);
    }
    Eigen::VectorXd resid = linear_term - a * u;
    rel = resid.norm() / gnorm;
    if (!(rel <= 1e-10) || !u.allFinite())
      throw std::runtime_error("Fisher singular; increase ridge");
  } else {
    u.setZero();
  }

  out.u = u;
  out.relative_residual = rel;
  out.grad_sq_norm = u.dot(fisher.selfadjointView<Eigen::Lower>() * u);

  if (check_conditioning) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fisher,
                                                      Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().maxCoeff();
    bool degenerate = !(lmax > 0.0);
    bool ill = (lmax + ridge) > 1e10 * std::max(lmin + ridge, 0.0);
    out.condition_warning = degenerate || ill;
    if (out.condition_warning)
      log_warn("natural-gradient solve: Fisher nearly flat (eigenvalues in [" +
               std::to_string(lmin) + ", " + std::to_string(lmax) + "], ridge " +
               std::to_string(ridge) + ")");
  }
  return out;
}

GradientSolve empirical_natural_gradient(const DatasetView& split, const PolicyClass& pc,
                                         const PolicyParams& params, double lambda,
                                         std::optional<double> ridge) {
  FisherAndLinear fl = assemble_fisher_and_linear(split, pc, params, lambda);
  double r = ridge ? *ridge : auto_ridge(fl.fisher);
  return solve_natural_gradient(fl.fisher, fl.linear, r);
}

namespace {

// Population F and g by exact summation over the environment's support. The
// linear term uses the centered advantage, which equals the (Q - lambda log
// pi) pairing because scores integrate to zero under pi.
FisherAndLinear population_assembly(const SyntheticEnv& env, const PolicyClass& pc,
                                    const PolicyParams& params, double lambda) {
  const int d = pc.param_dim();
  FisherAndLinear out;
  out.fisher = Eigen::MatrixXd::Zero(d, d);
  out.linear = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd s(d);
  for (int m = 0; m < env.num_contexts(); ++m) {
    Context x = env.context(m);
    Eigen::VectorXd probs = pc.action_probabilities(params, x);
    double qx = env.context_weights()[m];
    for (int a = 0; a < env.num_actions(); ++a) {
      pc.score_row(x, a, probs, s);
      double w = qx * probs[a];
      out.fisher.selfadjointView<Eigen::Lower>().rankUpdate(s, w);
      out.linear += w * (env.mean_reward()(m, a) - lambda * clamped_log(probs[a])) * s;
    }
  }
  Eigen::MatrixXd full = out.fisher.selfadjointView<Eigen::Lower>();
  out.fisher = std::move(full);
  return out;
}

}  // namespace

GradientSolve population_natural_gradient(const SyntheticEnv& env, const PolicyClass& pc,
                                          const PolicyParams& params, double lambda) {
  FisherAndLinear fl = population_assembly(env, pc, params, lambda);
  return solve_natural_gradient(fl.fisher, fl.linear, 0.0);
}

Eigen::VectorXd population_policy_gradient(const SyntheticEnv& env, const PolicyClass& pc,
                                           const PolicyParams& params, double lambda) {
  return population_assembly(env, pc, params, lambda).linear;
}

Eigen::MatrixXd advantage_function(const SyntheticEnv& env, const PolicyClass& pc,
                                   const PolicyParams& params, double lambda) {
  const int contexts = env.num_contexts();
  const int k_actions = env.num_actions();
  Eigen::MatrixXd adv(contexts, k_actions);
  for (int m = 0; m < contexts; ++m) {
    Eigen::VectorXd probs = pc.action_probabilities(params, env.context(m));
    double mean = 0.0;
    for (int a = 0; a < k_actions; ++a) {
      adv(m, a) = env.mean_reward()(m, a) - lambda * clamped_log(probs[a]);
      mean += probs[a] * adv(m, a);
    }
    adv.row(m).array() -= mean;
  }
  return adv;
}

Eigen::MatrixXd gradient_table(const SyntheticEnv& env, const PolicyClass& pc,
                               const PolicyParams& params, const Eigen::VectorXd& u) {
  const int contexts = env.num_contexts();
  const int k_actions = env.num_actions();
  Eigen::MatrixXd g(contexts, k_actions);
  Eigen::VectorXd s(pc.param_dim());
  for (int m = 0; m < contexts; ++m) {
    Context x = env.context(m);
    Eigen::VectorXd probs = pc.action_probabilities(params, x);
    for (int a = 0; a < k_actions; ++a) {
      pc.score_row(x, a, probs, s);
      g(m, a) = u.dot(s);
    }
  }
  return g;
}

}  // namespace npgflow
