#include "npgflow/diagnostics.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "npgflow/common.hpp"
#include "npgflow/natural_gradient.hpp"
#include "npgflow/objective.hpp"

namespace npgflow {

double weighted_inner_product(const DatasetView& split, const PolicyClass& pc,
                              const PolicyParams& params, const PointEvaluator& f1,
                              const PointEvaluator& f2) {
  if (split.size() == 0) throw std::invalid_argument("weighted_inner_product: empty split");
  KahanSum acc;
  for (std::size_t k = 0; k < split.size(); ++k) {
    const LoggedInteraction& rec = split.record(k);
    const double pb = rec.propensities[rec.action];
    if (!(pb >= split.dataset().overlap_floor()))
      throw std::runtime_error("behavior propensity below overlap floor");
    const Eigen::VectorXd probs = pc.action_probabilities(params, rec.context);
    const double w = probs[rec.action] / pb;
    acc.add(w * f1(rec.context, rec.action) * f2(rec.context, rec.action));
  }
  return acc.value() / static_cast<double>(split.size());
}

PointEvaluator likelihood_ratio_score(const PolicyClass& pc, const PolicyParams& oracle_params,
                                      const PolicyParams& hat_params) {
  return [&pc, oracle_params, hat_params](const Context& x, int a) {
    const Eigen::VectorXd hat = pc.action_probabilities(hat_params, x);
    if (hat[a] < 1e-12) throw std::runtime_error("policy not interior");
    const Eigen::VectorXd star = pc.action_probabilities(oracle_params, x);
    return star[a] / hat[a] - 1.0;
  };
}

namespace {

// u . s(x, a) evaluator that caches nothing; campaign sizes keep this cheap.
PointEvaluator tangent_evaluator(const PolicyClass& pc, const PolicyParams& params,
                                 Eigen::VectorXd u) {
  return [&pc, params, u = std::move(u)](const Context& x, int a) {
    const Eigen::VectorXd probs = pc.action_probabilities(params, x);
    Eigen::VectorXd row(pc.param_dim());
    pc.score_row(x, a, probs, row);
    return u.dot(row);
  };
}

}  // namespace

TheoremOneReport compute_terms(const SyntheticEnv& env, const DatasetView& grad_split,
                               const DatasetView& value_split, const PolicyClass& pc,
                               double lambda, const DebiasedResult& result,
                               std::optional<PolicyParams> oracle_params,
                               std::optional<double> ridge) {
  const PolicyParams& hat = result.selected_params;
  PolicyParams star = oracle_params ? std::move(*oracle_params) : oracle_in_class(env, pc, lambda);

  const double solve_ridge = ridge ? *ridge : result.path.ridge_used;
  GradientSolve s0 = empirical_natural_gradient(grad_split, pc, hat, lambda, solve_ridge);
  GradientSolve s1 = empirical_natural_gradient(value_split, pc, hat, lambda, solve_ridge);
  GradientSolve sp = population_natural_gradient(env, pc, hat, lambda);

  PointEvaluator g0 = tangent_evaluator(pc, hat, s0.u);
  PointEvaluator g1 = tangent_evaluator(pc, hat, s1.u);
  PointEvaluator gdiff = tangent_evaluator(pc, hat, s0.u - s1.u);
  PointEvaluator phi = likelihood_ratio_score(pc, star, hat);

  TheoremOneReport r;
  r.interior = result.selection.interior;

  // Exact P-expectations over the support: E[(pi-hat/pi_b) f(X,A)] under the
  // behavior-logged distribution equals sum_x q(x) sum_a pi-hat(a|x) f(x,a).
  const int M = env.num_contexts();
  const int K = env.num_actions();
  PointEvaluator gpop = tangent_evaluator(pc, hat, sp.u);
  KahanSum exact_I, exact_II;
  for (int m = 0; m < M; ++m) {
    const Context x = env.context(m);
    const Eigen::VectorXd probs = pc.action_probabilities(hat, x);
    const double qm = env.context_weights()[m];
    for (int a = 0; a < K; ++a) {
      const double p = phi(x, a);
      exact_I.add(qm * probs[a] * g0(x, a) * p);
      exact_II.add(qm * probs[a] * (gpop(x, a) - g0(x, a)) * p);
    }
  }

  KahanSum emp_I;
  for (std::size_t k = 0; k < value_split.size(); ++k) {
    const LoggedInteraction& rec = value_split.record(k);
    const Eigen::VectorXd probs = pc.action_probabilities(hat, rec.context);
    const double w = probs[rec.action] / rec.propensities[rec.action];
    emp_I.add(w * g0(rec.context, rec.action) * phi(rec.context, rec.action));
  }
  r.term_I = exact_I.value() - emp_I.value() / static_cast<double>(value_split.size());
  r.term_II = exact_II.value();

  r.norm_grad_diff = std::sqrt(
      std::max(0.0, weighted_inner_product(value_split, pc, hat, gdiff, gdiff)));
  r.norm_phi_star =
      std::sqrt(std::max(0.0, weighted_inner_product(value_split, pc, hat, phi, phi)));
  r.term_III = r.norm_grad_diff * r.norm_phi_star;

  r.stationarity_residual = weighted_inner_product(value_split, pc, hat, g1, g0);
  r.norm_grad0 =
      std::sqrt(std::max(0.0, weighted_inner_product(value_split, pc, hat, g0, g0)));
  r.norm_grad1 =
      std::sqrt(std::max(0.0, weighted_inner_product(value_split, pc, hat, g1, g1)));

  r.soft_regret = population_soft_value(env, pc, star, lambda) -
                  population_soft_value(env, pc, hat, lambda);
  r.bound_slack = r.term_I + r.term_II + r.term_III - r.soft_regret;
  r.eps_tol = 1e-6 + 10.0 * solve_ridge * s0.u.squaredNorm();
  return r;
}

GapCheck hard_soft_gap_check(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                             const PolicyParams& params, const PolicyParams& oracle_params) {
  RegretPair reg = exact_regret(env, pc, lambda, params, oracle_params);
  GapCheck out;
  out.lhs = reg.hard_regret;
  out.rhs = reg.soft_regret + lambda * std::log(static_cast<double>(env.num_actions()));
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

double entropy_submodel_curvature(const SyntheticEnv& env, const PolicyClass& pc,
                                  const PolicyParams& hat_params,
                                  const PolicyParams& oracle_params, double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("submodel parameter must lie in [0, 1]");
  KahanSum acc;
  for (int m = 0; m < env.num_contexts(); ++m) {
    const Context x = env.context(m);
    const Eigen::VectorXd hat = pc.action_probabilities(hat_params, x);
    const Eigen::VectorXd star = pc.action_probabilities(oracle_params, x);
    const double qm = env.context_weights()[m];
    for (int a = 0; a < env.num_actions(); ++a) {
      const double phi = star[a] / hat[a] - 1.0;
      const double mixed = hat[a] * (1.0 + epsilon * phi);
      if (!(mixed > 0.0)) throw std::runtime_error("submodel left the simplex");
      acc.add(qm * hat[a] * (hat[a] / mixed) * phi * phi);
    }
  }
  return acc.value();
}

}  // namespace npgflow
