#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "npgflow/common.hpp"
#include "npgflow/diagnostics.hpp"
#include "npgflow/envs.hpp"
#include "npgflow/learner.hpp"
#include "npgflow/natural_gradient.hpp"
#include "npgflow/objective.hpp"

using namespace npgflow;

namespace {

LoggedInteraction rec(int ctx, int action, double reward, std::initializer_list<double> props) {
  LoggedInteraction r;
  r.context = Context::discrete(ctx);
  r.action = action;
  r.reward = reward;
  r.propensities.resize(static_cast<Eigen::Index>(props.size()));
  Eigen::Index i = 0;
  for (double p : props) r.propensities[i++] = p;
  return r;
}

DatasetView full_view(const LoggedDataset& d) {
  std::vector<int> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  return DatasetView(d, std::move(idx));
}

PointEvaluator tangent_of(const PolicyClass& pc, const PolicyParams& params,
                          Eigen::VectorXd u) {
  return [&pc, params, u = std::move(u)](const Context& x, int a) {
    Eigen::VectorXd probs = pc.action_probabilities(params, x);
    Eigen::VectorXd row(pc.param_dim());
    pc.score_row(x, a, probs, row);
    return u.dot(row);
  };
}

constexpr double kFixturePiStar0 = 0.83201838513392445;

}  // namespace

TEST_CASE("weighted inner product hand cases") {
  LoggedDataset data({rec(0, 0, 1.0, {0.5, 0.5}), rec(0, 1, 0.0, {0.5, 0.5})}, 2);
  DatasetView view = full_view(data);
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  PolicyParams uniform(Eigen::VectorXd::Zero(1));

  PointEvaluator one = [](const Context&, int) { return 1.0; };
  PointEvaluator zero = [](const Context&, int) { return 0.0; };

  // On-policy: weights are exactly 1, so <1, 1> is exactly 1.
  CHECK(weighted_inner_product(view, pc, uniform, one, one) == 1.0);
  CHECK(weighted_inner_product(view, pc, uniform, one, zero) == 0.0);

  // Off-policy hand sum: w = pi/pi_b per record.
  Eigen::VectorXd theta(1);
  theta << 0.8;
  PolicyParams tilted(theta);
  const double p0 = std::exp(0.8) / (std::exp(0.8) + 1.0);
  PointEvaluator f = [](const Context&, int a) { return a == 0 ? 2.0 : -1.0; };
  const double by_hand = 0.5 * (p0 / 0.5 * 4.0 + (1 - p0) / 0.5 * 1.0);
  CHECK(std::abs(weighted_inner_product(view, pc, tilted, f, f) - by_hand) <= 1e-15);

  DatasetView empty(data, {});
  CHECK_THROWS_WITH_AS(weighted_inner_product(empty, pc, uniform, one, one),
                       doctest::Contains("empty split"), std::invalid_argument);
}

TEST_CASE("likelihood ratio score hand values and centering") {
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  Eigen::VectorXd star_t(1);
  star_t << 1.6;
  PolicyParams star(star_t);
  PolicyParams uniform(Eigen::VectorXd::Zero(1));
  const Context x = Context::discrete(0);

  PointEvaluator same = likelihood_ratio_score(pc, uniform, uniform);
  CHECK(same(x, 0) == 0.0);
  CHECK(same(x, 1) == 0.0);

  PointEvaluator phi = likelihood_ratio_score(pc, star, uniform);
  CHECK(std::abs(phi(x, 0) - (kFixturePiStar0 / 0.5 - 1.0)) <= 1e-15);
  CHECK(std::abs(phi(x, 1) - ((1.0 - kFixturePiStar0) / 0.5 - 1.0)) <= 1e-15);

  // pi-hat-centering: sum_a hat(a) phi(a) = 0.
  std::mt19937_64 rng(11);
  PolicyClass pc3 = PolicyClass::tabular_softmax(2, 3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd a(pc3.param_dim()), b(pc3.param_dim());
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      a[j] = normal01(rng);
      b[j] = normal01(rng);
    }
    PointEvaluator p = likelihood_ratio_score(pc3, PolicyParams(a), PolicyParams(b));
    for (int m = 0; m < 2; ++m) {
      const Context xm = Context::discrete(m);
      Eigen::VectorXd hat = pc3.action_probabilities(PolicyParams(b), xm);
      double mean = 0.0;
      for (int act = 0; act < 3; ++act) mean += hat[act] * p(xm, act);
      CHECK(std::abs(mean) <= 1e-14);
    }
  }

  Eigen::VectorXd extreme(1);
  extreme << 60.0;  // hat prob of action 1 is ~e^-60, below the interior floor
  PointEvaluator bad = likelihood_ratio_score(pc, star, PolicyParams(extreme));
  CHECK_THROWS_WITH_AS(bad(x, 1), doctest::Contains("not interior"), std::runtime_error);
}

TEST_CASE("theorem report satisfies its internal identities") {
  SyntheticEnv env = fixture_a();
  BehaviorSpec b;
  LoggedDataset data = sample_logged_dataset(env, b, 1800, 424);
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  LearnerConfig cfg;
  cfg.seed = 2;
  DebiasedResult res = debiased_policy_learning(data, pc, cfg);

  DatasetView grad_split(data, res.splits.split0);
  DatasetView value_split(data, res.splits.split1);
  PolicyParams star = oracle_in_class(env, pc, cfg.lambda);
  TheoremOneReport r =
      compute_terms(env, grad_split, value_split, pc, cfg.lambda, res, star);

  CHECK(r.term_III == r.norm_grad_diff * r.norm_phi_star);
  CHECK(std::abs(r.bound_slack - (r.term_I + r.term_II + r.term_III - r.soft_regret)) <=
        1e-15);
  CHECK(r.interior == res.selection.interior);
  CHECK(r.soft_regret >= -1e-12);

  // Rebuild every ingredient independently and check the reported values.
  const PolicyParams& hat = res.selected_params;
  const double ridge = res.path.ridge_used;
  GradientSolve s0 = empirical_natural_gradient(grad_split, pc, hat, cfg.lambda, ridge);
  GradientSolve s1 = empirical_natural_gradient(value_split, pc, hat, cfg.lambda, ridge);
  GradientSolve sp = population_natural_gradient(env, pc, hat, cfg.lambda);
  PointEvaluator g0 = tangent_of(pc, hat, s0.u);
  PointEvaluator g1 = tangent_of(pc, hat, s1.u);
  PointEvaluator phi = likelihood_ratio_score(pc, star, hat);

  CHECK(std::abs(r.eps_tol - (1e-6 + 10.0 * ridge * s0.u.squaredNorm())) <= 1e-18);
  CHECK(std::abs(r.stationarity_residual -
                 weighted_inner_product(value_split, pc, hat, g1, g0)) <= 1e-15);
  CHECK(std::abs(r.norm_grad0 * r.norm_grad0 -
                 weighted_inner_product(value_split, pc, hat, g0, g0)) <= 1e-14);
  CHECK(std::abs(r.norm_grad1 * r.norm_grad1 -
                 weighted_inner_product(value_split, pc, hat, g1, g1)) <= 1e-14);

  // The stationarity inner product is a bilinear form in the two gradient
  // solves through the value-split Fisher.
  Eigen::MatrixXd f1 = assemble_fisher(value_split, pc, hat);
  CHECK(std::abs(r.stationarity_residual - s1.u.dot(f1 * s0.u)) <= 1e-14);

  // I + II + <G0, phi*>_1 telescopes to the exact population pairing of the
  // population gradient with phi*.
  const double pairing_emp = weighted_inner_product(value_split, pc, hat, g0, phi);
  double pairing_pop = 0.0;
  {
    const Context x = env.context(0);
    Eigen::VectorXd probs = pc.action_probabilities(hat, x);
    PointEvaluator gp = tangent_of(pc, hat, sp.u);
    for (int a = 0; a < 2; ++a) pairing_pop += probs[a] * gp(x, a) * phi(x, a);
  }
  CHECK(std::abs(r.term_I + r.term_II + pairing_emp - pairing_pop) <= 1e-13);
}

TEST_CASE("report collapses when the selected policy equals the oracle") {
  SyntheticEnv env = fixture_a();
  BehaviorSpec b;
  LoggedDataset data = sample_logged_dataset(env, b, 900, 5);
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  PolicyParams star = oracle_in_class(env, pc, 0.5);

  DebiasedResult res;
  res.erm_params = star;
  res.selected_params = star;
  res.path.ridge_used = 1e-9;
  Checkpoint c;
  c.params = star.theta;
  res.path.checkpoints.push_back(c);
  res.selection.interior = true;

  SplitTriple split = split_dataset(data, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 0);
  TheoremOneReport r = compute_terms(env, DatasetView(data, split.split0),
                                     DatasetView(data, split.split1), pc, 0.5, res, star);
  CHECK(std::abs(r.soft_regret) <= 1e-14);
  CHECK(r.norm_phi_star == 0.0);
  CHECK(r.term_I == 0.0);
  CHECK(std::abs(r.term_II) <= 1e-16);
  CHECK(r.term_III == 0.0);
  CHECK(std::abs(r.bound_slack) <= 1e-14);
  CHECK(r.bound_slack >= -r.eps_tol);
}

TEST_CASE("entropy submodel curvature matches the fixture hand value") {
  SyntheticEnv env = fixture_a();
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  Eigen::VectorXd star_t(1);
  star_t << 1.6;
  PolicyParams star(star_t);
  PolicyParams uniform(Eigen::VectorXd::Zero(1));

  const double phi = 2.0 * kFixturePiStar0 - 1.0;  // star/hat - 1 at the uniform hat
  CHECK(std::abs(entropy_submodel_curvature(env, pc, uniform, star, 0.0) - phi * phi) <=
        1e-14);

  // At eps = 1 the mixture is the oracle itself.
  const double p = kFixturePiStar0;
  const double at_one = 0.25 * phi * phi * (1.0 / p + 1.0 / (1.0 - p));
  CHECK(std::abs(entropy_submodel_curvature(env, pc, uniform, star, 1.0) - at_one) <= 1e-14);

  CHECK_THROWS_AS(entropy_submodel_curvature(env, pc, uniform, star, -0.01),
                  std::invalid_argument);
  CHECK_THROWS_AS(entropy_submodel_curvature(env, pc, uniform, star, 1.01),
                  std::invalid_argument);
}

TEST_CASE("entropy submodel curvature is positive along the whole mixture") {
  std::mt19937_64 rng(31337);
  SyntheticEnv env = make_random_env(4, 3, 50);
  PolicyClass pc = PolicyClass::tabular_softmax(4, 3);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd a(pc.param_dim()), b(pc.param_dim());
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      a[j] = 1.5 * normal01(rng);
      b[j] = 1.5 * normal01(rng);
    }
    for (int k = 0; k <= 20; ++k) {
      const double eps = k / 20.0;
      CHECK(entropy_submodel_curvature(env, pc, PolicyParams(b), PolicyParams(a), eps) > 0.0);
    }
  }
}

TEST_CASE("hard regret is within lambda log K of soft regret") {
  SyntheticEnv env = fixture_a();
  PolicyClass pc = PolicyClass::tabular_softmax(1, 2);
  PolicyParams star = oracle_in_class(env, pc, 0.5);

  GapCheck at_uniform =
      hard_soft_gap_check(env, pc, 0.5, PolicyParams(Eigen::VectorXd::Zero(1)), star);
  CHECK(at_uniform.holds);
  CHECK(std::abs(at_uniform.lhs - 0.4) <= 1e-10);
  CHECK(std::abs(at_uniform.rhs - (0.14537678016419675 + 0.5 * std::log(2.0))) <= 1e-10);

  std::mt19937_64 rng(2023);
  SyntheticEnv renv = make_random_env(3, 3, 400);
  PolicyClass rpc = PolicyClass::tabular_softmax(3, 3);
  PolicyParams rstar = oracle_in_class(renv, rpc, 0.5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd theta(rpc.param_dim());
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = 3.0 * normal01(rng);
    GapCheck g = hard_soft_gap_check(renv, rpc, 0.5, PolicyParams(theta), rstar);
    CHECK(g.holds);
  }
}
