#include "npgflow/learner.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "npgflow/common.hpp"

namespace npgflow {

AscentResult backtracking_ascent(const std::function<AscentStep(const Eigen::VectorXd&)>& oracle,
                                 Eigen::VectorXd theta0, const AscentConfig& config) {
  AscentResult out;
  out.params = std::move(theta0);

  AscentStep cur = oracle(out.params);
  if (!std::isfinite(cur.value) || !cur.gradient.allFinite() || !cur.direction.allFinite()) {
    out.diverged = true;
    out.value = cur.value;
    return out;
  }
  double step = config.step_init;
  for (int it = 0; it < config.max_steps; ++it) {
    const double slope = cur.gradient.dot(cur.direction);
    if (slope <= config.grad_tol) {
      out.converged = true;
      break;
    }
    // Try twice the last accepted step first; backtrack from there.
    double a = 2.0 * step;
    bool accepted = false;
    AscentStep next;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      Eigen::VectorXd trial = out.params + a * cur.direction;
      next = oracle(trial);
      if (std::isfinite(next.value) && next.gradient.allFinite() && next.direction.allFinite() &&
          next.value >= cur.value + config.armijo_c * a * slope) {
        out.params = std::move(trial);
        accepted = true;
        break;
      }
      a *= config.shrink;
    }
    if (!accepted) break;  // flat to within backtracking resolution
    step = a;
    cur = std::move(next);
    out.steps = it + 1;
  }
  out.value = cur.value;
  return out;
}

PolicyParams fit_erm(const DatasetView& split, const PolicyClass& pc, double lambda,
                     const ErmConfig& config, std::uint64_t seed,
                     EntropyEstimator entropy_estimator) {
  SoftValueConfig vc{lambda, entropy_estimator};
  std::optional<DiscreteMoments> moments;
  if (pc.discrete_keyed()) moments = build_discrete_moments(split, pc.num_contexts());
  auto oracle = [&](const Eigen::VectorXd& theta) {
    PolicyParams params(theta);
    ValueAndGrad vg = moments
                          ? empirical_value_and_gradient_from_moments(*moments, pc, params, vc)
                          : empirical_value_and_gradient(split, pc, params, vc);
    AscentStep s;
    s.value = vg.value;
    s.gradient = vg.grad;
    s.direction = std::move(vg.grad);
    return s;
  };

  AscentConfig ac;
  ac.max_steps = config.max_steps;
  ac.grad_tol = config.grad_tol;
  ac.step_init = config.step_init;

  const int d = pc.param_dim();
  bool any_finished = false;
  AscentResult best;
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::VectorXd init = Eigen::VectorXd::Zero(d);
    if (r > 0) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
      for (int j = 0; j < d; ++j) init[j] = config.init_scale * normal01(rng);
    }
    AscentResult res = backtracking_ascent(oracle, std::move(init), ac);
    if (res.diverged) continue;
    if (!any_finished || res.value > best.value) best = std::move(res);
    any_finished = true;
  }
  if (!any_finished) throw std::runtime_error("every restart diverged");
  return PolicyParams(std::move(best.params));
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

DebiasedResult debiased_policy_learning(const LoggedDataset& data, const PolicyClass& pc,
                                        const LearnerConfig& config) {
  SplitTriple split = run_stage("split", [&] {
    return split_dataset(data, config.split_fractions, config.seed);
  });
  DatasetView erm_view = view_of(data, split.split_minus1);
  DatasetView flow_view = view_of(data, split.split0);
  DatasetView select_view = view_of(data, split.split1);

  DebiasedResult out;
  out.split_sizes = {static_cast<Eigen::Index>(split.split_minus1.size()),
                     static_cast<Eigen::Index>(split.split0.size()),
                     static_cast<Eigen::Index>(split.split1.size())};
  out.erm_params = run_stage("erm", [&] {
    return fit_erm(erm_view, pc, config.lambda, config.erm, config.seed,
                   config.entropy_estimator);
  });
  out.path = run_stage("flow", [&] {
    return integrate_flow(flow_view, pc, config.lambda, out.erm_params.theta, config.flow,
                          config.ridge);
  });
  out.selection = run_stage("select", [&] {
    return select_index(out.path, select_view, pc, config.lambda, config.entropy_estimator,
                        config.select);
  });
  out.selected_params = PolicyParams(params_at(out.path, out.selection.t1));
  out.splits = std::move(split);
  return out;
}

PolicyParams baseline_erm_full(const LoggedDataset& data, const PolicyClass& pc,
                               const LearnerConfig& config) {
  std::vector<int> all(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return fit_erm(DatasetView(data, std::move(all)), pc, config.lambda, config.erm, config.seed,
                 config.entropy_estimator);
}

nlohmann::ordered_json debiased_result_to_json(const DebiasedResult& result,
                                               const LearnerConfig& config) {
  nlohmann::ordered_json j;
  j["lambda"] = config.lambda;
  j["seed"] = config.seed;
  j["entropy_estimator"] = config.entropy_estimator == EntropyEstimator::ExactContextAverage
                               ? "exact_context_average"
                               : "is_weighted";
  j["split_sizes"] = {result.split_sizes[0], result.split_sizes[1], result.split_sizes[2]};
  j["erm_params"] = std::vector<double>(result.erm_params.theta.begin(),
                                        result.erm_params.theta.end());
  j["flow"] = {{"checkpoints", result.path.checkpoints.size()},
               {"t_last", result.path.t_last()},
               {"ridge", result.path.ridge_used},
               {"terminated_early", result.path.terminated_early},
               {"termination_reason", result.path.termination_reason}};
  j["selection"] = {{"t1", result.selection.t1},
                    {"value_at_t1", result.selection.value_at_t1},
                    {"interior", result.selection.interior}};
  j["selected_params"] = std::vector<double>(result.selected_params.theta.begin(),
                                             result.selected_params.theta.end());
  return j;
}

}  // namespace npgflow
