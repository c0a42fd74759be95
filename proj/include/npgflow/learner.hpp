#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "npgflow/core_model.hpp"
#include "npgflow/flow.hpp"
#include "npgflow/objective.hpp"

#include "json.hpp"

namespace npgflow {

// ===========================================================================
// Backtracking line-search ascent, shared by the ERM stage and the in-class
// oracle.  The step oracle reports the objective, its parameter gradient, and
// an ascent direction at theta; Armijo acceptance tests
//   f(theta + a d) >= f(theta) + c a g.d.
// ===========================================================================

struct AscentStep {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd direction;  // must satisfy gradient.dot(direction) >= 0
};

struct AscentConfig {
  int max_steps = 1000;
  // Converged when gradient.dot(direction) drops to or below this.
  double grad_tol = 1e-8;
  double step_init = 1.0;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 50;
};

struct AscentResult {
  Eigen::VectorXd params;
  double value = 0.0;
  int steps = 0;
  bool converged = false;
  bool diverged = false;  // non-finite objective or gradient encountered
};

AscentResult backtracking_ascent(const std::function<AscentStep(const Eigen::VectorXd&)>& oracle,
                                 Eigen::VectorXd theta0, const AscentConfig& config);

// ===========================================================================
// Three-way split learner: ERM warm start, natural-gradient flow, and
// held-out index selection, each on its own split.
// ===========================================================================

struct ErmConfig {
  int restarts = 5;
  int max_steps = 1000;
  double init_scale = 0.1;  // restart 0 starts at zero, the rest at N(0, scale^2)
  double grad_tol = 1e-8;
  double step_init = 1.0;
};

// Plain gradient ascent on the empirical surrogate over one split.
// Throws when every restart diverges.
PolicyParams fit_erm(const DatasetView& split, const PolicyClass& pc, double lambda,
                     const ErmConfig& config, std::uint64_t seed,
                     EntropyEstimator entropy_estimator = EntropyEstimator::ExactContextAverage);

struct LearnerConfig {
  double lambda = 0.5;
  std::array<double, 3> split_fractions = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::uint64_t seed = 0;  // drives the split shuffle and the ERM restarts
  ErmConfig erm;
  FlowConfig flow;
  SelectConfig select;
  std::optional<double> ridge;
  EntropyEstimator entropy_estimator = EntropyEstimator::ExactContextAverage;
};

struct DebiasedResult {
  PolicyParams erm_params;
  FlowPath path;
  IndexSelection selection;
  PolicyParams selected_params;  // params_at(path, selection.t1)
  SplitTriple splits;
  std::array<Eigen::Index, 3> split_sizes = {0, 0, 0};
};

// Runs the full pipeline on one dataset.  Stage failures propagate as
// runtime_error prefixed with the stage name ("split: ", "erm: ", "flow: ",
// "select: ").
DebiasedResult debiased_policy_learning(const LoggedDataset& data, const PolicyClass& pc,
                                        const LearnerConfig& config);

// ERM on the whole dataset without splitting; comparison baseline.
PolicyParams baseline_erm_full(const LoggedDataset& data, const PolicyClass& pc,
                               const LearnerConfig& config);

// Deterministic serialization of a result (insertion-ordered keys).
nlohmann::ordered_json debiased_result_to_json(const DebiasedResult& result,
                                               const LearnerConfig& config);

}  // namespace npgflow
