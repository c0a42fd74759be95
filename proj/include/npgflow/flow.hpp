#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npgflow/core_model.hpp"
#include "npgflow/objective.hpp"

namespace npgflow {

enum class Integrator { Euler, RK4 };

struct FlowConfig {
  double step_size = 0.05;
  double t_max = 10.0;
  Integrator integrator = Integrator::RK4;
  // Stop once u'Fu at a checkpoint falls to or below this.
  double stop_grad_norm = 1e-10;
  int checkpoint_every = 1;
};

struct Checkpoint {
  double t = 0.0;
  Eigen::VectorXd params;
  double grad_sq_norm = 0.0;
};

struct FlowPath {
  std::vector<Checkpoint> checkpoints;
  bool terminated_early = false;
  std::string termination_reason;
  double ridge_used = 0.0;

  double t_last() const { return checkpoints.back().t; }
};

// Integrates d/dt theta = u(theta), where u solves (F + ridge I) u = g on
// grad_split.  Checkpoints are stored at t=0, every checkpoint_every steps,
// and at the final time.  A non-finite state or a failed solve aborts the
// flow at the last good checkpoint with terminated_early set.
FlowPath integrate_flow(const DatasetView& grad_split, const PolicyClass& policy_class,
                        double lambda, const Eigen::VectorXd& theta0, const FlowConfig& config,
                        std::optional<double> ridge = std::nullopt);

// Parameters at time t: exact at checkpoint times, linear interpolation in
// theta between adjacent checkpoints.  t must lie in [0, t_last].
Eigen::VectorXd params_at(const FlowPath& path, double t);

struct IndexSelection {
  double t1 = 0.0;
  double value_at_t1 = 0.0;
  bool interior = false;
};

struct SelectConfig {
  double tol = 1e-4;  // absolute tolerance in t; also the boundary snap width
};

// Picks the flow time maximizing the empirical soft value on value_split:
// checkpoint argmax refined by golden-section search over the bracketing
// checkpoint interval.  interior is false when t1 snaps to 0 or t_last.
IndexSelection select_index(const FlowPath& path, const DatasetView& value_split,
                            const PolicyClass& policy_class, double lambda,
                            EntropyEstimator entropy_estimator = EntropyEstimator::ExactContextAverage,
                            const SelectConfig& config = {});

}  // namespace npgflow
