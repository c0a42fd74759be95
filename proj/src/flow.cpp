#include "npgflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "npgflow/common.hpp"
#include "npgflow/natural_gradient.hpp"

namespace npgflow {

namespace {

// Gradient field u(theta) on a fixed split. Moments are aggregated once when
// contexts are discrete; dense splits fall back to per-record assembly.
class GradientField {
 public:
  GradientField(const DatasetView& split, const PolicyClass& pc, double lambda,
                std::optional<double> ridge)
      : split_(split), pc_(pc), lambda_(lambda), ridge_(ridge) {
    if (pc.discrete_keyed()) moments_ = build_discrete_moments(split, pc.num_contexts());
  }

  GradientSolve eval(const Eigen::VectorXd& theta, bool check_conditioning) const {
    PolicyParams params(theta);
    FisherAndLinear fl = moments_
                             ? assemble_fisher_and_linear_from_moments(*moments_, pc_, params, lambda_)
                             : assemble_fisher_and_linear(split_, pc_, params, lambda_);
    const double ridge = ridge_ ? *ridge_ : auto_ridge(fl.fisher);
    return solve_natural_gradient(fl.fisher, fl.linear, ridge, check_conditioning);
  }

 private:
  const DatasetView& split_;
  const PolicyClass& pc_;
  double lambda_;
  std::optional<double> ridge_;
  std::optional<DiscreteMoments> moments_;
};

Eigen::VectorXd advance(const GradientField& field, const Eigen::VectorXd& theta, double h,
                        Integrator integrator, const Eigen::VectorXd& u_at_theta) {
  if (integrator == Integrator::Euler) return theta + h * u_at_theta;
  const Eigen::VectorXd& k1 = u_at_theta;
  Eigen::VectorXd k2 = field.eval(theta + 0.5 * h * k1, false).u;
  Eigen::VectorXd k3 = field.eval(theta + 0.5 * h * k2, false).u;
  Eigen::VectorXd k4 = field.eval(theta + h * k3, false).u;
  return theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

FlowPath integrate_flow(const DatasetView& grad_split, const PolicyClass& policy_class,
                        double lambda, const Eigen::VectorXd& theta0, const FlowConfig& config,
                        std::optional<double> ridge) {
  if (theta0.size() != policy_class.param_dim())
    throw std::invalid_argument("integrate_flow: theta0 dimension mismatch");
  if (!(config.step_size > 0.0) || !(config.t_max > 0.0) || config.checkpoint_every < 1)
    throw std::invalid_argument("integrate_flow: invalid flow configuration");

  GradientField field(grad_split, policy_class, lambda, ridge);
  FlowPath path;

  GradientSolve solve;
  try {
    solve = field.eval(theta0, true);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("integrate_flow: solve failed at t=0: ") + e.what());
  }
  path.ridge_used = solve.ridge;
  path.checkpoints.push_back({0.0, theta0, solve.grad_sq_norm});
  if (solve.grad_sq_norm <= config.stop_grad_norm) {
    path.termination_reason = "stationary";
    return path;
  }

  double t = 0.0;
  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd u = solve.u;  // field at the current theta
  int step = 0;
  const double t_end = config.t_max;

  while (t < t_end - 1e-12) {
    const double h = std::min(config.step_size, t_end - t);
    Eigen::VectorXd next;
    try {
      next = advance(field, theta, h, config.integrator, u);
    } catch (const std::exception& e) {
      path.terminated_early = true;
      path.termination_reason = e.what();
      log_warn(std::string("flow aborted at t=") + std::to_string(t) + ": " + e.what());
      return path;
    }
    if (!next.allFinite()) {
      path.terminated_early = true;
      path.termination_reason = "non-finite state";
      log_warn("flow aborted at t=" + std::to_string(t) + ": non-finite state");
      return path;
    }
    t += h;
    theta = std::move(next);
    ++step;

    const bool at_end = t >= t_end - 1e-12;
    if (step % config.checkpoint_every != 0 && !at_end) {
      // Field at the new state still drives the next step.
      try {
        u = field.eval(theta, false).u;
      } catch (const std::exception& e) {
        path.terminated_early = true;
        path.termination_reason = e.what();
        log_warn(std::string("flow aborted at t=") + std::to_string(t) + ": " + e.what());
        return path;
      }
      continue;
    }

    try {
      solve = field.eval(theta, true);
    } catch (const std::exception& e) {
      path.terminated_early = true;
      path.termination_reason = e.what();
      log_warn(std::string("flow aborted at t=") + std::to_string(t) + ": " + e.what());
      return path;
    }
    u = solve.u;
    path.checkpoints.push_back({t, theta, solve.grad_sq_norm});
    if (solve.grad_sq_norm <= config.stop_grad_norm) {
      path.termination_reason = "stationary";
      return path;
    }
  }
  path.termination_reason = "reached t_max";
  return path;
}

Eigen::VectorXd params_at(const FlowPath& path, double t) {
  if (path.checkpoints.empty()) throw std::logic_error("params_at: empty flow path");
  const double t_last = path.t_last();
  const double slack = 1e-9 * std::max(1.0, t_last);
  if (t < -slack || t > t_last + slack)
    throw std::out_of_range("params_at: t outside [0, t_last]");
  t = std::clamp(t, 0.0, t_last);

  const auto& cps = path.checkpoints;
  auto it = std::lower_bound(cps.begin(), cps.end(), t,
                             [](const Checkpoint& c, double v) { return c.t < v; });
  if (it == cps.end()) return cps.back().params;
  if (std::abs(it->t - t) <= 1e-12 * std::max(1.0, t_last)) return it->params;
  if (it == cps.begin()) return it->params;
  const Checkpoint& hi = *it;
  const Checkpoint& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return lo.params + w * (hi.params - lo.params);
}

namespace {

double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol, double* best_value) {
  static const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  const double mid = 0.5 * (a + b);
  *best_value = f(mid);
  return mid;
}

}  // namespace

IndexSelection select_index(const FlowPath& path, const DatasetView& value_split,
                            const PolicyClass& policy_class, double lambda,
                            EntropyEstimator entropy_estimator, const SelectConfig& config) {
  if (path.checkpoints.empty()) throw std::logic_error("select_index: empty flow path");
  SoftValueConfig vc{lambda, entropy_estimator};
  std::optional<DiscreteMoments> moments;
  if (policy_class.discrete_keyed())
    moments = build_discrete_moments(value_split, policy_class.num_contexts());
  auto value_at = [&](double t) {
    PolicyParams params(params_at(path, t));
    return moments ? empirical_soft_value_from_moments(*moments, policy_class, params, vc)
                   : empirical_soft_value(value_split, policy_class, params, vc);
  };

  const auto& cps = path.checkpoints;
  std::size_t best = 0;
  double best_value = value_at(cps[0].t);
  for (std::size_t k = 1; k < cps.size(); ++k) {
    const double v = value_at(cps[k].t);
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }

  double t1 = cps[best].t;
  double v1 = best_value;
  if (cps.size() > 1) {
    const double lo = cps[best == 0 ? 0 : best - 1].t;
    const double hi = cps[std::min(best + 1, cps.size() - 1)].t;
    if (hi - lo > config.tol) {
      double v_gs = 0.0;
      const double t_gs = golden_section_max(value_at, lo, hi, config.tol, &v_gs);
      if (v_gs > v1) {
        t1 = t_gs;
        v1 = v_gs;
      }
    }
  }

  const double t_last = path.t_last();
  if (t1 <= config.tol) t1 = 0.0;
  if (t_last - t1 <= config.tol) t1 = t_last;
  IndexSelection out;
  out.t1 = t1;
  out.value_at_t1 = value_at(t1);
  out.interior = t1 > 0.0 && t1 < t_last;
  return out;
}

}  // namespace npgflow
