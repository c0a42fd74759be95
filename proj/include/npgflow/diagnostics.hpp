#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "npgflow/core_model.hpp"
#include "npgflow/envs.hpp"
#include "npgflow/learner.hpp"

namespace npgflow {

// ===========================================================================
// Numerical verification of the regret decomposition
//   soft_regret <= I + II + III
// at the selected policy, together with the stationarity inner product and
// the hard/soft regret gap.  Population expectations are exact finite sums
// over the environment support (integrands are affine in Y, so reward means
// suffice); empirical quantities use the selection split.
// ===========================================================================

struct TheoremOneReport {
  double soft_regret = 0.0;
  double term_I = 0.0;
  double term_II = 0.0;
  double term_III = 0.0;
  double bound_slack = 0.0;  // I + II + III - soft_regret
  bool interior = false;
  double stationarity_residual = 0.0;  // <G(split1), G(split0)>_{pi-hat, split1}
  double norm_grad_diff = 0.0;         // ||G(split0) - G(split1)||_{pi-hat, split1}
  double norm_phi_star = 0.0;          // ||phi*||_{pi-hat, split1}
  double norm_grad0 = 0.0;
  double norm_grad1 = 0.0;
  double eps_tol = 0.0;  // 1e-6 + 10 * ridge * ||u0||^2
};

using PointEvaluator = std::function<double(const Context&, int)>;

// (1/n) sum_i (pi(A_i|X_i)/pi_b(A_i|X_i)) f1(X_i, A_i) f2(X_i, A_i); the
// associated norm is the square root of the self product.
double weighted_inner_product(const DatasetView& split, const PolicyClass& pc,
                              const PolicyParams& params, const PointEvaluator& f1,
                              const PointEvaluator& f2);

// phi*(x, a) = oracle(a|x)/hat(a|x) - 1; pi-hat-centered per context.
// Throws "policy not interior" if a hat probability falls below 1e-12.
PointEvaluator likelihood_ratio_score(const PolicyClass& pc, const PolicyParams& oracle_params,
                                      const PolicyParams& hat_params);

// Evaluates every Theorem quantity at result.selected_params.  The gradient
// solves on both splits reuse the flow's ridge unless one is given; the
// oracle policy is computed in-class unless cached parameters are passed.
TheoremOneReport compute_terms(const SyntheticEnv& env, const DatasetView& grad_split,
                               const DatasetView& value_split, const PolicyClass& pc,
                               double lambda, const DebiasedResult& result,
                               std::optional<PolicyParams> oracle_params = std::nullopt,
                               std::optional<double> ridge = std::nullopt);

struct GapCheck {
  double lhs = 0.0;  // hard regret
  double rhs = 0.0;  // soft regret + lambda log K
  bool holds = false;
};

// Verifies hard_regret <= soft_regret + lambda * log K.
GapCheck hard_soft_gap_check(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                             const PolicyParams& params, const PolicyParams& oracle_params);

// Exact second derivative of the entropy term along the mixture submodel
// pi_eps = pi-hat (1 + eps phi*):  sum_x q(x) sum_a pi-hat^2/pi_eps * phi*^2.
// Positive for every eps in [0, 1]; throws if pi_eps leaves the simplex.
double entropy_submodel_curvature(const SyntheticEnv& env, const PolicyClass& pc,
                                  const PolicyParams& hat_params,
                                  const PolicyParams& oracle_params, double epsilon);

}  // namespace npgflow
