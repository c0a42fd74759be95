#pragma once

#include <Eigen/Dense>
#include <optional>

#include "npgflow/core_model.hpp"
#include "npgflow/envs.hpp"

namespace npgflow {

// ===========================================================================
// Entropy-regularized policy value and its empirical surrogate.
//
// The target is J(pi) = E[Y under pi] - lambda * E_X[ H(pi)(X) ] with
// H(pi)(x) = sum_a pi(a|x) log pi(a|x)  (nonpositive; -H is Shannon entropy).
//
// The empirical surrogate importance-weights the reward term with the logged
// propensities and estimates the entropy term per the configured estimator.
// Every log pi(a|x) evaluation is clamped below at log(1e-12).
// ===========================================================================

enum class EntropyEstimator {
  // Average of the exact per-context integrand H(pi)(X_i) over the sample.
  ExactContextAverage,
  // Importance-weighted plug-in (pi/pi_b)(A_i|X_i) * log pi(A_i|X_i).
  ISWeighted,
};

struct SoftValueConfig {
  double lambda = 0.5;
  EntropyEstimator entropy_estimator = EntropyEstimator::ExactContextAverage;
};

// sum_a p_a log p_a for a strictly positive simplex vector. Throws if any
// entry is nonpositive: entropy estimators require interior policies.
double entropy_of_policy_at_context(const Eigen::VectorXd& probs);

// Reference implementation: one compensated pass in record order.
// (1/n) sum_i (pi/pi_b)(A_i|X_i) Y_i  -  lambda * entropy term.
double empirical_soft_value(const DatasetView& split, const PolicyClass& pc,
                            const PolicyParams& params, const SoftValueConfig& config);

// Exact population counterpart on a finite environment:
// sum_x q_X(x) sum_a pi(a|x) (Q(a, x) - lambda log pi(a|x)).
double population_soft_value(const SyntheticEnv& env, const PolicyClass& pc,
                             const PolicyParams& params, double lambda);

// Unregularized population value sum_x q_X(x) sum_a pi(a|x) Q(a, x).
double population_value(const SyntheticEnv& env, const PolicyClass& pc,
                        const PolicyParams& params);

// ===========================================================================
// Sufficient statistics for discrete-context splits.
//
// Every empirical functional used here depends on the records only through
// per-(context, action) sums of 1/pi_b and Y/pi_b plus per-context counts, so
// campaigns aggregate once per split and evaluate objectives and gradient
// assemblies in O(M * K) instead of O(n). Agreement with the per-record
// reference path is unit-tested; both paths are deterministic.
// ===========================================================================

struct DiscreteMoments {
  Eigen::Index n = 0;
  Eigen::MatrixXd inv_propensity_sum;   // M x K: sum of 1/pi_b_i(A_i)
  Eigen::MatrixXd weighted_reward_sum;  // M x K: sum of Y_i/pi_b_i(A_i)
  Eigen::VectorXd context_count;        // M
};

// nullopt when the view's contexts are dense. Throws if a discrete id falls
// outside [0, num_contexts).
std::optional<DiscreteMoments> build_discrete_moments(const DatasetView& split,
                                                      int num_contexts);

double empirical_soft_value_from_moments(const DiscreteMoments& m, const PolicyClass& pc,
                                         const PolicyParams& params,
                                         const SoftValueConfig& config);

// Value and exact parameter gradient of the empirical surrogate, used by the
// ERM stage. The gradient differentiates the configured entropy estimator.
struct ValueAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

ValueAndGrad empirical_value_and_gradient(const DatasetView& split, const PolicyClass& pc,
                                          const PolicyParams& params,
                                          const SoftValueConfig& config);

ValueAndGrad empirical_value_and_gradient_from_moments(const DiscreteMoments& m,
                                                       const PolicyClass& pc,
                                                       const PolicyParams& params,
                                                       const SoftValueConfig& config);

}  // namespace npgflow
