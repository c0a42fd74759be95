#pragma once

#include <Eigen/Dense>
#include <optional>

#include "npgflow/core_model.hpp"
#include "npgflow/envs.hpp"
#include "npgflow/objective.hpp"

namespace npgflow {

// ===========================================================================
// Importance-weighted natural-gradient solve.
//
// With centered score features s(x, a) and importance weights
// w_i = pi(A_i|X_i)/pi_b_i(A_i), the projected ascent direction solves
//   (F + ridge I) u = g,
//   F = (1/n) sum_i w_i s_i s_i',   g = (1/n) sum_i w_i (Y_i - lambda log pi_i) s_i.
// The induced tangent function is G(x, a) = u . s(x, a), and u' F u is the
// squared gradient norm in the policy geometry.
// ===========================================================================

struct GradientSolve {
  Eigen::VectorXd u;            // coordinates of the projected gradient
  Eigen::MatrixXd fisher;       // F (symmetric positive semidefinite)
  Eigen::VectorXd linear_term;  // g
  double ridge = 0.0;
  double grad_sq_norm = 0.0;    // u' F u
  // Set when the Fisher is singular relative to its own scale or the
  // regularized system's condition number exceeds 1e10: the solve is then
  // dominated by the ridge in some direction.
  bool condition_warning = false;
  double relative_residual = 0.0;  // ||(F + ridge I) u - g|| / max(||g||, tiny)
};

Eigen::MatrixXd assemble_fisher(const DatasetView& split, const PolicyClass& pc,
                                const PolicyParams& params);

Eigen::VectorXd assemble_linear_term(const DatasetView& split, const PolicyClass& pc,
                                     const PolicyParams& params, double lambda);

struct FisherAndLinear {
  Eigen::MatrixXd fisher;
  Eigen::VectorXd linear;
};

// One pass that assembles both. The moments variant evaluates the same sums
// from per-(context, action) sufficient statistics in O(M K d^2).
FisherAndLinear assemble_fisher_and_linear(const DatasetView& split, const PolicyClass& pc,
                                           const PolicyParams& params, double lambda);
FisherAndLinear assemble_fisher_and_linear_from_moments(const DiscreteMoments& m,
                                                        const PolicyClass& pc,
                                                        const PolicyParams& params,
                                                        double lambda);

// Default regularization: 1e-8 * trace(F) / dim.
double auto_ridge(const Eigen::MatrixXd& fisher);

// SPD solve of (F + ridge I) u = g via Cholesky with iterative refinement to
// a relative residual of 1e-10. Throws "Fisher singular; increase ridge" when
// the factorization fails or the residual target is unreachable.
// check_conditioning controls whether the eigenvalue-based condition warning
// is computed (inner integrator stages skip it).
GradientSolve solve_natural_gradient(const Eigen::MatrixXd& fisher,
                                     const Eigen::VectorXd& linear_term, double ridge,
                                     bool check_conditioning = true);

// Convenience: assemble on the split and solve. ridge = nullopt uses
// auto_ridge.
GradientSolve empirical_natural_gradient(const DatasetView& split, const PolicyClass& pc,
                                         const PolicyParams& params, double lambda,
                                         std::optional<double> ridge = std::nullopt);

// Population counterpart with exact expectations over the environment's
// support and ridge 0: the L2(pi) projection of the advantage onto the
// class's tangent space.
GradientSolve population_natural_gradient(const SyntheticEnv& env, const PolicyClass& pc,
                                          const PolicyParams& params, double lambda);

// Exact parameter gradient of the population soft value; coincides with the
// population linear term because scores are centered.
Eigen::VectorXd population_policy_gradient(const SyntheticEnv& env, const PolicyClass& pc,
                                           const PolicyParams& params, double lambda);

// Entropy-adjusted advantage on the environment's support, M x K:
// A(x, a) = (Q - lambda log pi)(x, a) - sum_a' pi(a'|x)(Q - lambda log pi)(x, a').
Eigen::MatrixXd advantage_function(const SyntheticEnv& env, const PolicyClass& pc,
                                   const PolicyParams& params, double lambda);

// Induced tangent function u . s(x, a) tabulated on the environment support.
Eigen::MatrixXd gradient_table(const SyntheticEnv& env, const PolicyClass& pc,
                               const PolicyParams& params, const Eigen::VectorXd& u);

}  // namespace npgflow
