#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "npgflow/core_model.hpp"

namespace npgflow {

// ===========================================================================
// Finite synthetic environments: M support contexts with weights q_X, a mean
// reward table Q in [0, 1]^{M x K}, a reward law, and a behavior policy.
// Population quantities are computed by exact summation over the support.
// ===========================================================================

struct RewardLaw {
  enum class Kind { Bernoulli, Beta };
  Kind kind = Kind::Bernoulli;
  // Beta draws use mean Q(a, x) and this concentration: alpha = mean * c,
  // beta = (1 - mean) * c. Requires mean strictly inside (0, 1).
  double concentration = 10.0;
};

class SyntheticEnv {
 public:
  // Discrete-context environment.
  SyntheticEnv(Eigen::VectorXd context_weights, Eigen::MatrixXd mean_reward,
               RewardLaw law, double lambda_default = 0.5);
  // Dense-context environment: one feature vector per support point.
  SyntheticEnv(std::vector<Eigen::VectorXd> dense_contexts,
               Eigen::VectorXd context_weights, Eigen::MatrixXd mean_reward,
               RewardLaw law, double lambda_default = 0.5);

  int num_contexts() const { return static_cast<int>(weights_.size()); }
  int num_actions() const { return static_cast<int>(mean_reward_.cols()); }
  ContextKind context_kind() const { return kind_; }
  const Eigen::VectorXd& context_weights() const { return weights_; }
  const Eigen::MatrixXd& mean_reward() const { return mean_reward_; }
  const RewardLaw& reward_law() const { return law_; }
  double lambda_default() const { return lambda_default_; }
  Context context(int m) const;

 private:
  ContextKind kind_ = ContextKind::Discrete;
  Eigen::VectorXd weights_;     // simplex over M support points
  Eigen::MatrixXd mean_reward_; // M x K
  RewardLaw law_;
  double lambda_default_ = 0.5;
  std::vector<Eigen::VectorXd> dense_contexts_;
};

struct BehaviorSpec {
  enum class Kind { Uniform, SoftmaxOfQ };
  Kind kind = Kind::Uniform;
  double temperature = 1.0;  // SoftmaxOfQ: propensities proportional to exp(Q / temperature)
  double floor = 0.01;       // overlap floor eta enforced by clip-and-renormalize
};

// Post-clip behavior propensities at support point m. All entries >= floor,
// sum exactly 1 up to a few ulps; these exact values are what gets logged.
Eigen::VectorXd behavior_propensities(const SyntheticEnv& env, const BehaviorSpec& behavior,
                                      int m);

// i.i.d. draws (X, A, Y): X ~ q_X, A ~ behavior(.|X), Y ~ reward law.
// Deterministic bit-for-bit given the seed. The returned dataset's overlap
// floor is behavior.floor.
LoggedDataset sample_logged_dataset(const SyntheticEnv& env, const BehaviorSpec& behavior,
                                    std::size_t n, std::uint64_t seed);

// Seed for replication r of a campaign with the given base seed.
inline std::uint64_t replication_seed(std::uint64_t base, std::uint64_t index) {
  return base ^ index;
}

// Row-wise softmax(Q / lambda): the maximizer of the entropy-regularized value
// over all conditional distributions. lambda > 0.
Eigen::MatrixXd soft_optimal_policy_nonparametric(const SyntheticEnv& env, double lambda);

// Value of the policy above: sum_x q_X(x) * lambda * logsumexp(Q(., x)/lambda).
double soft_optimal_value_nonparametric(const SyntheticEnv& env, double lambda);

// ===========================================================================
// In-class oracle and exact regret.
// ===========================================================================

struct OracleConfig {
  int restarts = 20;
  int max_steps = 5000;
  // Convergence threshold on g.u, the squared natural-gradient norm in the
  // Fisher metric; 1e-18 here is ~1e-9 in parameter error.
  double grad_tol = 1e-18;
  double init_scale = 1.0;
  std::uint64_t seed = 7771;
};

// Maximizes the population soft value over the class by multi-start ascent
// along natural-gradient directions with backtracking. Restarts whose final
// values disagree by more than 1e-6 trigger a nonconvexity warning; the best
// restart is returned.
PolicyParams oracle_in_class(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                             const OracleConfig& config = {});

struct RegretPair {
  double soft_regret = 0.0;  // J_lambda(oracle) - J_lambda(params)
  double hard_regret = 0.0;  // sup_class V - V(params)
};

// Exact population regrets of `params` against the in-class oracle. For
// TabularSoftmax the unregularized supremum is sum_x q_X max_a Q exactly; for
// LinearSoftmax it is approximated from below by an ascent with a small
// entropy weight, which can only make hard_regret smaller.
RegretPair exact_regret(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                        const PolicyParams& params, const PolicyParams& oracle_params);

// ===========================================================================
// Canned environments and JSON environment specs.
// ===========================================================================

// One context, two actions, Q = (0.9, 0.1), Bernoulli rewards.
SyntheticEnv fixture_a();

// Seeded random discrete environment: q_X from normalized U[0.5, 1.5),
// Q entries from U[0.05, 0.95), Bernoulli rewards.
SyntheticEnv make_random_env(int num_contexts, int num_actions, std::uint64_t seed);

struct EnvSpec {
  SyntheticEnv env;
  BehaviorSpec behavior;
};

// JSON document with keys contexts, q_x, Q, reward_law, behavior,
// lambda_default; or {"kind": "random", "num_contexts", "num_actions",
// "seed", ...}. See the README for the full schema.
EnvSpec parse_env_spec(const std::string& json_text);
EnvSpec load_env_spec(const std::string& path);
std::string env_spec_to_json(const SyntheticEnv& env, const BehaviorSpec& behavior);

}  // namespace npgflow
