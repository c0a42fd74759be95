#pragma once

#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace npgflow {

// ===========================================================================
// Contexts. A context is either a discrete id (tabular settings) or a dense
// real feature vector. Logged datasets are homogeneous in context kind.
// ===========================================================================

enum class ContextKind { Discrete, Dense };

class Context {
 public:
  // Default-constructed contexts are discrete with id -1; they exist so that
  // record structs are default-constructible and never pass validation.
  Context() = default;
  static Context discrete(int id);
  static Context dense(Eigen::VectorXd features);

  ContextKind kind() const { return kind_; }
  int id() const;                        // throws unless Discrete
  const Eigen::VectorXd& features() const;  // throws unless Dense

 private:
  ContextKind kind_ = ContextKind::Discrete;
  int id_ = -1;
  Eigen::VectorXd features_;
};

// ===========================================================================
// Logged interaction data. One record per round: context, chosen action,
// bounded reward, and the full behavior propensity vector at that context.
// ===========================================================================

struct LoggedInteraction {
  Context context;
  int action = -1;
  double reward = 0.0;            // in [0, 1]
  Eigen::VectorXd propensities;   // length K, sums to 1, entries >= overlap floor
};

// Per-record read counters, installed on demand; test instrumentation for
// split hygiene. Relaxed atomics: counts are exact only when readers join
// before inspection, which is how the tests use them.
class AccessCounter {
 public:
  explicit AccessCounter(std::size_t n) : counts_(n) {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
  }
  void bump(std::size_t i) const {
    counts_[i].fetch_add(1, std::memory_order_relaxed);
  }
  std::uint64_t count(std::size_t i) const {
    return counts_[i].load(std::memory_order_relaxed);
  }
  void reset() const {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
  }

 private:
  mutable std::vector<std::atomic<std::uint64_t>> counts_;
};

// Immutable after construction. Validation happens here: rewards in [0, 1],
// propensity simplex within 1e-9, every propensity >= the overlap floor,
// actions in range, homogeneous context kind.
class LoggedDataset {
 public:
  LoggedDataset(std::vector<LoggedInteraction> records, int num_actions,
                double overlap_floor = 0.01);

  int num_actions() const { return num_actions_; }
  double overlap_floor() const { return overlap_floor_; }
  ContextKind context_kind() const { return context_kind_; }
  std::size_t size() const { return records_.size(); }
  const LoggedInteraction& record(std::size_t i) const {
    if (counter_) counter_->bump(i);
    return records_[i];
  }
  // Raw access that bypasses instrumentation (serialization, validation).
  const LoggedInteraction& record_unchecked(std::size_t i) const { return records_[i]; }

  // Installs read counters. Call before sharing across threads.
  const AccessCounter& enable_access_counting();
  const AccessCounter* access_counter() const { return counter_.get(); }

 private:
  std::vector<LoggedInteraction> records_;
  int num_actions_ = 0;
  double overlap_floor_ = 0.0;
  ContextKind context_kind_ = ContextKind::Discrete;
  std::shared_ptr<AccessCounter> counter_;
};

// Index-restricted, read-only view of a dataset. Components receive views,
// never the full dataset, so estimating and selecting never touch records
// outside their own split.
class DatasetView {
 public:
  DatasetView(const LoggedDataset& data, std::vector<int> indices);

  const LoggedDataset& dataset() const { return *data_; }
  std::size_t size() const { return indices_.size(); }
  int num_actions() const { return data_->num_actions(); }
  const LoggedInteraction& record(std::size_t k) const {
    return data_->record(static_cast<std::size_t>(indices_[k]));
  }
  const std::vector<int>& indices() const { return indices_; }

 private:
  const LoggedDataset* data_;
  std::vector<int> indices_;
};

// ===========================================================================
// Three-way splits: index sets for splits -1 (warm start), 0 (flow
// gradients), 1 (index selection).
// ===========================================================================

struct SplitTriple {
  std::vector<int> split_minus1;
  std::vector<int> split0;
  std::vector<int> split1;
};

// Seeded shuffle, then contiguous assignment with sizes from the largest
// remainder rule (remainder ties broken in split order -1, 0, 1).
// fractions must be positive and sum to 1 within 1e-9. Throws
// "degenerate split" if any split would be empty.
SplitTriple split_dataset(const LoggedDataset& data,
                          const std::array<double, 3>& fractions,
                          std::uint64_t seed);

DatasetView view_of(const LoggedDataset& data, const std::vector<int>& indices);

// ===========================================================================
// Policy classes: softmax policies with explicit score features.
//
// TabularSoftmax over M contexts and K actions keeps one free logit block per
// context with the last action's logit pinned to zero, so the parameter
// dimension is M*(K-1) and the Fisher information stays nonsingular.
//
// LinearSoftmax has logits theta . f(x, a) for a feature map f; its score
// features are the centered features f(x, a) - sum_a' pi(a'|x) f(x, a').
// ===========================================================================

class FeatureMap {
 public:
  enum class Kind { OneHotCross, DenseCross, Table };

  // Indicator features on (context id, action) pairs for actions < K-1; the
  // induced linear class coincides with TabularSoftmax on M contexts.
  static FeatureMap one_hot_cross(int num_contexts, int num_actions);
  // Per-action blocks of [x; 1] for actions < K-1 over dense contexts.
  static FeatureMap dense_cross(int context_dim, int num_actions);
  // Explicit per-context feature rows: for each discrete context a K x d
  // matrix whose row a is f(x, a).
  static FeatureMap table(std::vector<Eigen::MatrixXd> per_context);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  int num_actions() const { return num_actions_; }
  // Number of discrete contexts the map is keyed on; 0 for dense maps.
  int num_contexts() const { return num_contexts_; }
  bool discrete_keyed() const { return kind_ != Kind::DenseCross; }

  void eval(const Context& x, int action, Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  friend class PolicyClass;  // tabular policies hold an unused default map
  FeatureMap() = default;
  Kind kind_ = Kind::OneHotCross;
  int dim_ = 0;
  int num_actions_ = 0;
  int num_contexts_ = 0;
  int context_dim_ = 0;
  std::vector<Eigen::MatrixXd> table_;
};

struct PolicyParams {
  PolicyParams() = default;
  explicit PolicyParams(Eigen::VectorXd t);
  Eigen::VectorXd theta;
};

class PolicyClass {
 public:
  enum class Kind { TabularSoftmax, LinearSoftmax };

  static PolicyClass tabular_softmax(int num_contexts, int num_actions);
  static PolicyClass linear_softmax(FeatureMap features);

  Kind kind() const { return kind_; }
  int num_actions() const { return num_actions_; }
  int param_dim() const { return param_dim_; }
  // Discrete contexts the class is keyed on; 0 when contexts are dense.
  int num_contexts() const { return num_contexts_; }
  bool discrete_keyed() const;
  const FeatureMap& features() const;

  Eigen::VectorXd logits(const PolicyParams& params, const Context& x) const;

  // pi(.|x); strictly positive, sums to 1.
  Eigen::VectorXd action_probabilities(const PolicyParams& params, const Context& x) const;

  // K x d matrix of score features s(x, a) = d/dtheta log pi(a|x); rows are
  // pi-centered per context: sum_a pi(a|x) s(x, a) = 0.
  Eigen::MatrixXd score_features(const PolicyParams& params, const Context& x) const;

  // Single row of score_features given precomputed probabilities.
  void score_row(const Context& x, int action, const Eigen::VectorXd& probs,
                 Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  PolicyClass() = default;
  Kind kind_ = Kind::TabularSoftmax;
  int num_actions_ = 0;
  int param_dim_ = 0;
  int num_contexts_ = 0;
  FeatureMap features_;
};

// Free-function aliases for the two policy evaluations used everywhere.
inline Eigen::VectorXd action_probabilities(const PolicyClass& pc,
                                            const PolicyParams& params,
                                            const Context& x) {
  return pc.action_probabilities(params, x);
}
inline Eigen::MatrixXd score_features(const PolicyClass& pc, const PolicyParams& params,
                                      const Context& x) {
  return pc.score_features(params, x);
}

}  // namespace npgflow
