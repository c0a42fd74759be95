#include "npgflow/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "npgflow/common.hpp"

namespace npgflow {

// ---------------------------------------------------------------------------
// Context
// ---------------------------------------------------------------------------

Context Context::discrete(int id) {
  if (id < 0) throw std::invalid_argument("Context: discrete id must be >= 0");
  Context c;
  c.kind_ = ContextKind::Discrete;
  c.id_ = id;
  return c;
}

Context Context::dense(Eigen::VectorXd features) {
  if (features.size() == 0) throw std::invalid_argument("Context: empty feature vector");
  if (!features.allFinite()) throw std::invalid_argument("Context: non-finite features");
  Context c;
  c.kind_ = ContextKind::Dense;
  c.features_ = std::move(features);
  return c;
}

int Context::id() const {
  if (kind_ != ContextKind::Discrete)
    throw std::logic_error("Context: id() on a dense context");
  return id_;
}

const Eigen::VectorXd& Context::features() const {
  if (kind_ != ContextKind::Dense)
    throw std::logic_error("Context: features() on a discrete context");
  return features_;
}

// ---------------------------------------------------------------------------
// LoggedDataset
// ---------------------------------------------------------------------------

LoggedDataset::LoggedDataset(std::vector<LoggedInteraction> records, int num_actions,
                             double overlap_floor)
    : records_(std::move(records)),
      num_actions_(num_actions),
      overlap_floor_(overlap_floor) {
  if (records_.empty()) throw std::invalid_argument("LoggedDataset: no records");
  if (num_actions_ < 2) throw std::invalid_argument("LoggedDataset: need at least 2 actions");
  if (!(overlap_floor_ > 0.0))
    throw std::invalid_argument("LoggedDataset: overlap floor must be > 0");
  context_kind_ = records_.front().context.kind();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const LoggedInteraction& r = records_[i];
    const std::string at = "record " + std::to_string(i) + ": ";
    if (r.context.kind() != context_kind_)
      throw std::invalid_argument(at + "mixed context kinds in one dataset");
    if (r.action < 0 || r.action >= num_actions_)
      throw std::invalid_argument(at + "action out of range");
    if (!std::isfinite(r.reward) || r.reward < 0.0 || r.reward > 1.0)
      throw std::invalid_argument(at + "reward outside [0, 1]");
    if (r.propensities.size() != num_actions_)
      throw std::invalid_argument(at + "propensity vector has wrong length");
    double sum = 0.0;
    for (Eigen::Index a = 0; a < r.propensities.size(); ++a) {
      double p = r.propensities[a];
      if (!std::isfinite(p))
        throw std::invalid_argument(at + "non-finite propensity");
      if (p < overlap_floor_)
        throw std::invalid_argument(at + "behavior propensity " + std::to_string(p) +
                                    " below overlap floor " + std::to_string(overlap_floor_));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument(at + "propensities do not sum to 1");
    if (!(r.propensities[r.action] > 0.0))
      throw std::invalid_argument(at + "chosen action has nonpositive propensity");
  }
}

const AccessCounter& LoggedDataset::enable_access_counting() {
  counter_ = std::make_shared<AccessCounter>(records_.size());
  return *counter_;
}

// ---------------------------------------------------------------------------
// DatasetView / splits
// ---------------------------------------------------------------------------

DatasetView::DatasetView(const LoggedDataset& data, std::vector<int> indices)
    : data_(&data), indices_(std::move(indices)) {
  for (int i : indices_) {
    if (i < 0 || static_cast<std::size_t>(i) >= data.size())
      throw std::invalid_argument("DatasetView: index out of range");
  }
}

DatasetView view_of(const LoggedDataset& data, const std::vector<int>& indices) {
  return DatasetView(data, indices);
}

SplitTriple split_dataset(const LoggedDataset& data,
                          const std::array<double, 3>& fractions,
                          std::uint64_t seed) {
  double frac_sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split_dataset: fractions must be positive");
    frac_sum += f;
  }
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: fractions must sum to 1");

  const std::size_t n = data.size();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  // Largest remainder rule; ties on the remainder go to the earlier split in
  // the order (-1, 0, 1).
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double target = fractions[s] * static_cast<double>(n);
    sizes[s] = static_cast<std::size_t>(std::floor(target));
    remainder[s] = target - std::floor(target);
    assigned += sizes[s];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t left = n - assigned, k = 0; k < left; ++k) sizes[order[k]] += 1;

  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0)
    throw std::invalid_argument("degenerate split: a split received zero records");

  SplitTriple out;
  auto it = perm.begin();
  out.split_minus1.assign(it, it + sizes[0]);
  it += sizes[0];
  out.split0.assign(it, it + sizes[1]);
  it += sizes[1];
  out.split1.assign(it, it + sizes[2]);
  return out;
}

// ---------------------------------------------------------------------------
// FeatureMap
// ---------------------------------------------------------------------------

FeatureMap FeatureMap::one_hot_cross(int num_contexts, int num_actions) {
  if (num_contexts < 1 || num_actions < 2)
    throw std::invalid_argument("FeatureMap: need >= 1 context and >= 2 actions");
  FeatureMap f;
  f.kind_ = Kind::OneHotCross;
  f.num_contexts_ = num_contexts;
  f.num_actions_ = num_actions;
  f.dim_ = num_contexts * (num_actions - 1);
  return f;
}

FeatureMap FeatureMap::dense_cross(int context_dim, int num_actions) {
  if (context_dim < 1 || num_actions < 2)
    throw std::invalid_argument("FeatureMap: need >= 1 feature and >= 2 actions");
  FeatureMap f;
  f.kind_ = Kind::DenseCross;
  f.context_dim_ = context_dim;
  f.num_actions_ = num_actions;
  f.dim_ = (context_dim + 1) * (num_actions - 1);
  return f;
}

FeatureMap FeatureMap::table(std::vector<Eigen::MatrixXd> per_context) {
  if (per_context.empty()) throw std::invalid_argument("FeatureMap: empty table");
  const Eigen::Index k = per_context.front().rows();
  const Eigen::Index d = per_context.front().cols();
  if (k < 2 || d < 1) throw std::invalid_argument("FeatureMap: table must be K x d, K >= 2");
  for (const auto& m : per_context) {
    if (m.rows() != k || m.cols() != d)
      throw std::invalid_argument("FeatureMap: ragged table");
    if (!m.allFinite()) throw std::invalid_argument("FeatureMap: non-finite features");
  }
  FeatureMap f;
  f.kind_ = Kind::Table;
  f.num_contexts_ = static_cast<int>(per_context.size());
  f.num_actions_ = static_cast<int>(k);
  f.dim_ = static_cast<int>(d);
  f.table_ = std::move(per_context);
  return f;
}

void FeatureMap::eval(const Context& x, int action, Eigen::Ref<Eigen::VectorXd> out) const {
  if (action < 0 || action >= num_actions_)
    throw std::invalid_argument("FeatureMap: action out of range");
  if (out.size() != dim_) throw std::invalid_argument("FeatureMap: bad output size");
  out.setZero();
  switch (kind_) {
    case Kind::OneHotCross: {
      int id = x.id();
      if (id >= num_contexts_) throw std::invalid_argument("FeatureMap: context id out of range");
      if (action < num_actions_ - 1) out[id * (num_actions_ - 1) + action] = 1.0;
      return;
    }
    case Kind::DenseCross: {
      const Eigen::VectorXd& v = x.features();
      if (v.size() != context_dim_)
        throw std::invalid_argument("FeatureMap: context dimension mismatch");
      if (action < num_actions_ - 1) {
        int base = action * (context_dim_ + 1);
        out.segment(base, context_dim_) = v;
        out[base + context_dim_] = 1.0;
      }
      return;
    }
    case Kind::Table: {
      int id = x.id();
      if (id >= num_contexts_) throw std::invalid_argument("FeatureMap: context id out of range");
      out = table_[static_cast<std::size_t>(id)].row(action).transpose();
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// PolicyParams / PolicyClass
// ---------------------------------------------------------------------------

PolicyParams::PolicyParams(Eigen::VectorXd t) : theta(std::move(t)) {
  if (!theta.allFinite()) throw std::invalid_argument("PolicyParams: non-finite entries");
}

PolicyClass PolicyClass::tabular_softmax(int num_contexts, int num_actions) {
  if (num_contexts < 1 || num_actions < 2)
    throw std::invalid_argument("PolicyClass: need >= 1 context and >= 2 actions");
  PolicyClass pc;
  pc.kind_ = Kind::TabularSoftmax;
  pc.num_contexts_ = num_contexts;
  pc.num_actions_ = num_actions;
  pc.param_dim_ = num_contexts * (num_actions - 1);
  return pc;
}

PolicyClass PolicyClass::linear_softmax(FeatureMap features) {
  PolicyClass pc;
  pc.kind_ = Kind::LinearSoftmax;
  pc.num_actions_ = features.num_actions();
  pc.param_dim_ = features.dim();
  pc.num_contexts_ = features.num_contexts();
  pc.features_ = std::move(features);
  return pc;
}

bool PolicyClass::discrete_keyed() const {
  if (kind_ == Kind::TabularSoftmax) return true;
  return features_.discrete_keyed();
}

const FeatureMap& PolicyClass::features() const {
  if (kind_ != Kind::LinearSoftmax)
    throw std::logic_error("PolicyClass: features() on a tabular class");
  return features_;
}

Eigen::VectorXd PolicyClass::logits(const PolicyParams& params, const Context& x) const {
  if (params.theta.size() != param_dim_)
    throw std::invalid_argument("PolicyClass: parameter dimension mismatch");
  Eigen::VectorXd z(num_actions_);
  if (kind_ == Kind::TabularSoftmax) {
    int id = x.id();
    if (id >= num_contexts_)
      throw std::invalid_argument("PolicyClass: context id out of range");
    const int base = id * (num_actions_ - 1);
    for (int a = 0; a < num_actions_ - 1; ++a) z[a] = params.theta[base + a];
    z[num_actions_ - 1] = 0.0;  // gauge: last action's logit pinned
  } else {
    Eigen::VectorXd f(param_dim_);
    for (int a = 0; a < num_actions_; ++a) {
      features_.eval(x, a, f);
      z[a] = params.theta.dot(f);
    }
  }
  if (!z.allFinite()) throw std::invalid_argument("PolicyClass: non-finite logits");
  return z;
}

Eigen::VectorXd PolicyClass::action_probabilities(const PolicyParams& params,
                                                  const Context& x) const {
  return softmax(logits(params, x));
}

void PolicyClass::score_row(const Context& x, int action, const Eigen::VectorXd& probs,
                            Eigen::Ref<Eigen::VectorXd> out) const {
  if (action < 0 || action >= num_actions_)
    throw std::invalid_argument("PolicyClass: action out of range");
  out.setZero();
  if (kind_ == Kind::TabularSoftmax ||
      features_.kind() == FeatureMap::Kind::OneHotCross) {
    // Nonzero only in this context's block: (1{a = j} - pi_j) for j < K-1.
    const int base = x.id() * (num_actions_ - 1);
    for (int j = 0; j < num_actions_ - 1; ++j) out[base + j] = -probs[j];
    if (action < num_actions_ - 1) out[base + action] += 1.0;
    return;
  }
  // Generic linear case: f(x, a) - sum_a' pi(a') f(x, a').
  Eigen::VectorXd f(param_dim_);
  for (int a = 0; a < num_actions_; ++a) {
    features_.eval(x, a, f);
    if (a == action) out += f;
    out -= probs[a] * f;
  }
}

Eigen::MatrixXd PolicyClass::score_features(const PolicyParams& params,
                                            const Context& x) const {
  Eigen::VectorXd probs = action_probabilities(params, x);
  Eigen::MatrixXd s(num_actions_, param_dim_);
  Eigen::VectorXd row(param_dim_);
  for (int a = 0; a < num_actions_; ++a) {
    score_row(x, a, probs, row);
    s.row(a) = row.transpose();
  }
  return s;
}

}  // namespace npgflow
