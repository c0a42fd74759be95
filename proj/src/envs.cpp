#include "npgflow/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "npgflow/common.hpp"
#include "npgflow/learner.hpp"
#include "npgflow/natural_gradient.hpp"
#include "npgflow/objective.hpp"

namespace npgflow {

namespace {

void validate_env(const Eigen::VectorXd& weights, const Eigen::MatrixXd& mean_reward,
                  const RewardLaw& law, double lambda_default) {
  if (weights.size() < 1) throw std::invalid_argument("environment needs at least one context");
  if (mean_reward.rows() != weights.size())
    throw std::invalid_argument("mean reward rows must match the number of contexts");
  if (mean_reward.cols() < 2)
    throw std::invalid_argument("environment needs at least two actions");
  for (Eigen::Index m = 0; m < weights.size(); ++m) {
    if (!(weights[m] > 0.0))
      throw std::invalid_argument("context weights must be strictly positive");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("context weights must sum to 1");
  const bool strict = law.kind == RewardLaw::Kind::Beta;
  for (Eigen::Index m = 0; m < mean_reward.rows(); ++m) {
    for (Eigen::Index a = 0; a < mean_reward.cols(); ++a) {
      const double q = mean_reward(m, a);
      if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("mean rewards must lie in [0, 1]");
      if (strict && !(q > 0.0 && q < 1.0))
        throw std::invalid_argument("Beta rewards need means strictly inside (0, 1)");
    }
  }
  if (law.kind == RewardLaw::Kind::Beta && !(law.concentration > 0.0))
    throw std::invalid_argument("Beta concentration must be positive");
  if (!(lambda_default > 0.0)) throw std::invalid_argument("lambda must be positive");
}

}  // namespace

SyntheticEnv::SyntheticEnv(Eigen::VectorXd context_weights, Eigen::MatrixXd mean_reward,
                           RewardLaw law, double lambda_default)
    : kind_(ContextKind::Discrete),
      weights_(std::move(context_weights)),
      mean_reward_(std::move(mean_reward)),
      law_(law),
      lambda_default_(lambda_default) {
  validate_env(weights_, mean_reward_, law_, lambda_default_);
  weights_ /= weights_.sum();
}

SyntheticEnv::SyntheticEnv(std::vector<Eigen::VectorXd> dense_contexts,
                           Eigen::VectorXd context_weights, Eigen::MatrixXd mean_reward,
                           RewardLaw law, double lambda_default)
    : kind_(ContextKind::Dense),
      weights_(std::move(context_weights)),
      mean_reward_(std::move(mean_reward)),
      law_(law),
      lambda_default_(lambda_default),
      dense_contexts_(std::move(dense_contexts)) {
  validate_env(weights_, mean_reward_, law_, lambda_default_);
  if (static_cast<Eigen::Index>(dense_contexts_.size()) != weights_.size())
    throw std::invalid_argument("need one feature vector per support point");
  for (const auto& x : dense_contexts_) {
    if (x.size() != dense_contexts_.front().size() || x.size() < 1)
      throw std::invalid_argument("dense context features must share a positive dimension");
  }
  weights_ /= weights_.sum();
}

Context SyntheticEnv::context(int m) const {
  if (m < 0 || m >= num_contexts()) throw std::out_of_range("context index out of range");
  if (kind_ == ContextKind::Discrete) return Context::discrete(m);
  return Context::dense(dense_contexts_[static_cast<std::size_t>(m)]);
}

Eigen::VectorXd behavior_propensities(const SyntheticEnv& env, const BehaviorSpec& behavior,
                                      int m) {
  const int K = env.num_actions();
  Eigen::VectorXd p(K);
  switch (behavior.kind) {
    case BehaviorSpec::Kind::Uniform:
      p.setConstant(1.0 / static_cast<double>(K));
      break;
    case BehaviorSpec::Kind::SoftmaxOfQ: {
      if (!(behavior.temperature > 0.0))
        throw std::invalid_argument("behavior temperature must be positive");
      p = softmax(env.mean_reward().row(m).transpose() / behavior.temperature);
      break;
    }
  }
  const double eta = behavior.floor;
  if (eta <= 0.0) return p;
  if (eta * static_cast<double>(K) > 1.0)
    throw std::invalid_argument("behavior floor infeasible: floor * num_actions > 1");

  // Clip-and-renormalize: pin the smallest c entries at eta and scale the
  // rest to keep the simplex; c is the smallest count for which the smallest
  // unpinned entry stays above eta.
  std::vector<int> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return p[i] < p[j]; });
  double pinned_mass = 0.0;
  double tail = p.sum();
  int c = 0;
  double scale = 1.0;
  for (; c < K; ++c) {
    scale = (1.0 - pinned_mass) / tail;
    if (scale * p[order[static_cast<std::size_t>(c)]] >= eta) break;
    pinned_mass += eta;
    tail -= p[order[static_cast<std::size_t>(c)]];
  }
  Eigen::VectorXd out(K);
  for (int r = 0; r < K; ++r) {
    const int idx = order[static_cast<std::size_t>(r)];
    out[idx] = r < c ? eta : scale * p[idx];
  }
  out /= out.sum();
  // Guarantee min >= eta exactly after rounding; the excess comes off the
  // largest entry, which stays far above eta.
  double excess = 0.0;
  for (int a = 0; a < K; ++a) {
    if (out[a] < eta) {
      excess += eta - out[a];
      out[a] = eta;
    }
  }
  if (excess > 0.0) {
    Eigen::Index top;
    out.maxCoeff(&top);
    out[top] -= excess;
  }
  return out;
}

LoggedDataset sample_logged_dataset(const SyntheticEnv& env, const BehaviorSpec& behavior,
                                    std::size_t n, std::uint64_t seed) {
  const int M = env.num_contexts();
  const int K = env.num_actions();
  std::vector<Eigen::VectorXd> prop(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) prop[static_cast<std::size_t>(m)] = behavior_propensities(env, behavior, m);

  std::mt19937_64 rng(seed);
  std::vector<LoggedInteraction> records;
  records.reserve(n);
  const Eigen::VectorXd& q = env.context_weights();
  for (std::size_t i = 0; i < n; ++i) {
    double u = uniform01(rng);
    int m = M - 1;
    double acc = 0.0;
    for (int j = 0; j < M; ++j) {
      acc += q[j];
      if (u < acc) {
        m = j;
        break;
      }
    }
    const Eigen::VectorXd& pm = prop[static_cast<std::size_t>(m)];
    u = uniform01(rng);
    int a = K - 1;
    acc = 0.0;
    for (int j = 0; j < K; ++j) {
      acc += pm[j];
      if (u < acc) {
        a = j;
        break;
      }
    }
    const double mean = env.mean_reward()(m, a);
    double y = 0.0;
    switch (env.reward_law().kind) {
      case RewardLaw::Kind::Bernoulli:
        y = uniform01(rng) < mean ? 1.0 : 0.0;
        break;
      case RewardLaw::Kind::Beta: {
        const double c0 = env.reward_law().concentration;
        const double ga = sample_gamma(rng, mean * c0);
        const double gb = sample_gamma(rng, (1.0 - mean) * c0);
        y = ga / (ga + gb);
        break;
      }
    }
    records.push_back({env.context(m), a, y, pm});
  }
  return LoggedDataset(std::move(records), K, behavior.floor);
}

Eigen::MatrixXd soft_optimal_policy_nonparametric(const SyntheticEnv& env, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const int M = env.num_contexts();
  Eigen::MatrixXd pi(M, env.num_actions());
  for (int m = 0; m < M; ++m)
    pi.row(m) = softmax(env.mean_reward().row(m).transpose() / lambda).transpose();
  return pi;
}

double soft_optimal_value_nonparametric(const SyntheticEnv& env, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  KahanSum total;
  for (int m = 0; m < env.num_contexts(); ++m) {
    const double lse = logsumexp(env.mean_reward().row(m).transpose() / lambda);
    total.add(env.context_weights()[m] * lambda * lse);
  }
  return total.value();
}

PolicyParams oracle_in_class(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                             const OracleConfig& config) {
  auto oracle = [&](const Eigen::VectorXd& theta) {
    PolicyParams params(theta);
    GradientSolve solve = population_natural_gradient(env, pc, params, lambda);
    AscentStep s;
    s.value = population_soft_value(env, pc, params, lambda);
    s.gradient = std::move(solve.linear_term);
    s.direction = std::move(solve.u);
    return s;
  };
  AscentConfig ac;
  ac.max_steps = config.max_steps;
  ac.grad_tol = config.grad_tol;

  const int d = pc.param_dim();
  bool any = false;
  AscentResult best;
  double worst_converged = 0.0;
  double best_converged = 0.0;
  bool any_converged = false;
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::VectorXd init = Eigen::VectorXd::Zero(d);
    if (r > 0) {
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(r)));
      for (int j = 0; j < d; ++j) init[j] = config.init_scale * normal01(rng);
    }
    AscentResult res;
    try {
      res = backtracking_ascent(oracle, std::move(init), ac);
    } catch (const std::exception& e) {
      log_warn(std::string("oracle restart failed: ") + e.what());
      continue;
    }
    if (res.diverged) continue;
    if (res.converged) {
      if (!any_converged || res.value > best_converged) best_converged = res.value;
      if (!any_converged || res.value < worst_converged) worst_converged = res.value;
      any_converged = true;
    }
    if (!any || res.value > best.value) best = std::move(res);
    any = true;
  }
  if (!any) throw std::runtime_error("oracle: every restart diverged");
  if (any_converged && best_converged - worst_converged > 1e-6)
    log_warn("oracle restarts converged to values spread by " +
             std::to_string(best_converged - worst_converged) +
             "; objective appears nonconvex over this class");
  return PolicyParams(std::move(best.params));
}

RegretPair exact_regret(const SyntheticEnv& env, const PolicyClass& pc, double lambda,
                        const PolicyParams& params, const PolicyParams& oracle_params) {
  RegretPair out;
  out.soft_regret = population_soft_value(env, pc, oracle_params, lambda) -
                    population_soft_value(env, pc, params, lambda);
  double v_sup = 0.0;
  if (pc.kind() == PolicyClass::Kind::TabularSoftmax) {
    KahanSum total;
    for (int m = 0; m < env.num_contexts(); ++m)
      total.add(env.context_weights()[m] * env.mean_reward().row(m).maxCoeff());
    v_sup = total.value();
  } else {
    OracleConfig small;
    small.restarts = 5;
    PolicyParams hard = oracle_in_class(env, pc, 1e-6, small);
    v_sup = population_value(env, pc, hard);
  }
  out.hard_regret = v_sup - population_value(env, pc, params);
  return out;
}

SyntheticEnv fixture_a() {
  Eigen::VectorXd q(1);
  q << 1.0;
  Eigen::MatrixXd Q(1, 2);
  Q << 0.9, 0.1;
  return SyntheticEnv(q, Q, RewardLaw{}, 0.5);
}

SyntheticEnv make_random_env(int num_contexts, int num_actions, std::uint64_t seed) {
  if (num_contexts < 1 || num_actions < 2)
    throw std::invalid_argument("random env needs at least one context and two actions");
  std::mt19937_64 rng(seed);
  Eigen::VectorXd q(num_contexts);
  for (int m = 0; m < num_contexts; ++m) q[m] = 0.5 + uniform01(rng);
  q /= q.sum();
  Eigen::MatrixXd Q(num_contexts, num_actions);
  for (int m = 0; m < num_contexts; ++m)
    for (int a = 0; a < num_actions; ++a) Q(m, a) = 0.05 + 0.9 * uniform01(rng);
  return SyntheticEnv(q, Q, RewardLaw{}, 0.5);
}

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

BehaviorSpec parse_behavior(const json& j) {
  BehaviorSpec b;
  if (j.is_null()) return b;
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") {
    b.kind = BehaviorSpec::Kind::Uniform;
  } else if (kind == "softmax_of_q") {
    b.kind = BehaviorSpec::Kind::SoftmaxOfQ;
    b.temperature = j.value("temperature", 1.0);
  } else {
    throw std::invalid_argument("env spec: unknown behavior kind '" + kind + "'");
  }
  b.floor = j.value("floor", 0.01);
  return b;
}

RewardLaw parse_reward_law(const json& j) {
  RewardLaw law;
  if (j.is_null()) return law;
  const std::string kind = j.value("kind", "bernoulli");
  if (kind == "bernoulli") {
    law.kind = RewardLaw::Kind::Bernoulli;
  } else if (kind == "beta") {
    law.kind = RewardLaw::Kind::Beta;
    law.concentration = j.value("concentration", 10.0);
  } else {
    throw std::invalid_argument("env spec: unknown reward law '" + kind + "'");
  }
  return law;
}

}  // namespace

EnvSpec parse_env_spec(const std::string& json_text) {
  json j = json::parse(json_text);
  BehaviorSpec behavior = parse_behavior(j.contains("behavior") ? j["behavior"] : json());
  const double lambda_default = j.value("lambda_default", 0.5);

  if (j.value("kind", "") == "random") {
    for (const char* key : {"num_contexts", "num_actions", "seed"})
      if (!j.contains(key))
        throw std::invalid_argument(std::string("env spec: random spec needs '") + key + "'");
    SyntheticEnv env = make_random_env(j["num_contexts"].get<int>(), j["num_actions"].get<int>(),
                                       j["seed"].get<std::uint64_t>());
    SyntheticEnv with_lambda(env.context_weights(), env.mean_reward(), env.reward_law(),
                             lambda_default);
    return EnvSpec{std::move(with_lambda), behavior};
  }

  if (!j.contains("Q")) throw std::invalid_argument("env spec: missing 'Q'");
  const auto& jq = j["Q"];
  const int M = static_cast<int>(jq.size());
  if (M < 1 || !jq[0].is_array()) throw std::invalid_argument("env spec: 'Q' must be a matrix");
  const int K = static_cast<int>(jq[0].size());
  Eigen::MatrixXd Q(M, K);
  for (int m = 0; m < M; ++m) {
    if (static_cast<int>(jq[m].size()) != K)
      throw std::invalid_argument("env spec: ragged 'Q'");
    for (int a = 0; a < K; ++a) Q(m, a) = jq[m][a].get<double>();
  }
  Eigen::VectorXd q = Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  if (j.contains("q_x")) {
    const auto& jw = j["q_x"];
    if (static_cast<int>(jw.size()) != M)
      throw std::invalid_argument("env spec: 'q_x' length must match 'Q' rows");
    for (int m = 0; m < M; ++m) q[m] = jw[m].get<double>();
  }
  RewardLaw law = parse_reward_law(j.contains("reward_law") ? j["reward_law"] : json());

  if (j.contains("contexts") && j["contexts"].is_array()) {
    const auto& jc = j["contexts"];
    if (static_cast<int>(jc.size()) != M)
      throw std::invalid_argument("env spec: 'contexts' length must match 'Q' rows");
    std::vector<Eigen::VectorXd> feats;
    feats.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      const auto& row = jc[m];
      Eigen::VectorXd x(row.size());
      for (std::size_t p = 0; p < row.size(); ++p) x[static_cast<Eigen::Index>(p)] = row[p].get<double>();
      feats.push_back(std::move(x));
    }
    return EnvSpec{SyntheticEnv(std::move(feats), q, Q, law, lambda_default), behavior};
  }
  return EnvSpec{SyntheticEnv(q, Q, law, lambda_default), behavior};
}

EnvSpec load_env_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open env spec file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_env_spec(buf.str());
}

std::string env_spec_to_json(const SyntheticEnv& env, const BehaviorSpec& behavior) {
  ordered_json j;
  const int M = env.num_contexts();
  const int K = env.num_actions();
  j["q_x"] = std::vector<double>(env.context_weights().begin(), env.context_weights().end());
  ordered_json rows = ordered_json::array();
  for (int m = 0; m < M; ++m) {
    ordered_json row = ordered_json::array();
    for (int a = 0; a < K; ++a) row.push_back(env.mean_reward()(m, a));
    rows.push_back(std::move(row));
  }
  j["Q"] = std::move(rows);
  if (env.context_kind() == ContextKind::Dense) {
    ordered_json ctxs = ordered_json::array();
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd& x = env.context(m).features();
      ctxs.push_back(std::vector<double>(x.begin(), x.end()));
    }
    j["contexts"] = std::move(ctxs);
  }
  if (env.reward_law().kind == RewardLaw::Kind::Beta)
    j["reward_law"] = {{"kind", "beta"}, {"concentration", env.reward_law().concentration}};
  else
    j["reward_law"] = {{"kind", "bernoulli"}};
  j["lambda_default"] = env.lambda_default();
  ordered_json b;
  b["kind"] = behavior.kind == BehaviorSpec::Kind::Uniform ? "uniform" : "softmax_of_q";
  if (behavior.kind == BehaviorSpec::Kind::SoftmaxOfQ) b["temperature"] = behavior.temperature;
  b["floor"] = behavior.floor;
  j["behavior"] = std::move(b);
  return j.dump(2);
}

}  // namespace npgflow
