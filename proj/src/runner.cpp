#include "npgflow/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "npgflow/common.hpp"
#include "npgflow/dataset_io.hpp"
#include "npgflow/objective.hpp"

namespace npgflow {

namespace {

using ordered_json = nlohmann::ordered_json;

// Shortest exact decimal for a double; CSV cells round-trip bitwise.
std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void expect_keys(const ordered_json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("unknown config key: " + where + item.key());
  }
}

Integrator parse_integrator(const std::string& s) {
  if (s == "rk4") return Integrator::RK4;
  if (s == "euler") return Integrator::Euler;
  throw std::invalid_argument("integrator must be \"rk4\" or \"euler\", got \"" + s + "\"");
}

EntropyEstimator parse_entropy_estimator(const std::string& s) {
  if (s == "exact_context_average") return EntropyEstimator::ExactContextAverage;
  if (s == "is_weighted") return EntropyEstimator::ISWeighted;
  throw std::invalid_argument(
      "entropy_estimator must be \"exact_context_average\" or \"is_weighted\", got \"" + s +
      "\"");
}

std::vector<std::uint64_t> parse_seeds_field(const ordered_json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_number_integer()) {
    seeds.push_back(j.get<std::uint64_t>());
  } else if (j.is_string()) {
    seeds = parse_seed_range(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& s : j) seeds.push_back(s.get<std::uint64_t>());
  } else {
    throw std::invalid_argument("seeds must be an integer, an array, or a \"A..B\" range");
  }
  if (seeds.empty()) throw std::invalid_argument("seeds must be nonempty");
  return seeds;
}

EnvSpec resolve_env(const RunConfig& config) {
  if (!config.env_inline.is_null()) return parse_env_spec(config.env_inline.dump());
  if (config.env_path.empty())
    throw std::invalid_argument("config has no \"env\": give a spec path or inline object");
  return load_env_spec(config.env_path);
}

PolicyClass build_policy(const RunConfig& config, const SyntheticEnv& env) {
  if (config.policy_class == "tabular_softmax") {
    if (env.context_kind() != ContextKind::Discrete)
      throw std::invalid_argument("tabular_softmax needs discrete contexts");
    return PolicyClass::tabular_softmax(env.num_contexts(), env.num_actions());
  }
  if (config.policy_class == "linear_softmax") {
    if (config.feature_map == "one_hot_cross") {
      if (env.context_kind() != ContextKind::Discrete)
        throw std::invalid_argument("one_hot_cross needs discrete contexts");
      return PolicyClass::linear_softmax(
          FeatureMap::one_hot_cross(env.num_contexts(), env.num_actions()));
    }
    if (config.feature_map == "dense_cross") {
      if (env.context_kind() != ContextKind::Dense)
        throw std::invalid_argument("dense_cross needs dense contexts");
      return PolicyClass::linear_softmax(FeatureMap::dense_cross(
          static_cast<int>(env.context(0).features().size()), env.num_actions()));
    }
    throw std::invalid_argument("feature_map must be \"one_hot_cross\" or \"dense_cross\"");
  }
  throw std::invalid_argument("policy_class must be \"tabular_softmax\" or \"linear_softmax\"");
}

LearnerConfig learner_config_of(const RunConfig& config, double lambda, std::uint64_t seed) {
  LearnerConfig lc;
  lc.lambda = lambda;
  lc.seed = seed;
  lc.erm = config.erm;
  lc.flow = config.flow;
  lc.select = config.select;
  lc.ridge = config.ridge;
  lc.entropy_estimator = config.entropy_estimator;
  return lc;
}

void require_positive_lambda(double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument(
        "lambda must be positive: the entropy term is what makes the soft maximizer interior "
        "to the simplex, and index selection relies on an interior maximizer");
}

std::filesystem::path ensure_out_dir(const RunConfig& config) {
  std::filesystem::path dir(config.out_dir.empty() ? "." : config.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

VerifyRow run_one_seed(const EnvSpec& spec, const PolicyClass& pc, const RunConfig& config,
                       double lambda, int n_per_split, const PolicyParams& oracle_params,
                       std::uint64_t seed, bool with_hard_regret) {
  VerifyRow row;
  row.seed = seed;
  row.n_per_split = n_per_split;
  row.lambda = lambda;
  try {
    LoggedDataset data = sample_logged_dataset(spec.env, spec.behavior,
                                               3 * static_cast<std::size_t>(n_per_split), seed);
    LearnerConfig lc = learner_config_of(config, lambda, seed);
    DebiasedResult result = debiased_policy_learning(data, pc, lc);
    DatasetView grad_split = view_of(data, result.splits.split0);
    DatasetView value_split = view_of(data, result.splits.split1);
    row.report = compute_terms(spec.env, grad_split, value_split, pc, lambda, result,
                               oracle_params, std::nullopt);
    if (with_hard_regret) {
      RegretPair reg = exact_regret(spec.env, pc, lambda, result.selected_params, oracle_params);
      row.hard_regret = reg.hard_regret;
      row.hard_soft_gap = reg.hard_regret - reg.soft_regret;
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::vector<VerifyRow> run_campaign_impl(const EnvSpec& spec, const PolicyClass& pc,
                                         const RunConfig& config, double lambda,
                                         int n_per_split, const PolicyParams& oracle_params,
                                         bool with_hard_regret) {
  const std::vector<std::uint64_t>& seeds = config.seeds;
  std::vector<VerifyRow> rows(seeds.size());
  const int jobs = std::min<int>(std::max(1, config.jobs), static_cast<int>(seeds.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      rows[i] = run_one_seed(spec, pc, config, lambda, n_per_split, oracle_params, seeds[i],
                             with_hard_regret);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

struct CampaignStats {
  int ok = 0;
  int failed = 0;
  int interior = 0;
  int violations = 0;  // interior runs with slack < -eps_tol
};

CampaignStats stats_of(const std::vector<VerifyRow>& rows) {
  CampaignStats s;
  for (const VerifyRow& r : rows) {
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    ++s.ok;
    if (r.report.interior) {
      ++s.interior;
      if (r.report.bound_slack < -r.report.eps_tol) ++s.violations;
    }
  }
  return s;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe m;
  if (xs.empty()) return m;
  KahanSum sum;
  for (double x : xs) sum.add(x);
  m.mean = sum.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    KahanSum sq;
    for (double x : xs) sq.add((x - m.mean) * (x - m.mean));
    const double var = sq.value() / static_cast<double>(xs.size() - 1);
    m.se = std::sqrt(std::max(0.0, var) / static_cast<double>(xs.size()));
  }
  return m;
}

void write_verify_csv(const std::filesystem::path& path, const std::vector<VerifyRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "seed,N,lambda,soft_regret,I,II,III,slack,interior,stationarity_residual\n";
  for (const VerifyRow& r : rows) {
    if (!r.ok) continue;
    out << r.seed << ',' << r.n_per_split << ',' << fmt17(r.lambda) << ','
        << fmt17(r.report.soft_regret) << ',' << fmt17(r.report.term_I) << ','
        << fmt17(r.report.term_II) << ',' << fmt17(r.report.term_III) << ','
        << fmt17(r.report.bound_slack) << ',' << (r.report.interior ? 1 : 0) << ','
        << fmt17(r.report.stationarity_residual) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void print_campaign_summary(std::ostream& out, const std::vector<VerifyRow>& rows,
                            const CampaignStats& s) {
  std::vector<double> regret, abs1, abs2, t3, slack;
  for (const VerifyRow& r : rows) {
    if (!r.ok) continue;
    regret.push_back(r.report.soft_regret);
    abs1.push_back(std::abs(r.report.term_I));
    abs2.push_back(std::abs(r.report.term_II));
    t3.push_back(r.report.term_III);
    slack.push_back(r.report.bound_slack);
  }
  out << "  runs ok " << s.ok << ", failed " << s.failed << "; interior " << s.interior << "/"
      << s.ok;
  if (s.ok > 0)
    out << " (" << fmt17(static_cast<double>(s.interior) / static_cast<double>(s.ok)) << ")";
  out << "\n  bound violations among interior runs: " << s.violations << "\n";
  out << "  mean soft_regret " << fmt17(mean_se(regret).mean) << ", mean |I| "
      << fmt17(mean_se(abs1).mean) << ", mean |II| " << fmt17(mean_se(abs2).mean)
      << ", mean III " << fmt17(mean_se(t3).mean) << ", mean slack "
      << fmt17(mean_se(slack).mean) << "\n";
  for (const VerifyRow& r : rows)
    if (!r.ok) out << "  seed " << r.seed << " failed: " << r.error << "\n";
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.env_path = "configs/fixture_a.env.json";
  return c;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  const auto pos = text.find("..");
  if (pos == std::string::npos)
    throw std::invalid_argument("seed range must look like \"A..B\", got \"" + text + "\"");
  std::uint64_t a = 0, b = 0;
  try {
    a = std::stoull(text.substr(0, pos));
    b = std::stoull(text.substr(pos + 2));
  } catch (const std::exception&) {
    throw std::invalid_argument("seed range must look like \"A..B\", got \"" + text + "\"");
  }
  if (a > b) throw std::invalid_argument("seed range is empty: \"" + text + "\"");
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(b - a + 1));
  for (std::uint64_t s = a;; ++s) {
    seeds.push_back(s);
    if (s == b) break;
  }
  return seeds;
}

RunConfig parse_run_config(const ordered_json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  expect_keys(doc, "",
              {"env", "policy_class", "feature_map", "lambda", "n_per_split", "seeds",
               "dataset", "erm", "flow", "select", "ridge", "entropy_estimator", "out_dir",
               "jobs", "sweep"});
  RunConfig c = default_run_config();
  c.env_path.clear();

  if (doc.contains("env")) {
    const auto& e = doc["env"];
    if (e.is_string())
      c.env_path = e.get<std::string>();
    else if (e.is_object())
      c.env_inline = e;
    else
      throw std::invalid_argument("env must be a spec path or an inline spec object");
  }
  if (doc.contains("policy_class")) c.policy_class = doc["policy_class"].get<std::string>();
  if (doc.contains("feature_map")) c.feature_map = doc["feature_map"].get<std::string>();
  if (doc.contains("lambda")) {
    c.lambda = doc["lambda"].get<double>();
    if (c.lambda < 0.0 || !std::isfinite(c.lambda))
      throw std::invalid_argument("lambda must be finite and nonnegative");
  }
  if (doc.contains("n_per_split")) {
    c.n_per_split = doc["n_per_split"].get<int>();
    if (c.n_per_split < 1) throw std::invalid_argument("n_per_split must be at least 1");
  }
  if (doc.contains("seeds")) c.seeds = parse_seeds_field(doc["seeds"]);
  if (doc.contains("dataset")) c.dataset_path = doc["dataset"].get<std::string>();

  if (doc.contains("erm")) {
    const auto& e = doc["erm"];
    expect_keys(e, "erm.", {"restarts", "max_steps", "init_scale", "grad_tol", "step_init"});
    if (e.contains("restarts")) c.erm.restarts = e["restarts"].get<int>();
    if (e.contains("max_steps")) c.erm.max_steps = e["max_steps"].get<int>();
    if (e.contains("init_scale")) c.erm.init_scale = e["init_scale"].get<double>();
    if (e.contains("grad_tol")) c.erm.grad_tol = e["grad_tol"].get<double>();
    if (e.contains("step_init")) c.erm.step_init = e["step_init"].get<double>();
  }
  if (doc.contains("flow")) {
    const auto& f = doc["flow"];
    expect_keys(f, "flow.",
                {"step_size", "t_max", "integrator", "stop_grad_norm", "checkpoint_every"});
    if (f.contains("step_size")) c.flow.step_size = f["step_size"].get<double>();
    if (f.contains("t_max")) c.flow.t_max = f["t_max"].get<double>();
    if (f.contains("integrator"))
      c.flow.integrator = parse_integrator(f["integrator"].get<std::string>());
    if (f.contains("stop_grad_norm")) c.flow.stop_grad_norm = f["stop_grad_norm"].get<double>();
    if (f.contains("checkpoint_every"))
      c.flow.checkpoint_every = f["checkpoint_every"].get<int>();
  }
  if (doc.contains("select")) {
    const auto& s = doc["select"];
    expect_keys(s, "select.", {"tol"});
    if (s.contains("tol")) c.select.tol = s["tol"].get<double>();
  }
  if (doc.contains("ridge") && !doc["ridge"].is_null()) c.ridge = doc["ridge"].get<double>();
  if (doc.contains("entropy_estimator"))
    c.entropy_estimator = parse_entropy_estimator(doc["entropy_estimator"].get<std::string>());
  if (doc.contains("out_dir")) c.out_dir = doc["out_dir"].get<std::string>();
  if (doc.contains("jobs")) {
    c.jobs = doc["jobs"].get<int>();
    if (c.jobs < 1) throw std::invalid_argument("jobs must be at least 1");
  }
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    expect_keys(s, "sweep.", {"axis", "values"});
    if (s.contains("axis")) c.sweep.axis = s["axis"].get<std::string>();
    if (c.sweep.axis != "N" && c.sweep.axis != "lambda")
      throw std::invalid_argument("sweep axis must be \"N\" or \"lambda\"");
    c.sweep.values.clear();
    if (s.contains("values"))
      for (const auto& v : s["values"]) c.sweep.values.push_back(v.get<double>());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return parse_run_config(doc);
}

nlohmann::ordered_json run_config_to_json(const RunConfig& config) {
  ordered_json j;
  if (!config.env_inline.is_null())
    j["env"] = config.env_inline;
  else
    j["env"] = config.env_path;
  j["policy_class"] = config.policy_class;
  j["feature_map"] = config.feature_map;
  j["lambda"] = config.lambda;
  j["n_per_split"] = config.n_per_split;
  j["seeds"] = config.seeds;
  if (!config.dataset_path.empty()) j["dataset"] = config.dataset_path;
  j["erm"] = {{"restarts", config.erm.restarts},
              {"max_steps", config.erm.max_steps},
              {"init_scale", config.erm.init_scale},
              {"grad_tol", config.erm.grad_tol},
              {"step_init", config.erm.step_init}};
  j["flow"] = {{"step_size", config.flow.step_size},
               {"t_max", config.flow.t_max},
               {"integrator", config.flow.integrator == Integrator::RK4 ? "rk4" : "euler"},
               {"stop_grad_norm", config.flow.stop_grad_norm},
               {"checkpoint_every", config.flow.checkpoint_every}};
  j["select"] = {{"tol", config.select.tol}};
  if (config.ridge)
    j["ridge"] = *config.ridge;
  else
    j["ridge"] = nullptr;
  j["entropy_estimator"] = config.entropy_estimator == EntropyEstimator::ExactContextAverage
                               ? "exact_context_average"
                               : "is_weighted";
  j["out_dir"] = config.out_dir;
  j["jobs"] = config.jobs;
  j["sweep"] = {{"axis", config.sweep.axis}, {"values", config.sweep.values}};
  return j;
}

void apply_overrides(RunConfig& config, const CliOverrides& overrides) {
  if (overrides.seed && overrides.seed_range)
    throw std::invalid_argument("--seed and --seeds are mutually exclusive");
  if (overrides.seed) config.seeds = {*overrides.seed};
  if (overrides.seed_range) config.seeds = parse_seed_range(*overrides.seed_range);
  if (overrides.jobs) {
    if (*overrides.jobs < 1) throw std::invalid_argument("--jobs must be at least 1");
    config.jobs = *overrides.jobs;
  }
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
}

std::vector<VerifyRow> run_campaign(const EnvSpec& spec, const PolicyClass& pc,
                                    const RunConfig& config, double lambda, int n_per_split,
                                    const PolicyParams& oracle_params) {
  return run_campaign_impl(spec, pc, config, lambda, n_per_split, oracle_params, false);
}

int cmd_print_defaults(std::ostream& out) {
  out << run_config_to_json(default_run_config()).dump(2) << "\n";
  return 0;
}

int cmd_generate(const RunConfig& config, std::optional<std::size_t> n_records,
                 std::ostream& out) {
  EnvSpec spec = resolve_env(config);
  const std::uint64_t seed = config.seeds.front();
  const std::size_t n = n_records.value_or(3 * static_cast<std::size_t>(config.n_per_split));
  if (n == 0) throw std::invalid_argument("record count must be positive");
  LoggedDataset data = sample_logged_dataset(spec.env, spec.behavior, n, seed);

  const std::filesystem::path dir = ensure_out_dir(config);
  const std::filesystem::path path = dir / ("dataset_seed" + std::to_string(seed) + ".jsonl");
  write_dataset_jsonl(data, path.string());

  double min_propensity = 1.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    min_propensity = std::min(min_propensity, data.record_unchecked(i).propensities.minCoeff());
  out << "generate: wrote " << path.string() << "\n  N " << data.size() << ", K "
      << data.num_actions() << ", min propensity " << fmt17(min_propensity) << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  require_positive_lambda(config.lambda);
  EnvSpec spec = resolve_env(config);
  PolicyClass pc = build_policy(config, spec.env);
  const std::filesystem::path dir = ensure_out_dir(config);
  const SoftValueConfig value_config{config.lambda, config.entropy_estimator};

  std::optional<LoggedDataset> loaded;
  if (!config.dataset_path.empty()) loaded.emplace(read_dataset_jsonl(config.dataset_path));

  for (std::uint64_t seed : config.seeds) {
    LoggedDataset data =
        loaded ? *loaded
               : sample_logged_dataset(spec.env, spec.behavior,
                                       3 * static_cast<std::size_t>(config.n_per_split), seed);
    LearnerConfig lc = learner_config_of(config, config.lambda, seed);
    DebiasedResult result = debiased_policy_learning(data, pc, lc);

    DatasetView select_view = view_of(data, result.splits.split1);
    const double value_at_start = empirical_soft_value(
        select_view, pc, PolicyParams(result.path.checkpoints.front().params), value_config);

    const std::filesystem::path path = dir / ("train_seed" + std::to_string(seed) + ".json");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << debiased_result_to_json(result, lc).dump(2) << "\n";
    if (!f) throw std::runtime_error("write failed: " + path.string());

    out << "train: seed " << seed << "  t1 " << fmt17(result.selection.t1) << "  interior "
        << (result.selection.interior ? 1 : 0) << "\n  split-1 value at t=0 "
        << fmt17(value_at_start) << ", at t1 " << fmt17(result.selection.value_at_t1) << "\n"
        << "  wrote " << path.string() << "\n";
  }
  return 0;
}

int cmd_verify(const RunConfig& config, std::ostream& out) {
  require_positive_lambda(config.lambda);
  EnvSpec spec = resolve_env(config);
  PolicyClass pc = build_policy(config, spec.env);
  const std::filesystem::path dir = ensure_out_dir(config);

  PolicyParams oracle_params = oracle_in_class(spec.env, pc, config.lambda);
  std::vector<VerifyRow> rows =
      run_campaign(spec, pc, config, config.lambda, config.n_per_split, oracle_params);
  CampaignStats s = stats_of(rows);

  const std::filesystem::path path = dir / "theorem_report.csv";
  write_verify_csv(path, rows);

  out << "verify: " << config.seeds.size() << " seeds, N " << config.n_per_split
      << " per split, lambda " << fmt17(config.lambda) << "\n";
  if (pc.kind() == PolicyClass::Kind::LinearSoftmax)
    out << "  class_convex 0 (linear softmax classes are not convex sets of policies; the "
           "bound is reported, not guaranteed)\n";
  print_campaign_summary(out, rows, s);
  out << "  wrote " << path.string() << "\n";
  return (s.failed == 0 && s.violations == 0) ? 0 : 1;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  require_positive_lambda(config.lambda);
  if (config.sweep.values.empty())
    throw std::invalid_argument("sweep needs at least one axis value");
  EnvSpec spec = resolve_env(config);
  PolicyClass pc = build_policy(config, spec.env);
  const std::filesystem::path dir = ensure_out_dir(config);

  const bool lambda_axis = config.sweep.axis == "lambda";
  const std::filesystem::path path =
      dir / ("sweep_" + std::string(lambda_axis ? "lambda" : "N") + ".csv");
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open for writing: " + path.string());
  csv << "axis,value,n_seeds,errors,interior_fraction,bound_violations,"
         "mean_soft_regret,se_soft_regret,mean_hard_regret,se_hard_regret,"
         "max_hard_soft_gap,lambda_log_k,mean_abs_I,se_abs_I,mean_abs_II,se_abs_II,"
         "mean_III,se_III,mean_slack,se_slack\n";

  bool any_failed = false;
  int total_violations = 0;
  for (double value : config.sweep.values) {
    double lambda = config.lambda;
    int n = config.n_per_split;
    if (lambda_axis) {
      lambda = value;
      require_positive_lambda(lambda);
    } else {
      n = static_cast<int>(value);
      if (n < 1 || static_cast<double>(n) != value)
        throw std::invalid_argument("N axis values must be positive integers");
    }

    PolicyParams oracle_params = oracle_in_class(spec.env, pc, lambda);
    std::vector<VerifyRow> rows =
        run_campaign_impl(spec, pc, config, lambda, n, oracle_params, true);
    CampaignStats s = stats_of(rows);
    any_failed = any_failed || s.failed > 0;
    total_violations += s.violations;

    std::vector<double> regret, hard, abs1, abs2, t3, slack;
    double max_gap = -std::numeric_limits<double>::infinity();
    for (const VerifyRow& r : rows) {
      if (!r.ok) continue;
      regret.push_back(r.report.soft_regret);
      hard.push_back(r.hard_regret);
      abs1.push_back(std::abs(r.report.term_I));
      abs2.push_back(std::abs(r.report.term_II));
      t3.push_back(r.report.term_III);
      slack.push_back(r.report.bound_slack);
      max_gap = std::max(max_gap, r.hard_soft_gap);
    }
    const MeanSe mr = mean_se(regret), mh = mean_se(hard), m1 = mean_se(abs1),
                 m2 = mean_se(abs2), m3 = mean_se(t3), ms = mean_se(slack);
    const double interior_fraction =
        s.ok > 0 ? static_cast<double>(s.interior) / static_cast<double>(s.ok) : 0.0;
    csv << config.sweep.axis << ',' << fmt17(value) << ',' << s.ok << ',' << s.failed << ','
        << fmt17(interior_fraction) << ',' << s.violations << ',' << fmt17(mr.mean) << ','
        << fmt17(mr.se) << ',' << fmt17(mh.mean) << ',' << fmt17(mh.se) << ','
        << fmt17(max_gap) << ',' << fmt17(lambda * std::log(pc.num_actions())) << ','
        << fmt17(m1.mean) << ',' << fmt17(m1.se) << ',' << fmt17(m2.mean) << ','
        << fmt17(m2.se) << ',' << fmt17(m3.mean) << ',' << fmt17(m3.se) << ','
        << fmt17(ms.mean) << ',' << fmt17(ms.se) << '\n';

    out << "sweep " << config.sweep.axis << "=" << fmt17(value) << ": ok " << s.ok
        << ", failed " << s.failed << ", interior " << s.interior << ", violations "
        << s.violations << ", mean soft_regret " << fmt17(mr.mean) << "\n";
    for (const VerifyRow& r : rows)
      if (!r.ok) out << "  seed " << r.seed << " failed: " << r.error << "\n";
  }
  if (!csv) throw std::runtime_error("write failed: " + path.string());
  csv.close();
  out << "  wrote " << path.string() << "\n";
  return (!any_failed && total_violations == 0) ? 0 : 1;
}

}  // namespace npgflow
