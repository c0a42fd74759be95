#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "npgflow/diagnostics.hpp"
#include "npgflow/envs.hpp"
#include "npgflow/learner.hpp"

namespace npgflow {

// ===========================================================================
// Run configuration and the command implementations behind the CLI.  Every
// command is a pure function of (config, seed list) up to file timestamps:
// same inputs, same output bytes.  Commands print a human summary to `out`
// and write artifacts (JSONL datasets, result JSON, CSV tables) under
// config.out_dir.  Return values are process exit codes: 0 success, 1
// runtime failure, 2 usage or validation error.  For `verify`, bound
// violations among interior runs also force a nonzero exit.
// ===========================================================================

struct SweepSpec {
  std::string axis = "N";  // "N" (records per split) or "lambda"
  std::vector<double> values;
};

struct RunConfig {
  // Environment spec: a file path, or the same JSON document inlined.
  std::string env_path;
  nlohmann::ordered_json env_inline;  // null unless the config inlined it

  std::string policy_class = "tabular_softmax";  // or "linear_softmax"
  std::string feature_map = "one_hot_cross";     // linear_softmax: one_hot_cross | dense_cross

  double lambda = 0.5;
  int n_per_split = 1000;  // sampled dataset size is 3x this
  std::vector<std::uint64_t> seeds = {0};
  std::string dataset_path;  // train only: load this JSONL file instead of sampling

  ErmConfig erm;
  FlowConfig flow;
  SelectConfig select;
  std::optional<double> ridge;  // empty: automatic scaling from trace(F)/d
  EntropyEstimator entropy_estimator = EntropyEstimator::ExactContextAverage;

  std::string out_dir = "out";
  int jobs = 1;

  SweepSpec sweep;
};

RunConfig default_run_config();

// Strict parse: unknown keys are errors, so typos cannot silently fall back
// to defaults.  Accepts "seeds" as an integer, an array, or a "A..B" range.
RunConfig parse_run_config(const nlohmann::ordered_json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);

// Inclusive "A..B".  Throws on malformed text or A > B.
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

struct CliOverrides {
  std::optional<std::uint64_t> seed;           // replaces the seed list
  std::optional<std::string> seed_range;       // "A..B", replaces the seed list
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
};
void apply_overrides(RunConfig& config, const CliOverrides& overrides);

// Commands.  `generate` writes a JSONL dataset sampled with the first seed;
// n_records overrides the default 3 * n_per_split.  `train` runs the full
// pipeline once per seed and writes one result JSON per seed.  `verify`
// runs the regret-decomposition campaign over all seeds and writes one CSV
// row per seed.  `sweep` repeats the campaign across an axis (N or lambda)
// and writes one aggregated row per axis value.
int cmd_print_defaults(std::ostream& out);
int cmd_generate(const RunConfig& config, std::optional<std::size_t> n_records,
                 std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_verify(const RunConfig& config, std::ostream& out);
int cmd_sweep(const RunConfig& config, std::ostream& out);

// One row of the verify CSV; exposed for tests.
struct VerifyRow {
  std::uint64_t seed = 0;
  int n_per_split = 0;
  double lambda = 0.0;
  TheoremOneReport report;
  bool ok = false;
  std::string error;
  double hard_regret = 0.0;
  double hard_soft_gap = 0.0;  // hard_regret - soft_regret
};

// Runs the campaign for one axis point; rows come back in seed order.
std::vector<VerifyRow> run_campaign(const EnvSpec& spec, const PolicyClass& pc,
                                    const RunConfig& config, double lambda, int n_per_split,
                                    const PolicyParams& oracle_params);

}  // namespace npgflow
