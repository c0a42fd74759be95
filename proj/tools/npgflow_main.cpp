#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "npgflow/runner.hpp"

namespace {

using npgflow::CliOverrides;
using npgflow::RunConfig;

// For `generate` the --config file may be a bare environment spec instead of
// a run config; env specs are recognized by their own keys.
bool looks_like_env_spec(const nlohmann::ordered_json& doc) {
  return doc.is_object() &&
         (doc.contains("Q") || (doc.contains("kind") && doc["kind"] == "random"));
}

RunConfig load_config_or_env(const std::string& path, bool allow_env_spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + std::string(e.what()));
  }
  if (allow_env_spec && looks_like_env_spec(doc)) {
    RunConfig c = npgflow::default_run_config();
    c.env_path.clear();
    c.env_inline = doc;
    return c;
  }
  return npgflow::parse_run_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-regularized offline policy learning by natural-gradient flow"};
  app.require_subcommand(1);

  std::string config_path;
  CliOverrides overrides;
  std::optional<double> lambda_override;
  std::optional<std::size_t> n_records;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON file")->required();
    cmd->add_option("--seed", overrides.seed, "single seed (replaces the config seed list)");
    cmd->add_option("--seeds", overrides.seed_range, "inclusive seed range A..B");
    cmd->add_option("--jobs", overrides.jobs, "parallel workers over seeds");
    cmd->add_option("--out", overrides.out_dir, "output directory");
    cmd->add_option("--lambda", lambda_override, "entropy weight override");
  };

  CLI::App* generate = app.add_subcommand(
      "generate", "sample a logged dataset to JSONL (config may be a bare env spec)");
  add_common(generate);
  generate->add_option("--n", n_records, "records to write (default 3 * n_per_split)");

  CLI::App* train =
      app.add_subcommand("train", "run split / warm start / flow / index selection once per seed");
  add_common(train);

  CLI::App* verify = app.add_subcommand(
      "verify", "regret-decomposition campaign; one CSV row per seed, nonzero exit on "
                "bound violations among interior runs");
  add_common(verify);

  CLI::App* sweep =
      app.add_subcommand("sweep", "verify campaign repeated over an N or lambda axis");
  add_common(sweep);

  CLI::App* print_defaults =
      app.add_subcommand("print-defaults", "print the full default run config as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_defaults->parsed()) return npgflow::cmd_print_defaults(std::cout);

    RunConfig config = load_config_or_env(config_path, generate->parsed());
    npgflow::apply_overrides(config, overrides);
    if (lambda_override) config.lambda = *lambda_override;

    if (generate->parsed()) return npgflow::cmd_generate(config, n_records, std::cout);
    if (train->parsed()) return npgflow::cmd_train(config, std::cout);
    if (verify->parsed()) return npgflow::cmd_verify(config, std::cout);
    if (sweep->parsed()) return npgflow::cmd_sweep(config, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
