#include "npgflow/dataset_io.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace npgflow {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json context_to_json(const Context& x) {
  if (x.kind() == ContextKind::Discrete) return x.id();
  ordered_json arr = ordered_json::array();
  for (Eigen::Index j = 0; j < x.features().size(); ++j) arr.push_back(x.features()[j]);
  return arr;
}

Context context_from_json(const ordered_json& j) {
  if (j.is_number_integer()) return Context::discrete(j.get<int>());
  if (j.is_array()) {
    Eigen::VectorXd f(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) f[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return Context::dense(std::move(f));
  }
  throw std::runtime_error("dataset record: context must be an integer or a number array");
}

}  // namespace

void write_dataset_jsonl(const LoggedDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path);

  ordered_json header;
  header["K"] = data.num_actions();
  header["context_kind"] = data.context_kind() == ContextKind::Discrete ? "discrete" : "dense";
  out << header.dump() << '\n';

  for (std::size_t i = 0; i < data.size(); ++i) {
    const LoggedInteraction& rec = data.record_unchecked(i);
    ordered_json line;
    line["context"] = context_to_json(rec.context);
    line["action"] = rec.action;
    line["reward"] = rec.reward;
    ordered_json props = ordered_json::array();
    for (Eigen::Index a = 0; a < rec.propensities.size(); ++a) props.push_back(rec.propensities[a]);
    line["propensities"] = props;
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

LoggedDataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::vector<LoggedInteraction> records;
  int header_k = -1;
  std::string header_kind;
  double min_propensity = std::numeric_limits<double>::infinity();

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected a JSON object");

    if (!j.contains("action")) {
      // Header line. Only honored before any record.
      if (!records.empty())
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": header after first record");
      if (j.contains("K")) header_k = j["K"].get<int>();
      if (j.contains("context_kind")) header_kind = j["context_kind"].get<std::string>();
      continue;
    }

    LoggedInteraction rec;
    try {
      rec.context = context_from_json(j.at("context"));
      rec.action = j.at("action").get<int>();
      rec.reward = j.at("reward").get<double>();
      const auto& props = j.at("propensities");
      if (!props.is_array())
        throw std::runtime_error("propensities must be an array");
      rec.propensities.resize(static_cast<Eigen::Index>(props.size()));
      for (std::size_t a = 0; a < props.size(); ++a)
        rec.propensities[static_cast<Eigen::Index>(a)] = props[a].get<double>();
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    for (Eigen::Index a = 0; a < rec.propensities.size(); ++a)
      min_propensity = std::min(min_propensity, rec.propensities[a]);
    records.push_back(std::move(rec));
  }

  if (records.empty()) throw std::runtime_error("dataset file has no records: " + path);

  const int k = header_k > 0 ? header_k : static_cast<int>(records.front().propensities.size());
  if (!header_kind.empty()) {
    const ContextKind want =
        header_kind == "dense" ? ContextKind::Dense : ContextKind::Discrete;
    if (records.front().context.kind() != want)
      throw std::runtime_error("dataset header context_kind does not match records: " + path);
  }
  return LoggedDataset(std::move(records), k, min_propensity);
}

}  // namespace npgflow
