#pragma once

#include <string>

#include "npgflow/core_model.hpp"

namespace npgflow {

// JSON Lines persistence. One record per line:
//   {"context": <int or number array>, "action": <int>, "reward": <number>,
//    "propensities": [<K numbers>]}
// The first line is a header object {"K": <int>, "context_kind": "discrete"|"dense"}.
// Readers also accept headerless files and infer K from the first record.
// Doubles are emitted shortest-round-trip, so write/read/write is bytewise stable.

void write_dataset_jsonl(const LoggedDataset& data, const std::string& path);

// The reconstructed dataset's overlap floor is the minimum propensity present
// in the file, so validation always passes and the floor stays informative.
LoggedDataset read_dataset_jsonl(const std::string& path);

}  // namespace npgflow
