// Copyright 2026 The oracle4rec Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat `key = value` run configuration with namespaced keys.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "oracle4rec/eval.hpp"
#include "oracle4rec/model.hpp"
#include "oracle4rec/seqdata.hpp"
#include "oracle4rec/training.hpp"

namespace oracle4rec {

using KeyValues = std::map<std::string, std::string>;

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key, in echo order.
const std::vector<ConfigKey>& known_config_keys();
bool is_known_config_key(const std::string& key);

/// '#' starts a comment; blank lines are ignored. Throws ParseError naming the
/// line on malformed input and ConfigError on unknown keys.
KeyValues parse_config_text(std::istream& in, const std::string& source = "<config>");
KeyValues read_config_file(const std::filesystem::path& path);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_path;
  int min_count = 5;
  std::uint64_t eval_seed = 1;
  Protocol eval_protocol = Protocol::sampled99;
  DriftConfig synth;
};

/// Defaults, then `file`, then `overrides`; validated. Non-fatal findings
/// (identity filter, unusual layer counts) are appended to `warnings`.
RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides,
                         std::vector<std::string>* warnings = nullptr);

/// The resolved configuration as key/value pairs (re-readable by resolve_config).
KeyValues echo_config(const RunConfig& cfg);

std::string format_config(const KeyValues& kv);

}  // namespace oracle4rec
