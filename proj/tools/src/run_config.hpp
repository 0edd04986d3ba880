// Copyright 2026 The mtlnlu Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration: a JSON object whose keys mirror the fields below.
// Relative data paths resolve against `base_dir` (the config file's
// directory, or the data directory for presets); a relative output_dir
// resolves against the working directory.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtl/data.hpp"
#include "mtl/model.hpp"
#include "mtl/training.hpp"

namespace mtl::cli {

struct TaskSpec {
  std::string name;
  std::string group;  // empty: the task forms its own group
  std::string train;
  std::string dev;
  std::string test;   // optional
};

struct RunConfig {
  std::vector<TaskSpec> tasks;
  ModelConfig model;
  std::string embeddings;  // empty: random word vectors
  AlphaMode alpha_mode = AlphaMode::InverseSize;
  TrainerConfig trainer;
  std::string output_dir = "runs/default";
};

/// Parses and validates `j`. Unknown keys and bad values raise ConfigError
/// naming the field. Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir);
/// Every field, defaults included, with absolute paths.
nlohmann::json to_json(const RunConfig& config);

/// Applies `key=value`; the value is read as JSON when it parses, else as a
/// string. Dotted keys are not supported: every key is top level.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Checks that every referenced file exists; ConfigError naming the path.
void check_paths(const RunConfig& config);

/// Seed precedence: explicit flag, then the config, then MTL_SEED.
std::optional<std::uint64_t> seed_from_env();

/// Directory holding the shipped preset files.
std::string preset_dir();
/// Reads preset `name`; ConfigError for unknown names.
nlohmann::json load_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace mtl::cli
