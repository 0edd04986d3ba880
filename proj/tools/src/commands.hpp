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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtl::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCompatibility = 4,
  kExitData = 5,
};

struct TrainArgs {
  std::string config;   // path; empty when a preset is used
  std::string preset;
  std::string data_dir;  // base for preset paths; MTL_DATA_DIR or "data" when empty
  std::optional<std::uint64_t> seed;
  std::string arch;
  std::vector<std::string> overrides;  // key=value
  bool resume = false;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string split = "dev";
  bool gold_as_prediction = false;
};

struct PredictArgs {
  std::string checkpoint;
  std::string task;  // empty: the first task
  std::optional<std::string> text;  // read stdin lines when absent
};

struct SplitSnipsArgs {
  std::string in;
  std::string out;
};

struct ConvertArgs {
  std::string in;
  std::string out;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictArgs& args, std::istream& in, std::ostream& out, std::ostream& err);
int cmd_split_snips(const SplitSnipsArgs& args, std::ostream& out, std::ostream& err);
int cmd_convert(const ConvertArgs& args, std::ostream& out, std::ostream& err);

/// Runs `body`, translating engine exceptions into exit codes and messages.
int guarded(std::ostream& err, const std::function<int()>& body);

/// Renders a prediction as `intent(slot="words", ...)`.
std::string render_frame(const std::string& intent, const std::vector<std::string>& tokens,
                         const std::vector<std::string>& tags);

}  // namespace mtl::cli
