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


// Extended acceptance check: full ATIS / Snips training through the shipped
// presets. Needs MTL_DATA_DIR with atis/, snips/ and glove/glove.6B.300d.txt;
// exits 77 (skipped) when any of them is missing. Takes CPU-hours.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtl::cli;

namespace {

constexpr int kSkip = 77;

struct TaskScore {
  double intent_acc = 0.0;
  double slot_f1 = 0.0;
};

/// Trains `preset` with `seed` and returns test metrics per task.
std::map<std::string, TaskScore> train_and_test(const std::string& data_dir,
                                                const fs::path& work, const std::string& preset,
                                                std::uint64_t seed) {
  const fs::path out = work / (preset + "-seed" + std::to_string(seed));
  TrainArgs t;
  t.preset = preset;
  t.data_dir = data_dir;
  t.seed = seed;
  t.overrides = {"output_dir=" + out.string()};
  t.quiet = true;
  std::ostringstream sink;
  const int code = guarded(std::cerr, [&] { return cmd_train(t, sink, std::cerr); });
  if (code != kExitOk) throw std::runtime_error(preset + ": train exited " + std::to_string(code));
  const std::string ckpt = (out / "model.ckpt").string();
  const int eval = guarded(std::cerr, [&] { return cmd_eval({ckpt, "test", false}, sink, std::cerr); });
  if (eval != kExitOk) throw std::runtime_error(preset + ": eval exited " + std::to_string(eval));
  std::map<std::string, TaskScore> scores;
  std::ifstream records(ckpt + ".test_report.jsonl");
  for (std::string line; std::getline(records, line);) {
    if (line.empty()) continue;
    const json r = json::parse(line);
    scores[r.at("task").get<std::string>()] = {r.at("intent_acc").get<double>(),
                                               r.at("slot_f1").get<double>()};
  }
  std::cerr << preset << " seed " << seed << ":";
  for (const auto& [task, s] : scores) std::cerr << " " << task << " " << s.intent_acc << "/" << s.slot_f1;
  std::cerr << "\n";
  return scores;
}

}  // namespace

int main() {
  const char* env = std::getenv("MTL_DATA_DIR");
  const fs::path data = env ? env : "";
  std::vector<std::string> missing;
  for (const char* need : {"atis/train", "atis/valid", "atis/test", "snips/train", "snips/valid",
                           "snips/test", "glove/glove.6B.300d.txt"}) {
    if (!env || !fs::exists(data / need)) missing.push_back(need);
  }
  if (!missing.empty()) {
    std::cout << "CRITERION 7: SKIP - benchmark data not available (MTL_DATA_DIR="
              << (env ? env : "<unset>") << "; missing:";
    for (const auto& m : missing) std::cout << " " << m;
    std::cout << ")\n";
    return kSkip;
  }

  const fs::path work = fs::path(std::getenv("MTL_BENCH_WORK") ? std::getenv("MTL_BENCH_WORK")
                                                              : "benchmark-runs");
  fs::create_directories(work);
  try {
    if (!fs::exists(data / "snips-split" / "snips-location" / "train.txt")) {
      std::ostringstream sink;
      const int code = guarded(std::cerr, [&] {
        return cmd_split_snips({(data / "snips").string(), (data / "snips-split").string()}, sink,
                               std::cerr);
      });
      if (code != kExitOk) throw std::runtime_error("split-snips exited " + std::to_string(code));
    }

    const auto atis = train_and_test(data.string(), work, "atis-single", 1).at("atis");
    const auto snips = train_and_test(data.string(), work, "snips-single", 1).at("snips");
    const bool atis_ok = atis.intent_acc >= 94.5 && atis.slot_f1 >= 94.0;
    const bool snips_ok = snips.intent_acc >= 97.0 && snips.slot_f1 >= 93.5;

    // Directional MTL check: grouped Serial vs independent single-task models,
    // mean test slot F1 over three seeds.
    std::map<std::string, double> mtl_f1, single_f1;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      for (const auto& [task, s] : train_and_test(data.string(), work, "benchmark-4task-serial", seed)) {
        mtl_f1[task] += s.slot_f1 / 3.0;
      }
      for (const auto& [task, s] :
           train_and_test(data.string(), work, "benchmark-4task-single-task", seed)) {
        single_f1[task] += s.slot_f1 / 3.0;
      }
    }
    int wins = 0;
    std::ostringstream per_task;
    for (const auto& [task, f1] : mtl_f1) {
      wins += f1 >= single_f1[task];
      per_task << " " << task << " " << f1 << " vs " << single_f1[task] << ";";
    }
    const bool mtl_ok = wins >= 2;

    const bool pass = atis_ok && snips_ok && mtl_ok;
    std::cout << "CRITERION 7: " << (pass ? "PASS" : "FAIL") << " - ATIS test " << atis.intent_acc
              << "/" << atis.slot_f1 << " (need 94.5/94.0), Snips test " << snips.intent_acc << "/"
              << snips.slot_f1 << " (need 97.0/93.5), Serial >= SingleTask slot F1 on " << wins
              << "/4 tasks (need 2):" << per_task.str() << "\n";
    return pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cout << "CRITERION 7: FAIL - " << e.what() << "\n";
    return 1;
  }
}
