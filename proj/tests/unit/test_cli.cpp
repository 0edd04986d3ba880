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


#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "commands.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "mtl/checkpoint.hpp"
#include "mtl/errors.hpp"
#include "run_config.hpp"

using namespace mtl;
using namespace mtl::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtl_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

/// Writes a small ATIS-style train/dev/test set and a tiny-model config.
json tiny_run(const fs::path& dir, const std::string& arch = "single-task") {
  const auto all = testing::synthetic_atis(60, 8);
  save_corpus((dir / "train.txt").string(), {all.begin(), all.begin() + 40});
  save_corpus((dir / "dev.txt").string(), {all.begin() + 40, all.begin() + 50});
  save_corpus((dir / "test.txt").string(), {all.begin() + 50, all.end()});
  return json{{"tasks", json::array({{{"name", "atis"}, {"group", "atis"}, {"train", "train.txt"},
                                      {"dev", "dev.txt"}, {"test", "test.txt"}}})},
              {"architecture", arch},
              {"word_dim", 8},
              {"char_dim", 4},
              {"char_hidden", 3},
              {"hidden", 6},
              {"max_epochs", 2},
              {"batch_size", 8},
              {"learning_rate", 0.01},
              {"seed", 3},
              {"output_dir", (dir / "run").string()}};
}

int train_with(const fs::path& config, std::string* err_text = nullptr,
               std::vector<std::string> overrides = {}) {
  TrainArgs args;
  args.config = config.string();
  args.quiet = true;
  args.overrides = std::move(overrides);
  std::ostringstream out, err;
  const int code = guarded(err, [&] { return cmd_train(args, out, err); });
  if (err_text) *err_text = err.str();
  return code;
}

int run_binary(const std::string& arguments) {
  const std::string cmd = std::string(MTL_CLI_BINARY) + " " + arguments + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const json base = {{"tasks", json::array({{{"name", "a"}, {"train", "x"}, {"dev", "y"}}})}};
  const RunConfig c = parse_run_config(base, "/data");
  CHECK(c.model.word_dim == 300);
  CHECK(c.model.char_dim == 100);
  CHECK(c.model.char_hidden == 64);
  CHECK(c.model.hidden == 128);
  CHECK(c.model.dropout == 0.5);
  CHECK(c.trainer.max_epochs == 50);
  CHECK(c.trainer.patience == 6);
  CHECK(c.trainer.batch_size == 32);
  CHECK(c.trainer.adam.learning_rate == 0.001);
  CHECK(c.tasks[0].train == "/data/x");
  CHECK(c.tasks[0].test.empty());

  auto field_of = [&](json j) -> std::string {
    try {
      parse_run_config(j, "/data");
    } catch (const ConfigError& e) {
      return e.field();
    }
    return "";
  };
  json j = base;
  j["dropuot"] = 0.1;
  CHECK(field_of(j) == "dropuot");
  j = base;
  j["dropout"] = 1.0;
  CHECK(field_of(j) == "dropout");
  j = base;
  j["hidden"] = 0;
  CHECK(field_of(j) == "hidden");
  j = base;
  j["lambda"] = -0.5;
  CHECK(field_of(j) == "lambda");
  j = base;
  j["architecture"] = "parallel-everything";
  CHECK(field_of(j) == "architecture");
  j = base;
  j["architecture"] = "serial";
  CHECK(field_of(j) == "architecture");  // group encoders without any group
  j["tasks"][0]["group"] = "g";
  CHECK(field_of(j).empty());
  j = base;
  j["tasks"][0]["colour"] = "red";
  CHECK(field_of(j).find("colour") != std::string::npos);
  j = base;
  j["tasks"].push_back(j["tasks"][0]);
  CHECK(!field_of(j).empty());
  CHECK(field_of(json{{"tasks", json::array()}}) == "tasks");
  j = base;
  j["patience_mode"] = "sometimes";
  CHECK(field_of(j) == "patience_mode");
}

TEST_CASE("overrides and round-trip through the resolved form") {
  json j = {{"tasks", json::array({{{"name", "a"}, {"train", "x"}, {"dev", "y"}}})}};
  apply_override(j, "hidden=16");
  apply_override(j, "architecture=serial-highway");
  apply_override(j, "lambda=0");
  CHECK(j["hidden"] == 16);
  CHECK(j["architecture"] == "serial-highway");
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
  j["tasks"][0]["group"] = "g";
  const RunConfig c = parse_run_config(j, "/base");
  const RunConfig again = parse_run_config(to_json(c), "/elsewhere");
  CHECK(to_json(again) == to_json(c));
  CHECK(again.model.hidden == 16);
  CHECK(again.model.lambda == 0.0);
}

TEST_CASE("presets") {
  const auto names = preset_names();
  for (const char* expected :
       {"atis-single", "benchmark-2task", "benchmark-4task-parallel-univ",
        "benchmark-4task-parallel-univ-task", "benchmark-4task-parallel-univ-group-task",
        "benchmark-4task-serial", "benchmark-4task-serial-highway",
        "benchmark-4task-serial-highway-swap"}) {
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  }
  for (const auto& n : names) {
    CAPTURE(n);
    CHECK_NOTHROW(parse_run_config(load_preset(n), "/data"));
  }
  const RunConfig c = parse_run_config(load_preset("benchmark-4task-serial-highway"), "/data");
  CHECK(c.model.kind == ArchitectureKind::SerialHighway);
  REQUIRE(c.tasks.size() == 4);
  CHECK(c.tasks[0].group == c.tasks[1].group);
  CHECK(c.tasks[2].group == c.tasks[3].group);
  CHECK(c.tasks[0].group != c.tasks[2].group);
  CHECK(c.tasks[1].name == "snips-location");
  CHECK_THROWS_AS(load_preset("no-such-preset"), ConfigError);
}

TEST_CASE("train, eval and predict on a tiny corpus") {
  const fs::path dir = fresh_dir("train");
  write_json(dir / "run.json", tiny_run(dir));
  std::string err;
  REQUIRE(train_with(dir / "run.json", &err) == kExitOk);
  const fs::path run = dir / "run";
  for (const char* f : {"config.resolved", "train_log.jsonl", "model.ckpt", "state.ckpt",
                        "dev_report.txt", "dev_report.jsonl"}) {
    CHECK(fs::exists(run / f));
  }
  std::istringstream log(slurp(run / "train_log.jsonl"));
  int epochs = 0;
  for (std::string line; std::getline(log, line);) {
    const json rec = json::parse(line);
    CHECK(rec.contains("epoch"));
    CHECK(rec.contains("seconds"));
    ++epochs;
  }
  CHECK(epochs == 2);

  // The resolved config alone reproduces the run.
  json resolved = json::parse(slurp(run / "config.resolved"));
  CHECK(resolved["hidden"] == 6);
  CHECK(resolved["dropout"] == 0.5);
  resolved["output_dir"] = (dir / "rerun").string();
  write_json(dir / "rerun.json", resolved);
  REQUIRE(train_with(dir / "rerun.json") == kExitOk);
  CHECK(slurp(dir / "rerun" / "dev_report.jsonl") == slurp(run / "dev_report.jsonl"));
  const auto a = load_model((run / "model.ckpt").string()).state();
  const auto b = load_model((dir / "rerun" / "model.ckpt").string()).state();
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].value.value() == b[i].value.value();
  CHECK(same);

  // eval
  const std::string ckpt = (run / "model.ckpt").string();
  std::ostringstream out1, out2, e;
  CHECK(guarded(e, [&] { return cmd_eval({ckpt, "test", false}, out1, e); }) == kExitOk);
  CHECK(fs::exists(ckpt + ".test_report.jsonl"));
  const std::string first_records = slurp(ckpt + ".test_report.jsonl");
  CHECK(guarded(e, [&] { return cmd_eval({ckpt, "test", false}, out2, e); }) == kExitOk);
  CHECK(out1.str() == out2.str());
  CHECK(slurp(ckpt + ".test_report.jsonl") == first_records);
  CHECK(out1.str().find("atis") != std::string::npos);

  std::ostringstream gold_out;
  CHECK(guarded(e, [&] { return cmd_eval({ckpt, "dev", true}, gold_out, e); }) == kExitOk);
  const json gold = json::parse(slurp(ckpt + ".dev_report.jsonl").substr(0, slurp(ckpt + ".dev_report.jsonl").find('\n')));
  CHECK(gold["intent_acc"] == 100.0);
  CHECK(gold["slot_f1"] == 100.0);
  std::ostringstream bad_split;
  CHECK(guarded(e, [&] { return cmd_eval({ckpt, "train", false}, bad_split, e); }) == kExitConfig);

  // predict
  std::istringstream none;
  PredictArgs p{ckpt, "", std::string("show me flights from boston to denver")};
  std::ostringstream pred;
  CHECK(guarded(e, [&] { return cmd_predict(p, none, pred, e); }) == kExitOk);
  std::istringstream lines(pred.str());
  std::string frame;
  std::getline(lines, frame);
  CHECK(frame.find("atis_") == 0);
  std::vector<std::string> toks;
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    CHECK(is_bio_tag(line.substr(tab + 1)));
    toks.push_back(line.substr(0, tab));
  }
  CHECK(toks == std::vector<std::string>{"show", "me", "flights", "from", "boston", "to", "denver"});

  PredictArgs blank{ckpt, "", std::string("   \t ")};
  std::ostringstream ignored;
  CHECK(guarded(e, [&] { return cmd_predict(blank, none, ignored, e); }) == kExitUsage);
  PredictArgs wrong_task{ckpt, "snips", std::string("hi")};
  CHECK(guarded(e, [&] { return cmd_predict(wrong_task, none, ignored, e); }) == kExitConfig);
  std::istringstream stdin_lines("play madonna\n\nfly to boston\n");
  PredictArgs from_stdin{ckpt, "", std::nullopt};
  std::ostringstream many;
  CHECK(guarded(e, [&] { return cmd_predict(from_stdin, stdin_lines, many, e); }) == kExitOk);
  CHECK(many.str().find("madonna\t") != std::string::npos);
  CHECK(many.str().find("boston\t") != std::string::npos);

  // resume continues from the saved state
  json more = tiny_run(dir);
  more["max_epochs"] = 3;
  write_json(dir / "run.json", more);
  TrainArgs resume;
  resume.config = (dir / "run.json").string();
  resume.resume = true;
  resume.quiet = true;
  std::ostringstream rout;
  CHECK(guarded(e, [&] { return cmd_train(resume, rout, e); }) == kExitOk);
  std::istringstream log2(slurp(run / "train_log.jsonl"));
  int last_epoch = 0;
  for (std::string line; std::getline(log2, line);) last_epoch = json::parse(line)["epoch"];
  CHECK(last_epoch == 3);
  fs::remove_all(dir);
}

TEST_CASE("train error exits") {
  const fs::path dir = fresh_dir("errors");
  json j = tiny_run(dir);
  j["embeddings"] = (dir / "glove.missing.txt").string();
  write_json(dir / "run.json", j);
  std::string err;
  CHECK(train_with(dir / "run.json", &err) == kExitConfig);
  CHECK(err.find("glove.missing.txt") != std::string::npos);

  j = tiny_run(dir);
  j["dropout"] = 2;
  write_json(dir / "run.json", j);
  CHECK(train_with(dir / "run.json", &err) == kExitConfig);
  CHECK(err.find("dropout") != std::string::npos);

  write_json(dir / "run.json", tiny_run(dir));
  CHECK(train_with(dir / "run.json", &err, {"learning_rate=1e300"}) == kExitNumeric);

  std::ofstream(dir / "train.txt") << "flights\tX-bad\n#intent=atis_flight\n";
  CHECK(train_with(dir / "run.json", &err) == kExitData);
  CHECK(err.find("line 1") != std::string::npos);

  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(train_with(dir / "broken.json") == kExitConfig);
  CHECK(train_with(dir / "nope.json") == kExitConfig);
  fs::remove_all(dir);
}

TEST_CASE("eval compatibility errors") {
  const fs::path dir = fresh_dir("compat");
  std::ostringstream out, err;
  CHECK(guarded(err, [&] { return cmd_eval({(dir / "none.ckpt").string(), "dev", false}, out, err); }) ==
        kExitConfig);
  std::ofstream(dir / "junk.ckpt") << "junk";
  CHECK(guarded(err, [&] { return cmd_eval({(dir / "junk.ckpt").string(), "dev", false}, out, err); }) ==
        kExitCompatibility);

  auto s = testing::toy_setup({"t0"});
  const MtlModel m = testing::toy_model(ArchitectureKind::SingleTask, s);
  const json two_tasks = {{"run_config",
                           {{"tasks", json::array({{{"name", "t0"}, {"dev", "a"}},
                                                   {{"name", "t1"}, {"dev", "b"}}})}}}};
  save_model(m, (dir / "mismatch.ckpt").string(), two_tasks.dump());
  CHECK(guarded(err, [&] { return cmd_eval({(dir / "mismatch.ckpt").string(), "dev", false}, out, err); }) ==
        kExitCompatibility);
  fs::remove_all(dir);
}

TEST_CASE("split-snips") {
  const fs::path dir = fresh_dir("snips");
  const fs::path in = dir / "snips";
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"play madonna", "play_music"},         {"add this to my list", "add_to_playlist"},
      {"weather in paris", "get_weather"},    {"book a table", "book_restaurant"},
      {"movie times", "search_screening_event"}, {"rate this book", "rate_book"},
      {"find the album", "search_creative_work"}, {"play jazz", "play_music"}};
  for (const char* split : {"train", "valid", "test"}) {
    fs::create_directories(in / split);
    std::ofstream seq(in / split / "seq.in"), tags(in / split / "seq.out"), label(in / split / "label");
    for (const auto& [text, intent] : rows) {
      seq << text << "\n";
      std::istringstream words(text);
      bool first = true;
      for (std::string w; words >> w;) {
        tags << (first ? "" : " ") << "O";
        first = false;
      }
      tags << "\n";
      label << intent << "\n";
    }
  }
  std::ostringstream out, err;
  REQUIRE(guarded(err, [&] { return cmd_split_snips({in.string(), (dir / "out").string()}, out, err); }) ==
          kExitOk);
  std::size_t total = 0;
  std::map<std::string, std::set<std::string>> inventory;
  for (const char* domain : {"snips-creative", "snips-music", "snips-location"}) {
    for (const char* split : {"train", "dev", "test"}) {
      const auto us = load_corpus((dir / "out" / domain / (std::string(split) + ".txt")).string());
      if (std::string(split) == "train") total += us.size();
      for (const auto& u : us) inventory[domain].insert(u.intent);
    }
  }
  CHECK(total == rows.size());
  CHECK(inventory["snips-creative"] == std::set<std::string>{"rate_book", "search_creative_work"});
  CHECK(inventory["snips-music"] == std::set<std::string>{"add_to_playlist", "play_music"});
  CHECK(inventory["snips-location"] ==
        std::set<std::string>{"book_restaurant", "get_weather", "search_screening_event"});
  CHECK(out.str().find("total") != std::string::npos);

  const std::string before = slurp(dir / "out" / "snips-music" / "train.txt");
  std::ostringstream out2;
  REQUIRE(guarded(err, [&] { return cmd_split_snips({in.string(), (dir / "out").string()}, out2, err); }) ==
          kExitOk);
  CHECK(slurp(dir / "out" / "snips-music" / "train.txt") == before);
  CHECK(out2.str() == out.str());

  {
    std::ofstream label(in / "train" / "label");
    for (std::size_t i = 0; i < rows.size(); ++i) label << (i == 0 ? "atis_flight" : rows[i].second) << "\n";
  }
  CHECK(guarded(err, [&] { return cmd_split_snips({in.string(), (dir / "out2").string()}, out, err); }) ==
        kExitData);
  fs::remove_all(dir);
}

TEST_CASE("render_frame") {
  CHECK(render_frame("PlayArtist", {"play", "madonna"}, {"O", "B-artist"}) ==
        "PlayArtist(artist=\"madonna\")");
  CHECK(render_frame("x", {"new", "york", "to", "la"}, {"B-city", "I-city", "O", "B-city"}) ==
        "x(city=\"new york\", city=\"la\")");
  CHECK(render_frame("y", {"a"}, {"O"}) == "y()");
}

TEST_CASE("binary exit codes") {
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("presets") == 0);
  CHECK(run_binary("train --no-such-flag") == kExitUsage);
  CHECK(run_binary("") == kExitUsage);
  CHECK(run_binary("train --preset no-such-preset") == kExitConfig);
  CHECK(run_binary("train") == kExitUsage);
  CHECK(run_binary("predict --checkpoint /nonexistent --text ' '") == kExitUsage);
  CHECK(run_binary("eval --checkpoint /nonexistent/model.ckpt") == kExitConfig);
}
