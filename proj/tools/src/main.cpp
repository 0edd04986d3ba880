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

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "run_config.hpp"

int main(int argc, char** argv) {
  using namespace mtl::cli;
  CLI::App app{"mtlnlu: multi-task slot filling and intent classification"};
  app.require_subcommand(1);

  TrainArgs train;
  std::uint64_t seed = 0;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--config", train.config, "run configuration (JSON)");
  t->add_option("--preset", train.preset, "shipped preset name");
  t->add_option("--data-dir", train.data_dir, "base directory for preset data paths");
  auto* seed_opt = t->add_option("--seed", seed, "random seed");
  t->add_option("--arch", train.arch, "architecture kind");
  t->add_option("--set", train.overrides, "override a config key (key=value)");
  t->add_flag("--resume", train.resume, "continue from output_dir/state.ckpt");
  t->add_flag("--quiet", train.quiet, "suppress progress output");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a split");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--split", eval.split)->check(CLI::IsMember({"dev", "test"}));
  e->add_flag("--gold-as-prediction", eval.gold_as_prediction, "score gold against itself");

  PredictArgs predict;
  std::string text;
  auto* p = app.add_subcommand("predict", "tag utterances");
  p->add_option("--checkpoint", predict.checkpoint)->required();
  p->add_option("--task", predict.task, "task name (default: first)");
  auto* text_opt = p->add_option("--text", text, "utterance; stdin lines when absent");

  SplitSnipsArgs split;
  auto* s = app.add_subcommand("split-snips", "split Snips into domain tasks");
  s->add_option("--in", split.in)->required();
  s->add_option("--out", split.out)->required();

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "convert seq.in/seq.out/label to the corpus format");
  c->add_option("--in", convert.in)->required();
  c->add_option("--out", convert.out)->required();

  app.add_subcommand("presets", "list shipped presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto& out = std::cout;
  auto& err = std::cerr;
  return guarded(err, [&]() -> int {
    if (t->parsed()) {
      if (seed_opt->count()) train.seed = seed;
      return cmd_train(train, out, err);
    }
    if (e->parsed()) return cmd_eval(eval, out, err);
    if (p->parsed()) {
      if (text_opt->count()) predict.text = text;
      return cmd_predict(predict, std::cin, out, err);
    }
    if (s->parsed()) return cmd_split_snips(split, out, err);
    if (c->parsed()) return cmd_convert(convert, out, err);
    for (const auto& name : preset_names()) out << name << "\n";
    return kExitOk;
  });
}
