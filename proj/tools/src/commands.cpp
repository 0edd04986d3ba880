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

#include "commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mtl/checkpoint.hpp"
#include "mtl/errors.hpp"
#include "mtl/evaluation.hpp"
#include "mtl/layers.hpp"
#include "mtl/training.hpp"
#include "run_config.hpp"

namespace mtl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::vector<Utterance> load_task_corpus(const std::string& path, const std::string& task) {
  auto corpus = load_any(path);
  for (auto& u : corpus) u.task = task;
  return corpus;
}

json read_json_file(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw ConfigError(field, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(field, path + ": " + e.what());
  }
}

std::string data_dir_or_default(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("MTL_DATA_DIR"); env && *env) return env;
  return "data";
}

json epoch_json(const EpochRecord& rec, const TaskRegistry& registry) {
  json losses = json::object();
  for (std::size_t t = 0; t < rec.task_loss.size(); ++t) {
    losses[registry.task(t).name] = rec.task_loss[t];
  }
  json dev = json::object();
  for (const auto& m : rec.dev.tasks) {
    dev[m.task] = {{"intent_acc", m.intent_acc}, {"slot_f1", m.slot_f1}};
  }
  return {{"epoch", rec.epoch},
          {"task_loss", std::move(losses)},
          {"dev", std::move(dev)},
          {"dev_intent_acc", rec.dev.intent_acc.mean},
          {"dev_slot_f1", rec.dev.slot_f1.mean},
          {"seconds", rec.seconds},
          {"selected", rec.selected},
          {"stop", rec.stop}};
}

void write_reports(const MetricReport& report, const std::string& stem) {
  {
    std::ofstream txt(stem + ".txt");
    write_report_table(txt, report);
  }
  std::ofstream records(stem + ".jsonl");
  write_report_records(records, report);
}

MtlModel open_checkpoint(const std::string& path, Archive* archive_out) {
  if (path.empty()) throw ConfigError("checkpoint", "missing --checkpoint");
  if (!fs::exists(path)) throw ConfigError("checkpoint", "no such file: " + path);
  Archive archive;
  try {
    archive = Archive::read(path);
  } catch (const ParseError& e) {
    throw CompatibilityError(e.what());
  }
  MtlModel model = model_from_archive(archive);
  if (archive_out) *archive_out = std::move(archive);
  return model;
}

}  // namespace

std::string render_frame(const std::string& intent, const std::vector<std::string>& tokens,
                         const std::vector<std::string>& tags) {
  std::string out = intent + "(";
  bool first = true;
  for (const auto& span : extract_chunks(tags)) {
    std::string words;
    for (std::size_t i = span.start; i < span.end; ++i) {
      words += (i == span.start ? "" : " ") + tokens[i];
    }
    out += (first ? "" : ", ") + span.label + "=\"" + words + "\"";
    first = false;
  }
  return out + ")";
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RegistryError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const CompatibilityError& e) {
    err << "compatibility error: " << e.what() << "\n";
    return kExitCompatibility;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ClassificationError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const VocabError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  if (args.config.empty() == args.preset.empty()) {
    err << "usage: train needs exactly one of --config or --preset\n";
    return kExitUsage;
  }
  json j;
  std::string base;
  if (!args.preset.empty()) {
    j = load_preset(args.preset);
    base = data_dir_or_default(args.data_dir);
  } else {
    j = read_json_file(args.config, "config");
    base = fs::absolute(args.config).parent_path().string();
  }
  if (!args.arch.empty()) j["architecture"] = args.arch;
  if (args.seed) j["seed"] = *args.seed;
  for (const auto& o : args.overrides) apply_override(j, o);

  const RunConfig config = parse_run_config(j, base);
  check_paths(config);
  const json resolved = to_json(config);
  fs::create_directories(config.output_dir);
  const fs::path out_dir(config.output_dir);
  {
    std::ofstream f(out_dir / "config.resolved");
    f << resolved.dump(2) << "\n";
  }

  std::vector<TaskData> data;
  for (const auto& t : config.tasks) {
    TaskData d{load_task_corpus(t.train, t.name), load_task_corpus(t.dev, t.name)};
    if (d.train.empty()) throw ParseError("training corpus " + t.train + " is empty");
    if (d.dev.empty()) throw ParseError("dev corpus " + t.dev + " is empty");
    data.push_back(std::move(d));
  }
  std::vector<TaskDefinition> defs;
  std::vector<const std::vector<Utterance>*> train_sets;
  for (std::size_t i = 0; i < config.tasks.size(); ++i) {
    defs.push_back({config.tasks[i].name, config.tasks[i].group, &data[i].train});
    train_sets.push_back(&data[i].train);
  }
  TaskRegistry registry = TaskRegistry::build(defs, config.alpha_mode);
  Vocabulary vocab = build_vocab(train_sets);

  Rng init_rng(config.trainer.seed);
  MtlModel model = MtlModel::build(config.model, registry, vocab, init_rng);
  if (!config.embeddings.empty()) {
    std::unordered_set<std::string> keep;
    for (const auto& w : model.vocab().words.labels()) keep.insert(to_lower(w));
    const PretrainedEmbeddings pre = load_pretrained(config.embeddings, &keep);
    if (pre.dim != 0 && pre.dim != config.model.word_dim) {
      throw ConfigError("embeddings", config.embeddings + " has dimension " +
                                          std::to_string(pre.dim) + ", word_dim is " +
                                          std::to_string(config.model.word_dim));
    }
    const std::size_t hits = model.apply_pretrained(pre);
    if (!args.quiet) {
      out << "pretrained vectors: " << hits << " of " << model.vocab().words.size()
          << " words\n";
    }
  }

  Trainer trainer(model, config.trainer, data);
  const std::string state_path = (out_dir / "state.ckpt").string();
  const std::string model_path = (out_dir / "model.ckpt").string();
  const bool resuming = args.resume && fs::exists(state_path);
  if (resuming) {
    trainer.load_state(state_path);
    if (!args.quiet) out << "resumed after epoch " << trainer.epoch() << "\n";
  }
  std::ofstream log(out_dir / "train_log.jsonl", resuming ? std::ios::app : std::ios::trunc);
  const std::string extra = json{{"run_config", resolved}}.dump();

  trainer.fit([&](const EpochRecord& rec) {
    log << epoch_json(rec, model.registry()).dump() << "\n";
    log.flush();
    if (rec.selected) save_model(model, model_path, extra);
    trainer.save_state(state_path);
    if (!args.quiet) {
      out << "epoch " << rec.epoch << "  dev intent " << std::fixed << std::setprecision(2)
          << rec.dev.intent_acc.mean << "  slot f1 " << rec.dev.slot_f1.mean << "  "
          << std::setprecision(1) << rec.seconds << "s" << (rec.selected ? "  *" : "") << "\n"
          << std::defaultfloat;
    }
  });

  trainer.restore_best();
  if (!fs::exists(model_path)) save_model(model, model_path, extra);
  std::vector<std::vector<Utterance>> dev;
  for (const auto& d : data) dev.push_back(d.dev);
  const MetricReport report = evaluate(model, dev);
  write_reports(report, (out_dir / "dev_report").string());
  if (!args.quiet) {
    out << "best epoch " << trainer.best_epoch() << "\n";
    write_report_table(out, report);
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  if (args.split != "dev" && args.split != "test") {
    throw ConfigError("split", "expected dev or test, got " + args.split);
  }
  Archive archive;
  const MtlModel model = open_checkpoint(args.checkpoint, &archive);
  const json extra = json::parse(archive_extra(archive));
  if (!extra.contains("run_config")) {
    throw CompatibilityError(args.checkpoint + " does not record its run configuration");
  }
  const json& tasks = extra.at("run_config").at("tasks");
  const auto& registry = model.registry();
  if (tasks.size() != registry.size()) {
    throw CompatibilityError("checkpoint has " + std::to_string(registry.size()) +
                             " tasks but its run configuration lists " +
                             std::to_string(tasks.size()));
  }

  std::vector<TaskMetrics> per_task;
  for (std::size_t t = 0; t < registry.size(); ++t) {
    const auto& info = registry.task(t);
    const json* spec = nullptr;
    for (const auto& s : tasks) {
      if (s.at("name").get<std::string>() == info.name) spec = &s;
    }
    if (!spec) throw CompatibilityError("run configuration has no task " + info.name);
    const std::string path = spec->value(args.split, "");
    if (path.empty()) throw ConfigError("split", "task " + info.name + " has no " + args.split + " file");
    if (!fs::exists(path)) throw ConfigError("tasks." + info.name, "no such file: " + path);
    const auto corpus = load_task_corpus(path, info.name);
    if (corpus.empty()) throw ParseError(path + " is empty");

    std::size_t unseen = 0;
    for (const auto& u : corpus) {
      if (!info.intents.find(u.intent)) ++unseen;
    }
    if (unseen) {
      err << "warning: " << info.name << ": " << unseen
          << " utterances have intents unseen in training (scored as errors)\n";
    }
    TaskPredictions pred;
    if (args.gold_as_prediction) {
      for (const auto& u : corpus) {
        pred.gold_slots.push_back(u.slots);
        pred.predicted_slots.push_back(u.slots);
        pred.gold_intents.push_back(u.intent);
        pred.predicted_intents.push_back(u.intent);
      }
    } else {
      pred = predict_corpus(model, t, corpus);
    }
    per_task.push_back(score(pred, info.name, info.group));
  }
  const MetricReport report = aggregate_report(std::move(per_task));
  write_report_table(out, report);
  write_reports(report, args.checkpoint + "." + args.split + "_report");
  return kExitOk;
}

int cmd_predict(const PredictArgs& args, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> lines;
  if (args.text) {
    lines.push_back(*args.text);
  } else {
    for (std::string line; std::getline(in, line);) {
      if (!split_words(line).empty()) lines.push_back(line);
    }
  }
  if (lines.empty() || split_words(lines.front()).empty()) {
    err << "usage: predict needs a non-empty utterance (--text or stdin)\n";
    return kExitUsage;
  }
  const MtlModel model = open_checkpoint(args.checkpoint, nullptr);
  const std::size_t task = args.task.empty() ? 0 : model.registry().task_id(args.task);
  const auto& info = model.registry().task(task);
  bool first = true;
  for (const auto& line : lines) {
    EncodedUtterance e;
    const auto tokens = split_words(line);
    for (const auto& tok : tokens) {
      e.words.push_back(model.vocab().word_id(tok));
      e.chars.push_back(model.vocab().char_ids(tok));
    }
    e.slots.assign(tokens.size(), 0);
    const Prediction p = model.predict(e, task);
    std::vector<std::string> tags;
    for (auto id : p.slots) tags.push_back(info.slots.label(id));
    const std::string intent = info.intents.label(p.intent);
    if (!first) out << "\n";
    first = false;
    out << render_frame(intent, tokens, tags) << "\n";
    for (std::size_t i = 0; i < tokens.size(); ++i) out << tokens[i] << "\t" << tags[i] << "\n";
  }
  return kExitOk;
}

int cmd_split_snips(const SplitSnipsArgs& args, std::ostream& out, std::ostream& err) {
  if (args.in.empty() || args.out.empty()) throw ConfigError("split-snips", "--in and --out are required");
  const fs::path in(args.in);
  if (!fs::is_directory(in)) throw ConfigError("in", "no such directory: " + args.in);
  const std::vector<std::pair<std::string, std::vector<std::string>>> splits = {
      {"train", {"train", "train.txt"}},
      {"dev", {"dev", "dev.txt", "valid", "valid.txt"}},
      {"test", {"test", "test.txt"}}};
  const std::vector<std::string> domains = {kSnipsCreative, kSnipsMusic, kSnipsLocation};
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::map<std::string, std::map<std::string, std::size_t>> intents;
  std::vector<std::string> present;
  for (const auto& [split, candidates] : splits) {
    std::string source;
    for (const auto& c : candidates) {
      if (fs::exists(in / c)) {
        source = (in / c).string();
        break;
      }
    }
    if (source.empty()) {
      err << "note: no " << split << " split under " << args.in << "\n";
      continue;
    }
    present.push_back(split);
    const auto corpus = load_any(source);
    const SnipsSplit parts = split_snips(corpus);
    const std::vector<const std::vector<Utterance>*> by_domain = {&parts.creative, &parts.music,
                                                                 &parts.location};
    for (std::size_t d = 0; d < domains.size(); ++d) {
      const fs::path dir = fs::path(args.out) / domains[d];
      fs::create_directories(dir);
      save_corpus((dir / (split + ".txt")).string(), *by_domain[d]);
      counts[domains[d]][split] = by_domain[d]->size();
      for (const auto& u : *by_domain[d]) ++intents[domains[d]][u.intent];
    }
    counts["total"][split] = corpus.size();
  }
  if (present.empty()) throw ConfigError("in", "no train/dev/test data under " + args.in);

  out << std::left << std::setw(16) << "domain";
  for (const auto& s : present) out << std::right << std::setw(8) << s;
  out << "  intents\n";
  for (const auto& name : {std::string(kSnipsCreative), std::string(kSnipsMusic),
                           std::string(kSnipsLocation), std::string("total")}) {
    out << std::left << std::setw(16) << name;
    for (const auto& s : present) out << std::right << std::setw(8) << counts[name][s];
    out << "  ";
    bool first = true;
    for (const auto& [intent, _] : intents[name]) {
      out << (first ? "" : ",") << intent;
      first = false;
    }
    out << "\n";
  }
  return kExitOk;
}

int cmd_convert(const ConvertArgs& args, std::ostream& out, std::ostream&) {
  if (args.in.empty() || args.out.empty()) throw ConfigError("convert", "--in and --out are required");
  if (!fs::exists(args.in)) throw ConfigError("in", "no such path: " + args.in);
  const auto corpus = load_any(args.in);
  const fs::path target(args.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  save_corpus(args.out, corpus);
  out << corpus.size() << " utterances written to " << args.out << "\n";
  return kExitOk;
}

}  // namespace mtl::cli
