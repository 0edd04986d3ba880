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

#include "run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "mtl/errors.hpp"

#ifndef MTL_PRESET_DIR
#define MTL_PRESET_DIR "presets"
#endif

namespace mtl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys = {
    "tasks",      "architecture", "embeddings",      "word_dim",       "char_dim",
    "char_hidden", "hidden",      "dropout",         "lambda",         "gamma",
    "w_sf",       "w_ic",         "alpha_mode",      "learning_rate",  "beta1",
    "beta2",      "epsilon",      "clip_norm",       "max_epochs",     "patience",
    "patience_mode", "batch_size", "seed",           "output_dir",     "freeze_word_embeddings",
    "dropout_between_stages"};

const std::set<std::string> kTaskKeys = {"name", "group", "train", "dev", "test"};

template <class T>
T field(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "unexpected value " + j.at(key).dump());
  }
}

std::size_t positive_size(const json& j, const std::string& key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw ConfigError(key, "expected a positive integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

double non_negative(const json& j, const std::string& key, double fallback) {
  const double v = field<double>(j, key, fallback);
  if (!(v >= 0.0)) throw ConfigError(key, "must be >= 0, got " + std::to_string(v));
  return v;
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_relative()) p = fs::path(base) / p;
  return fs::absolute(p).lexically_normal().string();
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopKeys.count(key)) throw ConfigError(key, "unknown key");
  }
  RunConfig c;
  if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty()) {
    throw ConfigError("tasks", "at least one task is required");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < j.at("tasks").size(); ++i) {
    const json& t = j.at("tasks")[i];
    const std::string where = "tasks[" + std::to_string(i) + "]";
    if (!t.is_object()) throw ConfigError(where, "expected an object");
    for (const auto& [key, _] : t.items()) {
      if (!kTaskKeys.count(key)) throw ConfigError(where + "." + key, "unknown key");
    }
    TaskSpec s;
    s.name = field<std::string>(t, "name", "");
    if (s.name.empty()) throw ConfigError(where + ".name", "missing");
    if (!names.insert(s.name).second) throw ConfigError(where + ".name", "duplicate task " + s.name);
    s.group = field<std::string>(t, "group", "");
    s.train = resolve(field<std::string>(t, "train", ""), base_dir);
    s.dev = resolve(field<std::string>(t, "dev", ""), base_dir);
    s.test = resolve(field<std::string>(t, "test", ""), base_dir);
    if (s.train.empty()) throw ConfigError(where + ".train", "missing");
    if (s.dev.empty()) throw ConfigError(where + ".dev", "missing");
    c.tasks.push_back(std::move(s));
  }

  ModelConfig& m = c.model;
  m.kind = parse_architecture(field<std::string>(j, "architecture", to_string(m.kind)));
  m.word_dim = positive_size(j, "word_dim", m.word_dim);
  m.char_dim = positive_size(j, "char_dim", m.char_dim);
  m.char_hidden = positive_size(j, "char_hidden", m.char_hidden);
  m.hidden = positive_size(j, "hidden", m.hidden);
  m.dropout = non_negative(j, "dropout", m.dropout);
  if (m.dropout >= 1.0) throw ConfigError("dropout", "must be < 1");
  m.lambda = non_negative(j, "lambda", m.lambda);
  m.gamma = non_negative(j, "gamma", m.gamma);
  m.w_sf = non_negative(j, "w_sf", m.w_sf);
  m.w_ic = non_negative(j, "w_ic", m.w_ic);
  m.freeze_word_embeddings = field<bool>(j, "freeze_word_embeddings", m.freeze_word_embeddings);
  m.dropout_between_stages = field<bool>(j, "dropout_between_stages", m.dropout_between_stages);

  if (j.contains("embeddings") && !j.at("embeddings").is_null()) {
    c.embeddings = resolve(field<std::string>(j, "embeddings", ""), base_dir);
  }

  const std::string alpha = field<std::string>(j, "alpha_mode", "inverse-size");
  if (alpha == "uniform") {
    c.alpha_mode = AlphaMode::Uniform;
  } else if (alpha == "inverse-size") {
    c.alpha_mode = AlphaMode::InverseSize;
  } else {
    throw ConfigError("alpha_mode", "expected uniform or inverse-size, got " + alpha);
  }

  TrainerConfig& t = c.trainer;
  t.adam.learning_rate = non_negative(j, "learning_rate", t.adam.learning_rate);
  if (t.adam.learning_rate == 0.0) throw ConfigError("learning_rate", "must be > 0");
  t.adam.beta1 = non_negative(j, "beta1", t.adam.beta1);
  t.adam.beta2 = non_negative(j, "beta2", t.adam.beta2);
  if (t.adam.beta1 >= 1.0) throw ConfigError("beta1", "must be < 1");
  if (t.adam.beta2 >= 1.0) throw ConfigError("beta2", "must be < 1");
  t.adam.epsilon = non_negative(j, "epsilon", t.adam.epsilon);
  const double clip = non_negative(j, "clip_norm", t.options.clip_norm);
  t.options.clip = clip > 0.0;
  t.options.clip_norm = clip > 0.0 ? clip : t.options.clip_norm;
  t.max_epochs = static_cast<int>(positive_size(j, "max_epochs", t.max_epochs));
  t.patience = static_cast<int>(positive_size(j, "patience", t.patience));
  const std::string mode = field<std::string>(j, "patience_mode", "any");
  if (mode == "any") {
    t.patience_mode = PatienceMode::Any;
  } else if (mode == "all") {
    t.patience_mode = PatienceMode::All;
  } else {
    throw ConfigError("patience_mode", "expected any or all, got " + mode);
  }
  t.batch_size = positive_size(j, "batch_size", t.batch_size);
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("seed", "expected a non-negative integer, got " + s.dump());
    }
    t.seed = s.get<std::uint64_t>();
  } else if (auto env = seed_from_env()) {
    t.seed = *env;
  }
  c.output_dir = resolve(field<std::string>(j, "output_dir", c.output_dir), fs::current_path().string());

  if (has_group_encoders(m.kind)) {
    const bool any_group = std::any_of(c.tasks.begin(), c.tasks.end(),
                                       [](const TaskSpec& s) { return !s.group.empty(); });
    if (!any_group) {
      throw ConfigError("architecture", to_string(m.kind) +
                                            " needs task groups; set `group` on the tasks");
    }
  }
  return c;
}

json to_json(const RunConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks) {
    json o = {{"name", t.name}, {"group", t.group}, {"train", t.train}, {"dev", t.dev}};
    if (!t.test.empty()) o["test"] = t.test;
    tasks.push_back(std::move(o));
  }
  const auto& m = c.model;
  const auto& t = c.trainer;
  return {{"tasks", std::move(tasks)},
          {"architecture", to_string(m.kind)},
          {"embeddings", c.embeddings.empty() ? json(nullptr) : json(c.embeddings)},
          {"word_dim", m.word_dim},
          {"char_dim", m.char_dim},
          {"char_hidden", m.char_hidden},
          {"hidden", m.hidden},
          {"dropout", m.dropout},
          {"lambda", m.lambda},
          {"gamma", m.gamma},
          {"w_sf", m.w_sf},
          {"w_ic", m.w_ic},
          {"freeze_word_embeddings", m.freeze_word_embeddings},
          {"dropout_between_stages", m.dropout_between_stages},
          {"alpha_mode", c.alpha_mode == AlphaMode::Uniform ? "uniform" : "inverse-size"},
          {"learning_rate", t.adam.learning_rate},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon},
          {"clip_norm", t.options.clip ? t.options.clip_norm : 0.0},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"patience_mode", t.patience_mode == PatienceMode::Any ? "any" : "all"},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"output_dir", c.output_dir}};
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  if (!kTopKeys.count(key)) throw ConfigError(key, "unknown key");
  json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
  j[key] = value.is_discarded() ? json(text) : value;
}

void check_paths(const RunConfig& c) {
  auto need = [](const std::string& field, const std::string& path) {
    if (!path.empty() && !fs::exists(path)) throw ConfigError(field, "no such file: " + path);
  };
  for (std::size_t i = 0; i < c.tasks.size(); ++i) {
    const std::string where = "tasks[" + std::to_string(i) + "]";
    need(where + ".train", c.tasks[i].train);
    need(where + ".dev", c.tasks[i].dev);
    need(where + ".test", c.tasks[i].test);
  }
  need("embeddings", c.embeddings);
}

std::optional<std::uint64_t> seed_from_env() {
  const char* text = std::getenv("MTL_SEED");
  if (!text || !*text) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != std::string(text).size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("MTL_SEED", std::string("not a non-negative integer: ") + text);
  }
}

std::string preset_dir() {
  if (const char* env = std::getenv("MTL_PRESET_DIR"); env && *env) return env;
  return MTL_PRESET_DIR;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(preset_dir(), ec)) {
    if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

json load_preset(const std::string& name) {
  const fs::path path = fs::path(preset_dir()) / (name + ".json");
  std::ifstream in(path);
  if (!in) {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("preset", "unknown preset '" + name + "' (known: " + known + ")");
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("preset", path.string() + ": " + e.what());
  }
}

}  // namespace mtl::cli
