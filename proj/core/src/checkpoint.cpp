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

#include "mtl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mtl/errors.hpp"

namespace mtl {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'T', 'L', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

json config_to_json(const ModelConfig& c) {
  return {{"architecture", to_string(c.kind)},
          {"word_dim", c.word_dim},
          {"char_dim", c.char_dim},
          {"char_hidden", c.char_hidden},
          {"hidden", c.hidden},
          {"dropout", c.dropout},
          {"lambda", c.lambda},
          {"gamma", c.gamma},
          {"w_sf", c.w_sf},
          {"w_ic", c.w_ic},
          {"freeze_word_embeddings", c.freeze_word_embeddings},
          {"dropout_between_stages", c.dropout_between_stages}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.kind = parse_architecture(j.at("architecture").get<std::string>());
  c.word_dim = j.at("word_dim").get<std::size_t>();
  c.char_dim = j.at("char_dim").get<std::size_t>();
  c.char_hidden = j.at("char_hidden").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.w_sf = j.at("w_sf").get<double>();
  c.w_ic = j.at("w_ic").get<double>();
  c.freeze_word_embeddings = j.at("freeze_word_embeddings").get<bool>();
  c.dropout_between_stages = j.at("dropout_between_stages").get<bool>();
  return c;
}

}  // namespace

void Archive::add(std::string name, Tensor tensor) {
  tensors_.emplace_back(std::move(name), std::move(tensor));
}

bool Archive::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const auto& p) { return p.first == name; });
}

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors_) {
    if (n == name) return t;
  }
  throw CompatibilityError("checkpoint has no tensor '" + name + "'");
}

void Archive::write(const std::string& path) const {
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const json header = {{"version", kCheckpointVersion},
                       {"meta", json::parse(meta)},
                       {"tensors", std::move(index)}};
  const std::string text = header.dump();
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors_) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw ParseError("failed writing checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + " is not a checkpoint archive");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path + ": truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
  if (header.value("version", 0) != kCheckpointVersion) {
    throw CompatibilityError(path + ": unsupported checkpoint version " +
                             header.value("version", json(0)).dump());
  }
  Archive a;
  a.meta = header.at("meta").dump();
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ParseError(path + ": truncated tensor data");
    a.add(entry.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

Archive model_to_archive(const MtlModel& model, const std::string& extra_meta) {
  json tasks = json::array();
  for (const auto& t : model.registry().tasks()) {
    tasks.push_back({{"name", t.name},
                     {"group", t.group},
                     {"slots", t.slots.labels()},
                     {"intents", t.intents.labels()},
                     {"alpha", t.alpha},
                     {"train_size", t.train_size}});
  }
  json meta = {{"config", config_to_json(model.config())},
               {"tasks", std::move(tasks)},
               {"words", model.vocab().words.labels()},
               {"chars", model.vocab().chars.labels()},
               {"extra", json::parse(extra_meta)}};
  Archive a;
  a.meta = meta.dump();
  for (const auto& p : model.state()) a.add(p.name, p.value.value());
  return a;
}

std::string archive_extra(const Archive& archive) {
  const json meta = json::parse(archive.meta);
  return meta.contains("extra") ? meta.at("extra").dump() : "{}";
}

MtlModel model_from_archive(const Archive& archive) {
  json meta;
  ModelConfig config;
  TaskRegistry registry;
  Vocabulary vocab;
  try {
    meta = json::parse(archive.meta);
    config = config_from_json(meta.at("config"));
    for (const auto& t : meta.at("tasks")) {
      TaskInfo info;
      info.name = t.at("name").get<std::string>();
      info.group = t.at("group").get<std::string>();
      info.slots = LabelMap(t.at("slots").get<std::vector<std::string>>());
      info.intents = LabelMap(t.at("intents").get<std::vector<std::string>>());
      info.alpha = t.at("alpha").get<double>();
      info.train_size = t.at("train_size").get<std::size_t>();
      registry.add_task(std::move(info));
    }
    vocab.words = LabelMap(meta.at("words").get<std::vector<std::string>>());
    vocab.chars = LabelMap(meta.at("chars").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw CompatibilityError(std::string("checkpoint metadata is incomplete: ") + e.what());
  }
  Rng scratch(0);
  MtlModel model = MtlModel::build(config, std::move(registry), std::move(vocab), scratch);
  const auto state = model.state();
  if (state.size() != archive.tensors().size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(archive.tensors().size()) +
                             " tensors, model expects " + std::to_string(state.size()));
  }
  for (auto p : state) {
    const Tensor& stored = archive.get(p.name);
    if (stored.shape() != p.value.shape()) {
      throw CompatibilityError("tensor '" + p.name + "' has shape " + shape_string(stored.shape()) +
                               ", model expects " + shape_string(p.value.shape()));
    }
    p.value.mutable_value() = stored;
  }
  return model;
}

void save_model(const MtlModel& model, const std::string& path, const std::string& extra_meta) {
  model_to_archive(model, extra_meta).write(path);
}

MtlModel load_model(const std::string& path) { return model_from_archive(Archive::read(path)); }

}  // namespace mtl
