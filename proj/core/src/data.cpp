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

#include "mtl/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "mtl/errors.hpp"

namespace mtl {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kIntentPrefix = "#intent=";

std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

bool is_bio_tag(const std::string& tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

std::vector<Utterance> read_corpus(std::istream& in, const std::string& source) {
  std::vector<Utterance> out;
  Utterance current;
  bool closed = false;  // intent line seen for the current block
  std::size_t block_start = 0;
  std::size_t line_no = 0;
  std::string line;

  auto finish_block = [&](std::size_t at) {
    if (current.tokens.empty() && !closed) return;
    if (!closed) throw ParseError(source + ": utterance without #intent= line", at);
    if (current.tokens.empty()) throw ParseError(source + ": utterance without tokens", block_start);
    out.push_back(std::move(current));
    current = Utterance();
    closed = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) {
      finish_block(line_no);
      continue;
    }
    if (current.tokens.empty() && !closed) block_start = line_no;
    if (line.rfind(kIntentPrefix, 0) == 0) {
      if (closed) throw ParseError(source + ": second #intent= line in one utterance", line_no);
      current.intent = line.substr(kIntentPrefix.size());
      if (current.intent.empty()) throw ParseError(source + ": empty intent label", line_no);
      closed = true;
      continue;
    }
    if (closed) throw ParseError(source + ": token line after #intent= line", line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(source + ": expected `token<TAB>tag`", line_no);
    }
    std::string tag = line.substr(tab + 1);
    if (!is_bio_tag(tag)) throw ParseError(source + ": malformed slot tag '" + tag + "'", line_no);
    current.tokens.push_back(line.substr(0, tab));
    current.slots.push_back(std::move(tag));
  }
  finish_block(line_no);
  return out;
}

std::vector<Utterance> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path);
  auto out = read_corpus(in, path);
  if (out.empty()) std::cerr << "warning: corpus " << path << " is empty\n";
  return out;
}

void write_corpus(std::ostream& out, const std::vector<Utterance>& utterances) {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    if (i) out << '\n';
    for (std::size_t t = 0; t < u.tokens.size(); ++t) out << u.tokens[t] << '\t' << u.slots[t] << '\n';
    out << kIntentPrefix << u.intent << '\n';
  }
}

void save_corpus(const std::string& path, const std::vector<Utterance>& utterances) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write corpus file " + path);
  write_corpus(out, utterances);
}

std::vector<Utterance> load_parallel_files(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream tokens_in(base / "seq.in");
  std::ifstream tags_in(base / "seq.out");
  std::ifstream labels_in(base / "label");
  if (!tokens_in || !tags_in || !labels_in) {
    throw ParseError("expected seq.in, seq.out and label in " + dir);
  }
  std::vector<Utterance> out;
  std::string tok_line;
  std::string tag_line;
  std::string label_line;
  std::size_t line_no = 0;
  while (std::getline(tokens_in, tok_line)) {
    ++line_no;
    if (!std::getline(tags_in, tag_line) || !std::getline(labels_in, label_line)) {
      throw ParseError(dir + ": seq.in has more lines than seq.out/label", line_no);
    }
    strip_cr(tok_line);
    strip_cr(tag_line);
    strip_cr(label_line);
    if (tok_line.find_first_not_of(" \t") == std::string::npos) continue;
    Utterance u;
    u.tokens = split_whitespace(tok_line);
    u.slots = split_whitespace(tag_line);
    const auto labels = split_whitespace(label_line);
    if (u.tokens.size() != u.slots.size()) {
      throw ParseError(dir + ": " + std::to_string(u.tokens.size()) + " tokens but " +
                           std::to_string(u.slots.size()) + " tags",
                       line_no);
    }
    if (labels.size() != 1) throw ParseError(dir + ": expected one intent label", line_no);
    for (const auto& tag : u.slots) {
      if (!is_bio_tag(tag)) throw ParseError(dir + ": malformed slot tag '" + tag + "'", line_no);
    }
    u.intent = labels[0];
    out.push_back(std::move(u));
  }
  if (std::getline(tags_in, tag_line) && !tag_line.empty()) {
    throw ParseError(dir + ": seq.out has more lines than seq.in", line_no + 1);
  }
  return out;
}

std::vector<Utterance> load_any(const std::string& path) {
  if (fs::is_directory(path)) return load_parallel_files(path);
  return load_corpus(path);
}

std::string snips_domain(const std::string& intent) {
  static const std::map<std::string, std::string> kTable = {
      {"search_creative_work", kSnipsCreative},
      {"rate_book", kSnipsCreative},
      {"play_music", kSnipsMusic},
      {"add_to_playlist", kSnipsMusic},
      {"get_weather", kSnipsLocation},
      {"book_restaurant", kSnipsLocation},
      {"search_screening_event", kSnipsLocation},
  };
  auto it = kTable.find(intent);
  if (it == kTable.end()) {
    throw ClassificationError("unknown Snips intent '" + intent +
                              "' (expected one of: add_to_playlist, book_restaurant, "
                              "get_weather, play_music, rate_book, search_creative_work, "
                              "search_screening_event)");
  }
  return it->second;
}

SnipsSplit split_snips(const std::vector<Utterance>& utterances) {
  SnipsSplit out;
  for (const auto& u : utterances) {
    const std::string domain = snips_domain(u.intent);
    Utterance copy = u;
    copy.task = domain;
    if (domain == kSnipsCreative) {
      out.creative.push_back(std::move(copy));
    } else if (domain == kSnipsMusic) {
      out.music.push_back(std::move(copy));
    } else {
      out.location.push_back(std::move(copy));
    }
  }
  return out;
}

LabelMap::LabelMap(const std::vector<std::string>& labels) {
  for (const auto& l : labels) add(l);
}

std::int32_t LabelMap::add(const std::string& label) {
  auto [it, inserted] = ids_.try_emplace(label, static_cast<std::int32_t>(labels_.size()));
  if (inserted) labels_.push_back(label);
  return it->second;
}

std::optional<std::int32_t> LabelMap::find(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::int32_t LabelMap::id(const std::string& label) const {
  auto found = find(label);
  if (!found) throw VocabError("unknown label '" + label + "'");
  return *found;
}

const std::string& LabelMap::label(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= labels_.size()) {
    throw VocabError("label id " + std::to_string(id) + " outside map of size " +
                     std::to_string(labels_.size()));
  }
  return labels_[static_cast<std::size_t>(id)];
}

std::int32_t Vocabulary::word_id(const std::string& token) const {
  return words.find(token).value_or(1);
}

std::vector<std::int32_t> Vocabulary::char_ids(const std::string& token) const {
  std::vector<std::int32_t> out;
  out.reserve(token.size());
  for (char c : token) out.push_back(chars.find(std::string(1, c)).value_or(1));
  return out;
}

Vocabulary build_vocab(const std::vector<const std::vector<Utterance>*>& training_sets) {
  Vocabulary v;
  v.words.add(kPadToken);
  v.words.add(kUnkToken);
  v.chars.add(kPadToken);
  v.chars.add(kUnkToken);
  for (const auto* set : training_sets) {
    for (const auto& u : *set) {
      for (const auto& tok : u.tokens) {
        v.words.add(tok);
        for (char c : tok) v.chars.add(std::string(1, c));
      }
    }
  }
  return v;
}

Vocabulary build_vocab(const std::vector<Utterance>& training) {
  return build_vocab(std::vector<const std::vector<Utterance>*>{&training});
}

TaskRegistry TaskRegistry::build(const std::vector<TaskDefinition>& definitions, AlphaMode mode) {
  TaskRegistry reg;
  for (const auto& def : definitions) {
    if (def.training == nullptr || def.training->empty()) {
      throw RegistryError("task '" + def.name + "' has no training utterances");
    }
    TaskInfo info;
    info.name = def.name;
    info.group = def.group.empty() ? def.name : def.group;
    info.slots.add("O");
    for (const auto& u : *def.training) {
      for (const auto& tag : u.slots) info.slots.add(tag);
      info.intents.add(u.intent);
    }
    info.train_size = def.training->size();
    reg.add_task(std::move(info));
  }
  reg.set_alphas(mode);
  return reg;
}

void TaskRegistry::add_task(TaskInfo info) {
  if (find_task(info.name)) throw RegistryError("duplicate task '" + info.name + "'");
  const std::size_t id = tasks_.size();
  auto it = std::find_if(groups_.begin(), groups_.end(),
                         [&](const TaskGroup& g) { return g.name == info.group; });
  if (it == groups_.end()) {
    groups_.push_back({info.group, {}});
    it = groups_.end() - 1;
  }
  it->members.push_back(id);
  info.group_index = static_cast<std::size_t>(it - groups_.begin());
  tasks_.push_back(std::move(info));
}

const TaskInfo& TaskRegistry::task(std::size_t id) const {
  if (id >= tasks_.size()) throw RegistryError("unknown task id " + std::to_string(id));
  return tasks_[id];
}

TaskInfo& TaskRegistry::task(std::size_t id) {
  if (id >= tasks_.size()) throw RegistryError("unknown task id " + std::to_string(id));
  return tasks_[id];
}

std::optional<std::size_t> TaskRegistry::find_task(const std::string& name) const {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t TaskRegistry::task_id(const std::string& name) const {
  auto id = find_task(name);
  if (!id) throw RegistryError("unknown task '" + name + "'");
  return *id;
}

const TaskGroup& TaskRegistry::group_of(std::size_t task_id) const {
  return groups_[task(task_id).group_index];
}

std::size_t TaskRegistry::index_in_group(std::size_t task_id) const {
  const auto& members = group_of(task_id).members;
  return static_cast<std::size_t>(std::find(members.begin(), members.end(), task_id) -
                                  members.begin());
}

double TaskRegistry::alpha(std::size_t task_id) const {
  const double a = task(task_id).alpha;
  if (!(a > 0.0)) {
    throw RegistryError("task '" + task(task_id).name + "' has no positive loss weight");
  }
  return a;
}

void TaskRegistry::set_alphas(AlphaMode mode) {
  if (tasks_.empty()) return;
  if (mode == AlphaMode::Uniform) {
    for (auto& t : tasks_) t.alpha = 1.0;
    return;
  }
  // alpha proportional to 1/n, scaled so the smallest task gets 1.
  std::size_t smallest = tasks_.front().train_size;
  for (const auto& t : tasks_) smallest = std::min(smallest, t.train_size);
  for (auto& t : tasks_) {
    if (t.train_size == 0) throw RegistryError("task '" + t.name + "' has no training size");
    t.alpha = static_cast<double>(smallest) / static_cast<double>(t.train_size);
  }
}

EncodedUtterance encode(const Utterance& u, const Vocabulary& vocab, const TaskInfo& task,
                        bool lenient) {
  if (u.tokens.empty() || u.tokens.size() != u.slots.size()) {
    throw ContractError("utterance with " + std::to_string(u.tokens.size()) + " tokens and " +
                        std::to_string(u.slots.size()) + " tags");
  }
  EncodedUtterance e;
  for (std::size_t t = 0; t < u.tokens.size(); ++t) {
    e.words.push_back(vocab.word_id(u.tokens[t]));
    e.chars.push_back(vocab.char_ids(u.tokens[t]));
    auto slot = task.slots.find(u.slots[t]);
    if (!slot && !lenient) {
      throw VocabError("task '" + task.name + "' has no slot tag '" + u.slots[t] + "'");
    }
    e.slots.push_back(slot.value_or(-1));
  }
  auto intent = task.intents.find(u.intent);
  if (!intent && !lenient) {
    throw VocabError("task '" + task.name + "' has no intent '" + u.intent + "'");
  }
  e.intent = intent.value_or(-1);
  return e;
}

std::vector<EncodedUtterance> encode_all(const std::vector<Utterance>& corpus,
                                         const Vocabulary& vocab, const TaskInfo& task,
                                         bool lenient) {
  std::vector<EncodedUtterance> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.push_back(encode(corpus[i], vocab, task, lenient));
    out.back().source_index = i;
  }
  return out;
}

EncodedUtterance Batch::row(std::size_t r) const {
  EncodedUtterance e;
  const std::size_t len = lengths[r];
  const std::size_t base = r * max_len;
  e.words.assign(words.begin() + static_cast<std::ptrdiff_t>(base),
                 words.begin() + static_cast<std::ptrdiff_t>(base + len));
  e.chars.assign(chars.begin() + static_cast<std::ptrdiff_t>(base),
                 chars.begin() + static_cast<std::ptrdiff_t>(base + len));
  e.slots.assign(slots.begin() + static_cast<std::ptrdiff_t>(base),
                 slots.begin() + static_cast<std::ptrdiff_t>(base + len));
  e.intent = intents[r];
  e.source_index = source_indices[r];
  return e;
}

Batch make_batch(std::size_t task, const std::vector<const EncodedUtterance*>& rows) {
  Batch b;
  b.task = task;
  b.rows = rows.size();
  for (const auto* u : rows) b.max_len = std::max(b.max_len, u->words.size());
  const std::size_t cells = b.rows * b.max_len;
  b.words.assign(cells, 0);
  b.chars.assign(cells, {});
  b.mask.assign(cells, 0);
  b.slots.assign(cells, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& u = *rows[r];
    for (std::size_t t = 0; t < u.words.size(); ++t) {
      const std::size_t i = r * b.max_len + t;
      b.words[i] = u.words[t];
      b.chars[i] = u.chars[t];
      b.mask[i] = 1;
      b.slots[i] = u.slots[t];
    }
    b.intents.push_back(u.intent);
    b.lengths.push_back(u.words.size());
    b.source_indices.push_back(u.source_index);
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<EncodedUtterance>& corpus, std::size_t task,
                                std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<const EncodedUtterance*> rows;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
      rows.push_back(&corpus[order[i]]);
    }
    out.push_back(make_batch(task, rows));
  }
  return out;
}

}  // namespace mtl
