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
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtl {

/// One annotated utterance: tokens, aligned BIO slot tags and an intent.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slots;
  std::string intent;
  std::string task;

  bool operator==(const Utterance&) const = default;
};

/// True for `O`, `B-<label>` and `I-<label>` with a non-empty label.
bool is_bio_tag(const std::string& tag);

// Native corpus format: one `token<TAB>tag` line per token, then a line
// `#intent=<label>`, blocks separated by blank lines.
std::vector<Utterance> read_corpus(std::istream& in, const std::string& source = "<stream>");
std::vector<Utterance> load_corpus(const std::string& path);
void write_corpus(std::ostream& out, const std::vector<Utterance>& utterances);
void save_corpus(const std::string& path, const std::vector<Utterance>& utterances);

/// Reads the `seq.in` / `seq.out` / `label` triple used by the published
/// ATIS and Snips splits.
std::vector<Utterance> load_parallel_files(const std::string& dir);

/// Loads `path` as a native corpus file, or as a parallel-files directory.
std::vector<Utterance> load_any(const std::string& path);

// Snips domains by intent.
inline constexpr const char* kSnipsCreative = "snips-creative";
inline constexpr const char* kSnipsMusic = "snips-music";
inline constexpr const char* kSnipsLocation = "snips-location";

/// Domain of a Snips intent; ClassificationError for anything else.
std::string snips_domain(const std::string& intent);

struct SnipsSplit {
  std::vector<Utterance> creative;
  std::vector<Utterance> music;
  std::vector<Utterance> location;
};

/// Partitions Snips utterances by intent, preserving order within each part.
SnipsSplit split_snips(const std::vector<Utterance>& utterances);

/// Bijection between strings and dense ids.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(const std::vector<std::string>& labels);

  /// Returns the id of `label`, adding it if absent.
  std::int32_t add(const std::string& label);
  std::optional<std::int32_t> find(const std::string& label) const;
  /// Throws VocabError when absent.
  std::int32_t id(const std::string& label) const;
  const std::string& label(std::int32_t id) const;
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const LabelMap& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

/// Word and character vocabularies; ids 0 and 1 are PAD and UNK in both.
struct Vocabulary {
  LabelMap words;
  LabelMap chars;

  std::int32_t word_id(const std::string& token) const;
  std::vector<std::int32_t> char_ids(const std::string& token) const;
};

/// Vocabulary over every token and character in the training utterances.
Vocabulary build_vocab(const std::vector<const std::vector<Utterance>*>& training_sets);
Vocabulary build_vocab(const std::vector<Utterance>& training);

enum class AlphaMode { Uniform, InverseSize };

struct TaskInfo {
  std::string name;
  std::string group;
  std::size_t group_index = 0;
  LabelMap slots;    // "O" is always id 0
  LabelMap intents;
  double alpha = 1.0;
  std::size_t train_size = 0;
};

struct TaskGroup {
  std::string name;
  std::vector<std::size_t> members;  // task ids
};

struct TaskDefinition {
  std::string name;
  std::string group;
  const std::vector<Utterance>* training = nullptr;
};

/// Tasks, their groups, label vocabularies and loss weights.
class TaskRegistry {
 public:
  TaskRegistry() = default;
  /// Groups are numbered by first appearance.
  static TaskRegistry build(const std::vector<TaskDefinition>& definitions, AlphaMode mode);

  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }
  const TaskInfo& task(std::size_t id) const;
  TaskInfo& task(std::size_t id);
  /// Throws RegistryError for unknown names.
  std::size_t task_id(const std::string& name) const;
  std::optional<std::size_t> find_task(const std::string& name) const;
  const std::vector<TaskInfo>& tasks() const { return tasks_; }
  const std::vector<TaskGroup>& groups() const { return groups_; }
  const TaskGroup& group_of(std::size_t task_id) const;
  /// Index of the task inside its group's member list.
  std::size_t index_in_group(std::size_t task_id) const;
  /// Throws RegistryError when the task is unknown or its alpha is not positive.
  double alpha(std::size_t task_id) const;

  void set_alphas(AlphaMode mode);
  void add_task(TaskInfo info);

 private:
  std::vector<TaskInfo> tasks_;
  std::vector<TaskGroup> groups_;
};

/// Utterance converted to ids for one task.
struct EncodedUtterance {
  std::vector<std::int32_t> words;
  std::vector<std::vector<std::int32_t>> chars;
  std::vector<std::int32_t> slots;
  std::int32_t intent = 0;
  std::size_t source_index = 0;
};

/// Maps tokens through `vocab` (unknown -> UNK) and labels through the
/// task's label maps (unknown labels throw VocabError unless `lenient`, in
/// which case they become -1).
EncodedUtterance encode(const Utterance& u, const Vocabulary& vocab, const TaskInfo& task,
                        bool lenient = false);
std::vector<EncodedUtterance> encode_all(const std::vector<Utterance>& corpus,
                                         const Vocabulary& vocab, const TaskInfo& task,
                                         bool lenient = false);

/// Padded single-task batch. Matrices are row-major [rows x max_len].
struct Batch {
  std::size_t task = 0;
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> words;
  std::vector<std::vector<std::int32_t>> chars;  // rows * max_len entries
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> slots;  // 0 at padding
  std::vector<std::int32_t> intents;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> source_indices;

  /// Row `r` cut back to its real length.
  EncodedUtterance row(std::size_t r) const;
};

Batch make_batch(std::size_t task, const std::vector<const EncodedUtterance*>& rows);

/// Seeded shuffle, then consecutive chunks of at most `batch_size`.
std::vector<Batch> make_batches(const std::vector<EncodedUtterance>& corpus, std::size_t task,
                                std::size_t batch_size, std::mt19937_64& rng);

}  // namespace mtl
