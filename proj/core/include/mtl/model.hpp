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

// Multi-task encoder assemblies for joint slot filling and intent detection.
//
// Three kinds of BiLSTM encoders can be present: one universe encoder shared
// by every task, one encoder per task group, and one private encoder per
// task. The architecture kind decides which exist and how they are wired:
//
//   kind                      encoders           decoder input
//   SingleTask                task               H_task
//   ParallelUniv              univ               H_univ
//   ParallelUnivTask          univ, task         H_task ++ H_univ
//   ParallelUnivGroupTask     univ, group, task  H_task ++ H_group ++ H_univ
//   Serial                    univ, group -> task(H_group ++ H_univ)
//                                                H_task
//   SerialHighway             as Serial          H_task ++ H_group ++ H_univ
//   SerialHighwaySwap         task -> univ(H_task), group(H_task)
//                                                H_task ++ H_group ++ H_univ
//
// The intent head reads the same concatenation of sentence representations.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtl/autograd.hpp"
#include "mtl/crf.hpp"
#include "mtl/data.hpp"
#include "mtl/layers.hpp"

namespace mtl {

enum class ArchitectureKind {
  SingleTask,
  ParallelUniv,
  ParallelUnivTask,
  ParallelUnivGroupTask,
  Serial,
  SerialHighway,
  SerialHighwaySwap,
};

inline constexpr ArchitectureKind kAllArchitectures[] = {
    ArchitectureKind::SingleTask,        ArchitectureKind::ParallelUniv,
    ArchitectureKind::ParallelUnivTask,  ArchitectureKind::ParallelUnivGroupTask,
    ArchitectureKind::Serial,            ArchitectureKind::SerialHighway,
    ArchitectureKind::SerialHighwaySwap,
};

/// Kebab-case name, e.g. "serial-highway-swap".
std::string to_string(ArchitectureKind kind);
/// Accepts the kebab-case names; throws ConfigError otherwise.
ArchitectureKind parse_architecture(const std::string& name);

bool has_universe_encoder(ArchitectureKind kind);
bool has_group_encoders(ArchitectureKind kind);
bool has_task_encoders(ArchitectureKind kind);
/// Number of 2h-wide blocks in the decoder input.
std::size_t decoder_blocks(ArchitectureKind kind);

struct ModelConfig {
  ArchitectureKind kind = ArchitectureKind::SingleTask;
  std::size_t word_dim = 300;
  std::size_t char_dim = 100;
  std::size_t char_hidden = 64;
  std::size_t hidden = 128;
  double dropout = 0.5;
  double lambda = 0.05;  // adversarial weight
  double gamma = 0.01;   // orthogonality weight
  double w_sf = 1.0;
  double w_ic = 1.0;
  bool freeze_word_embeddings = false;
  bool dropout_between_stages = true;
};

struct TaskDecoder {
  CrfParams crf;
  IntentHead intent;
};

/// Affine layer to a softmax over task ids.
struct Discriminator {
  Variable weight;  // [2h x classes]
  Variable bias;    // [1 x classes]
};

/// Encoder states ([T x 2h]) and sentence representations ([1 x 2h]) for the
/// encoders present in the architecture; absent ones are undefined.
struct FeatureBundle {
  Variable task;
  Variable group;
  Variable universe;
  Variable task_sentence;
  Variable group_sentence;
  Variable universe_sentence;
};

struct Encoding {
  Variable decoder_input;     // [T x D]
  Variable decoder_sentence;  // [1 x D]
  FeatureBundle bundle;
};

struct NamedParameter {
  std::string name;
  Variable value;
};

struct UtteranceForward {
  Encoding encoding;
  Variable emissions;  // [T x K]
  Variable intent_logits;
};

struct UtteranceLosses {
  Variable task;           // w_sf * nll + w_ic * ce
  Variable adversarial;    // scalar, possibly constant 0
  Variable orthogonality;  // scalar, possibly constant 0
};

struct Prediction {
  std::vector<std::int32_t> slots;
  std::int32_t intent = 0;
  double path_score = 0.0;
};

class MtlModel {
 public:
  /// Builds every encoder, decoder and discriminator for `registry`.
  static MtlModel build(const ModelConfig& config, TaskRegistry registry, Vocabulary vocab,
                        Rng& rng);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  ArchitectureKind kind() const { return config_.kind; }
  const TaskRegistry& registry() const { return registry_; }
  const Vocabulary& vocab() const { return vocab_; }

  std::size_t embedding_dim() const;
  std::size_t decoder_input_dim() const;

  /// Word + character features for one utterance. `rng` enables dropout.
  Variable embed(const EncodedUtterance& u, std::size_t task, Rng* rng = nullptr) const;
  /// Runs the encoders for `task` over embedded tokens.
  Encoding encode(const Variable& embedded, std::size_t task, Rng* rng = nullptr) const;
  UtteranceForward forward(const EncodedUtterance& u, std::size_t task, Rng* rng = nullptr) const;

  UtteranceLosses losses(const EncodedUtterance& u, std::size_t task, Rng* rng = nullptr) const;
  Variable adversarial_loss(const FeatureBundle& bundle, std::size_t task) const;

  /// Viterbi slots and argmax intent; never records on a tape.
  Prediction predict(const EncodedUtterance& u, std::size_t task) const;

  /// Every trainable parameter with a stable name.
  std::vector<NamedParameter> parameters() const;
  /// Every stored tensor, trainable or not (checkpoint contents).
  std::vector<NamedParameter> state() const;

  const TokenEmbedder& embedder(std::size_t task) const;
  TokenEmbedder& embedder(std::size_t task);
  const std::optional<BiLstmEncoder>& universe_encoder() const { return universe_; }
  const BiLstmEncoder& group_encoder(std::size_t group) const { return groups_.at(group); }
  const BiLstmEncoder& task_encoder(std::size_t task) const { return task_encoders_.at(task); }
  const TaskDecoder& decoder(std::size_t task) const { return decoders_.at(task); }
  const std::optional<Discriminator>& universe_discriminator() const { return universe_disc_; }
  const std::optional<Discriminator>& group_discriminator(std::size_t group) const {
    return group_discs_.at(group);
  }

  /// Copies pretrained word vectors into every word table.
  std::size_t apply_pretrained(const PretrainedEmbeddings& pretrained);

 private:
  std::size_t checked_task(std::size_t task) const;

  ModelConfig config_;
  TaskRegistry registry_;
  Vocabulary vocab_;
  std::vector<TokenEmbedder> embedders_;  // one shared, or one per task for SingleTask
  std::optional<BiLstmEncoder> universe_;
  std::vector<BiLstmEncoder> groups_;
  std::vector<BiLstmEncoder> task_encoders_;
  std::vector<TaskDecoder> decoders_;
  std::optional<Discriminator> universe_disc_;
  std::vector<std::optional<Discriminator>> group_discs_;
};

/// w_sf * CRF negative log-likelihood + w_ic * intent cross-entropy.
Variable task_loss(const Variable& emissions, const Variable& transitions,
                   std::span<const std::int32_t> gold_slots, const Variable& intent_logits,
                   std::size_t gold_intent, double w_sf, double w_ic);

/// Sum over tasks of alpha_task * loss_task.
Variable tasks_loss(const std::vector<std::pair<std::size_t, Variable>>& per_task,
                    const TaskRegistry& registry);

/// Sum of squared Frobenius norms of H_task^T H_univ and H_task^T H_group.
Variable orthogonality_loss(const FeatureBundle& bundle);

/// tasks + lambda * adversarial + gamma * orthogonality (zero weights drop
/// their term so the result equals `tasks` exactly).
Variable total_loss(const Variable& tasks, const Variable& adversarial,
                    const Variable& orthogonality, double lambda, double gamma);

}  // namespace mtl
