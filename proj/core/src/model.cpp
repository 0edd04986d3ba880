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

#include "mtl/model.hpp"

#include <array>

#include "mtl/errors.hpp"

namespace mtl {

using namespace ag;

namespace {

struct KindName {
  ArchitectureKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {ArchitectureKind::SingleTask, "single-task"},
    {ArchitectureKind::ParallelUniv, "parallel-univ"},
    {ArchitectureKind::ParallelUnivTask, "parallel-univ-task"},
    {ArchitectureKind::ParallelUnivGroupTask, "parallel-univ-group-task"},
    {ArchitectureKind::Serial, "serial"},
    {ArchitectureKind::SerialHighway, "serial-highway"},
    {ArchitectureKind::SerialHighwaySwap, "serial-highway-swap"},
};

Variable zero_scalar() { return Variable::constant(Tensor::scalar(0.0)); }

Variable concat(std::vector<Variable> parts) {
  if (parts.size() == 1) return parts.front();
  return concat_cols(parts);
}

Variable mean_rows(const Variable& states) {
  const std::vector<std::uint8_t> all(states.rows(), 1);
  return scale(masked_sum(states, all), 1.0 / static_cast<double>(states.rows()));
}

Discriminator make_discriminator(const std::string& name, std::size_t width,
                                 std::size_t classes) {
  // Zero init: the discriminator starts at uniform task posteriors.
  return {Variable::parameter(Tensor::zeros(width, classes), name + ".w"),
          Variable::parameter(Tensor::zeros(1, classes), name + ".b")};
}

Variable discriminate(const Discriminator& d, const Variable& states, std::size_t target) {
  Variable pooled = grad_reverse(mean_rows(states));
  Variable logits = add_row(matmul(pooled, d.weight), d.bias);
  return cross_entropy(logits, target);
}

}  // namespace

std::string to_string(ArchitectureKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

ArchitectureKind parse_architecture(const std::string& name) {
  for (const auto& k : kKindNames) {
    if (name == k.name) return k.kind;
  }
  throw ConfigError("architecture", "unknown architecture '" + name + "'");
}

bool has_universe_encoder(ArchitectureKind kind) { return kind != ArchitectureKind::SingleTask; }

bool has_group_encoders(ArchitectureKind kind) {
  return kind == ArchitectureKind::ParallelUnivGroupTask || kind == ArchitectureKind::Serial ||
         kind == ArchitectureKind::SerialHighway || kind == ArchitectureKind::SerialHighwaySwap;
}

bool has_task_encoders(ArchitectureKind kind) { return kind != ArchitectureKind::ParallelUniv; }

std::size_t decoder_blocks(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::SingleTask:
    case ArchitectureKind::ParallelUniv:
    case ArchitectureKind::Serial:
      return 1;
    case ArchitectureKind::ParallelUnivTask:
      return 2;
    default:
      return 3;
  }
}

MtlModel MtlModel::build(const ModelConfig& config, TaskRegistry registry, Vocabulary vocab,
                         Rng& rng) {
  if (registry.empty()) throw RegistryError("cannot build a model without tasks");
  MtlModel m;
  m.config_ = config;
  m.registry_ = std::move(registry);
  m.vocab_ = std::move(vocab);
  const auto kind = config.kind;

  auto make_embedder = [&](const std::string& prefix) {
    TokenEmbedder e{
        EmbeddingTable::random(prefix + "embed.words", m.vocab_.words.size(), config.word_dim, rng,
                               !config.freeze_word_embeddings),
        EmbeddingTable::random(prefix + "embed.chars", m.vocab_.chars.size(), config.char_dim, rng),
        BiLstmEncoder::create(prefix + "embed.char_lstm", config.char_dim, config.char_hidden, rng)};
    return e;
  };
  const std::size_t n_tasks = m.registry_.size();
  if (kind == ArchitectureKind::SingleTask) {
    // Independent models: nothing, not even the embeddings, is shared.
    for (std::size_t t = 0; t < n_tasks; ++t) {
      m.embedders_.push_back(make_embedder("task/" + m.registry_.task(t).name + "/"));
    }
  } else {
    m.embedders_.push_back(make_embedder(""));
  }

  const std::size_t in = m.embedding_dim();
  const std::size_t width = 2 * config.hidden;
  const bool swap = kind == ArchitectureKind::SerialHighwaySwap;
  const bool serial = kind == ArchitectureKind::Serial || kind == ArchitectureKind::SerialHighway;

  if (has_universe_encoder(kind)) {
    m.universe_ = BiLstmEncoder::create("universe", swap ? width : in, config.hidden, rng);
  }
  if (has_group_encoders(kind)) {
    for (const auto& g : m.registry_.groups()) {
      m.groups_.push_back(BiLstmEncoder::create("group/" + g.name, swap ? width : in,
                                                config.hidden, rng));
    }
  }
  if (has_task_encoders(kind)) {
    for (std::size_t t = 0; t < n_tasks; ++t) {
      m.task_encoders_.push_back(BiLstmEncoder::create("task/" + m.registry_.task(t).name,
                                                       serial ? 2 * width : in, config.hidden,
                                                       rng));
    }
  }
  const std::size_t d = m.decoder_input_dim();
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const auto& info = m.registry_.task(t);
    const std::string prefix = "decoder/" + info.name;
    CrfParams crf = CrfParams::create(prefix + ".crf", d, info.slots.size(), rng);
    IntentHead head = IntentHead::create(prefix + ".intent", d, info.intents.size(), rng);
    m.decoders_.push_back({std::move(crf), std::move(head)});
  }
  if (kind != ArchitectureKind::SingleTask) {
    m.universe_disc_ = make_discriminator("disc/universe", width, n_tasks);
  }
  m.group_discs_.resize(m.registry_.groups().size());
  if (has_group_encoders(kind)) {
    for (std::size_t g = 0; g < m.registry_.groups().size(); ++g) {
      const auto& group = m.registry_.groups()[g];
      if (group.members.size() > 1) {
        m.group_discs_[g] = make_discriminator("disc/group/" + group.name, width,
                                               group.members.size());
      }
    }
  }
  return m;
}

std::size_t MtlModel::embedding_dim() const {
  return config_.word_dim + 2 * config_.char_hidden;
}

std::size_t MtlModel::decoder_input_dim() const {
  return decoder_blocks(config_.kind) * 2 * config_.hidden;
}

std::size_t MtlModel::checked_task(std::size_t task) const {
  if (task >= registry_.size()) throw RegistryError("unknown task id " + std::to_string(task));
  return task;
}

const TokenEmbedder& MtlModel::embedder(std::size_t task) const {
  return embedders_.size() == 1 ? embedders_.front() : embedders_.at(checked_task(task));
}

TokenEmbedder& MtlModel::embedder(std::size_t task) {
  return embedders_.size() == 1 ? embedders_.front() : embedders_.at(checked_task(task));
}

Variable MtlModel::embed(const EncodedUtterance& u, std::size_t task, Rng* rng) const {
  Variable x = embed_tokens(u.words, u.chars, embedder(task));
  if (rng) x = dropout(x, config_.dropout, *rng, true);
  return x;
}

Encoding MtlModel::encode(const Variable& embedded, std::size_t task, Rng* rng) const {
  checked_task(task);
  const auto kind = config_.kind;
  const std::size_t group = registry_.task(task).group_index;
  auto drop = [&](const Variable& v) { return rng ? dropout(v, config_.dropout, *rng, true) : v; };

  // Raw states go into the bundle (adversarial/orthogonality terms); the
  // dropped-out copies feed decoders and later stages.
  Encoding enc;
  FeatureBundle& b = enc.bundle;
  Variable task_out;
  Variable group_out;
  Variable univ_out;

  auto run = [&](const BiLstmEncoder& encoder, const Variable& input, Variable& states,
                 Variable& sentence, Variable& dropped) {
    EncoderOutput o = bilstm_forward(encoder, input);
    states = o.states;
    sentence = o.sentence;
    dropped = drop(o.states);
  };
  auto stage_input = [&](const Variable& raw, const Variable& dropped) {
    return config_.dropout_between_stages ? dropped : raw;
  };

  switch (kind) {
    case ArchitectureKind::SingleTask:
      run(task_encoders_[task], embedded, b.task, b.task_sentence, task_out);
      break;
    case ArchitectureKind::ParallelUniv:
      run(*universe_, embedded, b.universe, b.universe_sentence, univ_out);
      break;
    case ArchitectureKind::ParallelUnivTask:
      run(*universe_, embedded, b.universe, b.universe_sentence, univ_out);
      run(task_encoders_[task], embedded, b.task, b.task_sentence, task_out);
      break;
    case ArchitectureKind::ParallelUnivGroupTask:
      run(*universe_, embedded, b.universe, b.universe_sentence, univ_out);
      run(groups_[group], embedded, b.group, b.group_sentence, group_out);
      run(task_encoders_[task], embedded, b.task, b.task_sentence, task_out);
      break;
    case ArchitectureKind::Serial:
    case ArchitectureKind::SerialHighway: {
      run(*universe_, embedded, b.universe, b.universe_sentence, univ_out);
      run(groups_[group], embedded, b.group, b.group_sentence, group_out);
      const std::array<Variable, 2> shared{stage_input(b.group, group_out),
                                           stage_input(b.universe, univ_out)};
      run(task_encoders_[task], concat_cols(shared), b.task, b.task_sentence, task_out);
      break;
    }
    case ArchitectureKind::SerialHighwaySwap: {
      run(task_encoders_[task], embedded, b.task, b.task_sentence, task_out);
      const Variable private_features = stage_input(b.task, task_out);
      run(*universe_, private_features, b.universe, b.universe_sentence, univ_out);
      run(groups_[group], private_features, b.group, b.group_sentence, group_out);
      break;
    }
  }

  switch (kind) {
    case ArchitectureKind::SingleTask:
    case ArchitectureKind::Serial:
      enc.decoder_input = task_out;
      enc.decoder_sentence = b.task_sentence;
      break;
    case ArchitectureKind::ParallelUniv:
      enc.decoder_input = univ_out;
      enc.decoder_sentence = b.universe_sentence;
      break;
    case ArchitectureKind::ParallelUnivTask:
      enc.decoder_input = concat({task_out, univ_out});
      enc.decoder_sentence = concat({b.task_sentence, b.universe_sentence});
      break;
    default:
      enc.decoder_input = concat({task_out, group_out, univ_out});
      enc.decoder_sentence = concat({b.task_sentence, b.group_sentence, b.universe_sentence});
      break;
  }
  if (enc.decoder_input.cols() != decoder_input_dim()) {
    throw DimensionError("decoder input width " + std::to_string(enc.decoder_input.cols()) +
                         " != " + std::to_string(decoder_input_dim()));
  }
  return enc;
}

UtteranceForward MtlModel::forward(const EncodedUtterance& u, std::size_t task, Rng* rng) const {
  UtteranceForward f;
  f.encoding = encode(embed(u, task, rng), task, rng);
  const TaskDecoder& dec = decoders_[task];
  f.emissions = emission_scores(dec.crf, f.encoding.decoder_input);
  f.intent_logits = intent_logits(dec.intent, f.encoding.decoder_sentence);
  return f;
}

Variable MtlModel::adversarial_loss(const FeatureBundle& bundle, std::size_t task) const {
  checked_task(task);
  std::vector<Variable> terms;
  if (universe_disc_ && bundle.universe.defined()) {
    terms.push_back(discriminate(*universe_disc_, bundle.universe, task));
  }
  const std::size_t group = registry_.task(task).group_index;
  if (group_discs_[group] && bundle.group.defined()) {
    terms.push_back(discriminate(*group_discs_[group], bundle.group, registry_.index_in_group(task)));
  }
  if (terms.empty()) return zero_scalar();
  Variable total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

UtteranceLosses MtlModel::losses(const EncodedUtterance& u, std::size_t task, Rng* rng) const {
  UtteranceForward f = forward(u, task, rng);
  if (u.intent < 0) throw VocabError("utterance intent is not in the task's label map");
  UtteranceLosses out;
  out.task = task_loss(f.emissions, decoders_[task].crf.transitions, u.slots, f.intent_logits,
                       static_cast<std::size_t>(u.intent), config_.w_sf, config_.w_ic);
  out.adversarial = adversarial_loss(f.encoding.bundle, task);
  out.orthogonality = orthogonality_loss(f.encoding.bundle);
  return out;
}

Prediction MtlModel::predict(const EncodedUtterance& u, std::size_t task) const {
  NoRecordScope no_record;
  UtteranceForward f = forward(u, task, nullptr);
  ViterbiResult best = viterbi_decode(f.emissions.value(), decoders_[task].crf.transitions.value());
  Prediction p;
  p.slots = std::move(best.tags);
  p.path_score = best.score;
  p.intent = static_cast<std::int32_t>(argmax(f.intent_logits.value().values()));
  return p;
}

std::vector<NamedParameter> MtlModel::state() const {
  std::vector<NamedParameter> out;
  auto add_var = [&](const Variable& v) { out.push_back({v.name(), v}); };
  auto add_encoder = [&](const BiLstmEncoder& e) {
    for (const auto& p : e.parameters()) add_var(p);
  };
  for (const auto& e : embedders_) {
    add_var(e.words.weights);
    add_var(e.chars.weights);
    add_encoder(e.char_encoder);
  }
  if (universe_) add_encoder(*universe_);
  for (const auto& g : groups_) add_encoder(g);
  for (const auto& t : task_encoders_) add_encoder(t);
  for (const auto& d : decoders_) {
    add_var(d.crf.emission);
    add_var(d.crf.transitions);
    add_var(d.intent.weight);
    add_var(d.intent.bias);
  }
  if (universe_disc_) {
    add_var(universe_disc_->weight);
    add_var(universe_disc_->bias);
  }
  for (const auto& d : group_discs_) {
    if (!d) continue;
    add_var(d->weight);
    add_var(d->bias);
  }
  return out;
}

std::vector<NamedParameter> MtlModel::parameters() const {
  std::vector<NamedParameter> out;
  for (auto& p : state()) {
    if (p.value.requires_grad()) out.push_back(std::move(p));
  }
  return out;
}

std::size_t MtlModel::apply_pretrained(const PretrainedEmbeddings& pretrained) {
  std::size_t hits = 0;
  for (auto& e : embedders_) hits = mtl::apply_pretrained(e.words, vocab_.words.labels(), pretrained);
  return hits;
}

Variable task_loss(const Variable& emissions, const Variable& transitions,
                   std::span<const std::int32_t> gold_slots, const Variable& intent_logits,
                   std::size_t gold_intent, double w_sf, double w_ic) {
  if (w_sf < 0.0 || w_ic < 0.0) throw ContractError("task loss weights must be non-negative");
  Variable ic = cross_entropy(intent_logits, gold_intent);
  if (w_sf == 0.0) return w_ic == 1.0 ? ic : scale(ic, w_ic);
  Variable sf = crf_nll(emissions, transitions, gold_slots);
  if (w_ic == 0.0) return w_sf == 1.0 ? sf : scale(sf, w_sf);
  return add(scale(sf, w_sf), scale(ic, w_ic));
}

Variable tasks_loss(const std::vector<std::pair<std::size_t, Variable>>& per_task,
                    const TaskRegistry& registry) {
  if (per_task.empty()) return zero_scalar();
  Variable total;
  for (const auto& [task, loss] : per_task) {
    Variable term = scale(loss, registry.alpha(task));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Variable orthogonality_loss(const FeatureBundle& bundle) {
  if (!bundle.task.defined()) return zero_scalar();
  std::vector<Variable> terms;
  for (const Variable* shared : {&bundle.universe, &bundle.group}) {
    if (!shared->defined()) continue;
    if (shared->cols() != bundle.task.cols() || shared->rows() != bundle.task.rows()) {
      throw DimensionError("orthogonality: task features " + shape_string(bundle.task.shape()) +
                           " vs shared " + shape_string(shared->shape()));
    }
    terms.push_back(sum_squares(matmul(transpose(bundle.task), *shared)));
  }
  if (terms.empty()) return zero_scalar();
  return terms.size() == 1 ? terms[0] : add(terms[0], terms[1]);
}

Variable total_loss(const Variable& tasks, const Variable& adversarial,
                    const Variable& orthogonality, double lambda, double gamma) {
  if (lambda < 0.0 || gamma < 0.0) throw ContractError("lambda and gamma must be non-negative");
  Variable total = tasks;
  if (lambda != 0.0) total = add(total, scale(adversarial, lambda));
  if (gamma != 0.0) total = add(total, scale(orthogonality, gamma));
  return total;
}

}  // namespace mtl
