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
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mtl/autograd.hpp"

namespace mtl {

using ag::Rng;
using ag::Variable;

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

/// Fills `t` with U(-bound, bound), bound = sqrt(6 / (rows + cols)).
void glorot_uniform(Tensor& t, Rng& rng);

/// Lookup table; row 0 is PAD (zero, never updated), row 1 is UNK.
struct EmbeddingTable {
  Variable weights;

  static EmbeddingTable random(const std::string& name, std::size_t vocab_size, std::size_t dim,
                               Rng& rng, bool trainable = true);

  std::size_t vocab_size() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }
  bool trainable() const { return weights.requires_grad(); }
  /// [ids.size() x dim]; throws VocabError for out-of-range ids.
  Variable lookup(std::span<const std::int32_t> ids) const;
};

/// One LSTM direction. Gate blocks along columns: input, forget, output, candidate.
struct LstmCell {
  Variable input_weights;   // [d x 4h]
  Variable hidden_weights;  // [h x 4h]
  Variable bias;            // [1 x 4h]

  static LstmCell create(const std::string& name, std::size_t input_dim, std::size_t hidden,
                         Rng& rng);
  std::size_t input_dim() const { return input_weights.rows(); }
  std::size_t hidden() const { return hidden_weights.rows(); }
};

struct BiLstmEncoder {
  LstmCell forward;
  LstmCell backward;

  static BiLstmEncoder create(const std::string& name, std::size_t input_dim,
                              std::size_t hidden, Rng& rng);
  std::size_t input_dim() const { return forward.input_dim(); }
  std::size_t hidden() const { return forward.hidden(); }
  std::size_t output_dim() const { return 2 * hidden(); }
  std::vector<Variable> parameters() const;
};

struct EncoderOutput {
  Variable states;    // [T x 2h], zero rows at padded positions
  Variable sentence;  // [1 x 2h] = last real forward state ++ first backward state
};

/// Runs both directions over the real prefix marked by `mask`.
/// An empty mask yields empty states and a zero sentence representation; a
/// non-empty mask without any real token is a ContractError.
EncoderOutput bilstm_forward(const BiLstmEncoder& encoder, const Variable& inputs,
                             std::span<const std::uint8_t> mask);
/// Convenience overload: every row is a real token.
EncoderOutput bilstm_forward(const BiLstmEncoder& encoder, const Variable& inputs);

/// Word table, character table and the character BiLSTM that summarizes a
/// token's characters.
struct TokenEmbedder {
  EmbeddingTable words;
  EmbeddingTable chars;
  BiLstmEncoder char_encoder;

  std::size_t output_dim() const { return words.dim() + char_encoder.output_dim(); }
  std::vector<Variable> parameters() const;
};

/// Per token: word vector ++ char-BiLSTM sentence representation.
Variable embed_tokens(std::span<const std::int32_t> words,
                      const std::vector<std::vector<std::int32_t>>& chars,
                      const TokenEmbedder& embedder);

struct IntentHead {
  Variable weight;  // [d x intents]
  Variable bias;    // [1 x intents]

  static IntentHead create(const std::string& name, std::size_t input_dim,
                           std::size_t intents, Rng& rng);
  std::size_t input_dim() const { return weight.rows(); }
  std::size_t classes() const { return weight.cols(); }
};

/// Pre-softmax intent scores [1 x intents].
Variable intent_logits(const IntentHead& head, const Variable& sentence_rep);
std::size_t argmax(std::span<const double> scores);

/// Vectors read from a GloVe-format text file.
struct PretrainedEmbeddings {
  std::size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t skipped_lines = 0;
};

/// Reads `token v1 ... vd` lines. Lines with the wrong arity or unparsable
/// numbers are counted in skipped_lines. When `keep` is given only those
/// tokens are retained.
PretrainedEmbeddings load_pretrained(const std::string& path,
                                     const std::unordered_set<std::string>* keep = nullptr);

/// Copies pretrained rows into `table` for every vocabulary word whose
/// lowercased form is present. Returns the number of rows initialized.
std::size_t apply_pretrained(EmbeddingTable& table, const std::vector<std::string>& id_to_word,
                             const PretrainedEmbeddings& pretrained);

std::string to_lower(std::string s);

}  // namespace mtl
