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

#include "mtl/layers.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mtl/errors.hpp"

namespace mtl {

using namespace ag;

void glorot_uniform(Tensor& t, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
}

EmbeddingTable EmbeddingTable::random(const std::string& name, std::size_t vocab_size,
                                      std::size_t dim, Rng& rng, bool trainable) {
  if (vocab_size < 2) throw ContractError("embedding table needs PAD and UNK rows");
  Tensor w({vocab_size, dim});
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (double& v : w.values()) v = dist(rng);
  for (std::size_t j = 0; j < dim; ++j) w.at(kPadId, j) = 0.0;
  return {Variable(std::move(w), trainable, name)};
}

Variable EmbeddingTable::lookup(std::span<const std::int32_t> ids) const {
  return gather_rows(weights, ids, static_cast<std::size_t>(kPadId));
}

LstmCell LstmCell::create(const std::string& name, std::size_t input_dim, std::size_t hidden,
                          Rng& rng) {
  Tensor wx({input_dim, 4 * hidden});
  Tensor wh({hidden, 4 * hidden});
  glorot_uniform(wx, rng);
  glorot_uniform(wh, rng);
  Tensor b({1, 4 * hidden});
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;  // forget gate
  return {Variable::parameter(std::move(wx), name + ".wx"),
          Variable::parameter(std::move(wh), name + ".wh"),
          Variable::parameter(std::move(b), name + ".b")};
}

BiLstmEncoder BiLstmEncoder::create(const std::string& name, std::size_t input_dim,
                                    std::size_t hidden, Rng& rng) {
  LstmCell fw = LstmCell::create(name + ".fw", input_dim, hidden, rng);
  LstmCell bw = LstmCell::create(name + ".bw", input_dim, hidden, rng);
  return {std::move(fw), std::move(bw)};
}

std::vector<Variable> BiLstmEncoder::parameters() const {
  return {forward.input_weights, forward.hidden_weights, forward.bias,
          backward.input_weights, backward.hidden_weights, backward.bias};
}

namespace {

// Returns the hidden state for each of the first `length` rows, in row order.
std::vector<Variable> run_direction(const LstmCell& cell, const Variable& inputs,
                                    std::size_t length, bool reverse) {
  const std::size_t h = cell.hidden();
  Variable projected = add_row(matmul(slice_rows(inputs, 0, length), cell.input_weights), cell.bias);
  std::vector<Variable> states(length);
  Variable hidden;
  Variable memory;
  for (std::size_t step = 0; step < length; ++step) {
    const std::size_t t = reverse ? length - 1 - step : step;
    Variable z = slice_rows(projected, t, t + 1);
    if (step > 0) z = add(z, matmul(hidden, cell.hidden_weights));
    Variable in_gate = sigmoid(slice_cols(z, 0, h));
    Variable forget_gate = sigmoid(slice_cols(z, h, 2 * h));
    Variable out_gate = sigmoid(slice_cols(z, 2 * h, 3 * h));
    Variable candidate = tanh(slice_cols(z, 3 * h, 4 * h));
    Variable fresh = mul(in_gate, candidate);
    memory = step == 0 ? fresh : add(mul(forget_gate, memory), fresh);
    hidden = mul(out_gate, tanh(memory));
    states[t] = hidden;
  }
  return states;
}

}  // namespace

EncoderOutput bilstm_forward(const BiLstmEncoder& encoder, const Variable& inputs,
                             std::span<const std::uint8_t> mask) {
  const std::size_t total = mask.size();
  const std::size_t h = encoder.hidden();
  if (inputs.rows() != total) {
    throw DimensionError("bilstm_forward: " + std::to_string(inputs.rows()) +
                         " input rows for a mask of length " + std::to_string(total));
  }
  if (inputs.cols() != encoder.input_dim()) {
    throw DimensionError("bilstm_forward: input width " + std::to_string(inputs.cols()) +
                         ", encoder expects " + std::to_string(encoder.input_dim()));
  }
  if (total == 0) {
    return {Variable::constant(Tensor::zeros(0, 2 * h)), Variable::constant(Tensor::zeros(1, 2 * h))};
  }
  const std::size_t length =
      static_cast<std::size_t>(std::find(mask.begin(), mask.end(), std::uint8_t{0}) - mask.begin());
  if (std::find(mask.begin() + static_cast<std::ptrdiff_t>(length), mask.end(), std::uint8_t{1}) != mask.end()) {
    throw ContractError("bilstm_forward: mask is not a contiguous prefix");
  }
  if (length == 0) throw ContractError("bilstm_forward: every position is padding");

  std::vector<Variable> fw = run_direction(encoder.forward, inputs, length, false);
  std::vector<Variable> bw = run_direction(encoder.backward, inputs, length, true);
  const std::array<Variable, 2> halves{concat_rows(fw), concat_rows(bw)};
  Variable states = concat_cols(halves);
  if (length < total) {
    const std::array<Variable, 2> padded{states,
                                         Variable::constant(Tensor::zeros(total - length, 2 * h))};
    states = concat_rows(padded);
  }
  const std::array<Variable, 2> ends{fw[length - 1], bw[0]};
  return {states, concat_cols(ends)};
}

EncoderOutput bilstm_forward(const BiLstmEncoder& encoder, const Variable& inputs) {
  const std::vector<std::uint8_t> mask(inputs.rows(), 1);
  return bilstm_forward(encoder, inputs, mask);
}

std::vector<Variable> TokenEmbedder::parameters() const {
  std::vector<Variable> out;
  if (words.trainable()) out.push_back(words.weights);
  if (chars.trainable()) out.push_back(chars.weights);
  for (auto& p : char_encoder.parameters()) out.push_back(p);
  return out;
}

Variable embed_tokens(std::span<const std::int32_t> words,
                      const std::vector<std::vector<std::int32_t>>& chars,
                      const TokenEmbedder& embedder) {
  if (words.empty()) throw ContractError("embed_tokens: empty utterance");
  if (chars.size() != words.size()) {
    throw DimensionError("embed_tokens: " + std::to_string(words.size()) + " words but " +
                         std::to_string(chars.size()) + " character sequences");
  }
  Variable word_part = embedder.words.lookup(words);
  std::vector<Variable> char_rows;
  char_rows.reserve(words.size());
  for (const auto& token_chars : chars) {
    Variable embedded = embedder.chars.lookup(token_chars);
    char_rows.push_back(bilstm_forward(embedder.char_encoder, embedded).sentence);
  }
  const std::array<Variable, 2> parts{word_part, concat_rows(char_rows)};
  return concat_cols(parts);
}

IntentHead IntentHead::create(const std::string& name, std::size_t input_dim,
                              std::size_t intents, Rng& rng) {
  Tensor w({input_dim, intents});
  glorot_uniform(w, rng);
  return {Variable::parameter(std::move(w), name + ".w"),
          Variable::parameter(Tensor::zeros(1, intents), name + ".b")};
}

Variable intent_logits(const IntentHead& head, const Variable& sentence_rep) {
  if (sentence_rep.rows() != 1 || sentence_rep.cols() != head.input_dim()) {
    throw DimensionError("intent_logits: representation " + shape_string(sentence_rep.shape()) +
                         " for a head of width " + std::to_string(head.input_dim()));
  }
  return add_row(matmul(sentence_rep, head.weight), head.bias);
}

std::size_t argmax(std::span<const double> scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

PretrainedEmbeddings load_pretrained(const std::string& path,
                                     const std::unordered_set<std::string>* keep) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file " + path);
  PretrainedEmbeddings out;
  std::string line;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) {
      ++out.skipped_lines;
      continue;
    }
    values.clear();
    std::string number;
    bool ok = true;
    while (fields >> number) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
      if (ec != std::errc() || ptr != number.data() + number.size() || !std::isfinite(v)) {
        ok = false;
        break;
      }
      values.push_back(v);
    }
    if (ok && out.dim == 0 && !values.empty()) out.dim = values.size();
    if (!ok || values.empty() || values.size() != out.dim) {
      ++out.skipped_lines;
      continue;
    }
    if (keep && !keep->contains(token)) continue;
    out.vectors.try_emplace(std::move(token), values);
  }
  if (out.skipped_lines > 0) {
    std::cerr << "warning: skipped " << out.skipped_lines << " malformed lines in " << path
              << "\n";
  }
  return out;
}

std::size_t apply_pretrained(EmbeddingTable& table, const std::vector<std::string>& id_to_word,
                             const PretrainedEmbeddings& pretrained) {
  if (pretrained.vectors.empty()) return 0;
  if (pretrained.dim != table.dim()) {
    throw DimensionError("pretrained vectors have dim " + std::to_string(pretrained.dim) +
                         ", table expects " + std::to_string(table.dim()));
  }
  Tensor& w = table.weights.mutable_value();
  std::size_t hits = 0;
  for (std::size_t id = 2; id < id_to_word.size() && id < table.vocab_size(); ++id) {
    auto it = pretrained.vectors.find(to_lower(id_to_word[id]));
    if (it == pretrained.vectors.end()) continue;
    std::copy(it->second.begin(), it->second.end(), w.data() + id * w.cols());
    ++hits;
  }
  return hits;
}

}  // namespace mtl
