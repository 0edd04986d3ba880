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

// Reverse-mode differentiation over rank-2 double tensors.
//
// A Tape is opened for the duration of one training step; every primitive
// applied while it is current (and with at least one input that requires a
// gradient) is appended to it in execution order. backward() walks that list
// in reverse once. Without a current tape the primitives only compute values,
// which is how evaluation and decoding run.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtl/tensor.hpp"

namespace mtl::ag {

using Rng = std::mt19937_64;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;  // reads grad, accumulates into inputs
  std::string name;

  bool has_grad() const { return !grad.empty(); }
  /// Allocates the gradient buffer on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g, double scale = 1.0);
};

class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false, std::string name = {});
  explicit Variable(NodePtr node) : node_(std::move(node)) {}

  static Variable parameter(Tensor value, std::string name) {
    return Variable(std::move(value), true, std::move(name));
  }
  static Variable constant(Tensor value) { return Variable(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct write access for optimizers and checkpoint loading.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad(); }
  /// Gradient; a zero tensor of matching shape when nothing has flowed in.
  Tensor grad() const;
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }

  const std::string& name() const { return node_->name; }
  Node& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// Ordered record of primitive applications for one forward pass.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(NodePtr node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodePtr>& nodes() const { return nodes_; }

 private:
  std::vector<NodePtr> nodes_;
  Tape* previous_;
};

/// Suspends recording on the current thread (evaluation mode).
class NoRecordScope {
 public:
  NoRecordScope();
  ~NoRecordScope();
  NoRecordScope(const NoRecordScope&) = delete;
  NoRecordScope& operator=(const NoRecordScope&) = delete;

 private:
  Tape* saved_;
};

/// Seeds d loss / d loss = 1 and propagates through the current tape.
/// Throws ContractError for a non-scalar loss.
void backward(const Variable& loss);

namespace detail {

bool should_record(std::initializer_list<const Variable*> inputs);
bool should_record(std::span<const Variable> inputs);
void attach(Variable& out, std::vector<NodePtr> inputs, std::function<void(Node&)> fn);

}  // namespace detail

/// Builds an op result; `fn` is only stored when the op is being recorded.
template <class Fn>
Variable make_op(Tensor value, std::vector<Variable> inputs, Fn&& fn) {
  Variable out(std::move(value));
  if (detail::should_record(std::span<const Variable>(inputs))) {
    std::vector<NodePtr> nodes;
    nodes.reserve(inputs.size());
    for (auto& v : inputs) nodes.push_back(v.node_ptr());
    detail::attach(out, std::move(nodes), std::forward<Fn>(fn));
  }
  return out;
}

// Element-wise, same shapes.
Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double c);
/// a[MxN] + b[1xN] broadcast over rows.
Variable add_row(const Variable& a, const Variable& b);

Variable matmul(const Variable& a, const Variable& b);
Variable transpose(const Variable& a);

Variable concat_cols(std::span<const Variable> parts);
Variable concat_rows(std::span<const Variable> parts);
Variable slice_rows(const Variable& a, std::size_t begin, std::size_t end);
Variable slice_cols(const Variable& a, std::size_t begin, std::size_t end);
/// Splits the columns into `pieces` equal blocks.
std::vector<Variable> split_cols(const Variable& a, std::size_t pieces);

Variable sigmoid(const Variable& a);
Variable tanh(const Variable& a);
/// Row-wise softmax.
Variable softmax(const Variable& a);
/// axis 1: one value per row (Mx1); axis 0: one value per column (1xN).
Variable log_sum_exp(const Variable& a, int axis = 1);

Variable sum(const Variable& a);
Variable sum_squares(const Variable& a);
/// Sum of the rows whose mask entry is true, as a 1xN row.
Variable masked_sum(const Variable& a, std::span<const std::uint8_t> mask);
/// Scalar a[r, c].
Variable pick(const Variable& a, std::size_t r, std::size_t c);
/// Rows of `table` at `ids`. Gradient never reaches `frozen_row`.
Variable gather_rows(const Variable& table, std::span<const std::int32_t> ids,
                     std::optional<std::size_t> frozen_row = std::nullopt);

/// Inverted dropout; identity when !training or rate == 0.
Variable dropout(const Variable& a, double rate, Rng& rng, bool training);
/// Identity forward, negated gradient backward.
Variable grad_reverse(const Variable& a);

/// -log softmax(logits)[target] for a 1xC row of scores.
Variable cross_entropy(const Variable& logits, std::size_t target);

}  // namespace mtl::ag
