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

#include "mtl/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mtl/errors.hpp"

namespace mtl::ag {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
Map as_matrix(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

thread_local Tape* g_current_tape = nullptr;

void require_same_shape(const char* op, const Variable& a, const Variable& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.size() != 0) grad = Tensor(value.shape(), 0.0);
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void Node::accumulate(const Tensor& g, double scale) {
  if (!requires_grad) return;
  grad_buffer().add_scaled(g, scale);
}

Variable::Variable(Tensor value, bool requires_grad, std::string name)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->name = std::move(name);
}

double Variable::item() const {
  if (value().size() != 1) {
    throw ContractError("item() on non-scalar " + shape_string(shape()));
  }
  return value()[0];
}

Tensor Variable::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Tensor(value().shape(), 0.0);
}

Tape::Tape() : previous_(g_current_tape) { g_current_tape = this; }
Tape::~Tape() { g_current_tape = previous_; }
Tape* Tape::current() { return g_current_tape; }

NoRecordScope::NoRecordScope() : saved_(g_current_tape) { g_current_tape = nullptr; }
NoRecordScope::~NoRecordScope() { g_current_tape = saved_; }

void backward(const Variable& loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_string(loss.shape()));
  }
  Node& root = loss.node();
  if (!root.requires_grad) return;
  root.accumulate(Tensor(root.value.shape(), 1.0));
  Tape* tape = Tape::current();
  if (!root.backward || tape == nullptr) return;
  const auto& nodes = tape->nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
  }
}

namespace detail {

bool should_record(std::initializer_list<const Variable*> inputs) {
  if (g_current_tape == nullptr) return false;
  for (const Variable* v : inputs) {
    if (v->requires_grad()) return true;
  }
  return false;
}

bool should_record(std::span<const Variable> inputs) {
  if (g_current_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Variable& v) { return v.requires_grad(); });
}

void attach(Variable& out, std::vector<NodePtr> inputs, std::function<void(Node&)> fn) {
  Node& n = out.node();
  n.requires_grad = true;
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  g_current_tape->record(out.node_ptr());
}

}  // namespace detail

Variable add(const Variable& a, const Variable& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out.add_scaled(b.value());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(self.grad);
  });
}

Variable sub(const Variable& a, const Variable& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  out.add_scaled(b.value(), -1.0);
  return make_op(std::move(out), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(self.grad, -1.0);
  });
}

Variable mul(const Variable& a, const Variable& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor& gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor& gy = y.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += self.grad[i] * x.value[i];
    }
  });
}

Variable scale(const Variable& a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  return make_op(std::move(out), {a},
                 [c](Node& self) { self.inputs[0]->accumulate(self.grad, c); });
}

Variable add_row(const Variable& a, const Variable& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(b.shape()) + " over " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += b.value()[c];
  }
  return make_op(std::move(out), {a, b}, [n](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    Node& bias = *self.inputs[1];
    if (!bias.requires_grad) return;
    Tensor& gb = bias.grad_buffer();
    const std::size_t rows = self.grad.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) gb[c] += self.grad[r * n + c];
    }
  });
}

Variable matmul(const Variable& a, const Variable& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out(matrix_shape(a.rows(), b.cols()));
  if (out.size() != 0 && a.cols() != 0) {
    as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (self.grad.size() == 0) return;
    auto g = as_matrix(self.grad);
    if (x.requires_grad) as_matrix(x.grad_buffer()).noalias() += g * as_matrix(y.value).transpose();
    if (y.requires_grad) as_matrix(y.grad_buffer()).noalias() += as_matrix(x.value).transpose() * g;
  });
}

Variable transpose(const Variable& a) {
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  Tensor out(matrix_shape(c, r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  }
  return make_op(std::move(out), {a}, [r, c](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& gx = x.grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
    }
  });
}

Variable concat_cols(std::span<const Variable> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor out(matrix_shape(rows, total));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * w, w, out.data() + r * total + offsets[k]);
    }
  }
  std::vector<Variable> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), std::move(inputs), [rows, total, offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& p = *self.inputs[k];
      if (!p.requires_grad) continue;
      Tensor& gp = p.grad_buffer();
      const std::size_t w = p.value.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += self.grad[r * total + offsets[k] + c];
      }
    }
  });
}

Variable concat_rows(std::span<const Variable> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ, " +
                           shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> values;
  values.reserve(total * cols);
  for (const auto& p : parts) {
    values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  }
  std::vector<Variable> inputs(parts.begin(), parts.end());
  return make_op(Tensor(matrix_shape(total, cols), std::move(values)), std::move(inputs),
                 [](Node& self) {
                   std::size_t offset = 0;
                   for (auto& in : self.inputs) {
                     const std::size_t n = in->value.size();
                     if (in->requires_grad) {
                       Tensor& g = in->grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                     }
                     offset += n;
                   }
                 });
}

Variable slice_rows(const Variable& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of " + shape_string(a.shape()));
  }
  const std::size_t c = a.cols();
  std::vector<double> values(a.value().data() + begin * c, a.value().data() + end * c);
  return make_op(Tensor(matrix_shape(end - begin, c), std::move(values)), {a},
                 [begin, c](Node& self) {
                   Node& x = *self.inputs[0];
                   if (!x.requires_grad) return;
                   Tensor& g = x.grad_buffer();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
                 });
}

Variable slice_cols(const Variable& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of " + shape_string(a.shape()));
  }
  const std::size_t rows = a.rows();
  const std::size_t c = a.cols();
  const std::size_t w = end - begin;
  Tensor out(matrix_shape(rows, w));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().data() + r * c + begin, w, out.data() + r * w);
  }
  return make_op(std::move(out), {a}, [rows, c, w, begin](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) g[r * c + begin + j] += self.grad[r * w + j];
    }
  });
}

std::vector<Variable> split_cols(const Variable& a, std::size_t pieces) {
  if (pieces == 0 || a.cols() % pieces != 0) {
    throw DimensionError("split_cols: " + shape_string(a.shape()) + " not divisible into " +
                         std::to_string(pieces));
  }
  const std::size_t w = a.cols() / pieces;
  std::vector<Variable> out;
  out.reserve(pieces);
  for (std::size_t k = 0; k < pieces; ++k) out.push_back(slice_cols(a, k * w, (k + 1) * w));
  return out;
}

Variable sigmoid(const Variable& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Variable tanh(const Variable& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = self.value[i];
      g[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Variable softmax(const Variable& a) {
  const std::size_t rows = a.rows();
  const std::size_t c = a.cols();
  if (c == 0) throw DimensionError("softmax: empty rows in " + shape_string(a.shape()));
  Tensor out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  return make_op(std::move(out), {a}, [rows, c](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.value[r * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        g[r * c + j] += self.value[r * c + j] * (self.grad[r * c + j] - dot);
      }
    }
  });
}

Variable log_sum_exp(const Variable& a, int axis) {
  if (axis != 0 && axis != 1) throw DimensionError("log_sum_exp: axis must be 0 or 1");
  const std::size_t rows = a.rows();
  const std::size_t c = a.cols();
  const std::size_t reduced = axis == 1 ? c : rows;
  const std::size_t kept = axis == 1 ? rows : c;
  if (reduced == 0) {
    throw DimensionError("log_sum_exp: empty axis " + std::to_string(axis) + " in " +
                         shape_string(a.shape()));
  }
  auto index = [=](std::size_t k, std::size_t j) { return axis == 1 ? k * c + j : j * c + k; };
  Tensor out(axis == 1 ? matrix_shape(rows, 1) : matrix_shape(1, c));
  const Tensor& x = a.value();
  for (std::size_t k = 0; k < kept; ++k) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < reduced; ++j) mx = std::max(mx, x[index(k, j)]);
    double s = 0.0;
    for (std::size_t j = 0; j < reduced; ++j) s += std::exp(x[index(k, j)] - mx);
    out[k] = mx + std::log(s);
  }
  return make_op(std::move(out), {a}, [=](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t k = 0; k < kept; ++k) {
      for (std::size_t j = 0; j < reduced; ++j) {
        const std::size_t i = index(k, j);
        g[i] += self.grad[k] * std::exp(in.value[i] - self.value[k]);
      }
    }
  });
}

Variable sum(const Variable& a) {
  return make_op(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (double& v : g.values()) v += self.grad[0];
  });
}

Variable sum_squares(const Variable& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return make_op(Tensor::scalar(s), {a}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[0] * x.value[i];
  });
}

Variable masked_sum(const Variable& a, std::span<const std::uint8_t> mask) {
  if (mask.size() != a.rows()) {
    throw DimensionError("masked_sum: mask of length " + std::to_string(mask.size()) + " for " +
                         shape_string(a.shape()));
  }
  const std::size_t c = a.cols();
  Tensor out(matrix_shape(1, c));
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value().at(r, j);
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_op(std::move(out), {a}, [keep, c](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t r = 0; r < keep.size(); ++r) {
      if (!keep[r]) continue;
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad[j];
    }
  });
}

Variable pick(const Variable& a, std::size_t r, std::size_t c) {
  if (r >= a.rows() || c >= a.cols()) {
    throw DimensionError("pick: (" + std::to_string(r) + ", " + std::to_string(c) +
                         ") out of " + shape_string(a.shape()));
  }
  const std::size_t i = r * a.cols() + c;
  return make_op(Tensor::scalar(a.value()[i]), {a}, [i](Node& self) {
    Node& x = *self.inputs[0];
    if (x.requires_grad) x.grad_buffer()[i] += self.grad[0];
  });
}

Variable gather_rows(const Variable& table, std::span<const std::int32_t> ids,
                     std::optional<std::size_t> frozen_row) {
  const std::size_t vocab = table.rows();
  const std::size_t d = table.cols();
  Tensor out(matrix_shape(ids.size(), d));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw VocabError("id " + std::to_string(ids[t]) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
    std::copy_n(table.value().data() + ids[t] * d, d, out.data() + t * d);
  }
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  return make_op(std::move(out), {table}, [rows, d, frozen_row](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const auto row = static_cast<std::size_t>(rows[t]);
      if (frozen_row && row == *frozen_row) continue;
      for (std::size_t j = 0; j < d; ++j) g[row * d + j] += self.grad[t * d + j];
    }
  });
}

Variable dropout(const Variable& a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (double& m : mask) m = keep(rng) ? inv : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_op(std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Tensor& g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Variable grad_reverse(const Variable& a) {
  return make_op(a.value(), {a},
                 [](Node& self) { self.inputs[0]->accumulate(self.grad, -1.0); });
}

Variable cross_entropy(const Variable& logits, std::size_t target) {
  if (logits.rows() != 1) {
    throw DimensionError("cross_entropy: expected a 1xC row, got " + shape_string(logits.shape()));
  }
  return sub(log_sum_exp(logits, 1), pick(logits, 0, target));
}

}  // namespace mtl::ag
