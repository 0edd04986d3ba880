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

#include "mtl/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtl/errors.hpp"
#include "mtl/layers.hpp"

namespace mtl {

using namespace ag;

namespace {

std::size_t checked_tag_count(const Variable& emissions, const Variable& transitions) {
  const std::size_t k = emissions.cols();
  if (transitions.rows() != k + 2 || transitions.cols() != k + 2) {
    throw DimensionError("crf: transitions " + shape_string(transitions.shape()) +
                         " do not match emissions " + shape_string(emissions.shape()));
  }
  if (k == 0) throw ContractError("crf: at least one tag is required");
  if (emissions.rows() == 0) throw ContractError("crf: empty sequence");
  return k;
}

double log_add(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

Tensor make_transitions(std::size_t tags) {
  Tensor t({tags + 2, tags + 2});
  pin_transitions(t);
  return t;
}

void pin_transitions(Tensor& transitions) {
  const std::size_t n = transitions.rows();
  const std::size_t start = n - 2;
  const std::size_t stop = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    transitions.at(i, start) = kForbiddenTransition;
    transitions.at(stop, i) = kForbiddenTransition;
  }
}

CrfParams CrfParams::create(const std::string& name, std::size_t input_dim, std::size_t tags,
                            Rng& rng) {
  if (tags == 0) throw ContractError("crf: at least one tag is required");
  Tensor w({input_dim, tags});
  glorot_uniform(w, rng);
  return {Variable::parameter(std::move(w), name + ".emission"),
          Variable::parameter(make_transitions(tags), name + ".transitions")};
}

Variable emission_scores(const CrfParams& crf, const Variable& features) {
  return matmul(features, crf.emission);
}

double path_score(const Tensor& e, const Tensor& trans, std::span<const std::int32_t> tags) {
  const std::size_t k = e.cols();
  const std::size_t start = k;
  const std::size_t stop = k + 1;
  double s = trans.at(start, static_cast<std::size_t>(tags[0]));
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const auto y = static_cast<std::size_t>(tags[t]);
    s += e.at(t, y);
    if (t + 1 < tags.size()) s += trans.at(y, static_cast<std::size_t>(tags[t + 1]));
  }
  return s + trans.at(static_cast<std::size_t>(tags.back()), stop);
}

Variable sequence_score(const Variable& emissions, const Variable& transitions,
                        std::span<const std::int32_t> tags) {
  const std::size_t k = checked_tag_count(emissions, transitions);
  if (tags.size() != emissions.rows()) {
    throw DimensionError("sequence_score: " + std::to_string(tags.size()) + " tags for " +
                         std::to_string(emissions.rows()) + " positions");
  }
  for (auto y : tags) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("sequence_score: tag id " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }
  std::vector<std::int32_t> path(tags.begin(), tags.end());
  const double value = path_score(emissions.value(), transitions.value(), path);
  return make_op(Tensor::scalar(value), {emissions, transitions}, [path, k](Node& self) {
    const double g = self.grad[0];
    Node& e = *self.inputs[0];
    Node& tr = *self.inputs[1];
    const std::size_t n = k + 2;
    if (e.requires_grad) {
      Tensor& ge = e.grad_buffer();
      for (std::size_t t = 0; t < path.size(); ++t) ge[t * k + static_cast<std::size_t>(path[t])] += g;
    }
    if (tr.requires_grad) {
      Tensor& gt = tr.grad_buffer();
      gt[k * n + static_cast<std::size_t>(path.front())] += g;
      for (std::size_t t = 0; t + 1 < path.size(); ++t) {
        gt[static_cast<std::size_t>(path[t]) * n + static_cast<std::size_t>(path[t + 1])] += g;
      }
      gt[static_cast<std::size_t>(path.back()) * n + k + 1] += g;
    }
  });
}

Variable log_partition(const Variable& emissions, const Variable& transitions) {
  const std::size_t k = checked_tag_count(emissions, transitions);
  const std::size_t len = emissions.rows();
  const std::size_t n = k + 2;
  const Tensor& e = emissions.value();
  const Tensor& tr = transitions.value();

  // alpha[t, j]: log-sum of prefixes ending in tag j at t, emission included.
  Tensor alpha({len, k});
  std::vector<double> scratch(k);
  for (std::size_t j = 0; j < k; ++j) alpha.at(0, j) = tr.at(k, j) + e.at(0, j);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < k; ++i) scratch[i] = alpha.at(t - 1, i) + tr.at(i, j);
      alpha.at(t, j) = log_add(scratch) + e.at(t, j);
    }
  }
  for (std::size_t j = 0; j < k; ++j) scratch[j] = alpha.at(len - 1, j) + tr.at(j, k + 1);
  const double log_z = log_add(scratch);

  return make_op(Tensor::scalar(log_z), {emissions, transitions},
                 [alpha, k, len, n, log_z](Node& self) {
    const double g = self.grad[0];
    Node& en = *self.inputs[0];
    Node& tn = *self.inputs[1];
    const Tensor& e = en.value;
    const Tensor& tr = tn.value;
    // beta[t, i]: log-sum of suffixes after position t given tag i at t.
    Tensor beta({len, k});
    std::vector<double> scratch(k);
    for (std::size_t i = 0; i < k; ++i) beta.at(len - 1, i) = tr.at(i, k + 1);
    for (std::size_t t = len - 1; t-- > 0;) {
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) scratch[j] = tr.at(i, j) + e.at(t + 1, j) + beta.at(t + 1, j);
        beta.at(t, i) = log_add(scratch);
      }
    }
    if (en.requires_grad) {
      Tensor& ge = en.grad_buffer();
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < k; ++j) {
          ge[t * k + j] += g * std::exp(alpha.at(t, j) + beta.at(t, j) - log_z);
        }
      }
    }
    if (tn.requires_grad) {
      Tensor& gt = tn.grad_buffer();
      for (std::size_t j = 0; j < k; ++j) {
        gt[k * n + j] += g * std::exp(alpha.at(0, j) + beta.at(0, j) - log_z);
        gt[j * n + k + 1] += g * std::exp(alpha.at(len - 1, j) + beta.at(len - 1, j) - log_z);
      }
      for (std::size_t t = 0; t + 1 < len; ++t) {
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            gt[i * n + j] += g * std::exp(alpha.at(t, i) + tr.at(i, j) + e.at(t + 1, j) +
                                          beta.at(t + 1, j) - log_z);
          }
        }
      }
    }
  });
}

Variable crf_nll(const Variable& emissions, const Variable& transitions,
                 std::span<const std::int32_t> gold) {
  return sub(log_partition(emissions, transitions), sequence_score(emissions, transitions, gold));
}

ViterbiResult viterbi_decode(const Tensor& e, const Tensor& tr) {
  const std::size_t k = e.cols();
  const std::size_t len = e.rows();
  if (tr.rows() != k + 2 || tr.cols() != k + 2) {
    throw DimensionError("viterbi: transitions " + shape_string(tr.shape()) +
                         " do not match emissions " + shape_string(e.shape()));
  }
  if (k == 0 || len == 0) throw ContractError("viterbi: empty emissions");

  // best[t, i]: best score of positions t..T-1 (and STOP) given tag i at t.
  // Decoding then walks forward, taking the lowest index among maximizers,
  // which yields the lexicographically smallest optimal path.
  Tensor best({len, k});
  for (std::size_t i = 0; i < k; ++i) best.at(len - 1, i) = e.at(len - 1, i) + tr.at(i, k + 1);
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < k; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) m = std::max(m, tr.at(i, j) + best.at(t + 1, j));
      best.at(t, i) = e.at(t, i) + m;
    }
  }
  ViterbiResult out;
  out.tags.resize(len);
  auto choose = [&](std::size_t from, std::size_t t) {
    std::size_t arg = 0;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const double s = tr.at(from, j) + best.at(t, j);
      if (s > m) {
        m = s;
        arg = j;
      }
    }
    return static_cast<std::int32_t>(arg);
  };
  out.tags[0] = choose(k, 0);
  for (std::size_t t = 1; t < len; ++t) {
    out.tags[t] = choose(static_cast<std::size_t>(out.tags[t - 1]), t);
  }
  out.score = path_score(e, tr, out.tags);
  return out;
}

}  // namespace mtl
