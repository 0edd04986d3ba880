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

// Linear-chain CRF with virtual START and STOP states.
//
// For K real tags the transition matrix is (K+2)x(K+2): index K is START,
// K+1 is STOP, and transitions[i, j] scores moving from tag i to tag j.
// Moving into START or out of STOP is pinned at kForbiddenTransition and
// never receives a gradient.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtl/autograd.hpp"

namespace mtl {

using ag::Rng;
using ag::Variable;

inline constexpr double kForbiddenTransition = -1e4;

struct CrfParams {
  Variable emission;     // [d x K]
  Variable transitions;  // [(K+2) x (K+2)]

  static CrfParams create(const std::string& name, std::size_t input_dim, std::size_t tags,
                          Rng& rng);
  std::size_t tags() const { return emission.cols(); }
  std::size_t input_dim() const { return emission.rows(); }
};

/// Zero-valued transitions for K tags with the START/STOP pins applied.
Tensor make_transitions(std::size_t tags);
/// Restores the pinned entries (used after optimizer updates and loading).
void pin_transitions(Tensor& transitions);

/// features [T x d] -> emissions [T x K].
Variable emission_scores(const CrfParams& crf, const Variable& features);

/// Score of one tag path (emissions + START/inner/STOP transitions).
Variable sequence_score(const Variable& emissions, const Variable& transitions,
                        std::span<const std::int32_t> tags);
/// log of the sum of exp(score) over all K^T paths, by the forward recursion.
Variable log_partition(const Variable& emissions, const Variable& transitions);
/// log_partition - sequence_score(gold).
Variable crf_nll(const Variable& emissions, const Variable& transitions,
                 std::span<const std::int32_t> gold);

struct ViterbiResult {
  std::vector<std::int32_t> tags;
  double score = 0.0;
};

/// Highest-scoring path. Among equal-scoring paths the lexicographically
/// smallest one is returned.
ViterbiResult viterbi_decode(const Tensor& emissions, const Tensor& transitions);

/// Plain value of sequence_score without autograd bookkeeping.
double path_score(const Tensor& emissions, const Tensor& transitions,
                  std::span<const std::int32_t> tags);

}  // namespace mtl
