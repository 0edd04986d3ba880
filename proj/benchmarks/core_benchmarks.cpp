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


// Hot paths at paper-scale dimensions: word LSTM 128/dir over 300+128 inputs,
// CRF over ATIS-sized tag sets, and one full training step.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "mtl/crf.hpp"
#include "mtl/data.hpp"
#include "mtl/layers.hpp"
#include "mtl/model.hpp"
#include "mtl/training.hpp"

namespace {

using namespace mtl;
using namespace mtl::ag;

Tensor random(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({r, c});
  for (auto& v : t.values()) v = n(rng);
  return t;
}

void BM_BiLstmForward(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const BiLstmEncoder enc = BiLstmEncoder::create("enc", 428, 128, rng);
  const Variable x = Variable::constant(random(T, 428, rng));
  NoRecordScope no_record;
  for (auto _ : state) benchmark::DoNotOptimize(bilstm_forward(enc, x).states.value().data());
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(T));
}
BENCHMARK(BM_BiLstmForward)->Arg(12)->Arg(30);

void BM_BiLstmForwardBackward(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const BiLstmEncoder enc = BiLstmEncoder::create("enc", 428, 128, rng);
  const Variable x = Variable::constant(random(T, 428, rng));
  for (auto _ : state) {
    Tape tape;
    backward(sum_squares(bilstm_forward(enc, x).states));
  }
}
BENCHMARK(BM_BiLstmForwardBackward)->Arg(12);

void BM_CrfLogPartition(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  Tensor tr = random(K + 2, K + 2, rng);
  pin_transitions(tr);
  const Variable e = Variable::constant(random(20, K, rng));
  const Variable t = Variable::constant(tr);
  NoRecordScope no_record;
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(e, t).item());
}
BENCHMARK(BM_CrfLogPartition)->Arg(10)->Arg(120);

void BM_Viterbi(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  Tensor tr = random(K + 2, K + 2, rng);
  pin_transitions(tr);
  const Tensor e = random(20, K, rng);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi_decode(e, tr).score);
}
BENCHMARK(BM_Viterbi)->Arg(10)->Arg(120);

void BM_TrainStep(benchmark::State& state) {
  const auto kind = static_cast<ArchitectureKind>(state.range(0));
  // Two tasks of short synthetic utterances over a small vocabulary.
  std::vector<std::vector<Utterance>> corpora(2);
  std::mt19937_64 rng(4);
  for (std::size_t t = 0; t < 2; ++t) {
    for (int i = 0; i < 32; ++i) {
      Utterance u;
      const int len = 6 + static_cast<int>(rng() % 8);
      for (int k = 0; k < len; ++k) {
        u.tokens.push_back("w" + std::to_string(rng() % 200));
        u.slots.push_back(k % 3 == 1 ? "B-x" + std::to_string(rng() % 5) : "O");
      }
      u.intent = "i" + std::to_string(rng() % 6);
      corpora[t].push_back(u);
    }
  }
  const auto registry = TaskRegistry::build(
      {{"a", "g", &corpora[0]}, {"b", "g", &corpora[1]}}, AlphaMode::Uniform);
  ModelConfig cfg;
  cfg.kind = kind;
  Rng build(5);
  MtlModel model = MtlModel::build(cfg, registry, build_vocab(corpora[0]), build);
  const auto enc = encode_all(corpora[0], model.vocab(), model.registry().task(0), true);
  std::vector<const EncodedUtterance*> rows;
  for (const auto& e : enc) rows.push_back(&e);
  const Batch batch = make_batch(0, rows);
  AdamOptimizer adam;
  Rng step_rng(6);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, batch, adam, TrainOptions{}, step_rng));
  state.SetLabel(to_string(kind) + ", batch 32");
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(ArchitectureKind::SingleTask))
    ->Arg(static_cast<int>(ArchitectureKind::SerialHighway))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
