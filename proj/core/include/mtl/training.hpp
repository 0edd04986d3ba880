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
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mtl/data.hpp"
#include "mtl/evaluation.hpp"
#include "mtl/model.hpp"

namespace mtl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam with per-parameter step counts.
///
/// Only parameters that received a gradient in the current step are
/// updated, so a step on one task's batch leaves parameters it never touched
/// (other tasks' decoders and encoders) exactly as they were.
class AdamOptimizer {
 public:
  struct Slot {
    Tensor first;
    Tensor second;
    std::uint64_t steps = 0;
  };

  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  /// Applies one update and clears the gradients. Throws NumericError naming
  /// the parameter when a gradient is not finite.
  void step(const std::vector<NamedParameter>& parameters);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& mutable_slots() { return slots_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }

 private:
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, Slot> slots_;
};

/// Global L2 norm over all present gradients.
double gradient_norm(const std::vector<NamedParameter>& parameters);
/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_gradients(const std::vector<NamedParameter>& parameters, double max_norm);

enum class PatienceMode { Any, All };

struct EarlyStopState {
  double best_slot_f1 = -std::numeric_limits<double>::infinity();
  double best_intent_acc = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int epoch = 0;
  int patience = 6;
  int max_epochs = 50;
  PatienceMode mode = PatienceMode::Any;
};

enum class StopDecision { Continue, Stop };

/// Records one epoch's dev metrics. In Any mode an improvement of either
/// metric resets the counter; in All mode both must improve.
StopDecision early_stop_update(EarlyStopState& state, double slot_f1, double intent_acc);

struct BatchObjective {
  Variable tasks;          // alpha * mean task loss over the batch
  Variable adversarial;    // mean over the batch
  Variable orthogonality;  // summed over the batch
  Variable total;
};

/// Builds the full objective for one single-task batch. `rng` enables dropout.
BatchObjective batch_objective(const MtlModel& model, const Batch& batch, Rng* rng);

struct TrainOptions {
  bool clip = true;
  double clip_norm = 5.0;
  bool dropout = true;
};

struct StepRecord {
  std::size_t task = 0;
  std::size_t batch = 0;  // index in the task's batch list
  double loss = 0.0;
};

struct EpochStats {
  std::vector<double> task_loss;  // per task mean of the per-step objective
  std::vector<std::size_t> task_steps;
  std::vector<StepRecord> steps;
};

/// One gradient step on `batch`; returns the objective value.
double train_step(MtlModel& model, const Batch& batch, AdamOptimizer& optimizer,
                  const TrainOptions& options, Rng& rng);

/// Consumes every batch of every task exactly once: repeatedly pick a task
/// with batches left, pick one of its remaining batches, step, remove it.
EpochStats train_epoch(MtlModel& model, const std::vector<std::vector<Batch>>& task_batches,
                       AdamOptimizer& optimizer, const TrainOptions& options, Rng& rng);

struct TaskPredictions {
  std::vector<std::vector<std::string>> gold_slots;
  std::vector<std::vector<std::string>> predicted_slots;
  std::vector<std::string> gold_intents;
  std::vector<std::string> predicted_intents;
};

TaskPredictions predict_corpus(const MtlModel& model, std::size_t task,
                               const std::vector<Utterance>& corpus);
TaskMetrics score(const TaskPredictions& predictions, const std::string& task,
                  const std::string& group);
/// Per-task metrics for corpora[t] evaluated with task t.
MetricReport evaluate(const MtlModel& model, const std::vector<std::vector<Utterance>>& corpora);

struct TrainerConfig {
  AdamConfig adam;
  TrainOptions options;
  std::size_t batch_size = 32;
  int max_epochs = 50;
  int patience = 6;
  PatienceMode patience_mode = PatienceMode::Any;
  std::uint64_t seed = 1;
};

struct TaskData {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<double> task_loss;
  MetricReport dev;
  double seconds = 0.0;
  bool selected = false;  // became the best model so far
  bool stop = false;
};

/// Epoch-level driver: batching, the task loop, dev evaluation, early
/// stopping and best-model selection.
class Trainer {
 public:
  Trainer(MtlModel& model, TrainerConfig config, std::vector<TaskData> data);

  EpochRecord run_epoch();
  /// Runs until early stopping; `on_epoch` sees every record.
  std::vector<EpochRecord> fit(const std::function<void(const EpochRecord&)>& on_epoch = {});

  bool finished() const { return finished_; }
  int epoch() const { return early_stop_.epoch; }
  const EarlyStopState& early_stop() const { return early_stop_; }
  const AdamOptimizer& optimizer() const { return optimizer_; }
  const std::vector<std::pair<std::string, Tensor>>& best_parameters() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  double best_dev_slot_f1() const { return best_f1_; }
  double best_dev_intent_acc() const { return best_acc_; }
  /// Copies the selected parameters back into the model.
  void restore_best();

  /// Everything needed to continue a run bit-identically (model parameters,
  /// optimizer moments, RNG, early-stop and selection state).
  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

 private:
  MtlModel& model_;
  TrainerConfig config_;
  std::vector<TaskData> data_;
  std::vector<std::vector<EncodedUtterance>> encoded_;
  AdamOptimizer optimizer_;
  Rng rng_;
  EarlyStopState early_stop_;
  bool finished_ = false;
  std::vector<std::pair<std::string, Tensor>> best_;
  int best_epoch_ = 0;
  double best_f1_ = -1.0;
  double best_acc_ = -1.0;
};

}  // namespace mtl
