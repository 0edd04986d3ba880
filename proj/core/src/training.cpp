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

#include "mtl/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mtl/checkpoint.hpp"
#include "mtl/errors.hpp"

namespace mtl {

using namespace ag;

void AdamOptimizer::step(const std::vector<NamedParameter>& parameters) {
  for (const auto& p : parameters) {
    if (!p.value.has_grad()) continue;
    if (!p.value.node().grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + p.name + "'");
    }
  }
  ++step_count_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (const auto& p : parameters) {
    if (!p.value.has_grad()) continue;
    Variable v = p.value;
    const Tensor& g = v.node().grad;
    Slot& slot = slots_[p.name];
    if (slot.first.shape() != v.shape()) {
      slot.first = Tensor(v.shape());
      slot.second = Tensor(v.shape());
    }
    ++slot.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.steps));
    Tensor& w = v.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      slot.first[i] = b1 * slot.first[i] + (1.0 - b1) * g[i];
      slot.second[i] = b2 * slot.second[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = slot.first[i] / c1;
      const double v_hat = slot.second[i] / c2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    v.zero_grad();
  }
}

double gradient_norm(const std::vector<NamedParameter>& parameters) {
  double sq = 0.0;
  for (const auto& p : parameters) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.node().grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(const std::vector<NamedParameter>& parameters, double max_norm) {
  const double norm = gradient_norm(parameters);
  if (norm > max_norm && std::isfinite(norm)) {
    const double factor = max_norm / norm;
    for (const auto& p : parameters) {
      if (!p.value.has_grad()) continue;
      for (double& g : p.value.node().grad.values()) g *= factor;
    }
  }
  return norm;
}

StopDecision early_stop_update(EarlyStopState& s, double slot_f1, double intent_acc) {
  ++s.epoch;
  const bool f1_up = slot_f1 > s.best_slot_f1;
  const bool acc_up = intent_acc > s.best_intent_acc;
  if (f1_up) s.best_slot_f1 = slot_f1;
  if (acc_up) s.best_intent_acc = intent_acc;
  const bool improved = s.mode == PatienceMode::Any ? (f1_up || acc_up) : (f1_up && acc_up);
  s.epochs_since_improvement = improved ? 0 : s.epochs_since_improvement + 1;
  if (s.epochs_since_improvement >= s.patience || s.epoch >= s.max_epochs) {
    return StopDecision::Stop;
  }
  return StopDecision::Continue;
}

BatchObjective batch_objective(const MtlModel& model, const Batch& batch, Rng* rng) {
  if (batch.rows == 0) throw ContractError("empty batch");
  Variable task_sum;
  Variable adv_sum;
  Variable ortho_sum;
  auto accumulate = [](Variable& acc, const Variable& term) {
    acc = acc.defined() ? add(acc, term) : term;
  };
  const auto& cfg = model.config();
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const UtteranceLosses l = model.losses(batch.row(r), batch.task, rng);
    accumulate(task_sum, l.task);
    if (cfg.lambda != 0.0) accumulate(adv_sum, l.adversarial);
    if (cfg.gamma != 0.0) accumulate(ortho_sum, l.orthogonality);
  }
  const double inv = 1.0 / static_cast<double>(batch.rows);
  BatchObjective out;
  out.tasks = tasks_loss({{batch.task, scale(task_sum, inv)}}, model.registry());
  out.adversarial = adv_sum.defined() ? scale(adv_sum, inv) : Variable::constant(Tensor::scalar(0.0));
  out.orthogonality = ortho_sum.defined() ? ortho_sum : Variable::constant(Tensor::scalar(0.0));
  out.total = total_loss(out.tasks, out.adversarial, out.orthogonality, cfg.lambda, cfg.gamma);
  return out;
}

double train_step(MtlModel& model, const Batch& batch, AdamOptimizer& optimizer,
                  const TrainOptions& options, Rng& rng) {
  const auto params = model.parameters();
  Tape tape;
  BatchObjective obj = batch_objective(model, batch, options.dropout ? &rng : nullptr);
  const double value = obj.total.item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss on a batch of task '" +
                       model.registry().task(batch.task).name + "'");
  }
  backward(obj.total);
  if (options.clip) clip_gradients(params, options.clip_norm);
  optimizer.step(params);
  return value;
}

EpochStats train_epoch(MtlModel& model, const std::vector<std::vector<Batch>>& task_batches,
                       AdamOptimizer& optimizer, const TrainOptions& options, Rng& rng) {
  if (task_batches.empty()) throw ContractError("train_epoch: no tasks");
  const std::size_t n = task_batches.size();
  std::vector<std::vector<std::size_t>> available(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (task_batches[t].empty()) {
      throw ContractError("train_epoch: task " + std::to_string(t) + " has no batches");
    }
    for (std::size_t b = 0; b < task_batches[t].size(); ++b) available[t].push_back(b);
  }
  EpochStats stats;
  stats.task_loss.assign(n, 0.0);
  stats.task_steps.assign(n, 0);
  std::vector<std::size_t> open;
  for (;;) {
    open.clear();
    for (std::size_t t = 0; t < n; ++t) {
      if (!available[t].empty()) open.push_back(t);
    }
    if (open.empty()) break;
    const std::size_t task = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    auto& left = available[task];
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, left.size() - 1)(rng);
    const std::size_t batch = left[pick];
    left.erase(left.begin() + static_cast<std::ptrdiff_t>(pick));
    const double loss = train_step(model, task_batches[task][batch], optimizer, options, rng);
    stats.steps.push_back({task, batch, loss});
    stats.task_loss[task] += loss;
    ++stats.task_steps[task];
  }
  for (std::size_t t = 0; t < n; ++t) stats.task_loss[t] /= static_cast<double>(stats.task_steps[t]);
  return stats;
}

TaskPredictions predict_corpus(const MtlModel& model, std::size_t task,
                               const std::vector<Utterance>& corpus) {
  const TaskInfo& info = model.registry().task(task);
  TaskPredictions out;
  for (const auto& u : corpus) {
    const EncodedUtterance e = encode(u, model.vocab(), info, /*lenient=*/true);
    const Prediction p = model.predict(e, task);
    std::vector<std::string> tags;
    tags.reserve(p.slots.size());
    for (auto id : p.slots) tags.push_back(info.slots.label(id));
    out.gold_slots.push_back(u.slots);
    out.predicted_slots.push_back(std::move(tags));
    out.gold_intents.push_back(u.intent);
    out.predicted_intents.push_back(info.intents.label(p.intent));
  }
  return out;
}

TaskMetrics score(const TaskPredictions& p, const std::string& task, const std::string& group) {
  TaskMetrics m;
  m.task = task;
  m.group = group;
  m.utterances = p.gold_intents.size();
  m.intent_acc = intent_accuracy(p.gold_intents, p.predicted_intents);
  m.slot_f1 = slot_f1(p.gold_slots, p.predicted_slots);
  return m;
}

MetricReport evaluate(const MtlModel& model, const std::vector<std::vector<Utterance>>& corpora) {
  if (corpora.size() != model.registry().size()) {
    throw ContractError("evaluate: " + std::to_string(corpora.size()) + " corpora for " +
                        std::to_string(model.registry().size()) + " tasks");
  }
  std::vector<TaskMetrics> per_task;
  for (std::size_t t = 0; t < corpora.size(); ++t) {
    const auto& info = model.registry().task(t);
    per_task.push_back(score(predict_corpus(model, t, corpora[t]), info.name, info.group));
  }
  return aggregate_report(std::move(per_task));
}

Trainer::Trainer(MtlModel& model, TrainerConfig config, std::vector<TaskData> data)
    : model_(model),
      config_(config),
      data_(std::move(data)),
      optimizer_(config.adam),
      rng_(config.seed) {
  if (data_.size() != model_.registry().size()) {
    throw ContractError("trainer: " + std::to_string(data_.size()) + " datasets for " +
                        std::to_string(model_.registry().size()) + " tasks");
  }
  for (std::size_t t = 0; t < data_.size(); ++t) {
    encoded_.push_back(encode_all(data_[t].train, model_.vocab(), model_.registry().task(t)));
  }
  early_stop_.patience = config.patience;
  early_stop_.max_epochs = config.max_epochs;
  early_stop_.mode = config.patience_mode;
}

EpochRecord Trainer::run_epoch() {
  if (finished_) throw ContractError("trainer already stopped");
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::vector<Batch>> batches;
  for (std::size_t t = 0; t < encoded_.size(); ++t) {
    batches.push_back(make_batches(encoded_[t], t, config_.batch_size, rng_));
  }
  EpochStats stats = train_epoch(model_, batches, optimizer_, config_.options, rng_);

  std::vector<std::vector<Utterance>> dev;
  for (const auto& d : data_) dev.push_back(d.dev);
  EpochRecord rec;
  rec.task_loss = stats.task_loss;
  rec.dev = evaluate(model_, dev);
  const double f1 = rec.dev.slot_f1.mean;
  const double acc = rec.dev.intent_acc.mean;
  rec.stop = early_stop_update(early_stop_, f1, acc) == StopDecision::Stop;
  rec.epoch = early_stop_.epoch;
  if (best_.empty() || f1 > best_f1_ || (f1 == best_f1_ && acc > best_acc_)) {
    best_.clear();
    for (const auto& p : model_.state()) best_.emplace_back(p.name, p.value.value());
    best_f1_ = f1;
    best_acc_ = acc;
    best_epoch_ = rec.epoch;
    rec.selected = true;
  }
  finished_ = rec.stop;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

std::vector<EpochRecord> Trainer::fit(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> out;
  while (!finished_) {
    out.push_back(run_epoch());
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

void Trainer::restore_best() {
  if (best_.empty()) return;
  auto state = model_.state();
  for (std::size_t i = 0; i < state.size(); ++i) state[i].value.mutable_value() = best_[i].second;
}

void Trainer::save_state(const std::string& path) const {
  using nlohmann::json;
  Archive a = model_to_archive(model_);
  json meta = json::parse(a.meta);
  std::ostringstream rng_text;
  rng_text << rng_;
  json slots = json::array();
  for (const auto& [name, slot] : optimizer_.slots()) {
    slots.push_back({{"name", name}, {"steps", slot.steps}});
    a.add("adam.m/" + name, slot.first);
    a.add("adam.v/" + name, slot.second);
  }
  for (const auto& [name, t] : best_) a.add("best/" + name, t);
  meta["trainer"] = {{"rng", rng_text.str()},
                     {"adam_steps", optimizer_.step_count()},
                     {"adam_slots", std::move(slots)},
                     {"best_slot_f1", early_stop_.best_slot_f1},
                     {"best_intent_acc", early_stop_.best_intent_acc},
                     {"since_improvement", early_stop_.epochs_since_improvement},
                     {"epoch", early_stop_.epoch},
                     {"finished", finished_},
                     {"best_epoch", best_epoch_},
                     {"selected_f1", best_f1_},
                     {"selected_acc", best_acc_}};
  a.meta = meta.dump();
  a.write(path);
}

void Trainer::load_state(const std::string& path) {
  using nlohmann::json;
  const Archive a = Archive::read(path);
  const json meta = json::parse(a.meta);
  if (!meta.contains("trainer")) throw CompatibilityError(path + " holds no training state");
  const json& tr = meta.at("trainer");
  for (auto p : model_.state()) {
    const Tensor& stored = a.get(p.name);
    if (stored.shape() != p.value.shape()) {
      throw CompatibilityError("tensor '" + p.name + "' does not match the model");
    }
    p.value.mutable_value() = stored;
  }
  std::istringstream rng_text(tr.at("rng").get<std::string>());
  rng_text >> rng_;
  optimizer_.set_step_count(tr.at("adam_steps").get<std::uint64_t>());
  auto& slots = optimizer_.mutable_slots();
  slots.clear();
  for (const auto& s : tr.at("adam_slots")) {
    const std::string name = s.at("name").get<std::string>();
    slots[name] = {a.get("adam.m/" + name), a.get("adam.v/" + name), s.at("steps").get<std::uint64_t>()};
  }
  best_.clear();
  for (const auto& p : model_.state()) {
    if (a.contains("best/" + p.name)) best_.emplace_back(p.name, a.get("best/" + p.name));
  }
  early_stop_.best_slot_f1 = tr.at("best_slot_f1").get<double>();
  early_stop_.best_intent_acc = tr.at("best_intent_acc").get<double>();
  early_stop_.epochs_since_improvement = tr.at("since_improvement").get<int>();
  early_stop_.epoch = tr.at("epoch").get<int>();
  // Limits come from the current config, so a finished run can be extended.
  finished_ = early_stop_.epochs_since_improvement >= early_stop_.patience ||
              early_stop_.epoch >= early_stop_.max_epochs;
  best_epoch_ = tr.at("best_epoch").get<int>();
  best_f1_ = tr.at("selected_f1").get<double>();
  best_acc_ = tr.at("selected_acc").get<double>();
}

}  // namespace mtl
