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

#include "mtl/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "mtl/errors.hpp"

namespace mtl {

std::vector<ChunkSpan> extract_chunks(std::span<const std::string> tags) {
  std::vector<ChunkSpan> out;
  std::optional<ChunkSpan> open;
  auto close = [&](std::size_t at) {
    if (!open) return;
    open->end = at;
    out.push_back(std::move(*open));
    open.reset();
  };
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const std::string& tag = tags[t];
    const bool begins = tag.size() > 2 && tag[0] == 'B' && tag[1] == '-';
    const bool inside = tag.size() > 2 && tag[0] == 'I' && tag[1] == '-';
    if (!begins && !inside) {
      close(t);
      continue;
    }
    std::string label = tag.substr(2);
    if (inside && open && open->label == label) continue;
    close(t);
    open = ChunkSpan{std::move(label), t, t};
  }
  close(tags.size());
  return out;
}

ChunkCounts count_chunks(const std::vector<std::vector<std::string>>& gold,
                         const std::vector<std::vector<std::string>>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractError("slot_f1: " + std::to_string(gold.size()) + " gold sequences vs " +
                        std::to_string(predicted.size()) + " predicted");
  }
  ChunkCounts counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) {
      throw ContractError("slot_f1: sequence " + std::to_string(i) + " has " +
                          std::to_string(gold[i].size()) + " gold tags and " +
                          std::to_string(predicted[i].size()) + " predicted");
    }
    const auto g = extract_chunks(gold[i]);
    const auto p = extract_chunks(predicted[i]);
    counts.gold += g.size();
    counts.predicted += p.size();
    const std::set<ChunkSpan> gold_set(g.begin(), g.end());
    for (const auto& c : p) counts.correct += gold_set.count(c);
  }
  return counts;
}

double f1_from_counts(const ChunkCounts& c) {
  if (c.gold == 0 && c.predicted == 0) return 100.0;
  if (c.correct == 0) return 0.0;
  const double precision = static_cast<double>(c.correct) / static_cast<double>(c.predicted);
  const double recall = static_cast<double>(c.correct) / static_cast<double>(c.gold);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double slot_f1(const std::vector<std::vector<std::string>>& gold,
               const std::vector<std::vector<std::string>>& predicted) {
  return f1_from_counts(count_chunks(gold, predicted));
}

double intent_accuracy(const std::vector<std::string>& gold,
                       const std::vector<std::string>& predicted) {
  if (gold.empty()) throw ContractError("intent_accuracy: empty evaluation set");
  if (gold.size() != predicted.size()) {
    throw ContractError("intent_accuracy: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(predicted.size()) + " predicted");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == predicted[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
}

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) return {};
  SummaryStats s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  s.median = values[(values.size() - 1) / 2];
  return s;
}

MetricReport aggregate_report(std::vector<TaskMetrics> per_task) {
  if (per_task.empty()) throw ContractError("aggregate_report: no tasks");
  MetricReport report;
  std::vector<double> intents;
  std::vector<double> slots;
  for (const auto& m : per_task) {
    intents.push_back(m.intent_acc);
    slots.push_back(m.slot_f1);
    auto it = std::find_if(report.groups.begin(), report.groups.end(),
                           [&](const GroupSummary& g) { return g.group == m.group; });
    if (it == report.groups.end()) {
      report.groups.push_back({m.group, {}, {}, {}});
      it = report.groups.end() - 1;
    }
    it->tasks.push_back(m.task);
  }
  for (auto& g : report.groups) {
    std::vector<double> gi;
    std::vector<double> gs;
    for (const auto& m : per_task) {
      if (m.group != g.group) continue;
      gi.push_back(m.intent_acc);
      gs.push_back(m.slot_f1);
    }
    g.intent_acc = summarize(std::move(gi));
    g.slot_f1 = summarize(std::move(gs));
  }
  report.intent_acc = summarize(std::move(intents));
  report.slot_f1 = summarize(std::move(slots));
  report.tasks = std::move(per_task);
  return report;
}

void write_report_table(std::ostream& out, const MetricReport& report) {
  std::size_t width = 12;
  for (const auto& t : report.tasks) width = std::max(width, t.task.size() + 2);
  for (const auto& g : report.groups) width = std::max(width, g.group.size() + 10);
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::left << std::setw(static_cast<int>(width)) << "task" << std::setw(16) << "group"
      << std::right << std::setw(12) << "intent_acc" << std::setw(10) << "slot_f1" << "\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& t : report.tasks) {
    out << std::left << std::setw(static_cast<int>(width)) << t.task << std::setw(16) << t.group
        << std::right << std::setw(12) << t.intent_acc << std::setw(10) << t.slot_f1 << "\n";
  }
  for (const auto& g : report.groups) {
    out << std::left << std::setw(static_cast<int>(width)) << ("[group] " + g.group)
        << std::setw(16) << "mean" << std::right << std::setw(12) << g.intent_acc.mean
        << std::setw(10) << g.slot_f1.mean << "\n";
  }
  out << std::left << std::setw(static_cast<int>(width)) << "[all]" << std::setw(16) << "mean"
      << std::right << std::setw(12) << report.intent_acc.mean << std::setw(10)
      << report.slot_f1.mean << "\n";
  out << std::left << std::setw(static_cast<int>(width)) << "[all]" << std::setw(16) << "median"
      << std::right << std::setw(12) << report.intent_acc.median << std::setw(10)
      << report.slot_f1.median << "\n";
  out.flags(flags);
  out.precision(precision);
}

void write_report_records(std::ostream& out, const MetricReport& report) {
  for (const auto& t : report.tasks) {
    nlohmann::json j = {{"task", t.task},
                        {"group", t.group},
                        {"intent_acc", t.intent_acc},
                        {"slot_f1", t.slot_f1}};
    out << j.dump() << "\n";
  }
}

}  // namespace mtl
