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

#include <compare>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mtl {

/// Labelled token range [start, end).
struct ChunkSpan {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const ChunkSpan&) const = default;
};

/// conlleval chunking of BIO tags. An I-X that does not continue an open X
/// chunk starts a new one.
std::vector<ChunkSpan> extract_chunks(std::span<const std::string> tags);

struct ChunkCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
};

ChunkCounts count_chunks(const std::vector<std::vector<std::string>>& gold,
                         const std::vector<std::vector<std::string>>& predicted);

/// Micro-averaged exact-match chunk F1 in percent; 100 when neither side has
/// any chunk.
double slot_f1(const std::vector<std::vector<std::string>>& gold,
               const std::vector<std::vector<std::string>>& predicted);
double f1_from_counts(const ChunkCounts& counts);

/// Percentage of matching labels; ContractError on empty or unequal input.
double intent_accuracy(const std::vector<std::string>& gold,
                       const std::vector<std::string>& predicted);

struct TaskMetrics {
  std::string task;
  std::string group;
  double intent_acc = 0.0;
  double slot_f1 = 0.0;
  std::size_t utterances = 0;
};

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
};

/// Mean and median; even counts take the lower of the two middle values.
SummaryStats summarize(std::vector<double> values);

struct GroupSummary {
  std::string group;
  std::vector<std::string> tasks;
  SummaryStats intent_acc;
  SummaryStats slot_f1;
};

struct MetricReport {
  std::vector<TaskMetrics> tasks;
  std::vector<GroupSummary> groups;  // in order of first appearance
  SummaryStats intent_acc;
  SummaryStats slot_f1;
};

/// Statistics are over per-task values, never pooled utterances.
MetricReport aggregate_report(std::vector<TaskMetrics> per_task);

/// Aligned plain-text table: task rows, group rows, overall rows.
void write_report_table(std::ostream& out, const MetricReport& report);
/// One JSON object per line per task: {"task","group","intent_acc","slot_f1"}.
void write_report_records(std::ostream& out, const MetricReport& report);

}  // namespace mtl
