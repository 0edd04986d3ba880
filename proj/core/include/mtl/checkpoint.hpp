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

// Checkpoint archives.
//
// Layout: the 8-byte magic "MTLCKPT1", a little-endian uint64 header length,
// a JSON header ({"meta": ..., "tensors": [{"name", "shape", "offset"}]}),
// then every tensor's values as raw little-endian IEEE doubles. Values are
// stored bit-exactly, so a reloaded model reproduces identical outputs.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtl/model.hpp"

namespace mtl {

inline constexpr int kCheckpointVersion = 1;

class Archive {
 public:
  /// Free-form JSON object text stored in the header.
  std::string meta = "{}";

  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  /// Throws CompatibilityError when absent.
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

  void write(const std::string& path) const;
  /// Throws ParseError for truncated or foreign files.
  static Archive read(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

/// Model configuration, registry, vocabularies and parameters. `extra_meta`
/// is a JSON object stored under "extra" (the CLI keeps the run config there).
Archive model_to_archive(const MtlModel& model, const std::string& extra_meta = "{}");
MtlModel model_from_archive(const Archive& archive);
/// JSON text of the "extra" object of a model archive.
std::string archive_extra(const Archive& archive);

void save_model(const MtlModel& model, const std::string& path,
                const std::string& extra_meta = "{}");
MtlModel load_model(const std::string& path);

}  // namespace mtl
