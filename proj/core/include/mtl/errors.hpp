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

#include <stdexcept>
#include <string>

namespace mtl {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Token, character or label id outside its vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

/// Unknown task or group, or a task without a loss weight.
class RegistryError : public Error {
 public:
  using Error::Error;
};

/// Malformed corpus, embedding or checkpoint file. Carries the line number
/// when one is known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Utterance intent outside the known split table.
class ClassificationError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and data/config disagree (tasks, labels, format version).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtl
