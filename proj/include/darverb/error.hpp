/*
 * Copyright 2026 The darverb Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace darverb {

enum class ErrorKind {
  // Input or configuration problems (CLI exit code 1).
  InvalidArgument,
  InvalidInterval,
  MismatchedN,
  ConfigMismatch,
  ShapeMismatch,
  LayoutMismatch,
  ZeroVector,
  ZeroEnergy,
  UnsupportedFormat,
  CorruptHeader,
  SchemaVersionMismatch,
  // Numeric failures (CLI exit code 2).
  DegenerateDenominator,
  UnstableFilter,
  Unstable,
  SingularBinMatrix,
  DecayRangeUnavailable,
  NonFiniteGradient,
  Diverged,
};

const char* to_string(ErrorKind kind);

bool is_numeric_failure(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace darverb
