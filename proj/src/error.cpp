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

#include "darverb/error.hpp"

namespace darverb {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidInterval: return "InvalidInterval";
    case ErrorKind::MismatchedN: return "MismatchedN";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LayoutMismatch: return "LayoutMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::ZeroEnergy: return "ZeroEnergy";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::UnstableFilter: return "UnstableFilter";
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::SingularBinMatrix: return "SingularBinMatrix";
    case ErrorKind::DecayRangeUnavailable: return "DecayRangeUnavailable";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::Diverged: return "Diverged";
  }
  return "Unknown";
}

bool is_numeric_failure(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateDenominator:
    case ErrorKind::UnstableFilter:
    case ErrorKind::Unstable:
    case ErrorKind::SingularBinMatrix:
    case ErrorKind::DecayRangeUnavailable:
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::Diverged:
      return true;
    default:
      return false;
  }
}

}  // namespace darverb
