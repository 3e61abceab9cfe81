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

// File formats and bookkeeping around the reverberators: WAV files, text
// presets holding every estimated parameter group, and per-sample operation
// counts of the real-time structures.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "darverb/delay_network.hpp"
#include "darverb/fit.hpp"
#include "darverb/velvet_reverb.hpp"

namespace darverb {

struct WavData {
  std::vector<double> samples;
  int sample_rate = 48000;
};

enum class WavFormat { Float32, Pcm16 };

/// RIFF/WAVE with PCM16 or float32 data. Multi-channel files yield their
/// first channel. PCM16 maps 32767 to 32767/32768.
/// Throws CorruptHeader or UnsupportedFormat.
WavData wav_read(const std::string& path);

/// Mono file. PCM16 samples are clipped to [-1, 1).
void wav_write(const std::string& path, std::span<const double> samples, int sample_rate,
               WavFormat format = WavFormat::Float32);

inline constexpr int kPresetSchemaVersion = 1;

/// Estimated parameters of one model plus the static structure they apply to.
struct Preset {
  int schema_version = kPresetSchemaVersion;
  Model model = Model::FVN;
  double sample_rate = kDefaultSampleRate;
  std::string source;              ///< "random", or the fitted target path
  std::uint64_t seed = 0;          ///< seed of the draw or of the fit init
  std::uint64_t structure_seed = 0;  ///< velvet noise or rotation seed
  VelvetConfig velvet = VelvetConfig::standard();
  DnConfig dn = DnConfig::standard();
  /// Named parameter arrays in file order.
  std::vector<std::pair<std::string, std::vector<double>>> groups;

  const std::vector<double>& group(const std::string& name) const;
  /// Total number of stored parameter values.
  std::size_t value_count() const;
};

Preset make_preset(const FvnParams& params, const VelvetConfig& config);
Preset make_preset(const AfvnParams& params, const VelvetConfig& config);
Preset make_preset(const DnParams& params, const DnConfig& config);

/// Throw ShapeMismatch when group sizes disagree with the stored config.
FvnParams preset_fvn(const Preset& preset);
AfvnParams preset_afvn(const Preset& preset);
DnParams preset_dn(const Preset& preset);

/// TOML text; every number is written with 17 significant digits.
std::string preset_serialize(const Preset& preset);
/// Throws SchemaVersionMismatch, ShapeMismatch, or InvalidArgument on
/// malformed text.
Preset preset_parse(const std::string& text);

Preset preset_load(const std::string& path);
void preset_save(const std::string& path, const Preset& preset);

/// Multiplies plus adds per output sample of the real-time structure.
struct FlopAudit {
  std::vector<std::pair<std::string, long long>> parts;
  long long total = 0;
};

enum class FlopMode { AR, LTI, TV };

/// FVN and AFVN accept AR only; DN accepts LTI and TV.
/// Throws InvalidArgument for other combinations.
FlopAudit flop_audit(Model model, FlopMode mode, const VelvetConfig& velvet = VelvetConfig::standard(),
                     const DnConfig& dn = DnConfig::standard());

}  // namespace darverb
