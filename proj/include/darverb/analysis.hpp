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

// Spectral analysis of impulse responses: energy decay relief, the
// multi-scale spectral match loss and the SVF decay regularizer with their
// gradients, and room-acoustic metrics (T30, DRR, C50).

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "darverb/filter_kit.hpp"

namespace darverb {

/// Energy decay relief, bins x frames, bin-major.
struct EdrMatrix {
  int fft_size = 0;
  int hop = 0;
  int bins = 0;
  int frames = 0;
  std::vector<double> values;

  double at(int bin, int frame) const {
    return values[static_cast<std::size_t>(bin) * static_cast<std::size_t>(frames) +
                  static_cast<std::size_t>(frame)];
  }
};

/// Hann-windowed STFT with centered, zero-padded frames; values[k][n] is the
/// energy of bin k summed over frames n and later.
EdrMatrix edr(std::span<const double> ir, int fft_size = 1024, int hop = 256);

struct EdrError {
  int bins = 0;
  int frames = 0;
  std::vector<double> db;  ///< 10 log10(a) - 10 log10(b), each floored at -120 dB
  double distance = 0.0;   ///< mean |db|

  double at(int bin, int frame) const {
    return db[static_cast<std::size_t>(bin) * static_cast<std::size_t>(frames) +
              static_cast<std::size_t>(frame)];
  }
};

/// Throws ShapeMismatch when the EDRs differ in shape.
EdrError edr_error(const EdrMatrix& a, const EdrMatrix& b);

inline constexpr double kDbFloor = -120.0;
inline constexpr std::array<int, 5> kMatchScales{256, 512, 1024, 2048, 4096};

/// Magnitude STFT remapped onto a log-frequency axis (40 Hz to Nyquist,
/// as many bins as the linear axis), bin-major.
struct Spectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<double> values;
};
Spectrogram log_spectrogram(std::span<const double> x, int fft_size,
                            double sample_rate = kDefaultSampleRate);

/// Sum over scales of the mean absolute difference of log-frequency
/// magnitude spectrograms. The shorter input is zero-padded.
double match_loss(std::span<const double> h, std::span<const double> h_ref,
                  double sample_rate = kDefaultSampleRate);

/// Match loss against a fixed reference with cached reference spectrograms.
class MatchLoss {
 public:
  MatchLoss(std::span<const double> reference, double sample_rate = kDefaultSampleRate);

  std::size_t length() const { return length_; }
  double value(std::span<const double> h) const;
  /// Fills grad (resized to length()) with dL/dh.
  double value_and_grad(std::span<const double> h, std::vector<double>& grad) const;

 private:
  double run(std::span<const double> h, std::vector<double>* grad) const;

  std::size_t length_ = 0;
  double sample_rate_ = kDefaultSampleRate;
  std::vector<std::vector<double>> reference_;  // one spectrogram per scale
};

/// Decay ratio of each SVF's frequency-sampled IR: sum of |c[n]| over the
/// last n0 taps divided by the same over the first n0.
double decay_ratio(std::span<const double> fir, int n0);

/// Sum over chains of the softmax-weighted decay ratios of their SVFs.
/// n0 <= 0 selects N/8.
double reg_loss(std::span<const std::vector<SvfParams>> chains, int n_fft, int n0 = 0);

/// reg_loss with dL/d(SVF fields) for every SVF, same nesting as `chains`.
double reg_loss_grad(std::span<const std::vector<SvfParams>> chains, int n_fft, int n0,
                     std::vector<std::vector<SvfParams>>& grad);

struct LossReport {
  double match = 0.0;
  double reg = 0.0;
  double beta = 0.0;
  double total() const { return match + beta * reg; }
};

struct BandMetrics {
  double t30 = 0.0;  ///< seconds; NaN when the decay range is unavailable
  double drr = 0.0;  ///< dB, clamped to [-60, 60]
  double c50 = 0.0;  ///< dB, clamped to [-60, 60]
};

inline constexpr std::array<double, 7> kOctaveCenters{125, 250, 500, 1000, 2000, 4000, 8000};

struct ReverbMetrics {
  BandMetrics full;
  std::array<BandMetrics, 7> bands;
};

/// Schroeder backward integration, least-squares line over -5..-35 dB,
/// extrapolated to 60 dB. Throws DecayRangeUnavailable or ZeroEnergy.
double t30(std::span<const double> ir, double sample_rate = kDefaultSampleRate);

/// 10 log10 of the energy before `split_seconds` over the energy after,
/// clamped to [-60, 60] dB.
double energy_ratio_db(std::span<const double> ir, double split_seconds,
                       double sample_rate = kDefaultSampleRate);

/// Fourth-order Butterworth high- and low-pass at fc/sqrt(2) and fc*sqrt(2),
/// applied through frequency sampling.
std::vector<double> octave_filter(std::span<const double> ir, double center_hz,
                                  double sample_rate = kDefaultSampleRate);

/// Full-band T30 must be measurable (throws otherwise); band T30s may be NaN.
ReverbMetrics reverb_params(std::span<const double> ir, double sample_rate = kDefaultSampleRate);

struct OnsetTrim {
  std::vector<double> ir;
  std::size_t removed = 0;
  bool silent = false;  ///< input had no energy and was returned unchanged
};

/// Drops the samples before the maximum of a 64-sample centered moving RMS.
OnsetTrim onset_trim(std::span<const double> ir, int window = 64);

/// Scales to unit energy. Throws ZeroEnergy.
std::vector<double> normalize_energy(std::span<const double> ir);

}  // namespace darverb
