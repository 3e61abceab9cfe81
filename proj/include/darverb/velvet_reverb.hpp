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

// Filtered velvet noise (FVN) and its advanced variant (AFVN). Each segment
// is a sparse ±1 velvet sequence split into sub-segments with their own
// gains, smeared by a cumulative Schroeder-allpass cascade and colored by a
// chain of SVFs. Segments are overlap-added at increasing offsets.
//
// AR mode runs the structure sample by sample with IIR filters. DAR mode
// replaces each coloration chain by its frequency-sampled FIR of N taps.

#include <cstdint>
#include <memory>
#include <vector>

#include "darverb/filter_kit.hpp"
#include "darverb/freq_sampling.hpp"

namespace darverb {

struct VelvetConfig {
  std::vector<int> segment_lengths;  ///< L_i
  std::vector<int> pulse_distances;  ///< T_i
  std::vector<SapParams> saps;       ///< U_i, one per segment
  int sub_segments = 4;              ///< M
  int order = 8;                     ///< K, SVFs per FVN coloration chain
  int initial_order = 8;             ///< K_1, AFVN initial chain
  int delta_order = 2;               ///< K_delta, AFVN delta chains
  int n_fft = 4000;                  ///< N
  int bypass_length = 50;            ///< Z
  double sample_rate = kDefaultSampleRate;

  /// 20 segments over 120000 samples at 48 kHz.
  static VelvetConfig standard();
  /// Small configuration for gradient checks: 4 segments, K=2, N=512.
  static VelvetConfig reduced();

  int segments() const { return static_cast<int>(segment_lengths.size()); }
  int total_length() const;
  /// d_i = sum_{j<i} L_j.
  std::vector<int> offsets() const;
  int fvn_param_count() const;
  int afvn_param_count() const;
  /// Throws ConfigMismatch on inconsistent sizes.
  void validate() const;
};

struct VelvetSegment {
  int length = 0;
  int avg_distance = 0;
  std::vector<int> positions;
  std::vector<int> signs;
};

/// One pulse per length-T interval [mT, (m+1)T) with a random sign. A final
/// partial interval gets a pulse only when it is at least T/2 long.
/// Throws InvalidInterval unless 1 <= T <= L.
VelvetSegment gen_velvet(int avg_distance, int length, std::uint64_t seed);

/// One velvet segment per configured (T_i, L_i); segment i uses a seed
/// derived from (seed, i).
std::vector<VelvetSegment> gen_velvets(const VelvetConfig& config,
                                       std::uint64_t seed);

/// IR of the serial allpass cascade. Starts at the next power of two of at
/// least 4 max(tau) * count taps (and `min_length`) and doubles until the
/// energy past the end is below 1e-6.
FirFilter crop_allpass_fir(std::span<const SapParams> saps,
                           std::size_t min_length = 0);

struct FvnParams {
  std::vector<double> gains;                  ///< S x M, row-major
  std::vector<std::vector<SvfParams>> color;  ///< S chains of K
  std::vector<double> bypass;                 ///< Z taps
};

struct AfvnParams {
  std::vector<double> gains;                  ///< S x M, row-major
  std::vector<SvfParams> initial;             ///< K_1
  std::vector<std::vector<SvfParams>> delta;  ///< S-1 chains of K_delta
  std::vector<double> bypass;                 ///< Z taps
};

/// Zero gains, unity SVFs, empty-impulse bypass of the configured shapes.
FvnParams zero_fvn_params(const VelvetConfig& config);
AfvnParams zero_afvn_params(const VelvetConfig& config);

/// Throws ConfigMismatch when shapes disagree with the configuration.
void check_shapes(const FvnParams& params, const VelvetConfig& config);
void check_shapes(const AfvnParams& params, const VelvetConfig& config);

enum class RenderMode { AR, DAR };

/// A configuration with its velvet realization and the precomputed,
/// cropped cumulative-allpass IRs.
class VelvetBank {
 public:
  VelvetBank(VelvetConfig config, std::vector<VelvetSegment> velvets);
  VelvetBank(VelvetConfig config, std::uint64_t seed);

  const VelvetConfig& config() const { return config_; }
  const std::vector<VelvetSegment>& velvets() const { return velvets_; }
  /// Cumulative allpass IR for segment i, cut to the samples that fit in
  /// the output after that segment's offset.
  const std::vector<double>& allpass(int i) const { return allpass_[static_cast<std::size_t>(i)]; }
  /// Sub-segment index of a pulse position within segment i.
  int sub_segment(int i, int position) const;

 private:
  VelvetConfig config_;
  std::vector<VelvetSegment> velvets_;
  std::vector<std::vector<double>> allpass_;
};

std::vector<double> render_fvn(const FvnParams& params, const VelvetBank& bank,
                               RenderMode mode);
std::vector<double> render_afvn(const AfvnParams& params, const VelvetBank& bank,
                                RenderMode mode);

/// Coloration chains of an AFVN expanded per segment: C_1 prod_{j<=i} C_delta_j.
std::vector<SampledResponse> afvn_colorations(const AfvnParams& params, int n_fft);

/// DAR renderer with cached spectra of (velvet sub-segment * allpass) so that
/// repeated renders and their reverse-mode gradients cost a few FFTs per
/// segment.
class DarSegmentEngine {
 public:
  explicit DarSegmentEngine(const VelvetBank& bank);

  int segments() const { return static_cast<int>(segments_.size()); }
  int output_length() const { return total_; }

  /// Overlap-adds every segment's output given per-segment gains (S x M) and
  /// coloration FIRs of N taps. The bypass is not included.
  std::vector<double> forward(std::span<const double> gains,
                              std::span<const std::vector<double>> color_firs) const;

  /// Gradients of a scalar loss with respect to the gains and the coloration
  /// taps given dL/d(output). Uses the spectra from the last forward call.
  void backward(std::span<const double> grad_output, std::span<double> grad_gains,
                std::vector<std::vector<double>>& grad_color_firs) const;

 private:
  struct Segment {
    int offset = 0;
    int length = 0;  // output samples kept
    std::size_t n = 0;
    std::vector<std::vector<Complex>> sub_spectra;  // M spectra of size n/2+1
    mutable std::vector<Complex> last_mix;          // sum_m g_m B_m
    mutable std::vector<Complex> last_color;        // FFT of coloration FIR
  };
  int sub_segments_ = 0;
  int n_fft_ = 0;
  int total_ = 0;
  std::vector<Segment> segments_;
};

/// Sample-by-sample FVN (or AFVN) reverberator. Segment i's velvet taps read
/// from the output of the i-th stage of a Schroeder-allpass chain.
class VelvetProcessor {
 public:
  VelvetProcessor(const FvnParams& params, const VelvetBank& bank);
  VelvetProcessor(const AfvnParams& params, const VelvetBank& bank);

  double process(double x);

 private:
  struct Stage {
    AllpassLine allpass;
    std::vector<double> history;  // allpass output, circular
    std::size_t pos = 0;
    std::vector<int> taps;        // offset + pulse position
    std::vector<double> weights;  // sign * sub-segment gain
  };
  void init_stages(const VelvetBank& bank, std::span<const double> gains);

  bool nested_ = false;
  std::vector<Stage> stages_;
  std::vector<BiquadCascade> color_;  // per segment, or C_1 then C_delta_j
  std::vector<double> bypass_;
  std::vector<double> input_;  // circular input history for the bypass
  std::size_t pos_ = 0;
  std::vector<double> velvet_out_;
};

struct PlausibleFvn {
  FvnParams params;
  double target_t30 = 0.0;
};
struct PlausibleAfvn {
  AfvnParams params;
  double target_t30 = 0.0;
};

/// Randomized parameters resembling measured rooms: a T30 drawn log-uniform
/// in [50 ms, 8 s) sets the sub-segment gains, colorations come from random
/// PEQs that drift across segments, and the bypass is short uniform noise.
PlausibleFvn random_plausible_fvn(const VelvetConfig& config, std::uint64_t seed,
                                  double perturbation = 0.05);
PlausibleAfvn random_plausible_afvn(const VelvetConfig& config, std::uint64_t seed,
                                    double perturbation = 0.05);

}  // namespace darverb
