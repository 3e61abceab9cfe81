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

// Restricted delay network: M delay lines whose outputs pass through a
// shared absorption PEQ, per-line Schroeder allpasses and an orthogonal
// mixing matrix Q_n = Q_0 R^n before re-entering the lines. The line
// outputs are summed with gains c and colored by a post filter C_1.
//
//   y_bar[n + d] = Q_n U C_delta y_bar[n] + b x[n]
//   y[n]         = C_1 c^T y_bar[n] + (h_0 * x)[n]

#include <cstdint>
#include <vector>

#include "darverb/filter_kit.hpp"
#include "darverb/freq_sampling.hpp"

namespace darverb {

/// Dense square matrix, row-major.
struct Matrix {
  int n = 0;
  std::vector<double> v;

  Matrix() = default;
  explicit Matrix(int size) : n(size), v(static_cast<std::size_t>(size * size), 0.0) {}
  static Matrix identity(int size);

  double& operator()(int i, int j) { return v[static_cast<std::size_t>(i * n + j)]; }
  double operator()(int i, int j) const { return v[static_cast<std::size_t>(i * n + j)]; }
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// max |a_ij - b_ij|.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// I - 2 u u^T / (u^T u). Throws ZeroVector when u = 0.
Matrix householder(std::span<const double> u);

/// R = V diag(rot(2 pi k_i / period), ...) V^T with V a random orthogonal
/// basis. Odd M leaves one axis fixed. R^period = I.
struct Rotation {
  Matrix basis;                 ///< V
  std::vector<int> multipliers; ///< k_i, one per 2x2 block
  int period = 1;

  bool is_identity() const;
  Matrix matrix() const;
  /// R^n evaluated through the block angles, exact in n mod period.
  Matrix power(long long n) const;
};

/// Multipliers drawn from {1, 2, 3}; basis from Gram-Schmidt of a seeded
/// Gaussian matrix.
Rotation rotation_matrix(int size, std::uint64_t seed, int period = 30000);
Rotation rotation_matrix(int size, std::uint64_t seed, int period,
                         std::vector<int> multipliers);

struct MixingMatrices {
  Matrix q0;
  Rotation rotation;
};

struct DnConfig {
  std::vector<int> delays{233, 311, 421, 461, 587, 613};
  std::vector<std::vector<int>> sap_delays{{131, 151, 337, 353}, {103, 173, 331, 373},
                                           {89, 181, 307, 401},  {79, 197, 281, 419},
                                           {61, 211, 257, 431},  {47, 229, 251, 443}};
  int post_order = 8;        ///< K_C1
  int absorption_order = 8;  ///< K_C_delta: low shelf, peaks, high shelf
  int n_fft = 120000;
  int bypass_length = 100;
  int rotation_period = 30000;
  double sample_rate = kDefaultSampleRate;

  static DnConfig standard() { return DnConfig{}; }
  /// Two lines and short filters for gradient checks.
  static DnConfig reduced();

  int channels() const { return static_cast<int>(delays.size()); }
  int allpasses_per_line() const;
  int param_count() const;
  /// Line delay plus the allpass delays of that line.
  std::vector<int> effective_delays() const;
  /// Throws ConfigMismatch.
  void validate() const;
};

struct DnParams {
  std::vector<double> b;
  std::vector<double> c;
  std::vector<std::vector<double>> sap_gamma;  ///< M x K_U
  std::vector<SvfParams> post;                 ///< C_1
  std::vector<PeqBand> absorption;             ///< C_delta
  std::vector<double> bypass;                  ///< h_0
};

/// Zero b, c, gammas and bypass; unity post filter; absorption of unit gain.
DnParams zero_dn_params(const DnConfig& config);
void check_shapes(const DnParams& params, const DnConfig& config);

/// Householder from the all-ones vector and a seeded rotation.
MixingMatrices default_mixing(const DnConfig& config, std::uint64_t seed);

enum class DnMode { TV, LTI, DAR };

/// IR of `length` samples (DAR: N samples, then zero-padded or cut).
/// Throws Unstable when a TV/LTI render exceeds 1e6 times the input
/// energy, SingularBinMatrix when a DAR bin system cannot be solved.
std::vector<double> render_dn(const DnParams& params, const DnConfig& config,
                              const MixingMatrices& mix, DnMode mode,
                              std::size_t length);

/// Frequency-sampled transfer function without the bypass.
SampledResponse dn_transfer(const DnParams& params, const DnConfig& config,
                            const Matrix& q0);

/// DAR forward pass with cached per-bin state for reverse-mode gradients.
class DnDarEvaluator {
 public:
  DnDarEvaluator(const DnConfig& config, const Matrix& q0);

  /// IR of N samples including the bypass.
  std::vector<double> forward(const DnParams& params);
  /// dL/d(params) given dL/d(IR) for the last forward call. The result has
  /// the shape of DnParams; PEQ bands hold dL/d(f, R, G).
  DnParams backward(std::span<const double> grad_ir) const;
  /// Sampled transfer function of the last forward call, bypass excluded.
  const SampledResponse& response() const { return response_; }

 private:
  DnConfig config_;
  Matrix q0_;
  int bins_ = 0;
  std::vector<std::vector<Complex>> line_phasors_;  // e^{+j w d_m}
  std::vector<std::vector<Complex>> sap_phasors_;   // e^{-j w tau}, per (m, k)
  // State of the last forward pass.
  DnParams params_;
  std::vector<SampledResponse> post_;
  std::vector<SampledResponse> absorption_;
  SampledResponse post_total_, absorption_total_;
  std::vector<SampledResponse> saps_;   // (m, k) flattened
  std::vector<Complex> loop_gain_;      // bins x M: U_m C_delta
  std::vector<Complex> state_;          // bins x M: solution x
  std::vector<Complex> matrices_;       // bins x M x M
  std::vector<Complex> line_sum_;       // c^T x per bin
  SampledResponse response_;
};

/// Random but valid parameters: absorption gains in [-2.8, 0) dB, allpass
/// gains in [0.3, 0.8], b and c uniform in [-1, 1].
DnParams dn_random_plausible(const DnConfig& config, std::uint64_t seed);

}  // namespace darverb
