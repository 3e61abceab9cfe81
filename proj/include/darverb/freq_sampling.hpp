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

// Frequency sampling of rational transfer functions: a real IIR H(z) is
// evaluated at z = e^{j 2 pi k / N}, k = 0..N/2, and the inverse DFT of the
// samples is a length-N FIR equal to the time-aliased IR of H.

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace darverb {

using Complex = std::complex<double>;

/// Half spectrum of a real filter sampled at N uniform unit-circle points.
class SampledResponse {
 public:
  SampledResponse() = default;
  /// Unity response at N bins. N must be even and >= 2.
  explicit SampledResponse(int n_fft);
  SampledResponse(int n_fft, std::vector<Complex> bins);

  int n_fft() const { return n_fft_; }
  std::size_t size() const { return bins_.size(); }
  std::span<const Complex> bins() const { return bins_; }
  std::span<Complex> bins() { return bins_; }
  const Complex& operator[](std::size_t k) const { return bins_[k]; }
  Complex& operator[](std::size_t k) { return bins_[k]; }

  SampledResponse& operator*=(const SampledResponse& other);

 private:
  int n_fft_ = 0;
  std::vector<Complex> bins_;
};

struct FirFilter {
  std::vector<double> taps;
};

/// Angular bin frequency 2 pi k / N.
double bin_angle(std::size_t k, int n_fft);

/// e^{-j 2 pi k m / N} with the phase reduced modulo N before evaluation.
Complex delay_phasor(long long m, std::size_t k, int n_fft);

/// Cached table of e^{-j 2 pi k / N}, k = 0..N/2.
const std::vector<Complex>& unit_phasors(int n_fft);

SampledResponse sampled_delay(long long m, int n_fft);

/// sum_m b_m z^-m / sum_m a_m z^-m at every bin. Coefficients need not be
/// normalized. Throws DegenerateDenominator when |denominator| < 1e-15.
SampledResponse sample_rational(std::span<const double> b,
                                std::span<const double> a, int n_fft);

/// Elementwise product. Throws MismatchedN on differing N.
SampledResponse chain_product(std::span<const SampledResponse> sections);

FirFilter to_fir(const SampledResponse& resp);

/// Forward transform of a FIR of at most N taps.
SampledResponse to_response(std::span<const double> taps, int n_fft);

/// h_N[n] = sum_m h[mN + n] for n < N, summing up to `horizon` samples of
/// the true IR.
FirFilter alias_oracle(const std::function<double(std::size_t)>& true_ir,
                       int n_fft, std::size_t horizon);

// ---------------------------------------------------------------------------
// Rational filters and error bounds for the frequency-sampled approximation.

struct RationalFilter {
  std::vector<double> b;
  std::vector<double> a;
};

/// Schur-Cohn step-down test; true when every pole lies strictly inside the
/// unit circle.
bool is_stable(std::span<const double> a);

/// First `length` samples of the causal IR via the difference equation.
std::vector<double> impulse_response(const RationalFilter& filter,
                                     std::size_t length);

/// Poles with multiplicities and their partial-fraction residues.
/// H(z) = sum_i sum_{k=1..r_i} residues[i][k-1] / (1 - nu_i z^-1)^k.
struct PoleSet {
  struct Pole {
    Complex nu;
    int multiplicity = 1;
  };
  std::vector<Pole> poles;
  std::vector<std::vector<Complex>> residues;

  /// Single real pole of multiplicity r with unit top-order residue:
  /// 1 / (1 - nu z^-1)^r.
  static PoleSet repeated_real(double nu, int r);

  /// h[n] from the partial-fraction form (real part).
  double impulse(std::size_t n) const;

  /// U_N = sum over all PFE terms of the absolute tail sum from N on.
  double tail_bound(std::size_t n_fft, std::size_t horizon) const;

  /// Collapsed numerator/denominator (real parts; the set is assumed to be
  /// closed under conjugation).
  RationalFilter to_rational() const;
};

struct BoundRecord {
  int n_fft = 0;
  double aliasing_error = 0.0;  ///< ||H - H_N||_2
  double loss_error = 0.0;      ///< | ||R-H||^2 - ||R-H_N||^2 |
  double grad_error = 0.0;      ///< | d/dp of the same difference |
  double triangle_gap = 0.0;    ///< | ||R-H|| - ||R-H_N|| |
};

struct BoundReport {
  std::vector<BoundRecord> records;
  /// Least-squares slope of ln(aliasing_error) against N.
  double slope = 0.0;
};

/// Time-aliasing, loss and gradient errors of H_N against H for each N.
/// H is represented by its IR up to 16x the largest N. `param_index` indexes
/// the concatenated (b, a) coefficient list. Throws UnstableFilter.
BoundReport bound_suite(const RationalFilter& filter,
                        const SampledResponse& reference,
                        std::span<const int> ns, std::size_t param_index);

/// ||H - H_N||_2 from the true IR `h` via the segment-folding identity.
double aliasing_error(std::span<const double> h, int n_fft);

}  // namespace darverb
