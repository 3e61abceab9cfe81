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

// Filter parameterizations used by the reverberators: state-variable filters
// (SVF), biquads, parametric-EQ bands and Schroeder allpasses, plus their
// sampled responses and sample-by-sample realizations.

#include <array>
#include <span>
#include <vector>

#include "darverb/freq_sampling.hpp"

namespace darverb {

inline constexpr double kDefaultSampleRate = 48000.0;

/// Unnormalized second-order section, b/a = (b0 + b1 z^-1 + b2 z^-2) /
/// (a0 + a1 z^-1 + a2 z^-2).
struct Biquad {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  std::array<double, 3> a{1.0, 0.0, 0.0};
};

/// Cutoff f is stored warped, f = tan(pi * fc / fs). Stable when f > 0 and
/// R > 0.
struct SvfParams {
  double f = 1.0;
  double R = 1.0;
  double mLP = 1.0;
  double mBP = 2.0;
  double mHP = 1.0;
};

enum class PeqKind { LowShelf, Peak, HighShelf };

/// G is a linear gain (20 log10 G dB).
struct PeqBand {
  PeqKind kind = PeqKind::Peak;
  double f = 1.0;
  double R = 1.0;
  double G = 1.0;
};

/// (gamma + z^-tau) / (1 + gamma z^-tau), |gamma| < 1.
struct SapParams {
  double gamma = 0.0;
  int tau = 1;
};

double hz_to_warped(double hz, double sample_rate = kDefaultSampleRate);
double warped_to_hz(double f, double sample_rate = kDefaultSampleRate);

bool is_valid(const SvfParams& svf);
bool is_valid(const PeqBand& band);
bool is_valid(const SapParams& sap);

Biquad svf_to_biquad(const SvfParams& svf);
SvfParams peq_band_to_svf(const PeqBand& band);

SampledResponse sample_biquad(const Biquad& bq, int n_fft);
SampledResponse sample_svf(const SvfParams& svf, int n_fft);
/// Product of the sampled responses of a serial SVF chain; unity if empty.
SampledResponse sample_svf_chain(std::span<const SvfParams> chain, int n_fft);
SampledResponse sample_peq(std::span<const PeqBand> bands, int n_fft);
SampledResponse sap_transfer(const SapParams& sap, int n_fft);

// Reverse-mode adjoints. A gradient with respect to complex bins uses the
// convention dL/dRe + j dL/dIm, so dL/dp = sum_k Re(conj(G_k) dH_k/dp).

/// dL/dH_j for every factor of a product C = prod_j H_j given dL/dC.
std::vector<std::vector<Complex>> factor_gradients(
    std::span<const SampledResponse> factors, std::span<const Complex> grad_product);

/// dL/d(f, R, mLP, mBP, mHP) of one SVF, packed in an SvfParams.
SvfParams svf_adjoint(const SvfParams& svf, const SampledResponse& response,
                      std::span<const Complex> grad);

/// Maps SVF-space gradients of a PEQ band to dL/d(f, R, G).
PeqBand peq_adjoint(const PeqBand& band, const SvfParams& svf_grad);

/// dL/dgamma of a Schroeder allpass.
double sap_adjoint(const SapParams& sap, std::span<const Complex> grad, int n_fft);

/// Transposed direct-form II biquad.
class BiquadFilter {
 public:
  BiquadFilter() = default;
  explicit BiquadFilter(const Biquad& bq);

  double process(double x) {
    const double y = b0_ * x + s1_;
    s1_ = b1_ * x - a1_ * y + s2_;
    s2_ = b2_ * x - a2_ * y;
    return y;
  }
  void reset() { s1_ = s2_ = 0.0; }

 private:
  double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
  double s1_ = 0.0, s2_ = 0.0;
};

/// Serial biquads, e.g. an SVF chain after svf_to_biquad.
class BiquadCascade {
 public:
  BiquadCascade() = default;
  explicit BiquadCascade(std::span<const SvfParams> chain);
  explicit BiquadCascade(std::span<const PeqBand> bands);

  double process(double x) {
    for (auto& s : sections_) x = s.process(x);
    return x;
  }
  std::size_t size() const { return sections_.size(); }

 private:
  std::vector<BiquadFilter> sections_;
};

/// Schroeder allpass on a circular delay line.
class AllpassLine {
 public:
  AllpassLine() = default;
  explicit AllpassLine(const SapParams& sap);

  double process(double x) {
    const double x_del = xbuf_[pos_];
    const double y_del = ybuf_[pos_];
    const double y = gamma_ * x + x_del - gamma_ * y_del;
    xbuf_[pos_] = x;
    ybuf_[pos_] = y;
    if (++pos_ == xbuf_.size()) pos_ = 0;
    return y;
  }
  void set_gamma(double g) { gamma_ = g; }

 private:
  double gamma_ = 0.0;
  std::vector<double> xbuf_{0.0};
  std::vector<double> ybuf_{0.0};
  std::size_t pos_ = 0;
};

}  // namespace darverb
