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

#include "darverb/filter_kit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "darverb/error.hpp"

namespace darverb {

double hz_to_warped(double hz, double sample_rate) {
  return std::tan(std::numbers::pi * hz / sample_rate);
}

double warped_to_hz(double f, double sample_rate) {
  return std::atan(f) * sample_rate / std::numbers::pi;
}

bool is_valid(const SvfParams& svf) {
  return svf.f > 0.0 && svf.R > 0.0 && std::isfinite(svf.f) &&
         std::isfinite(svf.R) && std::isfinite(svf.mLP) &&
         std::isfinite(svf.mBP) && std::isfinite(svf.mHP);
}

bool is_valid(const PeqBand& band) {
  return band.f > 0.0 && band.R > 0.0 && band.G > 0.0 &&
         std::isfinite(band.f) && std::isfinite(band.R) && std::isfinite(band.G);
}

bool is_valid(const SapParams& sap) {
  return std::abs(sap.gamma) < 1.0 && sap.tau >= 1;
}

Biquad svf_to_biquad(const SvfParams& s) {
  const double f2 = s.f * s.f;
  Biquad bq;
  bq.b = {f2 * s.mLP + s.f * s.mBP + s.mHP, 2.0 * f2 * s.mLP - 2.0 * s.mHP,
          f2 * s.mLP - s.f * s.mBP + s.mHP};
  bq.a = {f2 + 2.0 * s.R * s.f + 1.0, 2.0 * f2 - 2.0, f2 - 2.0 * s.R * s.f + 1.0};
  return bq;
}

SvfParams peq_band_to_svf(const PeqBand& band) {
  const double rg = std::sqrt(band.G);
  switch (band.kind) {
    case PeqKind::LowShelf:
      return {band.f, band.R, band.G, 2.0 * band.R * rg, 1.0};
    case PeqKind::Peak:
      return {band.f, band.R, 1.0, 2.0 * band.R * band.G, 1.0};
    case PeqKind::HighShelf:
      return {band.f, band.R, 1.0, 2.0 * band.R * rg, band.G};
  }
  throw Error(ErrorKind::InvalidArgument, "unknown PEQ band kind");
}

SampledResponse sample_biquad(const Biquad& bq, int n_fft) {
  return sample_rational(bq.b, bq.a, n_fft);
}

SampledResponse sample_svf(const SvfParams& svf, int n_fft) {
  return sample_biquad(svf_to_biquad(svf), n_fft);
}

SampledResponse sample_svf_chain(std::span<const SvfParams> chain, int n_fft) {
  SampledResponse out(n_fft);
  for (const auto& s : chain) out *= sample_svf(s, n_fft);
  return out;
}

SampledResponse sample_peq(std::span<const PeqBand> bands, int n_fft) {
  SampledResponse out(n_fft);
  for (const auto& b : bands) out *= sample_svf(peq_band_to_svf(b), n_fft);
  return out;
}

SampledResponse sap_transfer(const SapParams& sap, int n_fft) {
  SampledResponse out(n_fft);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Complex w = delay_phasor(sap.tau, k, n_fft);
    out[k] = (sap.gamma + w) / (1.0 + sap.gamma * w);
  }
  return out;
}

std::vector<std::vector<Complex>> factor_gradients(
    std::span<const SampledResponse> factors, std::span<const Complex> grad_product) {
  const std::size_t count = factors.size();
  std::vector<std::vector<Complex>> out(count);
  if (count == 0) return out;
  const std::size_t bins = grad_product.size();
  for (const auto& f : factors)
    if (f.size() != bins)
      throw Error(ErrorKind::MismatchedN, "factor and gradient sizes differ");
  // prefix[j] = prod_{l<j} H_l, built in place inside out[j].
  std::vector<Complex> running(bins, Complex{1.0, 0.0});
  for (std::size_t j = 0; j < count; ++j) {
    out[j] = running;
    for (std::size_t k = 0; k < bins; ++k) running[k] *= factors[j][k];
  }
  std::fill(running.begin(), running.end(), Complex{1.0, 0.0});
  for (std::size_t j = count; j-- > 0;) {
    for (std::size_t k = 0; k < bins; ++k)
      out[j][k] = grad_product[k] * std::conj(out[j][k] * running[k]);
    for (std::size_t k = 0; k < bins; ++k) running[k] *= factors[j][k];
  }
  return out;
}

SvfParams svf_adjoint(const SvfParams& s, const SampledResponse& response,
                      std::span<const Complex> grad) {
  const Biquad bq = svf_to_biquad(s);
  const auto& unit = unit_phasors(response.n_fft());
  std::array<double, 3> gb{}, ga{};
  for (std::size_t k = 0; k < response.size(); ++k) {
    const Complex w1 = unit[k];
    const Complex w2 = w1 * w1;
    const Complex den = bq.a[0] + bq.a[1] * w1 + bq.a[2] * w2;
    const Complex gb0 = std::conj(grad[k]) / den;
    const Complex ga0 = -gb0 * response[k];
    gb[0] += gb0.real();
    gb[1] += (gb0 * w1).real();
    gb[2] += (gb0 * w2).real();
    ga[0] += ga0.real();
    ga[1] += (ga0 * w1).real();
    ga[2] += (ga0 * w2).real();
  }
  const double f = s.f, f2 = f * f;
  SvfParams g;
  g.f = gb[0] * (2 * f * s.mLP + s.mBP) + gb[1] * (4 * f * s.mLP) +
        gb[2] * (2 * f * s.mLP - s.mBP) + ga[0] * (2 * f + 2 * s.R) +
        ga[1] * (4 * f) + ga[2] * (2 * f - 2 * s.R);
  g.R = ga[0] * (2 * f) - ga[2] * (2 * f);
  g.mLP = (gb[0] + 2 * gb[1] + gb[2]) * f2;
  g.mBP = (gb[0] - gb[2]) * f;
  g.mHP = gb[0] - 2 * gb[1] + gb[2];
  return g;
}

PeqBand peq_adjoint(const PeqBand& band, const SvfParams& sg) {
  const double rg = std::sqrt(band.G);
  PeqBand g;
  g.kind = band.kind;
  g.f = sg.f;
  switch (band.kind) {
    case PeqKind::LowShelf:
      g.R = sg.R + sg.mBP * 2.0 * rg;
      g.G = sg.mLP + sg.mBP * band.R / rg;
      break;
    case PeqKind::Peak:
      g.R = sg.R + sg.mBP * 2.0 * band.G;
      g.G = sg.mBP * 2.0 * band.R;
      break;
    case PeqKind::HighShelf:
      g.R = sg.R + sg.mBP * 2.0 * rg;
      g.G = sg.mHP + sg.mBP * band.R / rg;
      break;
  }
  return g;
}

double sap_adjoint(const SapParams& sap, std::span<const Complex> grad, int n_fft) {
  double acc = 0.0;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const Complex w = delay_phasor(sap.tau, k, n_fft);
    const Complex d = 1.0 + sap.gamma * w;
    acc += (std::conj(grad[k]) * (1.0 - w * w) / (d * d)).real();
  }
  return acc;
}

BiquadFilter::BiquadFilter(const Biquad& bq)
    : b0_(bq.b[0] / bq.a[0]),
      b1_(bq.b[1] / bq.a[0]),
      b2_(bq.b[2] / bq.a[0]),
      a1_(bq.a[1] / bq.a[0]),
      a2_(bq.a[2] / bq.a[0]) {}

BiquadCascade::BiquadCascade(std::span<const SvfParams> chain) {
  for (const auto& s : chain) sections_.emplace_back(svf_to_biquad(s));
}

BiquadCascade::BiquadCascade(std::span<const PeqBand> bands) {
  for (const auto& b : bands) sections_.emplace_back(svf_to_biquad(peq_band_to_svf(b)));
}

AllpassLine::AllpassLine(const SapParams& sap)
    : gamma_(sap.gamma),
      xbuf_(static_cast<std::size_t>(sap.tau), 0.0),
      ybuf_(static_cast<std::size_t>(sap.tau), 0.0) {}

}  // namespace darverb
