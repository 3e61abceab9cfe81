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

#include "darverb/freq_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "darverb/error.hpp"
#include "darverb/fft.hpp"

namespace darverb {
namespace {

void check_n(int n_fft) {
  if (n_fft < 2 || n_fft % 2 != 0)
    throw Error(ErrorKind::InvalidArgument,
                "n_fft must be even and >= 2, got " + std::to_string(n_fft));
}

std::vector<Complex> poly_mul(const std::vector<Complex>& x,
                              const std::vector<Complex>& y) {
  std::vector<Complex> out(x.size() + y.size() - 1, Complex{});
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) out[i + j] += x[i] * y[j];
  return out;
}

std::vector<Complex> poly_pow_one_minus(Complex nu, int r) {
  std::vector<Complex> out{Complex{1.0}};
  for (int i = 0; i < r; ++i) out = poly_mul(out, {Complex{1.0}, -nu});
  return out;
}

// C(n + k - 1, k - 1), the coefficient of nu^n in 1/(1 - nu z^-1)^k.
double rising_binomial(std::size_t n, int k) {
  double c = 1.0;
  for (int j = 1; j < k; ++j)
    c *= static_cast<double>(n + static_cast<std::size_t>(j)) / j;
  return c;
}

// Difference between ||R - H||^2 and ||R - H_N||^2 expressed through the
// folded tail so that it keeps relative precision when aliasing is tiny.
struct ErrorTerms {
  double aliasing_sq = 0.0;
  double loss_diff = 0.0;
  double triangle_gap = 0.0;
};

ErrorTerms error_terms(std::span<const double> h, std::span<const double> r,
                       int n_fft) {
  const std::size_t n = static_cast<std::size_t>(n_fft);
  const std::size_t len = std::max(h.size(), r.size());
  auto at = [](std::span<const double> v, std::size_t i) {
    return i < v.size() ? v[i] : 0.0;
  };
  ErrorTerms t;
  double cross = 0.0, ref_sq = 0.0, ref_n_sq = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    double delta;
    if (i < n) {
      double fold = 0.0;
      for (std::size_t j = i + n; j < h.size(); j += n) fold += h[j];
      delta = -fold;
    } else {
      delta = at(h, i);
    }
    const double e = at(r, i) - at(h, i);
    t.aliasing_sq += delta * delta;
    cross += e * delta;
    ref_sq += e * e;
    ref_n_sq += (e + delta) * (e + delta);
  }
  t.loss_diff = -2.0 * cross - t.aliasing_sq;
  t.triangle_gap = std::abs(std::sqrt(ref_sq) - std::sqrt(ref_n_sq));
  return t;
}

}  // namespace

SampledResponse::SampledResponse(int n_fft) : n_fft_(n_fft) {
  check_n(n_fft);
  bins_.assign(static_cast<std::size_t>(n_fft / 2 + 1), Complex{1.0, 0.0});
}

SampledResponse::SampledResponse(int n_fft, std::vector<Complex> bins)
    : n_fft_(n_fft), bins_(std::move(bins)) {
  check_n(n_fft);
  if (bins_.size() != static_cast<std::size_t>(n_fft / 2 + 1))
    throw Error(ErrorKind::ShapeMismatch, "bin count must be N/2+1");
}

SampledResponse& SampledResponse::operator*=(const SampledResponse& other) {
  if (other.n_fft_ != n_fft_)
    throw Error(ErrorKind::MismatchedN, "cannot multiply responses of N=" +
                                            std::to_string(n_fft_) + " and " +
                                            std::to_string(other.n_fft_));
  for (std::size_t k = 0; k < bins_.size(); ++k) bins_[k] *= other.bins_[k];
  return *this;
}

double bin_angle(std::size_t k, int n_fft) {
  return 2.0 * std::numbers::pi * static_cast<double>(k) /
         static_cast<double>(n_fft);
}

Complex delay_phasor(long long m, std::size_t k, int n_fft) {
  const long long n = n_fft;
  long long idx = (m % n) * static_cast<long long>(k) % n;
  if (idx < 0) idx += n;
  return std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(idx) /
                             static_cast<double>(n));
}

const std::vector<Complex>& unit_phasors(int n_fft) {
  check_n(n_fft);
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const std::vector<Complex>>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n_fft];
  if (!slot) {
    auto table = std::make_shared<std::vector<Complex>>(
        static_cast<std::size_t>(n_fft / 2 + 1));
    for (std::size_t k = 0; k < table->size(); ++k)
      (*table)[k] = delay_phasor(1, k, n_fft);
    slot = std::move(table);
  }
  return *slot;
}

SampledResponse sampled_delay(long long m, int n_fft) {
  SampledResponse out(n_fft);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = delay_phasor(m, k, n_fft);
  return out;
}

SampledResponse sample_rational(std::span<const double> b,
                                std::span<const double> a, int n_fft) {
  SampledResponse out(n_fft);
  const std::size_t order = std::max(b.size(), a.size());
  // Low orders use powers of the unit phasor, which stay within a few ulps.
  const bool powers = order <= 4;
  const auto& unit = unit_phasors(n_fft);
  std::vector<Complex> w(order);
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (powers) {
      Complex p{1.0, 0.0};
      for (std::size_t m = 0; m < order; ++m) {
        w[m] = p;
        p *= unit[k];
      }
    } else {
      for (std::size_t m = 0; m < order; ++m)
        w[m] = delay_phasor(static_cast<long long>(m), k, n_fft);
    }
    Complex num{}, den{};
    for (std::size_t m = 0; m < b.size(); ++m) num += b[m] * w[m];
    for (std::size_t m = 0; m < a.size(); ++m) den += a[m] * w[m];
    if (std::abs(den) < 1e-15)
      throw Error(ErrorKind::DegenerateDenominator,
                  "denominator vanishes at bin " + std::to_string(k));
    out[k] = num / den;
  }
  return out;
}

SampledResponse chain_product(std::span<const SampledResponse> sections) {
  if (sections.empty())
    throw Error(ErrorKind::InvalidArgument, "empty section list");
  SampledResponse out = sections.front();
  for (std::size_t i = 1; i < sections.size(); ++i) out *= sections[i];
  return out;
}

FirFilter to_fir(const SampledResponse& resp) {
  return FirFilter{fft::irfft(resp.bins(), static_cast<std::size_t>(resp.n_fft()))};
}

SampledResponse to_response(std::span<const double> taps, int n_fft) {
  check_n(n_fft);
  if (taps.size() > static_cast<std::size_t>(n_fft))
    throw Error(ErrorKind::ShapeMismatch, "FIR longer than N");
  return SampledResponse(n_fft, fft::rfft(taps, static_cast<std::size_t>(n_fft)));
}

FirFilter alias_oracle(const std::function<double(std::size_t)>& true_ir,
                       int n_fft, std::size_t horizon) {
  check_n(n_fft);
  const std::size_t n = static_cast<std::size_t>(n_fft);
  FirFilter out{std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < horizon; ++i) out.taps[i % n] += true_ir(i);
  return out;
}

bool is_stable(std::span<const double> a) {
  std::vector<double> c(a.begin(), a.end());
  while (!c.empty() && c.back() == 0.0) c.pop_back();
  if (c.empty() || c[0] == 0.0) return false;
  for (auto& v : c) v /= a[0];
  for (std::size_t p = c.size() - 1; p >= 1; --p) {
    const double k = c[p];
    if (std::abs(k) >= 1.0) return false;
    std::vector<double> next(p);
    next[0] = 1.0;
    for (std::size_t j = 1; j < p; ++j)
      next[j] = (c[j] - k * c[p - j]) / (1.0 - k * k);
    c = std::move(next);
  }
  return true;
}

std::vector<double> impulse_response(const RationalFilter& filter,
                                     std::size_t length) {
  const auto& b = filter.b;
  const auto& a = filter.a;
  if (a.empty() || a[0] == 0.0)
    throw Error(ErrorKind::InvalidArgument, "a[0] must be nonzero");
  std::vector<double> y(length, 0.0);
  for (std::size_t n = 0; n < length; ++n) {
    double acc = n < b.size() ? b[n] : 0.0;
    for (std::size_t m = 1; m < a.size() && m <= n; ++m) acc -= a[m] * y[n - m];
    y[n] = acc / a[0];
    // Subnormal samples slow the recursion down by two orders of magnitude.
    if (std::abs(y[n]) < std::numeric_limits<double>::min()) y[n] = 0.0;
  }
  return y;
}

PoleSet PoleSet::repeated_real(double nu, int r) {
  PoleSet p;
  p.poles.push_back({Complex{nu, 0.0}, r});
  std::vector<Complex> res(static_cast<std::size_t>(r), Complex{});
  res.back() = 1.0;
  p.residues.push_back(std::move(res));
  return p;
}

double PoleSet::impulse(std::size_t n) const {
  Complex acc{};
  for (std::size_t i = 0; i < poles.size(); ++i) {
    const Complex pw = std::pow(poles[i].nu, static_cast<double>(n));
    for (int k = 1; k <= poles[i].multiplicity; ++k)
      acc += residues[i][static_cast<std::size_t>(k - 1)] *
             rising_binomial(n, k) * pw;
  }
  return acc.real();
}

double PoleSet::tail_bound(std::size_t n_fft, std::size_t horizon) const {
  double total = 0.0;
  for (std::size_t i = 0; i < poles.size(); ++i) {
    const double rad = std::abs(poles[i].nu);
    for (int k = 1; k <= poles[i].multiplicity; ++k) {
      const double z = std::abs(residues[i][static_cast<std::size_t>(k - 1)]);
      if (z == 0.0) continue;
      for (std::size_t n = n_fft; n < horizon; ++n)
        total += z * rising_binomial(n, k) * std::pow(rad, static_cast<double>(n));
    }
  }
  return total;
}

RationalFilter PoleSet::to_rational() const {
  std::vector<Complex> den{Complex{1.0}};
  for (const auto& p : poles) den = poly_mul(den, poly_pow_one_minus(p.nu, p.multiplicity));

  std::vector<Complex> num(den.size(), Complex{});
  for (std::size_t i = 0; i < poles.size(); ++i) {
    std::vector<Complex> others{Complex{1.0}};
    for (std::size_t j = 0; j < poles.size(); ++j)
      if (j != i) others = poly_mul(others, poly_pow_one_minus(poles[j].nu, poles[j].multiplicity));
    for (int k = 1; k <= poles[i].multiplicity; ++k) {
      auto term = poly_mul(others, poly_pow_one_minus(poles[i].nu, poles[i].multiplicity - k));
      const Complex z = residues[i][static_cast<std::size_t>(k - 1)];
      for (std::size_t m = 0; m < term.size(); ++m) num[m] += z * term[m];
    }
  }
  RationalFilter out;
  for (const auto& c : num) out.b.push_back(c.real());
  for (const auto& c : den) out.a.push_back(c.real());
  while (out.b.size() > 1 && std::abs(out.b.back()) < 1e-300) out.b.pop_back();
  return out;
}

double aliasing_error(std::span<const double> h, int n_fft) {
  return std::sqrt(error_terms(h, {}, n_fft).aliasing_sq);
}

BoundReport bound_suite(const RationalFilter& filter,
                        const SampledResponse& reference,
                        std::span<const int> ns, std::size_t param_index) {
  if (ns.empty()) throw Error(ErrorKind::InvalidArgument, "empty N list");
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (ns[i] <= ns[i - 1])
      throw Error(ErrorKind::InvalidArgument, "N list must be strictly increasing");
  for (int n : ns) check_n(n);
  if (!is_stable(filter.a))
    throw Error(ErrorKind::UnstableFilter, "denominator has a pole on or outside the unit circle");
  if (param_index >= filter.b.size() + filter.a.size())
    throw Error(ErrorKind::InvalidArgument, "parameter index out of range");

  const std::size_t horizon = 16 * static_cast<std::size_t>(ns.back());
  const auto h = impulse_response(filter, horizon);
  const auto r = to_fir(reference).taps;

  auto perturbed = [&](double step) {
    RationalFilter f = filter;
    if (param_index < f.b.size())
      f.b[param_index] += step;
    else
      f.a[param_index - f.b.size()] += step;
    return impulse_response(f, horizon);
  };
  const double p0 = param_index < filter.b.size()
                        ? filter.b[param_index]
                        : filter.a[param_index - filter.b.size()];
  const double step = 1e-6 * std::max(1.0, std::abs(p0));
  const auto h_plus = perturbed(step);
  const auto h_minus = perturbed(-step);

  BoundReport report;
  for (int n : ns) {
    const auto terms = error_terms(h, r, n);
    const double d_plus = error_terms(h_plus, r, n).loss_diff;
    const double d_minus = error_terms(h_minus, r, n).loss_diff;
    BoundRecord rec;
    rec.n_fft = n;
    rec.aliasing_error = std::sqrt(terms.aliasing_sq);
    rec.loss_error = std::abs(terms.loss_diff);
    rec.grad_error = std::abs(d_plus - d_minus) / (2.0 * step);
    rec.triangle_gap = terms.triangle_gap;
    report.records.push_back(rec);
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (const auto& rec : report.records) {
    if (!(rec.aliasing_error > 0.0) || !std::isfinite(rec.aliasing_error)) continue;
    const double x = rec.n_fft, y = std::log(rec.aliasing_error);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++count;
  }
  if (count >= 2) report.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return report;
}

}  // namespace darverb
