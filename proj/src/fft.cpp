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

#include "darverb/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>

namespace darverb::fft {
namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the process lifetime.
const PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  const int ni = static_cast<int>(n);
  double* rbuf = fftw_alloc_real(n);
  fftw_complex* cbuf = fftw_alloc_complex(n / 2 + 1);
  PlanPair p;
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  p.forward = fftw_plan_dft_r2c_1d(ni, rbuf, cbuf, flags);
  p.inverse = fftw_plan_dft_c2r_1d(ni, cbuf, rbuf, flags | FFTW_DESTROY_INPUT);
  fftw_free(rbuf);
  fftw_free(cbuf);
  return cache.emplace(n, p).first->second;
}

}  // namespace

std::size_t good_size(std::size_t n) {
  if (n <= 1) return 1;
  std::size_t best = 1;
  while (best < n) best <<= 1;
  for (std::size_t p7 = 1; p7 < best; p7 *= 7)
    for (std::size_t p5 = p7; p5 < best; p5 *= 5)
      for (std::size_t p3 = p5; p3 < best; p3 *= 3) {
        std::size_t v = p3 * 2;
        while (v < n) v <<= 1;
        best = std::min(best, v);
      }
  return best;
}

std::vector<Complex> rfft(std::span<const double> in, std::size_t n) {
  std::vector<double> buf(n, 0.0);
  std::copy_n(in.begin(), std::min(in.size(), n), buf.begin());
  std::vector<Complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(plans_for(n).forward, buf.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft_unscaled(std::span<const Complex> bins,
                                   std::size_t n) {
  std::vector<Complex> buf(n / 2 + 1, Complex{});
  std::copy_n(bins.begin(), std::min(bins.size(), buf.size()), buf.begin());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plans_for(n).inverse,
                       reinterpret_cast<fftw_complex*>(buf.data()), out.data());
  return out;
}

std::vector<double> irfft(std::span<const Complex> bins, std::size_t n) {
  auto out = irfft_unscaled(bins, n);
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

void rfft_into(const double* in, Complex* out, std::size_t n) {
  fftw_execute_dft_r2c(plans_for(n).forward, const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void irfft_unscaled_into(Complex* bins, double* out, std::size_t n) {
  fftw_execute_dft_c2r(plans_for(n).inverse, reinterpret_cast<fftw_complex*>(bins), out);
}

std::vector<Complex> irfft_adjoint(std::span<const double> grad, std::size_t n) {
  auto out = rfft(grad, n);
  const double interior = 2.0 / static_cast<double>(n);
  const double edge = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] *= (k == 0 || 2 * k == n) ? edge : interior;
  return out;
}

std::vector<double> convolve(std::span<const double> a,
                             std::span<const double> b, std::size_t max_len) {
  if (a.empty() || b.empty()) return {};
  std::size_t full = a.size() + b.size() - 1;
  std::size_t keep = max_len > 0 ? std::min(full, max_len) : full;
  std::size_t n = good_size(full);
  auto fa = rfft(a, n);
  auto fb = rfft(b, n);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto y = irfft(fa, n);
  y.resize(keep);
  return y;
}

}  // namespace darverb::fft
