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

// Real-input FFT helpers on top of FFTW. Plans are created once per size
// and shared; execution is reentrant.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace darverb::fft {

using Complex = std::complex<double>;

/// Smallest even n' >= n whose only prime factors are 2, 3, 5 and 7.
std::size_t good_size(std::size_t n);

/// Forward real transform of `in` zero-padded (or truncated) to `n`.
/// Returns n/2+1 bins, X[k] = sum_t x[t] e^{-j 2 pi k t / n}.
std::vector<Complex> rfft(std::span<const double> in, std::size_t n);

/// Inverse of rfft including the 1/n factor. Imaginary parts of the DC and
/// Nyquist bins are ignored.
std::vector<double> irfft(std::span<const Complex> bins, std::size_t n);

/// Unnormalized inverse: y[t] = sum over the Hermitian-extended spectrum.
std::vector<double> irfft_unscaled(std::span<const Complex> bins,
                                   std::size_t n);

/// Pointer variants for hot loops; `in` holds n reals, `out` n/2+1 bins.
void rfft_into(const double* in, Complex* out, std::size_t n);
/// Unnormalized inverse; `bins` (n/2+1) is overwritten.
void irfft_unscaled_into(Complex* bins, double* out, std::size_t n);

/// Reverse-mode adjoint of irfft: maps dL/dy (length n) to dL/dX in the
/// dL/dRe + j dL/dIm convention over the n/2+1 stored bins.
std::vector<Complex> irfft_adjoint(std::span<const double> grad, std::size_t n);

/// Linear convolution via FFT, output length a.size()+b.size()-1 truncated
/// to `max_len` when max_len > 0.
std::vector<double> convolve(std::span<const double> a,
                             std::span<const double> b,
                             std::size_t max_len = 0);

}  // namespace darverb::fft
