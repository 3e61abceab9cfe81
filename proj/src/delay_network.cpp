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

#include "darverb/delay_network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "darverb/error.hpp"
#include "darverb/fft.hpp"
#include "darverb/plausible.hpp"

namespace darverb {
namespace {

void mismatch(const std::string& what) { throw Error(ErrorKind::ConfigMismatch, what); }

constexpr double kPivotTolerance = 1e-12;

// In-place LU with partial pivoting of an n x n complex system, then solve.
// Returns false when a pivot is negligible relative to the largest entry.
bool solve_complex(int n, Complex* a, Complex* rhs) {
  double scale = 0.0;
  for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[i]));
  if (!(scale > 0.0)) return false;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(a[col * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(a[r * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > kPivotTolerance * scale)) return false;
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
      std::swap(rhs[col], rhs[piv]);
    }
    const Complex inv = 1.0 / a[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const Complex f = a[r * n + col] * inv;
      if (f == Complex{}) continue;
      for (int j = col + 1; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    Complex acc = rhs[r];
    for (int j = r + 1; j < n; ++j) acc -= a[r * n + j] * rhs[j];
    rhs[r] = acc / a[r * n + r];
  }
  return true;
}

struct DelayLine {
  std::vector<double> buf;
  std::size_t pos = 0;
  double read() const { return buf[pos]; }
  void write(double v) {
    buf[pos] = v;
    if (++pos == buf.size()) pos = 0;
  }
};

}  // namespace

Matrix Matrix::identity(int size) {
  Matrix m(size);
  for (int i = 0; i < size; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.n != b.n) throw Error(ErrorKind::ShapeMismatch, "matrix sizes differ");
  Matrix out(a.n);
  for (int i = 0; i < a.n; ++i)
    for (int k = 0; k < a.n; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < a.n; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.n);
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j) out(j, i) = a(i, j);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.n != b.n) throw Error(ErrorKind::ShapeMismatch, "matrix sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

Matrix householder(std::span<const double> u) {
  double norm2 = 0.0;
  for (double x : u) norm2 += x * x;
  if (!(norm2 > 0.0)) throw Error(ErrorKind::ZeroVector, "Householder vector is zero");
  const int n = static_cast<int>(u.size());
  Matrix q = Matrix::identity(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      q(i, j) -= 2.0 * u[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(j)] / norm2;
  return q;
}

bool Rotation::is_identity() const {
  return std::all_of(multipliers.begin(), multipliers.end(), [](int k) { return k == 0; });
}

Matrix Rotation::power(long long n) const {
  const int size = basis.n;
  Matrix block = Matrix::identity(size);
  for (std::size_t b = 0; b < multipliers.size(); ++b) {
    const long long phase = ((static_cast<long long>(multipliers[b]) * n) % period + period) % period;
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(phase) / period;
    const int i = static_cast<int>(2 * b);
    block(i, i) = std::cos(theta);
    block(i, i + 1) = -std::sin(theta);
    block(i + 1, i) = std::sin(theta);
    block(i + 1, i + 1) = std::cos(theta);
  }
  return basis * block * transpose(basis);
}

Matrix Rotation::matrix() const { return power(1); }

Rotation rotation_matrix(int size, std::uint64_t seed, int period) {
  std::mt19937_64 rng(seed ^ 0x5deece66dULL);
  std::uniform_int_distribution<int> pick(1, 3);
  std::vector<int> k(static_cast<std::size_t>(size / 2));
  for (auto& v : k) v = pick(rng);
  return rotation_matrix(size, seed, period, std::move(k));
}

Rotation rotation_matrix(int size, std::uint64_t seed, int period,
                         std::vector<int> multipliers) {
  if (size < 1 || period < 1)
    throw Error(ErrorKind::InvalidArgument, "rotation needs size >= 1 and period >= 1");
  if (multipliers.size() != static_cast<std::size_t>(size / 2))
    throw Error(ErrorKind::ShapeMismatch, "need one multiplier per 2x2 block");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix v(size);
  // Modified Gram-Schmidt on the columns of a Gaussian matrix; a rank-deficient
  // draw is redrawn column by column.
  for (int j = 0; j < size; ++j) {
    for (;;) {
      std::vector<double> col(static_cast<std::size_t>(size));
      for (auto& x : col) x = normal(rng);
      for (int p = 0; p < j; ++p) {
        double dot = 0.0;
        for (int i = 0; i < size; ++i) dot += v(i, p) * col[static_cast<std::size_t>(i)];
        for (int i = 0; i < size; ++i) col[static_cast<std::size_t>(i)] -= dot * v(i, p);
      }
      double norm = 0.0;
      for (double x : col) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-8) continue;
      for (int i = 0; i < size; ++i) v(i, j) = col[static_cast<std::size_t>(i)] / norm;
      break;
    }
  }
  return Rotation{std::move(v), std::move(multipliers), period};
}

DnConfig DnConfig::reduced() {
  DnConfig c;
  c.delays = {23, 37};
  c.sap_delays = {{5, 11}, {7, 13}};
  c.post_order = 2;
  c.absorption_order = 3;
  c.n_fft = 512;
  c.bypass_length = 8;
  c.rotation_period = 300;
  return c;
}

int DnConfig::allpasses_per_line() const {
  return sap_delays.empty() ? 0 : static_cast<int>(sap_delays.front().size());
}

int DnConfig::param_count() const {
  return 5 * post_order + 3 * absorption_order + 2 * channels() +
         channels() * allpasses_per_line() + bypass_length;
}

std::vector<int> DnConfig::effective_delays() const {
  std::vector<int> out;
  for (int m = 0; m < channels(); ++m) {
    const auto& taus = sap_delays[static_cast<std::size_t>(m)];
    out.push_back(delays[static_cast<std::size_t>(m)] + std::accumulate(taus.begin(), taus.end(), 0));
  }
  return out;
}

void DnConfig::validate() const {
  if (delays.empty()) mismatch("no delay lines");
  if (sap_delays.size() != delays.size()) mismatch("need one allpass row per delay line");
  for (const auto& row : sap_delays) {
    if (row.size() != sap_delays.front().size()) mismatch("allpass rows must have equal length");
    for (int t : row)
      if (t < 1) mismatch("allpass delays must be >= 1");
  }
  for (int d : delays)
    if (d < 1) mismatch("line delays must be >= 1");
  if (post_order < 0 || absorption_order < 2) mismatch("absorption needs at least two shelves");
  if (n_fft < 2 || n_fft % 2 != 0) mismatch("N must be even and >= 2");
  if (bypass_length < 0 || bypass_length > n_fft) mismatch("bypass length out of range");
  if (rotation_period < 1) mismatch("rotation period must be >= 1");
}

DnParams zero_dn_params(const DnConfig& config) {
  config.validate();
  const auto m = static_cast<std::size_t>(config.channels());
  DnParams p;
  p.b.assign(m, 0.0);
  p.c.assign(m, 0.0);
  p.sap_gamma.assign(m, std::vector<double>(static_cast<std::size_t>(config.allpasses_per_line()), 0.0));
  p.post.assign(static_cast<std::size_t>(config.post_order), SvfParams{});
  for (int k = 0; k < config.absorption_order; ++k) {
    PeqBand band;
    band.kind = k == 0 ? PeqKind::LowShelf
                       : (k == config.absorption_order - 1 ? PeqKind::HighShelf : PeqKind::Peak);
    band.f = hz_to_warped(40.0 * std::pow(300.0, static_cast<double>(k) / std::max(1, config.absorption_order - 1)),
                          config.sample_rate);
    band.R = band.kind == PeqKind::Peak ? 1.0 : std::sqrt(0.5) + 1.0;
    band.G = 1.0;
    p.absorption.push_back(band);
  }
  p.bypass.assign(static_cast<std::size_t>(config.bypass_length), 0.0);
  return p;
}

void check_shapes(const DnParams& p, const DnConfig& config) {
  const auto m = static_cast<std::size_t>(config.channels());
  if (p.b.size() != m || p.c.size() != m) mismatch("b and c need M entries");
  if (p.sap_gamma.size() != m) mismatch("allpass gains need M rows");
  for (const auto& row : p.sap_gamma)
    if (row.size() != static_cast<std::size_t>(config.allpasses_per_line()))
      mismatch("allpass gain row length must be K_U");
  if (p.post.size() != static_cast<std::size_t>(config.post_order)) mismatch("post filter length must be K_C1");
  if (p.absorption.size() != static_cast<std::size_t>(config.absorption_order))
    mismatch("absorption filter length must be K_C_delta");
  if (p.bypass.size() != static_cast<std::size_t>(config.bypass_length)) mismatch("bypass length must be Z");
}

MixingMatrices default_mixing(const DnConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<double> ones(static_cast<std::size_t>(config.channels()), 1.0);
  return {householder(ones), rotation_matrix(config.channels(), seed, config.rotation_period)};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> render_time_domain(const DnParams& p, const DnConfig& config,
                                       const MixingMatrices& mix, bool time_varying,
                                       std::size_t length) {
  const int m_count = config.channels();
  const auto mc = static_cast<std::size_t>(m_count);
  std::vector<DelayLine> lines(mc);
  std::vector<BiquadCascade> absorption;
  std::vector<std::vector<AllpassLine>> saps(mc);
  for (std::size_t m = 0; m < mc; ++m) {
    lines[m].buf.assign(static_cast<std::size_t>(config.delays[m]), 0.0);
    absorption.emplace_back(std::span<const PeqBand>(p.absorption));
    for (std::size_t k = 0; k < p.sap_gamma[m].size(); ++k)
      saps[m].emplace_back(SapParams{p.sap_gamma[m][k], config.sap_delays[m][k]});
  }
  BiquadCascade post(std::span<const SvfParams>(p.post));
  const bool rotate = time_varying && !mix.rotation.is_identity();
  const Matrix r = rotate ? mix.rotation.matrix() : Matrix::identity(m_count);
  Matrix q = mix.q0;
  Matrix next(m_count);

  std::vector<double> out(length, 0.0);
  std::vector<double> yb(mc), z(mc);
  double energy = 0.0;
  const double input_energy = 1.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double x = n == 0 ? 1.0 : 0.0;
    double sum = 0.0;
    for (std::size_t m = 0; m < mc; ++m) {
      yb[m] = lines[m].read();
      sum += p.c[m] * yb[m];
    }
    double y = post.process(sum);
    if (n < p.bypass.size()) y += p.bypass[n];
    out[n] = y;
    energy += y * y;

    for (std::size_t m = 0; m < mc; ++m) {
      double v = absorption[m].process(yb[m]);
      for (auto& s : saps[m]) v = s.process(v);
      z[m] = v;
    }
    for (int i = 0; i < m_count; ++i) {
      double acc = 0.0;
      for (int j = 0; j < m_count; ++j) acc += q(i, j) * z[static_cast<std::size_t>(j)];
      lines[static_cast<std::size_t>(i)].write(acc + p.b[static_cast<std::size_t>(i)] * x);
    }
    if (rotate) {
      if ((n + 1) % static_cast<std::size_t>(mix.rotation.period) == 0) {
        q = mix.q0;
      } else {
        std::fill(next.v.begin(), next.v.end(), 0.0);
        for (int i = 0; i < m_count; ++i)
          for (int k = 0; k < m_count; ++k) {
            const double qik = q(i, k);
            for (int j = 0; j < m_count; ++j) next(i, j) += qik * r(k, j);
          }
        std::swap(q, next);
      }
    }
    if ((n & 1023) == 1023 || n + 1 == length) {
      if (!std::isfinite(energy) || energy > 1e6 * input_energy)
        throw Error(ErrorKind::Unstable, "delay network output energy exceeded 1e6 x input at sample " +
                                             std::to_string(n));
    }
  }
  return out;
}

}  // namespace

DnDarEvaluator::DnDarEvaluator(const DnConfig& config, const Matrix& q0)
    : config_(config), q0_(q0), bins_(config.n_fft / 2 + 1) {
  config_.validate();
  if (q0.n != config.channels()) mismatch("Q0 size must equal M");
  const int n_fft = config_.n_fft;
  for (int d : config_.delays) {
    std::vector<Complex> ph(static_cast<std::size_t>(bins_));
    for (int k = 0; k < bins_; ++k) ph[static_cast<std::size_t>(k)] = delay_phasor(-d, static_cast<std::size_t>(k), n_fft);
    line_phasors_.push_back(std::move(ph));
  }
  for (const auto& row : config_.sap_delays)
    for (int tau : row) {
      std::vector<Complex> ph(static_cast<std::size_t>(bins_));
      for (int k = 0; k < bins_; ++k) ph[static_cast<std::size_t>(k)] = delay_phasor(tau, static_cast<std::size_t>(k), n_fft);
      sap_phasors_.push_back(std::move(ph));
    }
}

std::vector<double> DnDarEvaluator::forward(const DnParams& params) {
  check_shapes(params, config_);
  params_ = params;
  const int n_fft = config_.n_fft;
  const int mcount = config_.channels();
  const auto mc = static_cast<std::size_t>(mcount);
  const auto bins = static_cast<std::size_t>(bins_);

  post_.clear();
  post_total_ = SampledResponse(n_fft);
  for (const auto& s : params.post) {
    post_.push_back(sample_svf(s, n_fft));
    post_total_ *= post_.back();
  }
  absorption_.clear();
  absorption_total_ = SampledResponse(n_fft);
  for (const auto& b : params.absorption) {
    absorption_.push_back(sample_svf(peq_band_to_svf(b), n_fft));
    absorption_total_ *= absorption_.back();
  }
  saps_.clear();
  loop_gain_.assign(bins * mc, Complex{});
  for (std::size_t m = 0; m < mc; ++m) {
    std::vector<Complex> u(bins, Complex{1.0, 0.0});
    for (std::size_t k = 0; k < params.sap_gamma[m].size(); ++k) {
      const double g = params.sap_gamma[m][k];
      const auto& ph = sap_phasors_[m * params.sap_gamma[m].size() + k];
      std::vector<Complex> s(bins);
      for (std::size_t i = 0; i < bins; ++i) {
        s[i] = (g + ph[i]) / (1.0 + g * ph[i]);
        u[i] *= s[i];
      }
      saps_.emplace_back(n_fft, std::move(s));
    }
    for (std::size_t i = 0; i < bins; ++i) loop_gain_[i * mc + m] = u[i] * absorption_total_[i];
  }

  state_.assign(bins * mc, Complex{});
  matrices_.assign(bins * mc * mc, Complex{});
  line_sum_.assign(bins, Complex{});
  std::vector<Complex> work(mc * mc);
  SampledResponse total(n_fft);
  for (std::size_t i = 0; i < bins; ++i) {
    Complex* a = &matrices_[i * mc * mc];
    for (int r = 0; r < mcount; ++r)
      for (int c = 0; c < mcount; ++c) {
        Complex v = -q0_(r, c) * loop_gain_[i * mc + static_cast<std::size_t>(c)];
        if (r == c) v += line_phasors_[static_cast<std::size_t>(r)][i];
        a[r * mcount + c] = v;
      }
    std::copy(a, a + mc * mc, work.begin());
    Complex* x = &state_[i * mc];
    for (std::size_t m = 0; m < mc; ++m) x[m] = params.b[m];
    if (!solve_complex(mcount, work.data(), x))
      throw Error(ErrorKind::SingularBinMatrix, "loop matrix is singular at bin " + std::to_string(i));
    Complex s{};
    for (std::size_t m = 0; m < mc; ++m) s += params.c[m] * x[m];
    line_sum_[i] = s;
    total[i] = post_total_[i] * s;
  }
  auto ir = to_fir(total).taps;
  response_ = std::move(total);
  for (std::size_t z = 0; z < params.bypass.size(); ++z) ir[z] += params.bypass[z];
  return ir;
}

DnParams DnDarEvaluator::backward(std::span<const double> grad_ir) const {
  const int n_fft = config_.n_fft;
  const int mcount = config_.channels();
  const auto mc = static_cast<std::size_t>(mcount);
  const auto bins = static_cast<std::size_t>(bins_);
  if (grad_ir.size() != static_cast<std::size_t>(n_fft))
    throw Error(ErrorKind::ShapeMismatch, "gradient length must equal N");

  DnParams g = zero_dn_params(config_);
  g.absorption = params_.absorption;
  for (std::size_t z = 0; z < g.bypass.size(); ++z) g.bypass[z] = grad_ir[z];

  const auto gh = fft::irfft_adjoint(grad_ir, static_cast<std::size_t>(n_fft));
  std::vector<Complex> g_post(bins), g_absorb(bins, Complex{});
  std::vector<std::vector<Complex>> g_line(mc, std::vector<Complex>(bins));
  std::vector<Complex> work(mc * mc), lambda(mc);
  for (std::size_t i = 0; i < bins; ++i) {
    g_post[i] = gh[i] * std::conj(line_sum_[i]);
    const Complex gs = gh[i] * std::conj(post_total_[i]);
    const Complex* x = &state_[i * mc];
    for (std::size_t m = 0; m < mc; ++m) {
      g.c[m] += (std::conj(gs) * x[m]).real();
      lambda[m] = gs * params_.c[m];
    }
    // lambda = A^{-H} x_bar
    const Complex* a = &matrices_[i * mc * mc];
    for (int r = 0; r < mcount; ++r)
      for (int c = 0; c < mcount; ++c) work[static_cast<std::size_t>(r * mcount + c)] = std::conj(a[c * mcount + r]);
    if (!solve_complex(mcount, work.data(), lambda.data()))
      throw Error(ErrorKind::SingularBinMatrix, "adjoint loop matrix is singular at bin " + std::to_string(i));
    for (std::size_t m = 0; m < mc; ++m) g.b[m] += lambda[m].real();
    for (int j = 0; j < mcount; ++j) {
      Complex qt{};
      for (int r = 0; r < mcount; ++r) qt += q0_(r, j) * lambda[static_cast<std::size_t>(r)];
      const Complex ga = qt * std::conj(x[j]);
      const Complex loop = loop_gain_[i * mc + static_cast<std::size_t>(j)];
      const Complex u = loop / absorption_total_[i];
      g_line[static_cast<std::size_t>(j)][i] = ga * std::conj(absorption_total_[i]);
      g_absorb[i] += ga * std::conj(u);
    }
  }

  const auto post_factors = factor_gradients(post_, g_post);
  for (std::size_t k = 0; k < post_.size(); ++k)
    g.post[k] = svf_adjoint(params_.post[k], post_[k], post_factors[k]);
  const auto abs_factors = factor_gradients(absorption_, g_absorb);
  for (std::size_t k = 0; k < absorption_.size(); ++k) {
    const auto svf = peq_band_to_svf(params_.absorption[k]);
    g.absorption[k] = peq_adjoint(params_.absorption[k], svf_adjoint(svf, absorption_[k], abs_factors[k]));
  }
  const std::size_t ku = static_cast<std::size_t>(config_.allpasses_per_line());
  for (std::size_t m = 0; m < mc; ++m) {
    const std::span<const SampledResponse> line_saps(saps_.data() + m * ku, ku);
    const auto sf = factor_gradients(line_saps, g_line[m]);
    for (std::size_t k = 0; k < ku; ++k) {
      const double gamma = params_.sap_gamma[m][k];
      const auto& ph = sap_phasors_[m * ku + k];
      double acc = 0.0;
      for (std::size_t i = 0; i < bins; ++i) {
        const Complex d = 1.0 + gamma * ph[i];
        acc += (std::conj(sf[k][i]) * (1.0 - ph[i] * ph[i]) / (d * d)).real();
      }
      g.sap_gamma[m][k] = acc;
    }
  }
  return g;
}

SampledResponse dn_transfer(const DnParams& params, const DnConfig& config, const Matrix& q0) {
  DnDarEvaluator eval(config, q0);
  eval.forward(params);
  return eval.response();
}

std::vector<double> render_dn(const DnParams& params, const DnConfig& config,
                              const MixingMatrices& mix, DnMode mode, std::size_t length) {
  config.validate();
  check_shapes(params, config);
  if (mix.q0.n != config.channels()) mismatch("mixing matrix size must equal M");
  if (mode == DnMode::DAR) {
    DnDarEvaluator eval(config, mix.q0);
    auto ir = eval.forward(params);
    ir.resize(length, 0.0);
    return ir;
  }
  return render_time_domain(params, config, mix, mode == DnMode::TV, length);
}

DnParams dn_random_plausible(const DnConfig& config, std::uint64_t seed) {
  config.validate();
  plausible::Rng rng(seed);
  DnParams p = zero_dn_params(config);
  for (auto& v : p.b) v = plausible::uniform(rng, -1.0, 1.0);
  for (auto& v : p.c) v = plausible::uniform(rng, -1.0, 1.0);
  for (auto& row : p.sap_gamma)
    for (auto& v : row) v = plausible::uniform(rng, 0.3, 0.8);
  const auto post = plausible::random_peq(rng, config.post_order, -12.0, 12.0, 0.2, 5.0, config.sample_rate);
  p.post = plausible::to_perturbed_svfs(post, rng, 0.05);
  auto bands = plausible::random_peq(rng, config.absorption_order, -2.8, 0.0, 0.2, 5.0, config.sample_rate);
  for (auto& b : bands)
    if (b.kind != PeqKind::Peak) b.R = std::sqrt(0.5) + plausible::log_uniform(rng, 0.01, 1.0);
  p.absorption = bands;
  p.bypass = plausible::bypass_noise(rng, config.bypass_length);
  return p;
}

}  // namespace darverb
