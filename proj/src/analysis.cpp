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

#include "darverb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "darverb/error.hpp"
#include "darverb/fft.hpp"

namespace darverb {
namespace {

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

int frame_count(std::size_t length, int hop) {
  return static_cast<int>(length / static_cast<std::size_t>(hop)) + 1;
}

// Windowed frame t of x, centered at t * hop.
void load_frame(std::span<const double> x, int t, int hop, std::span<const double> window,
                std::vector<double>& buf) {
  const long long size = static_cast<long long>(window.size());
  const long long start = static_cast<long long>(t) * hop - size / 2;
  for (long long n = 0; n < size; ++n) {
    const long long i = start + n;
    buf[static_cast<std::size_t>(n)] =
        (i >= 0 && i < static_cast<long long>(x.size())) ? x[static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(n)] : 0.0;
  }
}

struct Remap {
  struct Tap {
    int k;
    double w;
  };
  std::vector<std::vector<Tap>> rows;  // one per output bin
};

// Triangular kernels centered on geometrically spaced frequencies. A kernel
// spans at least one linear bin and at least the local log-bin spacing, and
// its weights sum to 1.
std::shared_ptr<const Remap> log_remap(int fft_size, double sample_rate) {
  static std::mutex mutex;
  static std::map<std::pair<int, double>, std::shared_ptr<const Remap>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{fft_size, sample_rate}];
  if (slot) return slot;
  auto remap = std::make_shared<Remap>();
  const int bins = fft_size / 2 + 1;
  const double df = sample_rate / fft_size;
  const double lo = 40.0, hi = sample_rate / 2.0;
  const double ratio = std::pow(hi / lo, 1.0 / (bins - 1));
  for (int j = 0; j < bins; ++j) {
    const double center = lo * std::pow(ratio, j);
    const double width = std::max(df, center * (ratio - 1.0));
    std::vector<Remap::Tap> row;
    const int k_lo = std::max(0, static_cast<int>(std::floor((center - width) / df)));
    const int k_hi = std::min(bins - 1, static_cast<int>(std::ceil((center + width) / df)));
    double sum = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
      const double w = 1.0 - std::abs(k * df - center) / width;
      if (w > 0.0) {
        row.push_back({k, w});
        sum += w;
      }
    }
    if (row.empty()) {
      const int k = std::min(bins - 1, static_cast<int>(std::lround(center / df)));
      row.push_back({k, 1.0});
      sum = 1.0;
    }
    for (auto& t : row) t.w /= sum;
    remap->rows.push_back(std::move(row));
  }
  slot = std::move(remap);
  return slot;
}

// Frame-major log-frequency magnitude spectrogram.
std::vector<double> spectrogram_frames(std::span<const double> x, std::size_t length,
                                       int fft_size, double sample_rate) {
  const int hop = fft_size / 4;
  const int frames = frame_count(length, hop);
  const int bins = fft_size / 2 + 1;
  const auto window = hann(fft_size);
  const auto remap = log_remap(fft_size, sample_rate);
  std::vector<double> out(static_cast<std::size_t>(frames) * static_cast<std::size_t>(bins));
  std::vector<double> buf(static_cast<std::size_t>(fft_size));
  std::vector<Complex> spec(static_cast<std::size_t>(bins));
  std::vector<double> mag(static_cast<std::size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    load_frame(x, t, hop, window, buf);
    fft::rfft_into(buf.data(), spec.data(), static_cast<std::size_t>(fft_size));
    for (int k = 0; k < bins; ++k) mag[static_cast<std::size_t>(k)] = std::abs(spec[static_cast<std::size_t>(k)]);
    double* row = &out[static_cast<std::size_t>(t) * static_cast<std::size_t>(bins)];
    for (int j = 0; j < bins; ++j) {
      double acc = 0.0;
      for (const auto& tap : remap->rows[static_cast<std::size_t>(j)]) acc += tap.w * mag[static_cast<std::size_t>(tap.k)];
      row[j] = acc;
    }
  }
  return out;
}

double db_floor(double energy) {
  if (!(energy > 0.0)) return kDbFloor;
  return std::max(10.0 * std::log10(energy), kDbFloor);
}

double clamp_db(double v) { return std::clamp(v, -60.0, 60.0); }

}  // namespace

EdrMatrix edr(std::span<const double> ir, int fft_size, int hop) {
  if (ir.empty()) throw Error(ErrorKind::InvalidArgument, "empty impulse response");
  if (fft_size < 2 || fft_size % 2 != 0 || hop < 1)
    throw Error(ErrorKind::InvalidArgument, "EDR needs an even FFT size and hop >= 1");
  EdrMatrix out;
  out.fft_size = fft_size;
  out.hop = hop;
  out.bins = fft_size / 2 + 1;
  out.frames = frame_count(ir.size(), hop);
  out.values.assign(static_cast<std::size_t>(out.bins) * static_cast<std::size_t>(out.frames), 0.0);
  const auto window = hann(fft_size);
  std::vector<double> buf(static_cast<std::size_t>(fft_size));
  std::vector<Complex> spec(static_cast<std::size_t>(out.bins));
  for (int t = 0; t < out.frames; ++t) {
    load_frame(ir, t, hop, window, buf);
    fft::rfft_into(buf.data(), spec.data(), static_cast<std::size_t>(fft_size));
    for (int k = 0; k < out.bins; ++k)
      out.values[static_cast<std::size_t>(k) * static_cast<std::size_t>(out.frames) + static_cast<std::size_t>(t)] =
          std::norm(spec[static_cast<std::size_t>(k)]);
  }
  for (int k = 0; k < out.bins; ++k) {
    double* row = &out.values[static_cast<std::size_t>(k) * static_cast<std::size_t>(out.frames)];
    for (int t = out.frames - 2; t >= 0; --t) row[t] += row[t + 1];
  }
  return out;
}

EdrError edr_error(const EdrMatrix& a, const EdrMatrix& b) {
  if (a.bins != b.bins || a.frames != b.frames)
    throw Error(ErrorKind::ShapeMismatch, "EDR shapes differ");
  EdrError out;
  out.bins = a.bins;
  out.frames = a.frames;
  out.db.resize(a.values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    out.db[i] = db_floor(a.values[i]) - db_floor(b.values[i]);
    sum += std::abs(out.db[i]);
  }
  out.distance = out.db.empty() ? 0.0 : sum / static_cast<double>(out.db.size());
  return out;
}

Spectrogram log_spectrogram(std::span<const double> x, int fft_size, double sample_rate) {
  Spectrogram s;
  s.bins = fft_size / 2 + 1;
  s.frames = frame_count(x.size(), fft_size / 4);
  const auto frames = spectrogram_frames(x, x.size(), fft_size, sample_rate);
  s.values.resize(frames.size());
  for (int t = 0; t < s.frames; ++t)
    for (int j = 0; j < s.bins; ++j)
      s.values[static_cast<std::size_t>(j) * static_cast<std::size_t>(s.frames) + static_cast<std::size_t>(t)] =
          frames[static_cast<std::size_t>(t) * static_cast<std::size_t>(s.bins) + static_cast<std::size_t>(j)];
  return s;
}

double match_loss(std::span<const double> h, std::span<const double> h_ref, double sample_rate) {
  std::vector<double> ref(h_ref.begin(), h_ref.end());
  ref.resize(std::max(h.size(), h_ref.size()), 0.0);
  return MatchLoss(ref, sample_rate).value(h);
}

MatchLoss::MatchLoss(std::span<const double> reference, double sample_rate)
    : length_(reference.size()), sample_rate_(sample_rate) {
  for (int f : kMatchScales) reference_.push_back(spectrogram_frames(reference, length_, f, sample_rate));
}

double MatchLoss::value(std::span<const double> h) const { return run(h, nullptr); }

double MatchLoss::value_and_grad(std::span<const double> h, std::vector<double>& grad) const {
  grad.assign(length_, 0.0);
  return run(h, &grad);
}

double MatchLoss::run(std::span<const double> h, std::vector<double>* grad) const {
  if (h.size() > length_) throw Error(ErrorKind::ShapeMismatch, "signal longer than the reference");
  double total = 0.0;
  for (std::size_t s = 0; s < kMatchScales.size(); ++s) {
    const int fft_size = kMatchScales[s];
    const int hop = fft_size / 4;
    const int frames = frame_count(length_, hop);
    const int bins = fft_size / 2 + 1;
    const double cells = static_cast<double>(frames) * bins;
    const auto window = hann(fft_size);
    const auto remap = log_remap(fft_size, sample_rate_);
    const auto& ref = reference_[s];
    std::vector<double> buf(static_cast<std::size_t>(fft_size));
    std::vector<Complex> spec(static_cast<std::size_t>(bins));
    std::vector<double> mag(static_cast<std::size_t>(bins)), gmag(static_cast<std::size_t>(bins));
    double acc = 0.0;
    for (int t = 0; t < frames; ++t) {
      load_frame(h, t, hop, window, buf);
      fft::rfft_into(buf.data(), spec.data(), static_cast<std::size_t>(fft_size));
      for (int k = 0; k < bins; ++k) mag[static_cast<std::size_t>(k)] = std::abs(spec[static_cast<std::size_t>(k)]);
      const double* rrow = &ref[static_cast<std::size_t>(t) * static_cast<std::size_t>(bins)];
      if (grad) std::fill(gmag.begin(), gmag.end(), 0.0);
      for (int j = 0; j < bins; ++j) {
        const auto& row = remap->rows[static_cast<std::size_t>(j)];
        double v = 0.0;
        for (const auto& tap : row) v += tap.w * mag[static_cast<std::size_t>(tap.k)];
        const double diff = v - rrow[j];
        acc += std::abs(diff);
        if (grad && diff != 0.0) {
          const double g = (diff > 0.0 ? 1.0 : -1.0) / cells;
          for (const auto& tap : row) gmag[static_cast<std::size_t>(tap.k)] += g * tap.w;
        }
      }
      if (!grad) continue;
      // d|X_k|/dx_n = Re(u_k e^{+j 2 pi k n / F}); the c2r transform doubles
      // interior bins, so they are halved here.
      for (int k = 0; k < bins; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const double m = mag[ku];
        const Complex u = m > 0.0 ? spec[ku] / m : Complex{};
        const double scale = (k == 0 || k == bins - 1) ? 1.0 : 0.5;
        spec[ku] = gmag[ku] * scale * u;
      }
      fft::irfft_unscaled_into(spec.data(), buf.data(), static_cast<std::size_t>(fft_size));
      const long long start = static_cast<long long>(t) * hop - fft_size / 2;
      for (int n = 0; n < fft_size; ++n) {
        const long long i = start + n;
        if (i >= 0 && i < static_cast<long long>(h.size()))
          (*grad)[static_cast<std::size_t>(i)] += buf[static_cast<std::size_t>(n)] * window[static_cast<std::size_t>(n)];
      }
    }
    total += acc / cells;
  }
  return total;
}

double decay_ratio(std::span<const double> fir, int n0) {
  const std::size_t n = fir.size();
  const auto w = static_cast<std::size_t>(n0);
  if (n0 < 1 || 2 * w > n) throw Error(ErrorKind::InvalidArgument, "n0 must lie in [1, N/2]");
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < w; ++i) head += std::abs(fir[i]);
  for (std::size_t i = n - w; i < n; ++i) tail += std::abs(fir[i]);
  return tail / std::max(head, std::numeric_limits<double>::min());
}

double reg_loss(std::span<const std::vector<SvfParams>> chains, int n_fft, int n0) {
  if (n0 <= 0) n0 = n_fft / 8;
  double total = 0.0;
  for (const auto& chain : chains) {
    if (chain.empty()) continue;
    std::vector<double> gamma;
    for (const auto& s : chain) gamma.push_back(decay_ratio(to_fir(sample_svf(s, n_fft)).taps, n0));
    const double top = *std::max_element(gamma.begin(), gamma.end());
    double z = 0.0, num = 0.0;
    for (double g : gamma) {
      const double e = std::exp(g - top);
      z += e;
      num += g * e;
    }
    total += num / z;
  }
  return total;
}

double reg_loss_grad(std::span<const std::vector<SvfParams>> chains, int n_fft, int n0,
                     std::vector<std::vector<SvfParams>>& grad) {
  if (n0 <= 0) n0 = n_fft / 8;
  const auto n = static_cast<std::size_t>(n_fft);
  const auto w = static_cast<std::size_t>(n0);
  grad.assign(chains.size(), {});
  double total = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& chain = chains[c];
    if (chain.empty()) continue;
    std::vector<SampledResponse> resp;
    std::vector<std::vector<double>> firs;
    std::vector<double> gamma, head;
    for (const auto& s : chain) {
      resp.push_back(sample_svf(s, n_fft));
      firs.push_back(to_fir(resp.back()).taps);
      double hsum = 0.0;
      for (std::size_t i = 0; i < w; ++i) hsum += std::abs(firs.back()[i]);
      head.push_back(std::max(hsum, std::numeric_limits<double>::min()));
      gamma.push_back(decay_ratio(firs.back(), n0));
    }
    const double top = *std::max_element(gamma.begin(), gamma.end());
    std::vector<double> p(gamma.size());
    double z = 0.0;
    for (std::size_t k = 0; k < gamma.size(); ++k) z += (p[k] = std::exp(gamma[k] - top));
    double mean = 0.0;
    for (std::size_t k = 0; k < gamma.size(); ++k) {
      p[k] /= z;
      mean += p[k] * gamma[k];
    }
    total += mean;
    for (std::size_t k = 0; k < chain.size(); ++k) {
      const double dl = p[k] * (1.0 + gamma[k] - mean);
      std::vector<double> gfir(n, 0.0);
      const auto& c_k = firs[k];
      auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
      for (std::size_t i = 0; i < w; ++i) gfir[i] = -dl * gamma[k] * sgn(c_k[i]) / head[k];
      for (std::size_t i = n - w; i < n; ++i) gfir[i] += dl * sgn(c_k[i]) / head[k];
      const auto gbins = fft::irfft_adjoint(gfir, n);
      grad[c].push_back(svf_adjoint(chain[k], resp[k], gbins));
    }
  }
  return total;
}

double t30(std::span<const double> ir, double sample_rate) {
  std::vector<double> edc(ir.size());
  double acc = 0.0;
  for (std::size_t i = ir.size(); i-- > 0;) edc[i] = (acc += ir[i] * ir[i]);
  if (!(acc > 0.0)) throw Error(ErrorKind::ZeroEnergy, "impulse response has no energy");
  const double total = acc;
  std::size_t i5 = ir.size(), i35 = ir.size();
  for (std::size_t i = 0; i < edc.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / total);
    if (i5 == ir.size() && db <= -5.0) i5 = i;
    if (db <= -35.0) {
      i35 = i;
      break;
    }
  }
  if (i35 == ir.size() || i35 <= i5)
    throw Error(ErrorKind::DecayRangeUnavailable, "energy decay curve does not reach -35 dB");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double count = static_cast<double>(i35 - i5 + 1);
  for (std::size_t i = i5; i <= i35; ++i) {
    const double x = static_cast<double>(i) / sample_rate;
    const double y = 10.0 * std::log10(edc[i] / total);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  if (!(slope < 0.0)) throw Error(ErrorKind::DecayRangeUnavailable, "energy decay curve is not decreasing");
  return -60.0 / slope;
}

double energy_ratio_db(std::span<const double> ir, double split_seconds, double sample_rate) {
  const auto split = std::min(ir.size(), static_cast<std::size_t>(std::lround(split_seconds * sample_rate)));
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < ir.size(); ++i) (i < split ? early : late) += ir[i] * ir[i];
  if (!(late > 0.0)) return 60.0;
  if (!(early > 0.0)) return -60.0;
  return clamp_db(10.0 * std::log10(early / late));
}

std::vector<double> octave_filter(std::span<const double> ir, double center_hz, double sample_rate) {
  const double lo = hz_to_warped(center_hz / std::numbers::sqrt2, sample_rate);
  const double hi = hz_to_warped(std::min(center_hz * std::numbers::sqrt2, 0.49 * sample_rate), sample_rate);
  const double damping[2] = {std::cos(std::numbers::pi / 8.0), std::cos(3.0 * std::numbers::pi / 8.0)};
  std::vector<SvfParams> chain;
  for (double r : damping) {
    chain.push_back({lo, r, 0.0, 0.0, 1.0});
    chain.push_back({hi, r, 1.0, 0.0, 0.0});
  }
  const auto n = fft::good_size(2 * ir.size() + 16384);
  const auto resp = sample_svf_chain(chain, static_cast<int>(n));
  auto spec = fft::rfft(ir, n);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= resp[k];
  auto out = fft::irfft(spec, n);
  out.resize(ir.size());
  return out;
}

ReverbMetrics reverb_params(std::span<const double> ir, double sample_rate) {
  ReverbMetrics m;
  m.full.t30 = t30(ir, sample_rate);
  m.full.drr = energy_ratio_db(ir, 0.005, sample_rate);
  m.full.c50 = energy_ratio_db(ir, 0.050, sample_rate);
  for (std::size_t b = 0; b < kOctaveCenters.size(); ++b) {
    const auto band = octave_filter(ir, kOctaveCenters[b], sample_rate);
    try {
      m.bands[b].t30 = t30(band, sample_rate);
    } catch (const Error&) {
      m.bands[b].t30 = std::numeric_limits<double>::quiet_NaN();
    }
    m.bands[b].drr = energy_ratio_db(band, 0.005, sample_rate);
    m.bands[b].c50 = energy_ratio_db(band, 0.050, sample_rate);
  }
  return m;
}

OnsetTrim onset_trim(std::span<const double> ir, int window) {
  OnsetTrim out;
  if (ir.empty()) throw Error(ErrorKind::InvalidArgument, "empty impulse response");
  std::vector<double> prefix(ir.size() + 1, 0.0);
  for (std::size_t i = 0; i < ir.size(); ++i) prefix[i + 1] = prefix[i] + ir[i] * ir[i];
  if (!(prefix.back() > 0.0)) {
    out.ir.assign(ir.begin(), ir.end());
    out.silent = true;
    return out;
  }
  const long long half = window / 2;
  const long long len = static_cast<long long>(ir.size());
  std::size_t best = 0;
  double best_energy = -1.0;
  for (long long n = 0; n < len; ++n) {
    const long long a = std::max(0LL, n - half), b = std::min(len, n + half);
    const double e = prefix[static_cast<std::size_t>(b)] - prefix[static_cast<std::size_t>(a)];
    if (e > best_energy) {
      best_energy = e;
      best = static_cast<std::size_t>(n);
    }
  }
  out.removed = best;
  out.ir.assign(ir.begin() + static_cast<std::ptrdiff_t>(best), ir.end());
  return out;
}

std::vector<double> normalize_energy(std::span<const double> ir) {
  double e = 0.0;
  for (double v : ir) e += v * v;
  if (!(e > 0.0)) throw Error(ErrorKind::ZeroEnergy, "impulse response has no energy");
  const double s = 1.0 / std::sqrt(e);
  std::vector<double> out(ir.begin(), ir.end());
  for (auto& v : out) v *= s;
  return out;
}

}  // namespace darverb
