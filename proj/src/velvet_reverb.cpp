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

#include "darverb/velvet_reverb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "darverb/error.hpp"
#include "darverb/fft.hpp"
#include "darverb/plausible.hpp"

namespace darverb {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x9e3779b9u};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

void mismatch(const std::string& what) { throw Error(ErrorKind::ConfigMismatch, what); }

double chain_energy(const SampledResponse& resp) {
  const auto fir = to_fir(resp).taps;
  double e = 0.0;
  for (double v : fir) e += v * v;
  return e;
}

// Gains following a 60/T30 dB-per-second envelope, compensated for pulse
// density and coloration energy.
void envelope_gains(const VelvetConfig& config, double t30,
                    std::span<const double> color_energy, std::vector<double>& gains) {
  const auto offsets = config.offsets();
  const int m_count = config.sub_segments;
  gains.assign(static_cast<std::size_t>(config.segments() * m_count), 0.0);
  for (int i = 0; i < config.segments(); ++i) {
    const double len = config.segment_lengths[static_cast<std::size_t>(i)];
    const double dens = std::sqrt(static_cast<double>(config.pulse_distances[static_cast<std::size_t>(i)]));
    const double norm = 1.0 / std::sqrt(std::max(color_energy[static_cast<std::size_t>(i)], 1e-30));
    for (int m = 0; m < m_count; ++m) {
      const double t = (offsets[static_cast<std::size_t>(i)] + (m + 0.5) * len / m_count) /
                       config.sample_rate;
      gains[static_cast<std::size_t>(i * m_count + m)] =
          std::pow(10.0, -3.0 * t / t30) * dens * norm;
    }
  }
}

}  // namespace

VelvetConfig VelvetConfig::standard() {
  VelvetConfig c;
  const int total = 120000;
  for (int i = 0; i < 10; ++i) c.segment_lengths.push_back(total / 40);
  for (int i = 0; i < 5; ++i) c.segment_lengths.push_back(total / 20);
  for (int i = 0; i < 5; ++i) c.segment_lengths.push_back(total / 10);
  c.pulse_distances = {10,  20,  35,  50,  65,  90,  120, 135, 180, 220,
                       270, 320, 370, 420, 480, 540, 610, 680, 750, 820};
  const int taus[] = {23,  48,  79,  109, 113, 127, 163, 191, 229, 251,
                      293, 337, 397, 421, 449, 509, 541, 601, 641, 691};
  for (int j = 0; j < 20; ++j) c.saps.push_back({0.75 + 0.01 * (j + 1), taus[j]});
  return c;
}

VelvetConfig VelvetConfig::reduced() {
  VelvetConfig c;
  c.segment_lengths = {1000, 1000, 2000, 4000};
  c.pulse_distances = {10, 35, 90, 220};
  c.saps = {{0.76, 23}, {0.77, 48}, {0.78, 79}, {0.79, 109}};
  c.order = 2;
  c.initial_order = 2;
  c.delta_order = 2;
  c.n_fft = 512;
  c.bypass_length = 16;
  return c;
}

int VelvetConfig::total_length() const {
  return std::accumulate(segment_lengths.begin(), segment_lengths.end(), 0);
}

std::vector<int> VelvetConfig::offsets() const {
  std::vector<int> d(segment_lengths.size(), 0);
  for (std::size_t i = 1; i < d.size(); ++i) d[i] = d[i - 1] + segment_lengths[i - 1];
  return d;
}

int VelvetConfig::fvn_param_count() const {
  return segments() * sub_segments + 5 * segments() * order + bypass_length;
}

int VelvetConfig::afvn_param_count() const {
  return segments() * sub_segments +
         5 * (initial_order + (segments() - 1) * delta_order) + bypass_length;
}

void VelvetConfig::validate() const {
  const std::size_t s = segment_lengths.size();
  if (s == 0) mismatch("no segments");
  if (pulse_distances.size() != s || saps.size() != s)
    mismatch("segment lengths, pulse distances and allpasses must have equal counts");
  if (sub_segments < 1 || order < 0 || initial_order < 0 || delta_order < 0)
    mismatch("orders must be non-negative and M >= 1");
  if (bypass_length < 0 || bypass_length > total_length())
    mismatch("bypass length out of range");
  if (n_fft < 2 || n_fft % 2 != 0) mismatch("N must be even and >= 2");
  for (std::size_t i = 0; i < s; ++i) {
    if (pulse_distances[i] < 1 || pulse_distances[i] > segment_lengths[i])
      mismatch("pulse distance must lie in [1, L_i]");
    if (segment_lengths[i] < sub_segments) mismatch("segment shorter than M");
    if (!is_valid(saps[i])) mismatch("allpass gain must satisfy |gamma| < 1");
  }
}

VelvetSegment gen_velvet(int avg_distance, int length, std::uint64_t seed) {
  if (avg_distance < 1 || avg_distance > length)
    throw Error(ErrorKind::InvalidInterval,
                "need 1 <= T <= L, got T=" + std::to_string(avg_distance) +
                    " L=" + std::to_string(length));
  std::mt19937_64 rng(seed);
  VelvetSegment v;
  v.length = length;
  v.avg_distance = avg_distance;
  const int full = length / avg_distance;
  const int rest = length - full * avg_distance;
  const int count = full + (2 * rest >= avg_distance && rest > 0 ? 1 : 0);
  std::bernoulli_distribution coin(0.5);
  for (int m = 0; m < count; ++m) {
    const int lo = m * avg_distance;
    const int hi = std::min(lo + avg_distance, length);
    std::uniform_int_distribution<int> pick(lo, hi - 1);
    v.positions.push_back(pick(rng));
    v.signs.push_back(coin(rng) ? 1 : -1);
  }
  return v;
}

std::vector<VelvetSegment> gen_velvets(const VelvetConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<VelvetSegment> out;
  for (int i = 0; i < config.segments(); ++i)
    out.push_back(gen_velvet(config.pulse_distances[static_cast<std::size_t>(i)],
                             config.segment_lengths[static_cast<std::size_t>(i)],
                             mix_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

FirFilter crop_allpass_fir(std::span<const SapParams> saps, std::size_t min_length) {
  if (saps.empty()) return FirFilter{{1.0}};
  int max_tau = 1;
  for (const auto& s : saps) max_tau = std::max(max_tau, s.tau);
  std::size_t len = 1;
  const std::size_t start = std::max<std::size_t>(4 * static_cast<std::size_t>(max_tau) * saps.size(), min_length);
  while (len < start) len <<= 1;
  for (;;) {
    std::vector<AllpassLine> lines;
    for (const auto& s : saps) lines.emplace_back(s);
    std::vector<double> ir(len);
    double energy = 0.0;
    for (std::size_t n = 0; n < len; ++n) {
      double v = n == 0 ? 1.0 : 0.0;
      for (auto& l : lines) v = l.process(v);
      ir[n] = v;
      energy += v * v;
    }
    if (1.0 - energy < 1e-6) return FirFilter{std::move(ir)};
    len <<= 1;
  }
}

FvnParams zero_fvn_params(const VelvetConfig& config) {
  FvnParams p;
  p.gains.assign(static_cast<std::size_t>(config.segments() * config.sub_segments), 0.0);
  p.color.assign(static_cast<std::size_t>(config.segments()),
                 std::vector<SvfParams>(static_cast<std::size_t>(config.order)));
  p.bypass.assign(static_cast<std::size_t>(config.bypass_length), 0.0);
  return p;
}

AfvnParams zero_afvn_params(const VelvetConfig& config) {
  AfvnParams p;
  p.gains.assign(static_cast<std::size_t>(config.segments() * config.sub_segments), 0.0);
  p.initial.assign(static_cast<std::size_t>(config.initial_order), SvfParams{});
  p.delta.assign(static_cast<std::size_t>(config.segments() - 1),
                 std::vector<SvfParams>(static_cast<std::size_t>(config.delta_order)));
  p.bypass.assign(static_cast<std::size_t>(config.bypass_length), 0.0);
  return p;
}

void check_shapes(const FvnParams& p, const VelvetConfig& c) {
  if (p.gains.size() != static_cast<std::size_t>(c.segments() * c.sub_segments))
    mismatch("gain count must be S*M");
  if (p.color.size() != static_cast<std::size_t>(c.segments()))
    mismatch("need one coloration chain per segment");
  for (const auto& chain : p.color)
    if (chain.size() != static_cast<std::size_t>(c.order)) mismatch("chain length must be K");
  if (p.bypass.size() != static_cast<std::size_t>(c.bypass_length))
    mismatch("bypass length must be Z");
}

void check_shapes(const AfvnParams& p, const VelvetConfig& c) {
  if (p.gains.size() != static_cast<std::size_t>(c.segments() * c.sub_segments))
    mismatch("gain count must be S*M");
  if (p.initial.size() != static_cast<std::size_t>(c.initial_order))
    mismatch("initial chain length must be K_1");
  if (p.delta.size() != static_cast<std::size_t>(c.segments() - 1))
    mismatch("need S-1 delta chains");
  for (const auto& chain : p.delta)
    if (chain.size() != static_cast<std::size_t>(c.delta_order))
      mismatch("delta chain length must be K_delta");
  if (p.bypass.size() != static_cast<std::size_t>(c.bypass_length))
    mismatch("bypass length must be Z");
}

VelvetBank::VelvetBank(VelvetConfig config, std::vector<VelvetSegment> velvets)
    : config_(std::move(config)), velvets_(std::move(velvets)) {
  config_.validate();
  if (velvets_.size() != static_cast<std::size_t>(config_.segments()))
    mismatch("velvet count must equal segment count");
  for (std::size_t i = 0; i < velvets_.size(); ++i)
    if (velvets_[i].length != config_.segment_lengths[i] ||
        velvets_[i].avg_distance != config_.pulse_distances[i])
      mismatch("velvet segment " + std::to_string(i) + " does not match the configuration");
  const auto offsets = config_.offsets();
  const int total = config_.total_length();
  for (int i = 0; i < config_.segments(); ++i) {
    auto fir = crop_allpass_fir(std::span<const SapParams>(config_.saps).first(static_cast<std::size_t>(i + 1))).taps;
    fir.resize(std::min<std::size_t>(fir.size(), static_cast<std::size_t>(total - offsets[static_cast<std::size_t>(i)])));
    allpass_.push_back(std::move(fir));
  }
}

VelvetBank::VelvetBank(VelvetConfig config, std::uint64_t seed)
    : VelvetBank(config, gen_velvets(config, seed)) {}

int VelvetBank::sub_segment(int i, int position) const {
  const long long len = config_.segment_lengths[static_cast<std::size_t>(i)];
  return static_cast<int>(static_cast<long long>(position) * config_.sub_segments / len);
}

// ---------------------------------------------------------------------------

DarSegmentEngine::DarSegmentEngine(const VelvetBank& bank)
    : sub_segments_(bank.config().sub_segments),
      n_fft_(bank.config().n_fft),
      total_(bank.config().total_length()) {
  const auto& cfg = bank.config();
  const auto offsets = cfg.offsets();
  for (int i = 0; i < cfg.segments(); ++i) {
    Segment seg;
    seg.offset = offsets[static_cast<std::size_t>(i)];
    seg.length = total_ - seg.offset;
    seg.n = fft::good_size(static_cast<std::size_t>(seg.length + n_fft_ - 1));
    const auto& ap = bank.allpass(i);
    const auto& v = bank.velvets()[static_cast<std::size_t>(i)];
    const std::size_t n1 = fft::good_size(static_cast<std::size_t>(v.length) + ap.size() - 1);
    const auto ap_spec = fft::rfft(ap, n1);
    for (int m = 0; m < sub_segments_; ++m) {
      std::vector<double> dense(static_cast<std::size_t>(v.length), 0.0);
      for (std::size_t p = 0; p < v.positions.size(); ++p)
        if (bank.sub_segment(i, v.positions[p]) == m)
          dense[static_cast<std::size_t>(v.positions[p])] = v.signs[p];
      auto spec = fft::rfft(dense, n1);
      for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= ap_spec[k];
      auto smeared = fft::irfft(spec, n1);
      smeared.resize(static_cast<std::size_t>(seg.length), 0.0);
      seg.sub_spectra.push_back(fft::rfft(smeared, seg.n));
    }
    segments_.push_back(std::move(seg));
  }
}

std::vector<double> DarSegmentEngine::forward(
    std::span<const double> gains, std::span<const std::vector<double>> color_firs) const {
  if (gains.size() != segments_.size() * static_cast<std::size_t>(sub_segments_) ||
      color_firs.size() != segments_.size())
    mismatch("gain or coloration count does not match the segment engine");
  std::vector<double> out(static_cast<std::size_t>(total_), 0.0);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& seg = segments_[i];
    const std::size_t bins = seg.n / 2 + 1;
    seg.last_mix.assign(bins, Complex{});
    for (int m = 0; m < sub_segments_; ++m) {
      const double g = gains[i * static_cast<std::size_t>(sub_segments_) + static_cast<std::size_t>(m)];
      const auto& b = seg.sub_spectra[static_cast<std::size_t>(m)];
      for (std::size_t k = 0; k < bins; ++k) seg.last_mix[k] += g * b[k];
    }
    seg.last_color = fft::rfft(color_firs[i], seg.n);
    std::vector<Complex> prod(bins);
    for (std::size_t k = 0; k < bins; ++k) prod[k] = seg.last_mix[k] * seg.last_color[k];
    const auto y = fft::irfft(prod, seg.n);
    for (int t = 0; t < seg.length; ++t)
      out[static_cast<std::size_t>(seg.offset + t)] += y[static_cast<std::size_t>(t)];
  }
  return out;
}

void DarSegmentEngine::backward(std::span<const double> grad_output,
                                std::span<double> grad_gains,
                                std::vector<std::vector<double>>& grad_color_firs) const {
  grad_color_firs.resize(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& seg = segments_[i];
    const std::size_t bins = seg.n / 2 + 1;
    const auto e = fft::rfft(grad_output.subspan(static_cast<std::size_t>(seg.offset),
                                                 static_cast<std::size_t>(seg.length)),
                             seg.n);
    std::vector<Complex> corr(bins);
    for (std::size_t k = 0; k < bins; ++k) corr[k] = e[k] * std::conj(seg.last_mix[k]);
    auto gc = fft::irfft(corr, seg.n);
    gc.resize(static_cast<std::size_t>(n_fft_));
    grad_color_firs[i] = std::move(gc);

    // Parseval over the half spectrum: <e, y_m> with y_m = b_m * c.
    std::vector<Complex> ec(bins);
    for (std::size_t k = 0; k < bins; ++k) ec[k] = e[k] * std::conj(seg.last_color[k]);
    const double scale = 1.0 / static_cast<double>(seg.n);
    for (int m = 0; m < sub_segments_; ++m) {
      const auto& b = seg.sub_spectra[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = (k == 0 || 2 * k == seg.n) ? 1.0 : 2.0;
        acc += w * (ec[k] * std::conj(b[k])).real();
      }
      grad_gains[i * static_cast<std::size_t>(sub_segments_) + static_cast<std::size_t>(m)] = acc * scale;
    }
  }
}

std::vector<SampledResponse> afvn_colorations(const AfvnParams& params, int n_fft) {
  std::vector<SampledResponse> out;
  SampledResponse running = sample_svf_chain(params.initial, n_fft);
  out.push_back(running);
  for (const auto& d : params.delta) {
    running *= sample_svf_chain(d, n_fft);
    out.push_back(running);
  }
  return out;
}

namespace {

std::vector<double> render_dar(const VelvetBank& bank, std::span<const double> gains,
                               const std::vector<SampledResponse>& colors,
                               std::span<const double> bypass) {
  std::vector<std::vector<double>> firs;
  for (const auto& c : colors) firs.push_back(to_fir(c).taps);
  DarSegmentEngine engine(bank);
  auto out = engine.forward(gains, firs);
  for (std::size_t z = 0; z < bypass.size(); ++z) out[z] += bypass[z];
  return out;
}

}  // namespace

std::vector<double> render_fvn(const FvnParams& params, const VelvetBank& bank,
                               RenderMode mode) {
  check_shapes(params, bank.config());
  const int total = bank.config().total_length();
  if (mode == RenderMode::DAR) {
    std::vector<SampledResponse> colors;
    for (const auto& chain : params.color)
      colors.push_back(sample_svf_chain(chain, bank.config().n_fft));
    return render_dar(bank, params.gains, colors, params.bypass);
  }
  VelvetProcessor proc(params, bank);
  std::vector<double> out(static_cast<std::size_t>(total));
  for (int n = 0; n < total; ++n) out[static_cast<std::size_t>(n)] = proc.process(n == 0 ? 1.0 : 0.0);
  return out;
}

std::vector<double> render_afvn(const AfvnParams& params, const VelvetBank& bank,
                                RenderMode mode) {
  check_shapes(params, bank.config());
  const int total = bank.config().total_length();
  if (mode == RenderMode::DAR)
    return render_dar(bank, params.gains, afvn_colorations(params, bank.config().n_fft),
                      params.bypass);
  VelvetProcessor proc(params, bank);
  std::vector<double> out(static_cast<std::size_t>(total));
  for (int n = 0; n < total; ++n) out[static_cast<std::size_t>(n)] = proc.process(n == 0 ? 1.0 : 0.0);
  return out;
}

// ---------------------------------------------------------------------------

void VelvetProcessor::init_stages(const VelvetBank& bank, std::span<const double> gains) {
  const auto& cfg = bank.config();
  const auto offsets = cfg.offsets();
  for (int i = 0; i < cfg.segments(); ++i) {
    Stage s;
    s.allpass = AllpassLine(cfg.saps[static_cast<std::size_t>(i)]);
    const auto& v = bank.velvets()[static_cast<std::size_t>(i)];
    const int d = offsets[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < v.positions.size(); ++p) {
      const int m = bank.sub_segment(i, v.positions[p]);
      s.taps.push_back(d + v.positions[p]);
      s.weights.push_back(v.signs[p] * gains[static_cast<std::size_t>(i * cfg.sub_segments + m)]);
    }
    s.history.assign(static_cast<std::size_t>(d + v.length), 0.0);
    stages_.push_back(std::move(s));
  }
  velvet_out_.assign(stages_.size(), 0.0);
}

VelvetProcessor::VelvetProcessor(const FvnParams& params, const VelvetBank& bank)
    : bypass_(params.bypass), input_(std::max<std::size_t>(params.bypass.size(), 1), 0.0) {
  check_shapes(params, bank.config());
  init_stages(bank, params.gains);
  for (const auto& chain : params.color) color_.emplace_back(chain);
}

VelvetProcessor::VelvetProcessor(const AfvnParams& params, const VelvetBank& bank)
    : nested_(true), bypass_(params.bypass),
      input_(std::max<std::size_t>(params.bypass.size(), 1), 0.0) {
  check_shapes(params, bank.config());
  init_stages(bank, params.gains);
  color_.emplace_back(params.initial);
  for (const auto& chain : params.delta) color_.emplace_back(chain);
}

double VelvetProcessor::process(double x) {
  input_[pos_] = x;
  double out = 0.0;
  for (std::size_t z = 0; z < bypass_.size(); ++z) {
    const std::size_t idx = pos_ >= z ? pos_ - z : pos_ + input_.size() - z;
    out += bypass_[z] * input_[idx];
  }
  if (++pos_ == input_.size()) pos_ = 0;

  double u = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Stage& s = stages_[i];
    u = s.allpass.process(u);
    const std::size_t len = s.history.size();
    s.history[s.pos] = u;
    double acc = 0.0;
    for (std::size_t p = 0; p < s.taps.size(); ++p) {
      const std::size_t lag = static_cast<std::size_t>(s.taps[p]);
      const std::size_t idx = s.pos >= lag ? s.pos - lag : s.pos + len - lag;
      acc += s.weights[p] * s.history[idx];
    }
    if (++s.pos == len) s.pos = 0;
    velvet_out_[i] = acc;
  }

  if (!nested_) {
    for (std::size_t i = 0; i < stages_.size(); ++i) out += color_[i].process(velvet_out_[i]);
    return out;
  }
  // C_1 (v_1 + C_d2 (v_2 + C_d3 (v_3 + ...)))
  double acc = velvet_out_.back();
  for (std::size_t i = stages_.size() - 1; i-- > 0;) acc = velvet_out_[i] + color_[i + 1].process(acc);
  return out + color_[0].process(acc);
}

// ---------------------------------------------------------------------------

PlausibleFvn random_plausible_fvn(const VelvetConfig& config, std::uint64_t seed,
                                  double perturbation) {
  config.validate();
  plausible::Rng rng(seed);
  PlausibleFvn out;
  out.target_t30 = plausible::log_uniform(rng, 0.05, 8.0);
  out.params = zero_fvn_params(config);
  std::vector<double> energy;
  auto bands = plausible::random_peq(rng, config.order, -18.0, 18.0, 0.2, 5.0, config.sample_rate);
  for (int i = 0; i < config.segments(); ++i) {
    if (i > 0) bands = plausible::drift_peq(rng, bands, 0.3, config.sample_rate);
    auto& chain = out.params.color[static_cast<std::size_t>(i)];
    chain = plausible::to_perturbed_svfs(bands, rng, perturbation);
    energy.push_back(chain_energy(sample_svf_chain(chain, config.n_fft)));
  }
  envelope_gains(config, out.target_t30, energy, out.params.gains);
  out.params.bypass = plausible::bypass_noise(rng, config.bypass_length);
  return out;
}

PlausibleAfvn random_plausible_afvn(const VelvetConfig& config, std::uint64_t seed,
                                    double perturbation) {
  config.validate();
  plausible::Rng rng(seed);
  PlausibleAfvn out;
  out.target_t30 = plausible::log_uniform(rng, 0.05, 8.0);
  out.params = zero_afvn_params(config);
  auto initial = plausible::random_peq(rng, config.initial_order, -18.0, 18.0, 0.2, 5.0,
                                       config.sample_rate);
  out.params.initial = plausible::to_perturbed_svfs(initial, rng, perturbation);
  const auto delta = plausible::random_peq(rng, config.delta_order, -2.0, 0.5, 0.5, 2.0,
                                           config.sample_rate);
  const auto delta_svfs = plausible::to_perturbed_svfs(delta, rng, 0.0);
  for (auto& chain : out.params.delta) {
    chain.clear();
    for (const auto& s : delta_svfs) chain.push_back(plausible::perturb(s, rng, perturbation));
  }
  std::vector<double> energy;
  for (const auto& c : afvn_colorations(out.params, config.n_fft)) energy.push_back(chain_energy(c));
  envelope_gains(config, out.target_t30, energy, out.params.gains);
  out.params.bypass = plausible::bypass_noise(rng, config.bypass_length);
  return out;
}

}  // namespace darverb
