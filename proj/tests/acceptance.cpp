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


// Acceptance checks. Each criterion prints one PASS/FAIL line with the
// measured figures; tolerances are the constants below and are not tuned
// per run. Usage: acceptance [criterion...] (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "darverb/analysis.hpp"
#include "darverb/delay_network.hpp"
#include "darverb/error.hpp"
#include "darverb/filter_kit.hpp"
#include "darverb/fit.hpp"
#include "darverb/freq_sampling.hpp"
#include "darverb/io.hpp"
#include "darverb/velvet_reverb.hpp"

using namespace darverb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> poly_conv(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> out(x.size() + y.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) out[i + j] += x[i] * y[j];
  return out;
}

SvfParams random_svf(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> f(0.01, 5.0), r(0.1, 3.0), m(-2.0, 2.0);
  return {f(rng), r(rng), m(rng), m(rng), m(rng)};
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    const double x = i < a.size() ? a[i] : 0.0, y = i < b.size() ? b[i] : 0.0;
    d = std::max(d, std::abs(x - y));
  }
  return d;
}

double rel_diff(double a, double ref) { return std::abs(a - ref) / ref; }

// ------------------------------------------------------------------ 1

constexpr double kOnePoleTol = 1e-10;
constexpr double kChainTol = 1e-9;
constexpr double kC1Seconds = 1.0;

Outcome frequency_sampling_exactness() {
  const std::vector<double> b{1.0}, a{1.0, -0.5};
  const auto taps = to_fir(sample_rational(b, a, 8)).taps;
  double one_pole = 0.0;
  for (int n = 0; n < 8; ++n)
    one_pole = std::max(one_pole, std::abs(taps[static_cast<std::size_t>(n)] - std::pow(0.5, n) / (1.0 - std::pow(0.5, 8))));

  std::mt19937_64 rng(101);
  double chains = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> nb{1.0}, na{1.0};
    for (int i = 0; i < 1 + trial % 4; ++i) {
      const auto bq = svf_to_biquad(random_svf(rng));
      nb = poly_conv(nb, {bq.b.begin(), bq.b.end()});
      na = poly_conv(na, {bq.a.begin(), bq.a.end()});
    }
    const int n = 64;
    const std::size_t horizon = 1 << 16;
    const auto h = impulse_response({nb, na}, horizon);
    const auto oracle = alias_oracle([&](std::size_t i) { return h[i]; }, n, horizon);
    chains = std::max(chains, max_diff(oracle.taps, to_fir(sample_rational(nb, na, n)).taps));
  }
  return {one_pole < kOnePoleTol && chains < kChainTol,
          fmt("one-pole N=8 max error %.2e (tol %.0e), 100 SVF chains max error %.2e (tol %.0e)", one_pole,
              kOnePoleTol, chains, kChainTol)};
}

// ------------------------------------------------------------------ 2

constexpr double kSlopeTol = 0.05;

Outcome aliasing_slope() {
  std::vector<int> ns;
  for (int n = 64; n <= 512; n += 64) ns.push_back(n);
  const auto filter = PoleSet::repeated_real(0.9, 1).to_rational();
  const std::vector<double> rb{1.0}, ra{1.0, 0.5};
  const auto report = bound_suite(filter, sample_rational(rb, ra, 512), ns, 0);
  const double expect = std::log(0.9);
  const double err = std::abs(report.slope - expect) / std::abs(expect);
  return {err < kSlopeTol, fmt("slope %.6f vs ln 0.9 = %.6f, relative error %.2f%% (tol %.0f%%)", report.slope,
                               expect, 100.0 * err, 100.0 * kSlopeTol)};
}

// ------------------------------------------------------------------ 3

constexpr double kLossSlack = 1e-12;

Outcome loss_error_bound() {
  std::mt19937_64 rng(303);
  const std::vector<int> choices{16, 32, 64, 128};
  std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
  int violations = 0, triangle_violations = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto bq = svf_to_biquad(random_svf(rng));
    const RationalFilter f{{bq.b.begin(), bq.b.end()}, {bq.a.begin(), bq.a.end()}};
    const int n = choices[pick(rng)];
    const auto ref = sample_svf(random_svf(rng), n);
    const std::vector<int> ns{n};
    const auto r = bound_suite(f, ref, ns, 0).records.front();
    const double bound = r.aliasing_error * r.aliasing_error;
    if (r.loss_error > bound + kLossSlack) ++violations;
    if (r.triangle_gap > r.aliasing_error * (1.0 + 1e-9) + 1e-15) ++triangle_violations;
    if (bound > 0.0) worst_ratio = std::max(worst_ratio, r.loss_error / bound);
  }
  return {violations == 0,
          fmt("%d/100 triples with |L(H)-L(H_N)| > ||H-H_N||^2 + %.0e (worst ratio %.3g); "
              "triangle form | ||R-H|| - ||R-H_N|| | <= ||H-H_N|| violated %d/100",
              violations, kLossSlack, worst_ratio, triangle_violations)};
}

// ------------------------------------------------------------------ 4

constexpr int kGradCoords = 50;
constexpr double kC4Seconds = 120.0;

Outcome gradient_contract() {
  std::string detail;
  bool pass = true;
  for (Model m : {Model::FVN, Model::AFVN, Model::DN}) {
    const auto problem = gradcheck_problem(m, true, 1);
    std::mt19937_64 rng(404);
    std::vector<std::size_t> coords(problem.codec.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<std::size_t>(kGradCoords, coords.size()));
    const auto report = gradient_check(*problem.objective, problem.codec, problem.raw, coords);
    pass = pass && report.failures == 0;
    detail += fmt("%s %d/%zu fail (max rel %.1e); ", to_string(m), report.failures, coords.size(), report.max_error);
  }
  std::vector<int> ns{64, 128, 256, 512, 1024};
  const auto filter = PoleSet::repeated_real(0.9, 1).to_rational();
  const std::vector<double> rb{1.0}, ra{1.0, 0.5};
  const auto report = bound_suite(filter, sample_rational(rb, ra, 1024), ns, filter.b.size() + 1);
  bool decreasing = true;
  std::string errs;
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    errs += fmt("%s%.1e", i ? "," : "", report.records[i].grad_error);
    // Below 1e-12 the central difference is at rounding level.
    if (i > 0 && report.records[i - 1].grad_error >= 1e-12 &&
        report.records[i].grad_error >= report.records[i - 1].grad_error)
      decreasing = false;
  }
  pass = pass && decreasing;
  detail += fmt("one-pole gradient error over N=64..1024: %s (%s)", errs.c_str(),
                decreasing ? "decreasing" : "not decreasing");
  return {pass, detail};
}

// ------------------------------------------------------------------ 5

constexpr double kEdrCellDb = 3.0;
constexpr double kEdrFloorDb = -40.0;
constexpr double kEdrFirstFrameDb = 0.5;
constexpr int kPresets = 10;

struct EdrFidelity {
  double worst_cell = 0.0;        // above the floor
  double worst_first = 0.0;       // all bins
  double worst_first_above = 0.0;  // bins above the floor at frame 0
};

EdrFidelity edr_fidelity(std::span<const double> ar, std::span<const double> dar) {
  const auto ea = edr(ar), ed = edr(dar);
  const auto err = edr_error(ea, ed);
  double peak = 0.0;
  for (double v : ea.values) peak = std::max(peak, v);
  const double floor = peak * std::pow(10.0, kEdrFloorDb / 10.0);
  EdrFidelity f;
  for (int k = 0; k < ea.bins; ++k) {
    f.worst_first = std::max(f.worst_first, std::abs(err.at(k, 0)));
    if (ea.at(k, 0) > floor) f.worst_first_above = std::max(f.worst_first_above, std::abs(err.at(k, 0)));
    for (int n = 0; n < ea.frames; ++n)
      if (ea.at(k, n) > floor) f.worst_cell = std::max(f.worst_cell, std::abs(err.at(k, n)));
  }
  return f;
}

Outcome ar_dar_fidelity() {
  const auto cfg = VelvetConfig::standard();
  EdrFidelity worst;
  int bad_presets = 0;
  for (int model = 0; model < 2; ++model) {
    for (int seed = 0; seed < kPresets; ++seed) {
      const VelvetBank bank(cfg, static_cast<std::uint64_t>(seed));
      std::vector<double> ar, dar;
      if (model == 0) {
        const auto p = random_plausible_fvn(cfg, static_cast<std::uint64_t>(seed)).params;
        ar = render_fvn(p, bank, RenderMode::AR);
        dar = render_fvn(p, bank, RenderMode::DAR);
      } else {
        const auto p = random_plausible_afvn(cfg, static_cast<std::uint64_t>(seed)).params;
        ar = render_afvn(p, bank, RenderMode::AR);
        dar = render_afvn(p, bank, RenderMode::DAR);
      }
      const auto f = edr_fidelity(ar, dar);
      if (f.worst_cell > kEdrCellDb || f.worst_first >= kEdrFirstFrameDb) ++bad_presets;
      worst.worst_cell = std::max(worst.worst_cell, f.worst_cell);
      worst.worst_first = std::max(worst.worst_first, f.worst_first);
      worst.worst_first_above = std::max(worst.worst_first_above, f.worst_first_above);
    }
  }
  return {bad_presets == 0,
          fmt("%d/%d FVN+AFVN presets out of tolerance; worst |E| above %.0f dB %.2f dB (tol %.0f); "
              "worst |E[k,0]| %.3f dB over all bins, %.3f dB over bins above %.0f dB (tol %.1f)",
              bad_presets, 2 * kPresets, kEdrFloorDb, worst.worst_cell, kEdrCellDb, worst.worst_first,
              worst.worst_first_above, kEdrFloorDb, kEdrFirstFrameDb)};
}

// ------------------------------------------------------------------ 6

constexpr double kDarT30Tol = 0.03;
constexpr double kTvT30Tol = 0.05;
constexpr double kMaxPresetT30 = 2.0;

Outcome dn_mode_consistency() {
  const auto cfg = DnConfig::standard();
  const auto length = static_cast<std::size_t>(cfg.n_fft);
  double worst_dar = 0.0, worst_tv = 0.0;
  int used = 0, drawn = 0;
  for (std::uint64_t seed = 0; used < kPresets && seed < 200; ++seed) {
    ++drawn;
    const auto p = dn_random_plausible(cfg, seed);
    const auto mix = default_mixing(cfg, seed);
    const double lti = t30(render_dn(p, cfg, mix, DnMode::LTI, length));
    if (lti > kMaxPresetT30) continue;
    ++used;
    worst_dar = std::max(worst_dar, rel_diff(t30(render_dn(p, cfg, mix, DnMode::DAR, length)), lti));
    worst_tv = std::max(worst_tv, rel_diff(t30(render_dn(p, cfg, mix, DnMode::TV, length)), lti));
  }
  return {used == kPresets && worst_dar < kDarT30Tol && worst_tv < kTvT30Tol,
          fmt("%d presets with T30 <= %.0f s (%d drawn); worst dT30 LTI/DAR %.2f%% (tol %.0f%%), LTI/TV %.2f%% "
              "(tol %.0f%%)",
              used, kMaxPresetT30, drawn, 100.0 * worst_dar, 100.0 * kDarT30Tol, 100.0 * worst_tv,
              100.0 * kTvT30Tol)};
}

// ------------------------------------------------------------------ 7

Outcome resolution_monotonicity() {
  const std::vector<int> ns{500, 1000, 2000, 4000};
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    auto cfg = VelvetConfig::standard();
    const auto p = random_plausible_fvn(cfg, seed).params;
    const VelvetBank base(cfg, seed);
    const auto reference = render_fvn(random_plausible_fvn(cfg, seed + 100).params, base, RenderMode::AR);
    const MatchLoss loss(reference);
    const double l_ar = loss.value(render_fvn(p, base, RenderMode::AR));
    std::vector<double> gaps;
    for (int n : ns) {
      cfg.n_fft = n;
      const VelvetBank bank(cfg, seed);
      gaps.push_back(std::abs(l_ar - loss.value(render_fvn(p, bank, RenderMode::DAR))));
    }
    bool mono = true;
    for (std::size_t i = 1; i < gaps.size(); ++i) mono = mono && gaps[i] < gaps[i - 1];
    pass = pass && mono;
    detail += fmt("preset %d: %.2e %.2e %.2e %.2e%s; ", static_cast<int>(seed), gaps[0], gaps[1], gaps[2], gaps[3],
                  mono ? "" : " (not monotone)");
  }
  return {pass, "|L(AR)-L(DAR)| for N=500,1000,2000,4000 " + detail};
}

// ------------------------------------------------------------------ 8

constexpr double kFitLossRatio = 0.1;
constexpr double kFvnFitT30Tol = 0.05;
constexpr double kDnFitT30Tol = 0.10;
constexpr std::uint64_t kFvnFitPreset = 0;
constexpr int kFvnFitSteps = 2000;
constexpr int kDnFitSteps = 2000;

Outcome self_consistency_fit() {
  // FVN refitted to its own render from a fresh initialization.
  const auto cfg = VelvetConfig::standard();
  auto bank = std::make_shared<const VelvetBank>(cfg, 3);
  const auto target = normalize_energy(render_fvn(random_plausible_fvn(cfg, kFvnFitPreset).params, *bank, RenderMode::DAR));
  FvnObjective fvn(bank, target);
  FitOptions o = default_fit_options(fvn.codec());
  o.steps = kFvnFitSteps;
  const auto r = fit(fvn, fvn.codec().init_raw(5).values, o);
  fvn.value(fvn.codec().init_raw(5).values);
  const double match0 = fvn.last_report().match;
  fvn.value(r.best_raw);
  const double match1 = fvn.last_report().match;
  const double fvn_t30 = rel_diff(t30(render_fvn(fvn.codec().decode_fvn(r.best_raw), *bank, RenderMode::DAR)), t30(target));

  // DN fitted to noise with an exact 60 dB per second decay.
  const auto dcfg = DnConfig::standard();
  std::mt19937_64 rng(808);
  std::normal_distribution<double> noise;
  std::vector<double> exp_ir(static_cast<std::size_t>(dcfg.n_fft));
  for (std::size_t n = 0; n < exp_ir.size(); ++n)
    exp_ir[n] = noise(rng) * std::pow(10.0, -3.0 * static_cast<double>(n) / dcfg.sample_rate);
  exp_ir = normalize_energy(exp_ir);
  const auto mix = default_mixing(dcfg, 1);
  DnObjective dn(dcfg, mix.q0, exp_ir);
  FitOptions d = default_fit_options(dn.codec());
  d.steps = kDnFitSteps;
  const auto rd = fit(dn, dn.codec().init_raw(1).values, d);
  const auto fitted = render_dn(dn.codec().decode_dn(rd.best_raw), dcfg, mix, DnMode::LTI, exp_ir.size());
  const double dn_t30 = rel_diff(t30(fitted), t30(exp_ir));

  const double ratio = match1 / match0;
  return {ratio <= kFitLossRatio && fvn_t30 < kFvnFitT30Tol && dn_t30 < kDnFitT30Tol,
          fmt("FVN %d steps: match loss ratio %.4f (tol %.1f), dT30 %.2f%% (tol %.0f%%); DN %d steps on a 1 s "
              "exponential: T30 %.3f s vs %.3f s, dT30 %.2f%% (tol %.0f%%)",
              kFvnFitSteps, ratio, kFitLossRatio, 100.0 * fvn_t30, 100.0 * kFvnFitT30Tol, kDnFitSteps, t30(fitted),
              t30(exp_ir), 100.0 * dn_t30, 100.0 * kDnFitT30Tol)};
}

// ------------------------------------------------------------------ 9

constexpr double kFlopTol = 0.25;

Outcome structural_audits() {
  const auto v = VelvetConfig::standard();
  const auto dn = DnConfig::standard();
  const std::size_t fvn = ParamCodec::fvn(v).size(), afvn = ParamCodec::afvn(v).size(),
                    dnc = ParamCodec::dn(dn).size();
  const bool counts = fvn == 930 && afvn == 360 && dnc == 200;
  const bool delays = dn.effective_delays() == std::vector<int>{1205, 1291, 1399, 1437, 1547, 1583};
  const Matrix r = default_mixing(dn, 1).rotation.matrix();
  Matrix acc = Matrix::identity(r.n);
  for (int n = 0; n < 30000; ++n) acc = acc * r;
  const double rot = max_abs_diff(acc, Matrix::identity(r.n));
  const std::vector<std::pair<long long, long long>> flops{
      {flop_audit(Model::FVN, FlopMode::AR).total, 2166},
      {flop_audit(Model::AFVN, FlopMode::AR).total, 1511},
      {flop_audit(Model::DN, FlopMode::LTI).total, 889},
      {flop_audit(Model::DN, FlopMode::TV).total, 1285}};
  bool flops_ok = true;
  std::string f;
  for (const auto& [got, want] : flops) {
    const double dev = static_cast<double>(got - want) / static_cast<double>(want);
    flops_ok = flops_ok && std::abs(dev) <= kFlopTol;
    f += fmt(" %lld/%lld (%+.0f%%)", got, want, 100.0 * dev);
  }
  return {counts && delays && rot < 1e-9 && flops_ok,
          fmt("ARPs %zu/%zu/%zu, effective delays %s, |R^30000 - I| %.1e, FLOPs FVN/AFVN/LTI/TV%s", fvn, afvn, dnc,
              delays ? "exact" : "WRONG", rot, f.c_str())};
}

// ------------------------------------------------------------------ 10

constexpr double kT30Tol = 0.02;

Outcome metric_oracles() {
  const double fs = kDefaultSampleRate;
  std::vector<double> decay(static_cast<std::size_t>(2 * fs));
  for (std::size_t n = 0; n < decay.size(); ++n) decay[n] = std::pow(10.0, -3.0 * static_cast<double>(n) / fs);
  const double t = t30(decay);

  std::vector<double> split(static_cast<std::size_t>(fs / 5), 0.0);
  split[0] = 1.0;
  split[static_cast<std::size_t>(0.1 * fs)] = 1.0;
  const double c50 = energy_ratio_db(split, 0.050);

  const auto cfg = DnConfig::standard();
  const auto ir = render_dn(dn_random_plausible(cfg, 4), cfg, default_mixing(cfg, 4), DnMode::LTI, 96000);
  const auto a = reverb_params(ir);
  double worst = 0.0;
  for (double s : {1e-3, 0.37, 25.0}) {
    std::vector<double> scaled(ir);
    for (double& x : scaled) x *= s;
    const auto b = reverb_params(scaled);
    auto diff = [](double x, double y) { return std::isnan(x) && std::isnan(y) ? 0.0 : std::abs(x - y); };
    worst = std::max({worst, diff(a.full.t30, b.full.t30), diff(a.full.drr, b.full.drr), diff(a.full.c50, b.full.c50)});
    for (std::size_t i = 0; i < a.bands.size(); ++i)
      worst = std::max({worst, diff(a.bands[i].t30, b.bands[i].t30), diff(a.bands[i].drr, b.bands[i].drr),
                        diff(a.bands[i].c50, b.bands[i].c50)});
  }
  return {rel_diff(t, 1.0) <= kT30Tol && std::abs(c50) < 1e-9 && worst < 1e-9,
          fmt("T30 of a 60 dB/s decay %.4f s (tol %.0f%%), C50 of an equal split %.2e dB, "
              "max metric change under scaling %.1e",
              t, 100.0 * kT30Tol, c50, worst)};
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, Criterion> criteria{
      {1, {"frequency-sampling exactness", kC1Seconds, frequency_sampling_exactness}},
      {2, {"aliasing error slope", 5.0, aliasing_slope}},
      {3, {"loss error bound", 0.0, loss_error_bound}},
      {4, {"gradient contract", kC4Seconds, gradient_contract}},
      {5, {"AR/DAR fidelity (FVN, AFVN)", 300.0, ar_dar_fidelity}},
      {6, {"DN mode consistency", 600.0, dn_mode_consistency}},
      {7, {"resolution monotonicity", 0.0, resolution_monotonicity}},
      {8, {"self-consistency fit", 0.0, self_consistency_fit}},
      {9, {"structural audits", 0.0, structural_audits}},
      {10, {"metric oracles", 0.0, metric_oracles}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, c] : criteria) selected.push_back(id);

  int failed = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 1;
    }
    const auto& c = it->second;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      out.pass = false;
      out.detail += fmt("; runtime over %.0f s", c.budget_seconds);
    }
    std::printf("[%s] %2d %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
