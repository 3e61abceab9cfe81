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


#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "darverb/error.hpp"
#include "darverb/fit.hpp"

using namespace darverb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

class Quadratic : public Objective {
 public:
  explicit Quadratic(std::size_t n) : n_(n) {}
  std::size_t dim() const override { return n_; }
  double value(std::span<const double> x) const override {
    double s = 0.0;
    for (double v : x) s += (v - 3.0) * (v - 3.0);
    return s;
  }
  double value_and_grad(std::span<const double> x, std::span<double> g) const override {
    for (std::size_t i = 0; i < n_; ++i) g[i] = 2.0 * (x[i] - 3.0);
    return value(x);
  }

 private:
  std::size_t n_;
};

class Exploding : public Objective {
 public:
  std::size_t dim() const override { return 1; }
  double value(std::span<const double> x) const override { return x[0] > 0.5 ? std::nan("") : -x[0]; }
  double value_and_grad(std::span<const double> x, std::span<double> g) const override {
    g[0] = -1.0;
    return value(x);
  }
};

}  // namespace

TEST_CASE("scalar activations", "[fit]") {
  CHECK_THAT(softplus2(0.0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(sigmoid(0.0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(logit(sigmoid(1.7)), WithinAbs(1.7, 1e-12));
  double last_sp = -1.0, last_sig = -1.0;
  for (double x = -50.0; x <= 50.0; x += 0.5) {
    CHECK(softplus2(x) > last_sp);
    CHECK(sigmoid(x) >= last_sig);
    last_sp = softplus2(x);
    last_sig = sigmoid(x);
  }
}

TEST_CASE("codec group layouts", "[fit]") {
  const auto v = VelvetConfig::standard();
  CHECK(ParamCodec::fvn(v).size() == 930);
  CHECK(ParamCodec::afvn(v).size() == 360);
  CHECK(ParamCodec::dn(DnConfig{}).size() == 200);
  const auto codec = ParamCodec::fvn(VelvetConfig::reduced());
  RawParams wrong = ParamCodec::afvn(VelvetConfig::reduced()).init_raw(1);
  try {
    codec.check(wrong);
    FAIL("expected LayoutMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LayoutMismatch);
  }
  CHECK_NOTHROW(codec.check(codec.init_raw(1)));
}

TEST_CASE("decode of special raw values", "[fit]") {
  const auto v = VelvetConfig::standard();
  const auto codec = ParamCodec::fvn(v);
  std::vector<double> raw(codec.size(), 0.0);
  const auto& f = codec.group("f");
  raw[f.offset] = -40.0;
  raw[f.offset + 1] = 40.0;
  const auto p = codec.decode_fvn(raw);
  CHECK(p.color[0][2].R == 1.0);  // softplus2(0)
  CHECK(warped_to_hz(p.color[0][0].f, v.sample_rate) < 1e-6);
  CHECK_THAT(warped_to_hz(p.color[0][1].f, v.sample_rate), WithinAbs(v.sample_rate / 2.0, 1e-6));

  const DnConfig dn;
  const auto dcodec = ParamCodec::dn(dn);
  const auto d = dcodec.decode_dn(std::vector<double>(dcodec.size(), 0.0));
  for (const auto& band : d.absorption) CHECK_THAT(band.G, WithinRel(0.1, 1e-12));
}

TEST_CASE("initial decode", "[fit]") {
  const auto v = VelvetConfig::standard();
  const auto codec = ParamCodec::fvn(v);
  const auto raw = codec.init_raw(4).values;
  const auto p = codec.decode_fvn(raw);
  for (const auto& chain : p.color)
    for (int k = 0; k < 8; ++k) {
      const double hz = warped_to_hz(chain[static_cast<std::size_t>(k)].f, v.sample_rate);
      CHECK_THAT(hz, WithinRel(40.0 * std::pow(300.0, k / 7.0), 0.05));  // raw init noise
    }
  // Mixing gains start at (1, 2, 1) with R = 1, which is the identity; the
  // init noise moves each SVF slightly off it.
  for (const auto& s : p.color[3]) {
    const auto h = sample_svf(s, 1024);
    double dev = 0.0;
    for (const auto& x : h.bins()) dev = std::max(dev, std::abs(std::abs(x) - 1.0));
    CHECK(dev > 0.0);
    CHECK(dev < 0.1);
  }
  CHECK(codec.init_raw(4).values == raw);
  CHECK(codec.init_raw(5).values != raw);

  // Absorption starts near unity: 10^-softplus2(-10).
  const auto dcodec = ParamCodec::dn(DnConfig{});
  const auto d = dcodec.decode_dn(dcodec.init_raw(2).values);
  const double expect = std::pow(10.0, -std::log1p(std::exp(-10.0)) / std::log(2.0));
  CHECK_THAT(expect, WithinAbs(0.999849, 1e-6));
  for (const auto& band : d.absorption) CHECK_THAT(band.G, WithinAbs(expect, 1e-5));
}

TEST_CASE("initial DN response rings", "[fit]") {
  const auto cfg = DnConfig::standard();
  const auto codec = ParamCodec::dn(cfg);
  for (std::uint64_t seed : {1u, 2u}) {
    const auto p = codec.decode_dn(codec.init_raw(seed).values);
    const auto ir = render_dn(p, cfg, default_mixing(cfg, seed), DnMode::LTI, static_cast<std::size_t>(cfg.n_fft));
    CHECK(t30(ir) > 0.5);
  }
}

TEST_CASE("decode is total", "[fit]") {
  const auto v = VelvetConfig::reduced();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> wild(-800.0, 800.0);
  for (auto codec : {ParamCodec::fvn(v), ParamCodec::afvn(v), ParamCodec::dn(DnConfig::reduced())}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> raw(codec.size());
      for (auto& x : raw) x = wild(rng);
      if (codec.model() == Model::FVN) {
        for (const auto& chain : codec.decode_fvn(raw).color)
          for (const auto& s : chain) CHECK(is_valid(s));
      } else if (codec.model() == Model::AFVN) {
        const auto p = codec.decode_afvn(raw);
        for (const auto& s : p.initial) CHECK(is_valid(s));
      } else {
        const auto p = codec.decode_dn(raw);
        for (const auto& band : p.absorption) {
          CHECK(is_valid(band));
          CHECK(band.G <= 1.0);
        }
        for (const auto& row : p.sap_gamma)
          for (double g : row) CHECK(std::abs(g) < 1.0);
      }
    }
  }
}

TEST_CASE("finite differences", "[fit]") {
  const std::vector<double> x{0.5, -1.5, 2.0};
  const auto g = grad_fd([](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1] + v[2] * v[2]; }, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK_THAT(g[i], WithinAbs(2.0 * x[i], 1e-6));
  for (double v : grad_fd([](std::span<const double>) { return 4.0; }, x)) CHECK(v == 0.0);
}

TEST_CASE("one-SVF toy gradient", "[fit]") {
  const int n = 1024;
  std::vector<double> ref = to_fir(sample_svf({0.2, 0.3, 1.0, 0.5, 0.2}, n)).taps;
  const SvfToyObjective obj(ref, n);
  const std::vector<double> raw{-0.8, 0.4, 0.7, 1.5, 0.9};
  const auto analytic = grad_analytic(obj, raw);
  const auto fd = grad_fd([&](std::span<const double> x) { return obj.value(x); }, raw, 1e-6);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK_THAT(analytic[i], WithinRel(fd[i], 1e-4));
}

TEST_CASE("delay gain gradient has the least-squares closed form", "[fit]") {
  const int n = 64;
  std::vector<double> r(static_cast<std::size_t>(n));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (auto& v : r) v = g(rng);
  const DelayGainObjective obj(to_response(r, n), 70);  // wraps to tap 6
  for (double gain : {-1.0, 0.3, 2.5}) {
    const std::vector<double> raw{gain};
    CHECK_THAT(grad_analytic(obj, raw)[0], WithinAbs(2.0 * (gain - r[6]), 1e-12));
  }
}

TEST_CASE("gradient check helper", "[fit]") {
  const auto problem = gradcheck_problem(Model::FVN, true, 3);
  REQUIRE(problem.codec.size() == 72);
  std::vector<std::size_t> coords{0, 5, 20, 60};
  const auto report = gradient_check(*problem.objective, problem.codec, problem.raw, coords);
  CHECK(report.entries.size() == 4);
  CHECK(report.failures == 0);
  CHECK(report.entries[0].group == "g");
  CHECK(report.entries[3].group == "h0");
  const std::vector<std::size_t> outside{72};
  CHECK_THROWS_AS(gradient_check(*problem.objective, problem.codec, problem.raw, outside), Error);
}

TEST_CASE("Adam", "[fit]") {
  const Quadratic q(4);
  FitOptions o;
  o.steps = 3000;
  o.learning_rate = 0.05;
  o.final_learning_rate = 1e-4;
  int calls = 0;
  o.on_step = [&](int, double) { ++calls; };
  const auto r = fit(q, std::vector<double>(4, 0.0), o);
  CHECK(calls == 3000);
  CHECK(r.trace.size() == 3000);
  CHECK(r.initial_loss == 36.0);
  CHECK(r.best_loss < 1e-6);
  for (double v : r.best_raw) CHECK_THAT(v, WithinAbs(3.0, 1e-3));

  const Exploding boom;
  FitOptions fast;
  fast.steps = 100;
  fast.learning_rate = 0.1;
  try {
    fit(boom, {0.0}, fast);
    FAIL("expected Diverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
  }
  CHECK_THROWS_AS(fit(q, {1.0}, fast), Error);
}

TEST_CASE("model names", "[fit]") {
  CHECK(parse_model("afvn") == Model::AFVN);
  CHECK(std::string(to_string(Model::DN)) == "dn");
  CHECK_THROWS_AS(parse_model("fdn"), Error);
}
