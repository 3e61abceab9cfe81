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

#include <random>

#include "darverb/fit.hpp"

using namespace darverb;

namespace {

// Relative error with an absolute fallback for tiny coordinates.
bool close(double analytic, double fd, double rel) {
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  if (scale < 1e-8) return std::abs(analytic - fd) < 1e-8;
  return std::abs(analytic - fd) <= rel * scale;
}

std::vector<std::size_t> pick_coords(std::size_t dim, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> all(dim);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(dim, count));
  return all;
}

void check_objective(const Objective& obj, const std::vector<double>& raw, std::size_t count) {
  const auto analytic = grad_analytic(obj, raw);
  const auto coords = pick_coords(obj.dim(), count, 7);
  // The match loss is piecewise smooth (L1 over cells); a small step keeps
  // the stencil from straddling kinks.
  const auto fd = grad_fd([&](std::span<const double> x) { return obj.value(x); }, raw, coords, 1e-5);
  int bad = 0;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    if (!close(analytic[coords[j]], fd[j], 1e-3)) {
      ++bad;
      UNSCOPED_INFO("coord " << coords[j] << " analytic " << analytic[coords[j]] << " fd " << fd[j]);
    }
  }
  CHECK(bad == 0);
}

}  // namespace

TEST_CASE("FVN gradient matches finite differences", "[fit]") {
  auto bank = std::make_shared<const VelvetBank>(VelvetConfig::reduced(), 3);
  const auto target = render_fvn(random_plausible_fvn(bank->config(), 11).params, *bank, RenderMode::DAR);
  FvnObjective obj(bank, target);
  const auto raw = obj.codec().init_raw(5).values;
  check_objective(obj, raw, 400);
}

TEST_CASE("AFVN gradient matches finite differences", "[fit]") {
  auto bank = std::make_shared<const VelvetBank>(VelvetConfig::reduced(), 3);
  const auto target = render_afvn(random_plausible_afvn(bank->config(), 12).params, *bank, RenderMode::DAR);
  AfvnObjective obj(bank, target);
  const auto raw = obj.codec().init_raw(6).values;
  check_objective(obj, raw, 400);
}

TEST_CASE("DN gradient matches finite differences", "[fit]") {
  const auto cfg = DnConfig::reduced();
  const auto mix = default_mixing(cfg, 1);
  const auto target = render_dn(dn_random_plausible(cfg, 4), cfg, mix, DnMode::DAR, static_cast<std::size_t>(cfg.n_fft));
  DnObjective obj(cfg, mix.q0, target);
  auto raw = obj.codec().init_raw(8).values;
  // Near-lossless absorption leaves the loop matrix nearly singular and the
  // loss dominated by rounding, so check at a moderately damped point.
  const auto& g = obj.codec().group("G_abs");
  for (std::size_t i = 0; i < g.size(); ++i) raw[g.offset + i] = -3.0;
  check_objective(obj, raw, 400);
}
