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

#include "darverb/plausible.hpp"

#include <algorithm>
#include <cmath>

namespace darverb::plausible {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

std::vector<PeqBand> random_peq(Rng& rng, int order, double g_lo_db,
                                double g_hi_db, double r_lo, double r_hi,
                                double sample_rate) {
  std::vector<double> cutoffs(static_cast<std::size_t>(order));
  for (auto& c : cutoffs) c = log_uniform(rng, 40.0, 16000.0);
  std::sort(cutoffs.begin(), cutoffs.end());
  std::vector<PeqBand> bands;
  for (int k = 0; k < order; ++k) {
    PeqBand b;
    b.kind = k == 0 ? PeqKind::LowShelf
                    : (k == order - 1 ? PeqKind::HighShelf : PeqKind::Peak);
    b.f = hz_to_warped(cutoffs[static_cast<std::size_t>(k)], sample_rate);
    b.R = log_uniform(rng, r_lo, r_hi);
    b.G = db_to_gain(uniform(rng, g_lo_db, g_hi_db));
    bands.push_back(b);
  }
  return bands;
}

std::vector<PeqBand> drift_peq(Rng& rng, std::vector<PeqBand> bands,
                               double darken_db, double sample_rate) {
  const double nyquist_guard = 0.45 * sample_rate;
  for (auto& b : bands) {
    double hz = warped_to_hz(b.f, sample_rate) * std::exp(uniform(rng, -0.05, 0.05));
    b.f = hz_to_warped(std::clamp(hz, 20.0, nyquist_guard), sample_rate);
    b.R *= std::exp(uniform(rng, -0.05, 0.05));
    double db = 20.0 * std::log10(b.G) + uniform(rng, -0.5, 0.5);
    if (b.kind == PeqKind::HighShelf) db -= darken_db;
    b.G = db_to_gain(db);
  }
  return bands;
}

SvfParams perturb(const SvfParams& svf, Rng& rng, double rel) {
  auto jitter = [&](double v) { return v * (1.0 + uniform(rng, -rel, rel)); };
  return {jitter(svf.f), jitter(svf.R), jitter(svf.mLP), jitter(svf.mBP),
          jitter(svf.mHP)};
}

std::vector<SvfParams> to_perturbed_svfs(const std::vector<PeqBand>& bands,
                                         Rng& rng, double rel) {
  std::vector<SvfParams> out;
  for (const auto& b : bands) out.push_back(perturb(peq_band_to_svf(b), rng, rel));
  return out;
}

std::vector<double> bypass_noise(Rng& rng, int length) {
  const double amp = db_to_gain(uniform(rng, -24.0, 0.0));
  std::vector<double> out(static_cast<std::size_t>(length));
  for (auto& v : out) v = amp * uniform(rng, -1.0, 1.0);
  return out;
}

}  // namespace darverb::plausible
