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

// Randomized, plausible-sounding parameter draws shared by the velvet and
// delay-network reverberators.

#include <random>
#include <vector>

#include "darverb/filter_kit.hpp"

namespace darverb::plausible {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
double log_uniform(Rng& rng, double lo, double hi);
double db_to_gain(double db);

/// One low shelf, K-2 peaks and one high shelf (K >= 2). Cutoffs are drawn
/// log-uniform in [40 Hz, 16 kHz) and sorted, resonances log-uniform in
/// [r_lo, r_hi) and gains uniform in [g_lo_db, g_hi_db).
std::vector<PeqBand> random_peq(Rng& rng, int order, double g_lo_db,
                                double g_hi_db, double r_lo = 0.2,
                                double r_hi = 5.0,
                                double sample_rate = kDefaultSampleRate);

/// Small drift of an existing PEQ: cutoffs and resonances move by a few
/// percent, gains by a fraction of a dB, high shelves darken by `darken_db`.
std::vector<PeqBand> drift_peq(Rng& rng, std::vector<PeqBand> bands,
                               double darken_db,
                               double sample_rate = kDefaultSampleRate);

/// Multiplies every SVF field by (1 + u), u ~ U[-rel, rel]. f and R stay
/// positive for rel < 1.
SvfParams perturb(const SvfParams& svf, Rng& rng, double rel);

std::vector<SvfParams> to_perturbed_svfs(const std::vector<PeqBand>& bands,
                                         Rng& rng, double rel);

/// Uniform noise of peak amplitude 10^(g/20), g ~ U[-24, 0) dB.
std::vector<double> bypass_noise(Rng& rng, int length);

}  // namespace darverb::plausible
