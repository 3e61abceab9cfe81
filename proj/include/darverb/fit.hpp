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

// Gradient-based analysis-synthesis. Unconstrained raw vectors are mapped
// to valid reverberator parameters by per-group activations, rendered
// through the frequency-sampled models, scored against a reference and
// optimized with Adam using hand-written reverse-mode gradients.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "darverb/analysis.hpp"
#include "darverb/delay_network.hpp"
#include "darverb/velvet_reverb.hpp"

namespace darverb {

enum class Model { FVN, AFVN, DN };

const char* to_string(Model m);
/// Accepts "fvn", "afvn", "dn". Throws InvalidArgument.
Model parse_model(const std::string& name);

enum class Activation {
  Identity,
  Softplus,       ///< log(1 + e^x) / log 2
  PeqResonance,   ///< softplus, plus sqrt(2)/2 on the first and last column
  Cutoff,         ///< tan(pi sigmoid(x) / 2)
  Absorption,     ///< 10^-softplus(x)
  Sigmoid,
};

double softplus2(double x);
double sigmoid(double x);
double logit(double p);

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  int rows = 1;
  int cols = 1;
  Activation activation = Activation::Identity;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct RawParams {
  std::vector<double> values;
  std::vector<std::string> group_names;
};

class ParamCodec {
 public:
  static ParamCodec fvn(const VelvetConfig& config);
  static ParamCodec afvn(const VelvetConfig& config);
  static ParamCodec dn(const DnConfig& config);

  Model model() const { return model_; }
  std::size_t size() const { return size_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(const std::string& name) const;

  /// Biases per group plus N(0, 0.01) noise. Deterministic given seed.
  RawParams init_raw(std::uint64_t seed) const;

  /// Elementwise activations of a raw vector (same layout).
  std::vector<double> activate(std::span<const double> raw) const;
  /// Multiplies dL/d(activated) by the activation derivatives in place.
  void chain_rule(std::span<const double> raw, std::span<double> grad) const;

  FvnParams decode_fvn(std::span<const double> raw) const;
  AfvnParams decode_afvn(std::span<const double> raw) const;
  DnParams decode_dn(std::span<const double> raw) const;
  /// Throws LayoutMismatch when the raw layout differs from this codec.
  void check(const RawParams& raw) const;

  /// Parameter-space gradients laid out like a raw vector.
  std::vector<double> flatten(const FvnParams& grad) const;
  std::vector<double> flatten(const AfvnParams& grad) const;
  std::vector<double> flatten(const DnParams& grad) const;

 private:
  ParamGroup& add(const std::string& name, int rows, int cols, Activation act);
  void write_svfs(std::vector<double>& flat, const std::string& prefix,
                  const std::vector<std::vector<SvfParams>>& chains) const;
  std::vector<std::vector<SvfParams>> read_svfs(std::span<const double> act,
                                                const std::string& prefix) const;

  Model model_ = Model::FVN;
  std::size_t size_ = 0;
  std::vector<ParamGroup> groups_;
  VelvetConfig velvet_;
  DnConfig dn_;
};

/// Scalar objective over a raw vector.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t dim() const = 0;
  virtual double value(std::span<const double> raw) const = 0;
  /// Fills grad (size dim()) with dL/draw.
  virtual double value_and_grad(std::span<const double> raw, std::span<double> grad) const = 0;
  /// Loss terms of the last evaluation.
  virtual LossReport last_report() const { return {}; }
};

/// Match loss of the DAR FVN render plus beta times the SVF decay regularizer.
class FvnObjective : public Objective {
 public:
  FvnObjective(std::shared_ptr<const VelvetBank> bank, std::span<const double> reference,
               double beta = 1.0);
  std::size_t dim() const override { return codec_.size(); }
  double value(std::span<const double> raw) const override;
  double value_and_grad(std::span<const double> raw, std::span<double> grad) const override;
  LossReport last_report() const override { return report_; }
  const ParamCodec& codec() const { return codec_; }

 private:
  double evaluate(std::span<const double> raw, double* grad) const;
  std::shared_ptr<const VelvetBank> bank_;
  ParamCodec codec_;
  DarSegmentEngine engine_;
  MatchLoss loss_;
  double beta_;
  mutable LossReport report_;
};

class AfvnObjective : public Objective {
 public:
  AfvnObjective(std::shared_ptr<const VelvetBank> bank, std::span<const double> reference,
                double beta = 1.0);
  std::size_t dim() const override { return codec_.size(); }
  double value(std::span<const double> raw) const override;
  double value_and_grad(std::span<const double> raw, std::span<double> grad) const override;
  LossReport last_report() const override { return report_; }
  const ParamCodec& codec() const { return codec_; }

 private:
  double evaluate(std::span<const double> raw, double* grad) const;
  std::shared_ptr<const VelvetBank> bank_;
  ParamCodec codec_;
  DarSegmentEngine engine_;
  MatchLoss loss_;
  double beta_;
  mutable LossReport report_;
};

/// Match loss of the DAR delay-network render; the regularizer (on the post
/// filter) is off by default.
class DnObjective : public Objective {
 public:
  DnObjective(const DnConfig& config, const Matrix& q0, std::span<const double> reference,
              double beta = 0.0);
  std::size_t dim() const override { return codec_.size(); }
  double value(std::span<const double> raw) const override;
  double value_and_grad(std::span<const double> raw, std::span<double> grad) const override;
  LossReport last_report() const override { return report_; }
  const ParamCodec& codec() const { return codec_; }

 private:
  double evaluate(std::span<const double> raw, double* grad) const;
  DnConfig config_;
  ParamCodec codec_;
  mutable DnDarEvaluator evaluator_;
  MatchLoss loss_;
  double beta_;
  mutable LossReport report_;
};

/// One SVF (raw f, R, mLP, mBP, mHP through the codec activations),
/// frequency-sampled at N and scored by the match loss against `reference`.
class SvfToyObjective : public Objective {
 public:
  SvfToyObjective(std::span<const double> reference, int n_fft);
  std::size_t dim() const override { return 5; }
  double value(std::span<const double> raw) const override;
  double value_and_grad(std::span<const double> raw, std::span<double> grad) const override;
  static SvfParams decode(std::span<const double> raw);

 private:
  int n_fft_;
  MatchLoss loss_;
};

/// ||h_ref - g delta_m||^2 over an N-point frequency-sampled delay with a
/// single raw gain g.
class DelayGainObjective : public Objective {
 public:
  DelayGainObjective(SampledResponse reference, long long delay);
  std::size_t dim() const override { return 1; }
  double value(std::span<const double> raw) const override;
  double value_and_grad(std::span<const double> raw, std::span<double> grad) const override;

 private:
  SampledResponse reference_;
  SampledResponse delay_;
  std::vector<double> reference_ir_;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences with step eps * max(1, |x_i|) for every coordinate.
std::vector<double> grad_fd(const ScalarFunction& f, std::span<const double> raw,
                            double eps = 1e-4);
/// Same on selected coordinates only; the result is indexed like `coords`.
std::vector<double> grad_fd(const ScalarFunction& f, std::span<const double> raw,
                            std::span<const std::size_t> coords, double eps = 1e-4);
/// Reverse-mode gradient. Throws NonFiniteGradient.
std::vector<double> grad_analytic(const Objective& objective, std::span<const double> raw);

struct GradCheckEntry {
  std::size_t index = 0;
  std::string group;
  double analytic = 0.0;
  double fd = 0.0;      ///< central difference closest to `analytic`
  double eps = 0.0;     ///< step of that difference
  double error = 0.0;   ///< relative, or absolute when both sides are below 1e-8
  bool ok = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_error = 0.0;
  int failures = 0;
};

/// Central-difference steps tried per coordinate. Large steps straddle the
/// kinks of the L1 match loss, small ones drown tiny gradients in rounding,
/// so a coordinate passes when any step agrees.
inline constexpr std::array<double, 3> kGradCheckSteps{1e-4, 1e-5, 1e-6};

/// Reverse-mode against central differences on the given coordinates.
GradCheckReport gradient_check(const Objective& objective, const ParamCodec& codec,
                               std::span<const double> raw, std::span<const std::size_t> coords,
                               std::span<const double> steps = kGradCheckSteps, double tolerance = 1e-3);

/// Objective fitted to a DAR render of random plausible parameters, and a
/// fresh initialization to check it at. DN starts from moderately damped
/// absorption: near-lossless loops make the loss dominated by rounding.
struct GradCheckProblem {
  std::unique_ptr<Objective> objective;
  ParamCodec codec;
  std::vector<double> raw;
};

GradCheckProblem gradcheck_problem(Model model, bool reduced, std::uint64_t seed);

struct FitOptions {
  int steps = 2000;
  double learning_rate = 1e-3;
  /// Exponential decay towards this rate at the last step; 0 keeps it constant.
  double final_learning_rate = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 0.0;  ///< elementwise gradient clip; 0 disables
  /// Per-coordinate step multipliers; empty means 1 everywhere.
  std::vector<double> rate_scale;
  std::function<void(int step, double loss)> on_step;
};

/// DN absorption pre-activations start at -10 and typically end near -3,
/// while b and c live at unit scale. With equal Adam steps the gains shrink
/// to zero long before the decay shortens, so absorption steps are scaled.
inline constexpr double kDnAbsorptionRateScale = 30.0;

/// Rates and schedule used by the CLI: lr 1e-2 decaying to 1e-3 over 2000
/// steps; DN adds gradient clipping at 10 and the absorption step scale.
FitOptions default_fit_options(const ParamCodec& codec);

struct FitResult {
  std::vector<double> best_raw;
  double best_loss = 0.0;
  double initial_loss = 0.0;
  int best_step = 0;
  std::vector<double> trace;  ///< loss at every step
};

/// Adam with best-so-far tracking. Throws Diverged on a non-finite loss or
/// gradient, naming the step.
FitResult fit(const Objective& objective, std::vector<double> raw, const FitOptions& options);

}  // namespace darverb
