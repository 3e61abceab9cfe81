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

#include "darverb/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "darverb/error.hpp"
#include "darverb/fft.hpp"

namespace darverb {
namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kLn10 = std::numbers::ln10;
// Keeps activations strictly inside their ranges in floating point.
constexpr double kRawLimit = 700.0;
// sigmoid rounds to 1 above about 37, and 10^-softplus2 underflows above
// about 440.
constexpr double kSigmoidLimit = 36.0;
constexpr double kAbsorptionLimit = 200.0;

double clamp_raw(double x) { return std::clamp(x, -kRawLimit, kRawLimit); }

double cutoff(double x) {
  x = clamp_raw(x);
  const double half_pi = std::numbers::pi / 2.0;
  // For x > 0 use cot(pi/2 (1 - sigma(x))) = 1 / tan(pi/2 sigma(-x)).
  return x > 0.0 ? 1.0 / std::tan(half_pi * sigmoid(-x)) : std::tan(half_pi * sigmoid(x));
}

std::vector<double> log_spaced(int count, double lo, double hi) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k)
    out[static_cast<std::size_t>(k)] = count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
  return out;
}

std::vector<double> padded(std::span<const double> x, std::size_t length) {
  std::vector<double> out(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(std::min(x.size(), length)));
  out.resize(length, 0.0);
  return out;
}

void check_finite(std::span<const double> g) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw Error(ErrorKind::NonFiniteGradient, "gradient coordinate " + std::to_string(i) + " is not finite");
}

}  // namespace

const char* to_string(Model m) {
  switch (m) {
    case Model::FVN: return "fvn";
    case Model::AFVN: return "afvn";
    case Model::DN: return "dn";
  }
  return "unknown";
}

Model parse_model(const std::string& name) {
  if (name == "fvn") return Model::FVN;
  if (name == "afvn") return Model::AFVN;
  if (name == "dn") return Model::DN;
  throw Error(ErrorKind::InvalidArgument, "unknown model '" + name + "' (expected fvn, afvn or dn)");
}

double softplus2(double x) {
  x = std::max(x, -kRawLimit);
  return (x > 30.0 ? x : std::log1p(std::exp(x))) / kLn2;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------------------

ParamGroup& ParamCodec::add(const std::string& name, int rows, int cols, Activation act) {
  ParamGroup g;
  g.name = name;
  g.offset = size_;
  g.rows = rows;
  g.cols = cols;
  g.activation = act;
  size_ += g.size();
  groups_.push_back(g);
  return groups_.back();
}

const ParamGroup& ParamCodec::group(const std::string& name) const {
  for (const auto& g : groups_)
    if (g.name == name) return g;
  throw Error(ErrorKind::LayoutMismatch, "no parameter group named '" + name + "'");
}

namespace {

void add_svf_groups(ParamCodec& codec, const std::string& suffix, int rows, int cols,
                    std::function<void(const std::string&, int, int, Activation)> add) {
  (void)codec;
  add("f" + suffix, rows, cols, Activation::Cutoff);
  add("R" + suffix, rows, cols, Activation::Softplus);
  add("mLP" + suffix, rows, cols, Activation::Identity);
  add("mBP" + suffix, rows, cols, Activation::Identity);
  add("mHP" + suffix, rows, cols, Activation::Identity);
}

}  // namespace

ParamCodec ParamCodec::fvn(const VelvetConfig& config) {
  config.validate();
  ParamCodec c;
  c.model_ = Model::FVN;
  c.velvet_ = config;
  auto add = [&](const std::string& n, int r, int k, Activation a) { c.add(n, r, k, a); };
  add("g", config.segments(), config.sub_segments, Activation::Identity);
  add_svf_groups(c, "", config.segments(), config.order, add);
  add("h0", 1, config.bypass_length, Activation::Identity);
  return c;
}

ParamCodec ParamCodec::afvn(const VelvetConfig& config) {
  config.validate();
  ParamCodec c;
  c.model_ = Model::AFVN;
  c.velvet_ = config;
  auto add = [&](const std::string& n, int r, int k, Activation a) { c.add(n, r, k, a); };
  add("g", config.segments(), config.sub_segments, Activation::Identity);
  add_svf_groups(c, "1", 1, config.initial_order, add);
  add_svf_groups(c, "d", config.segments() - 1, config.delta_order, add);
  add("h0", 1, config.bypass_length, Activation::Identity);
  return c;
}

ParamCodec ParamCodec::dn(const DnConfig& config) {
  config.validate();
  ParamCodec c;
  c.model_ = Model::DN;
  c.dn_ = config;
  auto add = [&](const std::string& n, int r, int k, Activation a) { c.add(n, r, k, a); };
  add_svf_groups(c, "_post", 1, config.post_order, add);
  add("f_abs", 1, config.absorption_order, Activation::Cutoff);
  add("R_abs", 1, config.absorption_order, Activation::PeqResonance);
  add("G_abs", 1, config.absorption_order, Activation::Absorption);
  add("b", 1, config.channels(), Activation::Identity);
  add("c", 1, config.channels(), Activation::Identity);
  add("gamma", config.channels(), config.allpasses_per_line(), Activation::Sigmoid);
  add("h0", 1, config.bypass_length, Activation::Identity);
  return c;
}

RawParams ParamCodec::init_raw(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  RawParams raw;
  raw.values.assign(size_, 0.0);
  const double fs = model_ == Model::DN ? dn_.sample_rate : velvet_.sample_rate;
  for (const auto& g : groups_) {
    raw.group_names.push_back(g.name);
    double* v = raw.values.data() + g.offset;
    if (g.activation == Activation::Cutoff) {
      const auto hz = log_spaced(g.cols, 40.0, 12000.0);
      const bool permute = model_ == Model::AFVN;
      for (int r = 0; r < g.rows; ++r) {
        std::vector<int> order(static_cast<std::size_t>(g.cols));
        std::iota(order.begin(), order.end(), 0);
        if (permute) std::shuffle(order.begin(), order.end(), rng);
        for (int k = 0; k < g.cols; ++k)
          v[r * g.cols + k] = logit(2.0 * hz[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] / fs);
      }
    } else if (g.name.rfind("mLP", 0) == 0 || g.name.rfind("mHP", 0) == 0) {
      std::fill(v, v + g.size(), 1.0);
    } else if (g.name.rfind("mBP", 0) == 0) {
      std::fill(v, v + g.size(), 2.0);
    } else if (g.activation == Activation::Absorption) {
      std::fill(v, v + g.size(), -10.0);
    }
  }
  for (auto& x : raw.values) x += noise(rng);
  if (model_ == Model::DN) {
    // Gains of 0.01 would leave the bypass dominant and the initial decay
    // far shorter than the absorption bias intends; start near unit energy.
    std::normal_distribution<double> io_gain(0.0, 1.0 / std::sqrt(static_cast<double>(dn_.delays.size())));
    for (const char* name : {"b", "c"}) {
      const auto& g = group(name);
      for (std::size_t i = 0; i < g.size(); ++i) raw.values[g.offset + i] = io_gain(rng);
    }
  }
  return raw;
}

std::vector<double> ParamCodec::activate(std::span<const double> raw) const {
  if (raw.size() != size_) throw Error(ErrorKind::LayoutMismatch, "raw vector size does not match the codec");
  std::vector<double> out(raw.begin(), raw.end());
  for (const auto& g : groups_) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& y = out[g.offset + i];
      const double x = raw[g.offset + i];
      switch (g.activation) {
        case Activation::Identity: break;
        case Activation::Softplus: y = softplus2(x); break;
        case Activation::PeqResonance: {
          const auto col = static_cast<int>(i) % g.cols;
          y = softplus2(x) + ((col == 0 || col == g.cols - 1) ? std::numbers::sqrt2 / 2.0 : 0.0);
          break;
        }
        case Activation::Cutoff: y = cutoff(x); break;
        case Activation::Absorption: y = std::pow(10.0, -softplus2(std::min(x, kAbsorptionLimit))); break;
        case Activation::Sigmoid: y = sigmoid(std::clamp(x, -kSigmoidLimit, kSigmoidLimit)); break;
      }
    }
  }
  return out;
}

void ParamCodec::chain_rule(std::span<const double> raw, std::span<double> grad) const {
  if (raw.size() != size_ || grad.size() != size_)
    throw Error(ErrorKind::LayoutMismatch, "raw or gradient size does not match the codec");
  for (const auto& g : groups_) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = raw[g.offset + i];
      const bool inside = x > -kRawLimit && x < kRawLimit;
      double d = 1.0;
      switch (g.activation) {
        case Activation::Identity: break;
        case Activation::Softplus:
        case Activation::PeqResonance: d = inside || x > 0 ? sigmoid(x) / kLn2 : 0.0; break;
        case Activation::Cutoff: {
          const double f = cutoff(x), s = sigmoid(x);
          d = inside ? std::numbers::pi / 2.0 * (1.0 + f * f) * s * (1.0 - s) : 0.0;
          break;
        }
        case Activation::Absorption: {
          const double gain = std::pow(10.0, -softplus2(x));
          d = x < kAbsorptionLimit ? -kLn10 * gain * sigmoid(x) / kLn2 : 0.0;
          break;
        }
        case Activation::Sigmoid: {
          const double s = sigmoid(x);
          d = std::abs(x) < kSigmoidLimit ? s * (1.0 - s) : 0.0;
          break;
        }
      }
      grad[g.offset + i] *= d;
    }
  }
}

void ParamCodec::check(const RawParams& raw) const {
  if (raw.values.size() != size_) throw Error(ErrorKind::LayoutMismatch, "raw vector size does not match the codec");
  if (!raw.group_names.empty()) {
    if (raw.group_names.size() != groups_.size())
      throw Error(ErrorKind::LayoutMismatch, "raw group count does not match the codec");
    for (std::size_t i = 0; i < groups_.size(); ++i)
      if (raw.group_names[i] != groups_[i].name)
        throw Error(ErrorKind::LayoutMismatch, "raw group '" + raw.group_names[i] + "' where '" +
                                                   groups_[i].name + "' was expected");
  }
}

std::vector<std::vector<SvfParams>> ParamCodec::read_svfs(std::span<const double> act,
                                                          const std::string& suffix) const {
  const auto& f = group("f" + suffix);
  const auto& r = group("R" + suffix);
  const auto& lp = group("mLP" + suffix);
  const auto& bp = group("mBP" + suffix);
  const auto& hp = group("mHP" + suffix);
  std::vector<std::vector<SvfParams>> out(static_cast<std::size_t>(f.rows));
  for (int i = 0; i < f.rows; ++i)
    for (int k = 0; k < f.cols; ++k) {
      const auto idx = static_cast<std::size_t>(i * f.cols + k);
      out[static_cast<std::size_t>(i)].push_back(
          {act[f.offset + idx], act[r.offset + idx], act[lp.offset + idx], act[bp.offset + idx], act[hp.offset + idx]});
    }
  return out;
}

void ParamCodec::write_svfs(std::vector<double>& flat, const std::string& suffix,
                            const std::vector<std::vector<SvfParams>>& chains) const {
  const auto& f = group("f" + suffix);
  const auto& r = group("R" + suffix);
  const auto& lp = group("mLP" + suffix);
  const auto& bp = group("mBP" + suffix);
  const auto& hp = group("mHP" + suffix);
  if (chains.size() != static_cast<std::size_t>(f.rows))
    throw Error(ErrorKind::ShapeMismatch, "chain count does not match group '" + f.name + "'");
  for (int i = 0; i < f.rows; ++i) {
    const auto& chain = chains[static_cast<std::size_t>(i)];
    if (chain.size() != static_cast<std::size_t>(f.cols))
      throw Error(ErrorKind::ShapeMismatch, "chain length does not match group '" + f.name + "'");
    for (int k = 0; k < f.cols; ++k) {
      const auto idx = static_cast<std::size_t>(i * f.cols + k);
      const auto& s = chain[static_cast<std::size_t>(k)];
      flat[f.offset + idx] = s.f;
      flat[r.offset + idx] = s.R;
      flat[lp.offset + idx] = s.mLP;
      flat[bp.offset + idx] = s.mBP;
      flat[hp.offset + idx] = s.mHP;
    }
  }
}

FvnParams ParamCodec::decode_fvn(std::span<const double> raw) const {
  if (model_ != Model::FVN) throw Error(ErrorKind::LayoutMismatch, "codec is not an FVN codec");
  const auto act = activate(raw);
  FvnParams p;
  const auto& g = group("g");
  p.gains.assign(act.begin() + static_cast<std::ptrdiff_t>(g.offset),
                 act.begin() + static_cast<std::ptrdiff_t>(g.offset + g.size()));
  p.color = read_svfs(act, "");
  const auto& h = group("h0");
  p.bypass.assign(act.begin() + static_cast<std::ptrdiff_t>(h.offset),
                  act.begin() + static_cast<std::ptrdiff_t>(h.offset + h.size()));
  return p;
}

AfvnParams ParamCodec::decode_afvn(std::span<const double> raw) const {
  if (model_ != Model::AFVN) throw Error(ErrorKind::LayoutMismatch, "codec is not an AFVN codec");
  const auto act = activate(raw);
  AfvnParams p;
  const auto& g = group("g");
  p.gains.assign(act.begin() + static_cast<std::ptrdiff_t>(g.offset),
                 act.begin() + static_cast<std::ptrdiff_t>(g.offset + g.size()));
  p.initial = read_svfs(act, "1").front();
  p.delta = read_svfs(act, "d");
  const auto& h = group("h0");
  p.bypass.assign(act.begin() + static_cast<std::ptrdiff_t>(h.offset),
                  act.begin() + static_cast<std::ptrdiff_t>(h.offset + h.size()));
  return p;
}

DnParams ParamCodec::decode_dn(std::span<const double> raw) const {
  if (model_ != Model::DN) throw Error(ErrorKind::LayoutMismatch, "codec is not a DN codec");
  const auto act = activate(raw);
  auto slice = [&](const std::string& name) {
    const auto& g = group(name);
    return std::vector<double>(act.begin() + static_cast<std::ptrdiff_t>(g.offset),
                               act.begin() + static_cast<std::ptrdiff_t>(g.offset + g.size()));
  };
  DnParams p;
  p.post = read_svfs(act, "_post").front();
  const auto f = slice("f_abs"), r = slice("R_abs"), gain = slice("G_abs");
  const auto k_count = f.size();
  for (std::size_t k = 0; k < k_count; ++k) {
    PeqBand b;
    b.kind = k == 0 ? PeqKind::LowShelf : (k + 1 == k_count ? PeqKind::HighShelf : PeqKind::Peak);
    b.f = f[k];
    b.R = r[k];
    b.G = gain[k];
    p.absorption.push_back(b);
  }
  p.b = slice("b");
  p.c = slice("c");
  const auto& gg = group("gamma");
  const auto gamma = slice("gamma");
  for (int m = 0; m < gg.rows; ++m)
    p.sap_gamma.emplace_back(gamma.begin() + m * gg.cols, gamma.begin() + (m + 1) * gg.cols);
  p.bypass = slice("h0");
  return p;
}

std::vector<double> ParamCodec::flatten(const FvnParams& grad) const {
  std::vector<double> flat(size_, 0.0);
  std::copy(grad.gains.begin(), grad.gains.end(), flat.begin() + static_cast<std::ptrdiff_t>(group("g").offset));
  write_svfs(flat, "", grad.color);
  std::copy(grad.bypass.begin(), grad.bypass.end(), flat.begin() + static_cast<std::ptrdiff_t>(group("h0").offset));
  return flat;
}

std::vector<double> ParamCodec::flatten(const AfvnParams& grad) const {
  std::vector<double> flat(size_, 0.0);
  std::copy(grad.gains.begin(), grad.gains.end(), flat.begin() + static_cast<std::ptrdiff_t>(group("g").offset));
  write_svfs(flat, "1", {grad.initial});
  write_svfs(flat, "d", grad.delta);
  std::copy(grad.bypass.begin(), grad.bypass.end(), flat.begin() + static_cast<std::ptrdiff_t>(group("h0").offset));
  return flat;
}

std::vector<double> ParamCodec::flatten(const DnParams& grad) const {
  std::vector<double> flat(size_, 0.0);
  write_svfs(flat, "_post", {grad.post});
  auto put = [&](const std::string& name, std::span<const double> v) {
    std::copy(v.begin(), v.end(), flat.begin() + static_cast<std::ptrdiff_t>(group(name).offset));
  };
  std::vector<double> f, r, g;
  for (const auto& b : grad.absorption) {
    f.push_back(b.f);
    r.push_back(b.R);
    g.push_back(b.G);
  }
  put("f_abs", f);
  put("R_abs", r);
  put("G_abs", g);
  put("b", grad.b);
  put("c", grad.c);
  std::vector<double> gamma;
  for (const auto& row : grad.sap_gamma) gamma.insert(gamma.end(), row.begin(), row.end());
  put("gamma", gamma);
  put("h0", grad.bypass);
  return flat;
}

// ---------------------------------------------------------------------------

namespace {

// dL/d(SVF fields) of every SVF in a chain given dL/d(chain product).
std::vector<SvfParams> chain_adjoint(const std::vector<SvfParams>& chain,
                                     const std::vector<SampledResponse>& responses,
                                     std::span<const Complex> grad_product) {
  const auto factors = factor_gradients(responses, grad_product);
  std::vector<SvfParams> out;
  for (std::size_t k = 0; k < chain.size(); ++k) out.push_back(svf_adjoint(chain[k], responses[k], factors[k]));
  return out;
}

std::vector<SampledResponse> sample_each(const std::vector<SvfParams>& chain, int n_fft) {
  std::vector<SampledResponse> out;
  for (const auto& s : chain) out.push_back(sample_svf(s, n_fft));
  return out;
}

SampledResponse product(const std::vector<SampledResponse>& factors, int n_fft) {
  SampledResponse out(n_fft);
  for (const auto& f : factors) out *= f;
  return out;
}

void add_scaled(std::vector<std::vector<SvfParams>>& dst, const std::vector<std::vector<SvfParams>>& src,
                double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t k = 0; k < dst[i].size(); ++k) {
      auto& d = dst[i][k];
      const auto& s = src[i][k];
      d.f += scale * s.f;
      d.R += scale * s.R;
      d.mLP += scale * s.mLP;
      d.mBP += scale * s.mBP;
      d.mHP += scale * s.mHP;
    }
}

}  // namespace

FvnObjective::FvnObjective(std::shared_ptr<const VelvetBank> bank, std::span<const double> reference,
                           double beta)
    : bank_(std::move(bank)),
      codec_(ParamCodec::fvn(bank_->config())),
      engine_(*bank_),
      loss_(padded(reference, static_cast<std::size_t>(bank_->config().total_length())),
            bank_->config().sample_rate),
      beta_(beta) {}

double FvnObjective::value(std::span<const double> raw) const { return evaluate(raw, nullptr); }

double FvnObjective::value_and_grad(std::span<const double> raw, std::span<double> grad) const {
  return evaluate(raw, grad.data());
}

double FvnObjective::evaluate(std::span<const double> raw, double* grad) const {
  const auto& cfg = bank_->config();
  const int n_fft = cfg.n_fft;
  const auto p = codec_.decode_fvn(raw);
  std::vector<std::vector<SampledResponse>> responses;
  std::vector<std::vector<double>> firs;
  for (const auto& chain : p.color) {
    responses.push_back(sample_each(chain, n_fft));
    firs.push_back(to_fir(product(responses.back(), n_fft)).taps);
  }
  auto h = engine_.forward(p.gains, firs);
  for (std::size_t z = 0; z < p.bypass.size(); ++z) h[z] += p.bypass[z];

  report_.beta = beta_;
  if (!grad) {
    report_.match = loss_.value(h);
    report_.reg = beta_ != 0.0 ? reg_loss(p.color, n_fft) : 0.0;
    return report_.total();
  }
  std::vector<double> gh;
  report_.match = loss_.value_and_grad(h, gh);
  FvnParams g = p;
  std::vector<std::vector<double>> gfirs;
  engine_.backward(gh, g.gains, gfirs);
  for (std::size_t z = 0; z < g.bypass.size(); ++z) g.bypass[z] = gh[z];
  for (std::size_t i = 0; i < p.color.size(); ++i) {
    const auto gc = fft::irfft_adjoint(gfirs[i], static_cast<std::size_t>(n_fft));
    g.color[i] = chain_adjoint(p.color[i], responses[i], gc);
  }
  report_.reg = 0.0;
  if (beta_ != 0.0) {
    std::vector<std::vector<SvfParams>> rg;
    report_.reg = reg_loss_grad(p.color, n_fft, 0, rg);
    add_scaled(g.color, rg, beta_);
  }
  auto flat = codec_.flatten(g);
  codec_.chain_rule(raw, flat);
  std::copy(flat.begin(), flat.end(), grad);
  return report_.total();
}

AfvnObjective::AfvnObjective(std::shared_ptr<const VelvetBank> bank, std::span<const double> reference,
                             double beta)
    : bank_(std::move(bank)),
      codec_(ParamCodec::afvn(bank_->config())),
      engine_(*bank_),
      loss_(padded(reference, static_cast<std::size_t>(bank_->config().total_length())),
            bank_->config().sample_rate),
      beta_(beta) {}

double AfvnObjective::value(std::span<const double> raw) const { return evaluate(raw, nullptr); }

double AfvnObjective::value_and_grad(std::span<const double> raw, std::span<double> grad) const {
  return evaluate(raw, grad.data());
}

double AfvnObjective::evaluate(std::span<const double> raw, double* grad) const {
  const auto& cfg = bank_->config();
  const int n_fft = cfg.n_fft;
  const auto p = codec_.decode_afvn(raw);
  const auto initial_resp = sample_each(p.initial, n_fft);
  std::vector<std::vector<SampledResponse>> delta_resp;
  std::vector<SampledResponse> delta_total;
  for (const auto& chain : p.delta) {
    delta_resp.push_back(sample_each(chain, n_fft));
    delta_total.push_back(product(delta_resp.back(), n_fft));
  }
  // P_1 = C_1, P_i = P_{i-1} C_delta_i.
  std::vector<SampledResponse> colors{product(initial_resp, n_fft)};
  for (const auto& d : delta_total) {
    colors.push_back(colors.back());
    colors.back() *= d;
  }
  std::vector<std::vector<double>> firs;
  for (const auto& c : colors) firs.push_back(to_fir(c).taps);
  auto h = engine_.forward(p.gains, firs);
  for (std::size_t z = 0; z < p.bypass.size(); ++z) h[z] += p.bypass[z];

  std::vector<std::vector<SvfParams>> chains{p.initial};
  chains.insert(chains.end(), p.delta.begin(), p.delta.end());
  report_.beta = beta_;
  if (!grad) {
    report_.match = loss_.value(h);
    report_.reg = beta_ != 0.0 ? reg_loss(chains, n_fft) : 0.0;
    return report_.total();
  }
  std::vector<double> gh;
  report_.match = loss_.value_and_grad(h, gh);
  AfvnParams g = p;
  std::vector<std::vector<double>> gfirs;
  engine_.backward(gh, g.gains, gfirs);
  for (std::size_t z = 0; z < g.bypass.size(); ++z) g.bypass[z] = gh[z];

  const std::size_t s_count = colors.size();
  const std::size_t bins = colors.front().size();
  std::vector<Complex> running(bins, Complex{});  // dL/dP_i accumulated from later segments
  for (std::size_t i = s_count; i-- > 0;) {
    const auto gp = fft::irfft_adjoint(gfirs[i], static_cast<std::size_t>(n_fft));
    for (std::size_t k = 0; k < bins; ++k) running[k] += gp[k];
    if (i == 0) break;
    std::vector<Complex> gdelta(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      gdelta[k] = running[k] * std::conj(colors[i - 1][k]);
      running[k] *= std::conj(delta_total[i - 1][k]);
    }
    g.delta[i - 1] = chain_adjoint(p.delta[i - 1], delta_resp[i - 1], gdelta);
  }
  g.initial = chain_adjoint(p.initial, initial_resp, running);

  report_.reg = 0.0;
  if (beta_ != 0.0) {
    std::vector<std::vector<SvfParams>> rg;
    report_.reg = reg_loss_grad(chains, n_fft, 0, rg);
    std::vector<std::vector<SvfParams>> gchains{g.initial};
    gchains.insert(gchains.end(), g.delta.begin(), g.delta.end());
    add_scaled(gchains, rg, beta_);
    g.initial = gchains.front();
    std::copy(gchains.begin() + 1, gchains.end(), g.delta.begin());
  }
  auto flat = codec_.flatten(g);
  codec_.chain_rule(raw, flat);
  std::copy(flat.begin(), flat.end(), grad);
  return report_.total();
}

DnObjective::DnObjective(const DnConfig& config, const Matrix& q0, std::span<const double> reference,
                         double beta)
    : config_(config),
      codec_(ParamCodec::dn(config)),
      evaluator_(config, q0),
      loss_(padded(reference, static_cast<std::size_t>(config.n_fft)), config.sample_rate),
      beta_(beta) {}

double DnObjective::value(std::span<const double> raw) const { return evaluate(raw, nullptr); }

double DnObjective::value_and_grad(std::span<const double> raw, std::span<double> grad) const {
  return evaluate(raw, grad.data());
}

double DnObjective::evaluate(std::span<const double> raw, double* grad) const {
  const auto p = codec_.decode_dn(raw);
  const auto h = evaluator_.forward(p);
  const std::vector<std::vector<SvfParams>> chains{p.post};
  report_.beta = beta_;
  if (!grad) {
    report_.match = loss_.value(h);
    report_.reg = beta_ != 0.0 ? reg_loss(chains, config_.n_fft) : 0.0;
    return report_.total();
  }
  std::vector<double> gh;
  report_.match = loss_.value_and_grad(h, gh);
  auto g = evaluator_.backward(gh);
  report_.reg = 0.0;
  if (beta_ != 0.0) {
    std::vector<std::vector<SvfParams>> rg;
    report_.reg = reg_loss_grad(chains, config_.n_fft, 0, rg);
    std::vector<std::vector<SvfParams>> gp{g.post};
    add_scaled(gp, rg, beta_);
    g.post = gp.front();
  }
  auto flat = codec_.flatten(g);
  codec_.chain_rule(raw, flat);
  std::copy(flat.begin(), flat.end(), grad);
  return report_.total();
}

SvfToyObjective::SvfToyObjective(std::span<const double> reference, int n_fft)
    : n_fft_(n_fft), loss_(padded(reference, static_cast<std::size_t>(n_fft))) {}

SvfParams SvfToyObjective::decode(std::span<const double> raw) {
  return {cutoff(raw[0]), softplus2(raw[1]), raw[2], raw[3], raw[4]};
}

double SvfToyObjective::value(std::span<const double> raw) const {
  return loss_.value(to_fir(sample_svf(decode(raw), n_fft_)).taps);
}

double SvfToyObjective::value_and_grad(std::span<const double> raw, std::span<double> grad) const {
  const auto svf = decode(raw);
  const auto resp = sample_svf(svf, n_fft_);
  std::vector<double> gh;
  const double loss = loss_.value_and_grad(to_fir(resp).taps, gh);
  const auto gs = svf_adjoint(svf, resp, fft::irfft_adjoint(gh, static_cast<std::size_t>(n_fft_)));
  const double x0 = clamp_raw(raw[0]);
  const double s = sigmoid(x0);
  grad[0] = gs.f * std::numbers::pi / 2.0 * (1.0 + svf.f * svf.f) * s * (1.0 - s);
  grad[1] = gs.R * sigmoid(raw[1]) / kLn2;
  grad[2] = gs.mLP;
  grad[3] = gs.mBP;
  grad[4] = gs.mHP;
  return loss;
}

DelayGainObjective::DelayGainObjective(SampledResponse reference, long long delay)
    : reference_(std::move(reference)),
      delay_(sampled_delay(delay, reference_.n_fft())),
      reference_ir_(to_fir(reference_).taps) {}

double DelayGainObjective::value(std::span<const double> raw) const {
  const auto h = to_fir(SampledResponse(delay_.n_fft(), [&] {
                          std::vector<Complex> b(delay_.bins().begin(), delay_.bins().end());
                          for (auto& v : b) v *= raw[0];
                          return b;
                        }()))
                     .taps;
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) acc += (h[n] - reference_ir_[n]) * (h[n] - reference_ir_[n]);
  return acc;
}

double DelayGainObjective::value_and_grad(std::span<const double> raw, std::span<double> grad) const {
  std::vector<Complex> bins(delay_.bins().begin(), delay_.bins().end());
  for (auto& v : bins) v *= raw[0];
  const auto h = fft::irfft(bins, static_cast<std::size_t>(delay_.n_fft()));
  std::vector<double> gh(h.size());
  double acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    const double e = h[n] - reference_ir_[n];
    acc += e * e;
    gh[n] = 2.0 * e;
  }
  const auto gb = fft::irfft_adjoint(gh, static_cast<std::size_t>(delay_.n_fft()));
  double g = 0.0;
  for (std::size_t k = 0; k < gb.size(); ++k) g += (std::conj(gb[k]) * delay_[k]).real();
  grad[0] = g;
  return acc;
}

// ---------------------------------------------------------------------------

std::vector<double> grad_fd(const ScalarFunction& f, std::span<const double> raw,
                            std::span<const std::size_t> coords, double eps) {
  std::vector<double> x(raw.begin(), raw.end());
  std::vector<double> out;
  for (std::size_t i : coords) {
    const double x0 = x[i];
    const double h = eps * std::max(1.0, std::abs(x0));
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

std::vector<double> grad_fd(const ScalarFunction& f, std::span<const double> raw, double eps) {
  std::vector<std::size_t> coords(raw.size());
  std::iota(coords.begin(), coords.end(), 0);
  return grad_fd(f, raw, coords, eps);
}

std::vector<double> grad_analytic(const Objective& objective, std::span<const double> raw) {
  std::vector<double> g(objective.dim(), 0.0);
  objective.value_and_grad(raw, g);
  check_finite(g);
  return g;
}

FitResult fit(const Objective& objective, std::vector<double> raw, const FitOptions& options) {
  if (raw.size() != objective.dim()) throw Error(ErrorKind::LayoutMismatch, "raw size does not match the objective");
  if (!options.rate_scale.empty() && options.rate_scale.size() != raw.size())
    throw Error(ErrorKind::LayoutMismatch, "rate_scale size does not match the objective");
  FitResult result;
  std::vector<double> grad(raw.size()), m(raw.size(), 0.0), v(raw.size(), 0.0);
  double b1t = 1.0, b2t = 1.0;
  for (int step = 0; step < options.steps; ++step) {
    const double loss = objective.value_and_grad(raw, grad);
    bool finite = std::isfinite(loss);
    for (double g : grad) finite = finite && std::isfinite(g);
    if (!finite)
      throw Error(ErrorKind::Diverged, "loss or gradient became non-finite at step " + std::to_string(step));
    if (step == 0) result.initial_loss = loss;
    result.trace.push_back(loss);
    if (step == 0 || loss < result.best_loss) {
      result.best_loss = loss;
      result.best_raw = raw;
      result.best_step = step;
    }
    if (options.on_step) options.on_step(step, loss);
    b1t *= options.beta1;
    b2t *= options.beta2;
    double lr = options.learning_rate;
    if (options.final_learning_rate > 0.0 && options.steps > 1)
      lr *= std::pow(options.final_learning_rate / options.learning_rate,
                     static_cast<double>(step) / (options.steps - 1));
    for (std::size_t i = 0; i < raw.size(); ++i) {
      // A scale s runs Adam on raw / s, which multiplies the step by s.
      const double scale = options.rate_scale.empty() ? 1.0 : options.rate_scale[i];
      double g = grad[i] * scale;
      if (options.clip > 0.0) g = std::clamp(g, -options.clip, options.clip);
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g;
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g * g;
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      raw[i] -= scale * lr * mhat / (std::sqrt(vhat) + options.epsilon);
    }
  }
  if (result.best_raw.empty()) {
    result.best_raw = raw;
    result.best_loss = objective.value(raw);
  }
  return result;
}

FitOptions default_fit_options(const ParamCodec& codec) {
  FitOptions o;
  o.steps = 2000;
  o.learning_rate = 1e-2;
  o.final_learning_rate = 1e-3;
  if (codec.model() == Model::DN) {
    o.clip = 10.0;
    o.rate_scale.assign(codec.size(), 1.0);
    const auto& g = codec.group("G_abs");
    std::fill_n(o.rate_scale.begin() + static_cast<std::ptrdiff_t>(g.offset), g.size(), kDnAbsorptionRateScale);
  }
  return o;
}

GradCheckReport gradient_check(const Objective& objective, const ParamCodec& codec,
                               std::span<const double> raw, std::span<const std::size_t> coords,
                               std::span<const double> steps, double tolerance) {
  if (steps.empty()) throw Error(ErrorKind::InvalidArgument, "gradient check needs at least one step");
  for (std::size_t i : coords)
    if (i >= raw.size()) throw Error(ErrorKind::InvalidArgument, "coordinate " + std::to_string(i) + " is out of range");
  const auto analytic = grad_analytic(objective, raw);
  std::vector<std::vector<double>> fd;
  for (double eps : steps)
    fd.push_back(grad_fd([&](std::span<const double> x) { return objective.value(x); }, raw, coords, eps));
  GradCheckReport report;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    GradCheckEntry e;
    e.index = coords[j];
    for (const auto& g : codec.groups())
      if (e.index >= g.offset && e.index < g.offset + g.size()) e.group = g.name;
    e.analytic = analytic[e.index];
    e.error = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const double scale = std::max(std::abs(e.analytic), std::abs(fd[s][j]));
      const double diff = std::abs(e.analytic - fd[s][j]);
      const bool absolute = scale < 1e-8;
      const double error = absolute ? diff : diff / scale;
      if (error < e.error) {
        e.error = error;
        e.fd = fd[s][j];
        e.eps = steps[s];
        e.ok = absolute ? diff < 1e-8 : error <= tolerance;
      }
    }
    report.max_error = std::max(report.max_error, e.error);
    if (!e.ok) ++report.failures;
    report.entries.push_back(std::move(e));
  }
  return report;
}

GradCheckProblem gradcheck_problem(Model model, bool reduced, std::uint64_t seed) {
  GradCheckProblem out;
  if (model == Model::DN) {
    const auto cfg = reduced ? DnConfig::reduced() : DnConfig::standard();
    const auto mix = default_mixing(cfg, seed);
    const auto target = render_dn(dn_random_plausible(cfg, seed + 1), cfg, mix, DnMode::DAR,
                                  static_cast<std::size_t>(cfg.n_fft));
    auto obj = std::make_unique<DnObjective>(cfg, mix.q0, target);
    out.codec = obj->codec();
    out.raw = out.codec.init_raw(seed + 2).values;
    const auto& g = out.codec.group("G_abs");
    for (std::size_t i = 0; i < g.size(); ++i) out.raw[g.offset + i] = -3.0;
    out.objective = std::move(obj);
    return out;
  }
  auto bank = std::make_shared<const VelvetBank>(reduced ? VelvetConfig::reduced() : VelvetConfig::standard(), seed);
  if (model == Model::FVN) {
    const auto target = render_fvn(random_plausible_fvn(bank->config(), seed + 1).params, *bank, RenderMode::DAR);
    auto obj = std::make_unique<FvnObjective>(bank, target);
    out.codec = obj->codec();
    out.objective = std::move(obj);
  } else {
    const auto target = render_afvn(random_plausible_afvn(bank->config(), seed + 1).params, *bank, RenderMode::DAR);
    auto obj = std::make_unique<AfvnObjective>(bank, target);
    out.codec = obj->codec();
    out.objective = std::move(obj);
  }
  out.raw = out.codec.init_raw(seed + 2).values;
  return out;
}

}  // namespace darverb
