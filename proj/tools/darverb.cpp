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


// Command-line front end: render, fit, analyze, bound and gradient checks,
// random presets and operation counts.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "darverb/analysis.hpp"
#include "darverb/error.hpp"
#include "darverb/fit.hpp"
#include "darverb/io.hpp"

using namespace darverb;

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out.precision(10);
  return out;
}

std::size_t model_length(const Preset& p) {
  return p.model == Model::DN ? static_cast<std::size_t>(p.dn.n_fft)
                              : static_cast<std::size_t>(p.velvet.total_length());
}

std::vector<double> fit_length(std::vector<double> x, std::size_t n) {
  x.resize(n, 0.0);
  return x;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string model, mode, preset, out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t length = 0;
};

int run_render(const RenderArgs& a) {
  const Model model = parse_model(a.model);
  const Preset preset = preset_load(a.preset);
  if (preset.model != model)
    throw Error(ErrorKind::ConfigMismatch, "preset holds a " + std::string(to_string(preset.model)) +
                                               " model, --model says " + a.model);
  const std::uint64_t seed = a.seed_given ? a.seed : preset.structure_seed;
  const std::size_t length = a.length > 0 ? a.length : model_length(preset);
  std::vector<double> ir;
  if (model == Model::DN) {
    DnMode mode;
    if (a.mode == "ar" || a.mode == "lti") mode = DnMode::LTI;
    else if (a.mode == "tv") mode = DnMode::TV;
    else if (a.mode == "dar") mode = DnMode::DAR;
    else throw Error(ErrorKind::InvalidArgument, "DN modes are ar (lti), tv and dar");
    ir = render_dn(preset_dn(preset), preset.dn, default_mixing(preset.dn, seed), mode, length);
  } else {
    RenderMode mode;
    if (a.mode == "ar") mode = RenderMode::AR;
    else if (a.mode == "dar") mode = RenderMode::DAR;
    else throw Error(ErrorKind::InvalidArgument, "velvet modes are ar and dar");
    const VelvetBank bank(preset.velvet, seed);
    ir = model == Model::FVN ? render_fvn(preset_fvn(preset), bank, mode)
                             : render_afvn(preset_afvn(preset), bank, mode);
    ir = fit_length(std::move(ir), length);
  }
  wav_write(a.out, ir, static_cast<int>(preset.sample_rate));
  std::cout << "wrote " << ir.size() << " samples to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string model, target, out, trace;
  int steps = 0;   // 0: library default
  double lr = 0.0;  // 0: library default
  std::uint64_t seed = 0;
};

int run_fit(const FitArgs& a) {
  const Model model = parse_model(a.model);
  const WavData wav = wav_read(a.target);
  const auto trimmed = onset_trim(wav.samples);
  if (trimmed.silent) throw Error(ErrorKind::ZeroEnergy, a.target + " is silent");
  const auto reference = normalize_energy(trimmed.ir);

  Preset preset;
  std::unique_ptr<Objective> objective;
  std::function<Preset(std::span<const double>)> decode;
  if (model == Model::DN) {
    DnConfig cfg;
    cfg.sample_rate = wav.sample_rate;
    const auto mix = default_mixing(cfg, a.seed);
    auto obj = std::make_unique<DnObjective>(cfg, mix.q0, fit_length(reference, static_cast<std::size_t>(cfg.n_fft)));
    const ParamCodec codec = obj->codec();
    decode = [codec, cfg](std::span<const double> raw) { return make_preset(codec.decode_dn(raw), cfg); };
    objective = std::move(obj);
  } else {
    VelvetConfig cfg = VelvetConfig::standard();
    cfg.sample_rate = wav.sample_rate;
    auto bank = std::make_shared<const VelvetBank>(cfg, a.seed);
    const auto ref = fit_length(reference, static_cast<std::size_t>(cfg.total_length()));
    if (model == Model::FVN) {
      auto obj = std::make_unique<FvnObjective>(bank, ref);
      const ParamCodec codec = obj->codec();
      decode = [codec, cfg](std::span<const double> raw) { return make_preset(codec.decode_fvn(raw), cfg); };
      objective = std::move(obj);
    } else {
      auto obj = std::make_unique<AfvnObjective>(bank, ref);
      const ParamCodec codec = obj->codec();
      decode = [codec, cfg](std::span<const double> raw) { return make_preset(codec.decode_afvn(raw), cfg); };
      objective = std::move(obj);
    }
  }
  const ParamCodec& codec = model == Model::DN    ? static_cast<DnObjective&>(*objective).codec()
                            : model == Model::FVN ? static_cast<FvnObjective&>(*objective).codec()
                                                  : static_cast<AfvnObjective&>(*objective).codec();

  FitOptions options = default_fit_options(codec);
  if (a.steps > 0) options.steps = a.steps;
  if (a.lr > 0.0) {
    options.final_learning_rate *= a.lr / options.learning_rate;
    options.learning_rate = a.lr;
  }
  options.on_step = [&](int step, double loss) {
    if (step % 100 == 0 || step + 1 == options.steps) std::cerr << "step " << step << " loss " << loss << "\n";
  };
  const FitResult result = fit(*objective, codec.init_raw(a.seed).values, options);

  preset = decode(result.best_raw);
  preset.source = a.target;
  preset.seed = a.seed;
  preset.structure_seed = a.seed;
  preset_save(a.out, preset);
  if (!a.trace.empty()) {
    auto csv = open_csv(a.trace);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < result.trace.size(); ++i) csv << i << "," << result.trace[i] << "\n";
  }
  std::cout << "loss " << result.initial_loss << " -> " << result.best_loss << " (step " << result.best_step
            << "), preset written to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string ir, ref, out, edr;
};

void write_metrics(std::ostream& csv, const std::string& band, const BandMetrics& m) {
  csv << "t30_s," << band << "," << m.t30 << "\n";
  csv << "drr_db," << band << "," << m.drr << "\n";
  csv << "c50_db," << band << "," << m.c50 << "\n";
}

int run_analyze(const AnalyzeArgs& a) {
  const WavData ir = wav_read(a.ir);
  const double fs = ir.sample_rate;
  const ReverbMetrics metrics = reverb_params(ir.samples, fs);
  auto csv = open_csv(a.out);
  csv << "metric,band,value\n";
  write_metrics(csv, "full", metrics.full);
  for (std::size_t b = 0; b < kOctaveCenters.size(); ++b)
    write_metrics(csv, std::to_string(static_cast<int>(kOctaveCenters[b])), metrics.bands[b]);
  std::cout << "T30 " << metrics.full.t30 << " s, DRR " << metrics.full.drr << " dB, C50 " << metrics.full.c50
            << " dB\n";

  const EdrMatrix edr_ir = edr(ir.samples);
  EdrError diff;
  bool have_ref = false;
  if (!a.ref.empty()) {
    const WavData ref = wav_read(a.ref);
    if (ref.sample_rate != ir.sample_rate)
      throw Error(ErrorKind::ConfigMismatch, "IR and reference sample rates differ");
    const std::size_t n = std::max(ir.samples.size(), ref.samples.size());
    const auto x = fit_length(ir.samples, n), r = fit_length(ref.samples, n);
    const double loss = match_loss(x, r, fs);
    diff = edr_error(edr(x), edr(r));
    have_ref = true;
    csv << "match_loss,full," << loss << "\n";
    csv << "edr_distance_db,full," << diff.distance << "\n";
    std::cout << "match loss " << loss << ", EDR distance " << diff.distance << " dB\n";
  }
  if (!a.edr.empty()) {
    auto out = open_csv(a.edr);
    out << "bin,frame,edr_db" << (have_ref ? ",error_db" : "") << "\n";
    for (int k = 0; k < edr_ir.bins; ++k)
      for (int n = 0; n < edr_ir.frames; ++n) {
        out << k << "," << n << "," << 10.0 * std::log10(std::max(edr_ir.at(k, n), 1e-12));
        if (have_ref) out << "," << (k < diff.bins && n < diff.frames ? diff.at(k, n) : 0.0);
        out << "\n";
      }
  }
  return 0;
}

// ---------------------------------------------------------------- verify-bounds

struct BoundArgs {
  double pole = 0.9;
  int mult = 1;
  std::string n_list = "64,128,256,512,1024,2048,4096";
  double ref_pole = -0.5;
  std::size_t param = 0;
  std::string out;
};

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "bad integer '" + item + "' in list");
    }
  }
  return out;
}

int run_bounds(const BoundArgs& a) {
  const auto ns = parse_ints(a.n_list);
  if (a.mult < 1) throw Error(ErrorKind::InvalidArgument, "--mult must be at least 1");
  const PoleSet poles = PoleSet::repeated_real(a.pole, a.mult);
  const std::vector<double> rb{1.0}, ra{1.0, -a.ref_pole};
  const auto reference = sample_rational(rb, ra, ns.empty() ? 2 : ns.back());
  const auto report = bound_suite(poles.to_rational(), reference, ns, a.param);
  auto csv = open_csv(a.out);
  csv << "n,aliasing_error,aliasing_error_sq,loss_error,grad_error,triangle_gap,tail_bound\n";
  for (const auto& r : report.records)
    csv << r.n_fft << "," << r.aliasing_error << "," << r.aliasing_error * r.aliasing_error << ","
        << r.loss_error << "," << r.grad_error << "," << r.triangle_gap << ","
        << poles.tail_bound(static_cast<std::size_t>(r.n_fft), 16 * static_cast<std::size_t>(ns.back())) << "\n";
  std::cout << "slope of ln aliasing error " << report.slope << " per sample (ln|pole| = "
            << std::log(std::abs(a.pole)) << ")\n";
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
  std::string model, out;
  bool reduced = false;
  std::uint64_t seed = 1;
  std::size_t coords = 50;
};

int run_gradcheck(const GradArgs& a) {
  const auto problem = gradcheck_problem(parse_model(a.model), a.reduced, a.seed);
  std::vector<std::size_t> coords(problem.objective->dim());
  std::iota(coords.begin(), coords.end(), 0);
  std::mt19937_64 rng(a.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(coords.size(), a.coords));
  std::sort(coords.begin(), coords.end());
  const auto report = gradient_check(*problem.objective, problem.codec, problem.raw, coords);
  auto csv = open_csv(a.out);
  csv << "index,group,analytic,fd,eps,error,ok\n";
  for (const auto& e : report.entries)
    csv << e.index << "," << e.group << "," << e.analytic << "," << e.fd << "," << e.eps << "," << e.error << ","
        << (e.ok ? 1 : 0) << "\n";
  std::cout << report.entries.size() << " coordinates, " << report.failures << " outside tolerance, max error "
            << report.max_error << "\n";
  return report.failures == 0 ? 0 : 2;
}

// ---------------------------------------------------------------- random-preset

int run_random(const std::string& model_name, std::uint64_t seed, const std::string& out) {
  const Model model = parse_model(model_name);
  Preset preset;
  switch (model) {
    case Model::FVN: {
      const auto cfg = VelvetConfig::standard();
      preset = make_preset(random_plausible_fvn(cfg, seed).params, cfg);
      break;
    }
    case Model::AFVN: {
      const auto cfg = VelvetConfig::standard();
      preset = make_preset(random_plausible_afvn(cfg, seed).params, cfg);
      break;
    }
    case Model::DN: {
      const DnConfig cfg;
      preset = make_preset(dn_random_plausible(cfg, seed), cfg);
      break;
    }
  }
  preset.source = "random";
  preset.seed = seed;
  preset.structure_seed = seed;
  preset_save(out, preset);
  std::cout << preset.value_count() << " parameters written to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------- flops

int run_flops(const std::string& model_name, const std::string& mode_name) {
  FlopMode mode;
  if (mode_name == "ar") mode = FlopMode::AR;
  else if (mode_name == "lti") mode = FlopMode::LTI;
  else if (mode_name == "tv") mode = FlopMode::TV;
  else throw Error(ErrorKind::InvalidArgument, "modes are ar, lti and tv");
  const auto audit = flop_audit(parse_model(model_name), mode);
  for (const auto& [name, count] : audit.parts) std::cout << name << "," << count << "\n";
  std::cout << "total," << audit.total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable artificial reverberation toolkit"};
  app.require_subcommand(1);
  const std::vector<std::string> models{"fvn", "afvn", "dn"};

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Render a preset to a WAV impulse response");
  c_render->add_option("--model", render.model)->required()->check(CLI::IsMember(models));
  c_render->add_option("--mode", render.mode, "ar, dar or tv (DN also takes lti)")->required();
  c_render->add_option("--preset", render.preset)->required()->check(CLI::ExistingFile);
  c_render->add_option("--out", render.out)->required();
  auto* seed_opt = c_render->add_option("--seed", render.seed, "velvet or rotation seed (default: preset)");
  c_render->add_option("--length", render.length, "samples");

  FitArgs fit_args;
  auto* c_fit = app.add_subcommand("fit", "Fit a model to a measured RIR");
  c_fit->add_option("--model", fit_args.model)->required()->check(CLI::IsMember(models));
  c_fit->add_option("--target", fit_args.target)->required()->check(CLI::ExistingFile);
  c_fit->add_option("--out", fit_args.out)->required();
  c_fit->add_option("--steps", fit_args.steps)->check(CLI::PositiveNumber)->description("default 2000");
  c_fit->add_option("--lr", fit_args.lr)->check(CLI::PositiveNumber)->description("initial rate, default 1e-2; decays tenfold over the run");
  c_fit->add_option("--seed", fit_args.seed);
  c_fit->add_option("--trace", fit_args.trace, "CSV of the loss per step");

  AnalyzeArgs analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Room-acoustic metrics, match loss and EDR");
  c_analyze->add_option("--ir", analyze.ir)->required()->check(CLI::ExistingFile);
  c_analyze->add_option("--ref", analyze.ref)->check(CLI::ExistingFile);
  c_analyze->add_option("--out", analyze.out)->required();
  c_analyze->add_option("--edr", analyze.edr, "CSV of the EDR surface");

  BoundArgs bounds;
  auto* c_bounds = app.add_subcommand("verify-bounds", "Aliasing, loss and gradient error against N");
  c_bounds->add_option("--pole", bounds.pole)->required();
  c_bounds->add_option("--mult", bounds.mult)->required();
  c_bounds->add_option("--n-list", bounds.n_list, "comma-separated, increasing")->required();
  c_bounds->add_option("--ref-pole", bounds.ref_pole, "pole of the one-pole reference")->capture_default_str();
  c_bounds->add_option("--param", bounds.param, "coefficient index (b then a) for the gradient")->capture_default_str();
  c_bounds->add_option("--out", bounds.out)->required();

  GradArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Analytic against finite-difference gradients");
  c_grad->add_option("--model", grad.model)->required()->check(CLI::IsMember(models));
  c_grad->add_flag("--reduced", grad.reduced, "small configuration");
  c_grad->add_option("--seed", grad.seed)->capture_default_str();
  c_grad->add_option("--coords", grad.coords, "number of random coordinates")->capture_default_str();
  c_grad->add_option("--out", grad.out)->required();

  std::string random_model, random_out;
  std::uint64_t random_seed = 0;
  auto* c_random = app.add_subcommand("random-preset", "Draw random plausible parameters");
  c_random->add_option("--model", random_model)->required()->check(CLI::IsMember(models));
  c_random->add_option("--seed", random_seed)->required();
  c_random->add_option("--out", random_out)->required();

  std::string flops_model, flops_mode;
  auto* c_flops = app.add_subcommand("flops", "Operations per sample of the real-time structure");
  c_flops->add_option("--model", flops_model)->required()->check(CLI::IsMember(models));
  c_flops->add_option("--mode", flops_mode, "ar, lti or tv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_render) {
      render.seed_given = seed_opt->count() > 0;
      return run_render(render);
    }
    if (*c_fit) return run_fit(fit_args);
    if (*c_analyze) return run_analyze(analyze);
    if (*c_bounds) return run_bounds(bounds);
    if (*c_grad) return run_gradcheck(grad);
    if (*c_random) return run_random(random_model, random_seed, random_out);
    if (*c_flops) return run_flops(flops_model, flops_mode);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numeric_failure(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
