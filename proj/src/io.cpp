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


#include "darverb/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <toml.hpp>

#include "darverb/error.hpp"

namespace darverb {
namespace {

// ---------------------------------------------------------------- WAV

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::CorruptHeader, path + ": " + what);
}

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

// ---------------------------------------------------------------- presets

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(ErrorKind::ShapeMismatch, what);
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorKind::InvalidArgument, "preset: " + what);
}

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s = buf;
  // TOML spells non-finite values without a sign on nan and as "inf".
  if (s == "-nan" || s == "nan") return "nan";
  return s;
}

template <typename T>
std::string array(const std::vector<T>& values, std::size_t per_line = 4) {
  if (values.empty()) return "[]";
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values.size() > per_line && i % per_line == 0) out += "\n  ";
    if constexpr (std::is_floating_point_v<T>)
      out += number(values[i]);
    else
      out += std::to_string(values[i]);
    const bool multi = values.size() > per_line;
    if (multi) out += (i + 1) % per_line == 0 || i + 1 == values.size() ? "," : ", ";
    else if (i + 1 < values.size()) out += ", ";
  }
  if (values.size() > per_line) out += "\n";
  return out + "]";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::int64_t as_toml_int(std::uint64_t v) {
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw Error(ErrorKind::InvalidArgument, "seed does not fit a signed 64-bit integer");
  return static_cast<std::int64_t>(v);
}

const toml::table& sub_table(const toml::table& root, const char* name) {
  const auto* t = root[name].as_table();
  if (!t) malformed(std::string("missing [") + name + "] table");
  return *t;
}

std::int64_t get_int(const toml::table& t, const char* key) {
  const auto v = t[key].value<std::int64_t>();
  if (!v || !t[key].is_integer()) malformed(std::string("'") + key + "' must be an integer");
  return *v;
}

int get_small_int(const toml::table& t, const char* key) {
  const auto v = get_int(t, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    malformed(std::string("'") + key + "' out of range");
  return static_cast<int>(v);
}

double get_double(const toml::table& t, const char* key) {
  const auto v = t[key].value<double>();
  if (!v) malformed(std::string("'") + key + "' must be a number");
  return *v;
}

std::string get_string(const toml::table& t, const char* key) {
  const auto v = t[key].value<std::string>();
  if (!v) malformed(std::string("'") + key + "' must be a string");
  return *v;
}

const toml::array& get_array(const toml::table& t, const std::string& key) {
  const auto* a = t[key].as_array();
  if (!a) malformed("'" + key + "' must be an array");
  return *a;
}

std::vector<double> doubles(const toml::array& a, const std::string& key) {
  std::vector<double> out;
  out.reserve(a.size());
  for (const auto& node : a) {
    const auto v = node.value<double>();
    if (!v) malformed("'" + key + "' must hold numbers only");
    out.push_back(*v);
  }
  return out;
}

std::vector<int> ints(const toml::table& t, const char* key) {
  std::vector<int> out;
  for (const auto& node : get_array(t, key)) {
    const auto v = node.value<std::int64_t>();
    if (!v || !node.is_integer()) malformed(std::string("'") + key + "' must hold integers only");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

void put_svf(std::vector<double>& out, const SvfParams& s) {
  out.insert(out.end(), {s.f, s.R, s.mLP, s.mBP, s.mHP});
}

SvfParams take_svf(const std::vector<double>& v, std::size_t& at) {
  SvfParams s{v[at], v[at + 1], v[at + 2], v[at + 3], v[at + 4]};
  at += 5;
  return s;
}

void expect_size(const Preset& p, const std::string& name, std::size_t n) {
  const auto& g = p.group(name);
  if (g.size() != n)
    shape_error("group '" + name + "' has " + std::to_string(g.size()) + " values, config needs " +
                std::to_string(n));
}

void expect_groups(const Preset& p, std::initializer_list<const char*> names) {
  if (p.groups.size() != names.size())
    shape_error("preset for " + std::string(to_string(p.model)) + " needs " +
                std::to_string(names.size()) + " groups, found " + std::to_string(p.groups.size()));
  for (const char* n : names) (void)p.group(n);
}

long long pulse_count(int avg_distance, int length) {
  return static_cast<long long>(gen_velvet(avg_distance, length, 0).positions.size());
}

}  // namespace

WavData wav_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    corrupt(path, "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= size) {
    const std::uint32_t chunk = le32(p + at + 4);
    const std::size_t body = at + 8;
    if (chunk > size - body) corrupt(path, "chunk runs past the end of the file");
    if (std::memcmp(p + at, "fmt ", 4) == 0) {
      if (chunk < 16) corrupt(path, "fmt chunk too short");
      format = le16(p + body);
      channels = le16(p + body + 2);
      rate = le32(p + body + 4);
      bits = le16(p + body + 14);
      if (format == kFormatExtensible) {
        if (chunk < 40) corrupt(path, "extensible fmt chunk too short");
        format = le16(p + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(p + at, "data", 4) == 0) {
      if (!have_fmt) corrupt(path, "data chunk before fmt chunk");
      if (channels == 0 || rate == 0) corrupt(path, "zero channels or sample rate");
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32)
        throw Error(ErrorKind::UnsupportedFormat,
                    path + ": format " + std::to_string(format) + " with " + std::to_string(bits) +
                        " bits (need PCM16 or float32)");
      const std::size_t width = bits / 8;
      const std::size_t frame = width * channels;
      WavData out;
      out.sample_rate = static_cast<int>(rate);
      const std::size_t frames = chunk / frame;
      out.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        const unsigned char* s = p + body + i * frame;
        if (pcm16) {
          out.samples[i] = static_cast<std::int16_t>(le16(s)) / 32768.0;
        } else {
          const std::uint32_t u = le32(s);
          float f;
          std::memcpy(&f, &u, sizeof f);
          out.samples[i] = f;
        }
      }
      return out;
    }
    at = body + chunk + (chunk & 1u);
  }
  corrupt(path, have_fmt ? "missing data chunk" : "missing fmt chunk");
}

void wav_write(const std::string& path, std::span<const double> samples, int sample_rate,
               WavFormat format) {
  if (sample_rate <= 0) throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
  const std::uint16_t bits = format == WavFormat::Float32 ? 32 : 16;
  const std::uint32_t width = bits / 8u;
  const auto data_size = static_cast<std::uint32_t>(samples.size() * width);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put32(out, 36 + data_size);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, format == WavFormat::Float32 ? kFormatFloat : kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * width);
  put16(out, static_cast<std::uint16_t>(width));
  put16(out, bits);
  out += "data";
  put32(out, data_size);
  for (double x : samples) {
    if (format == WavFormat::Float32) {
      const float f = static_cast<float>(x);
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof u);
      put32(out, u);
    } else {
      const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::InvalidArgument, "write failed for " + path);
}

const std::vector<double>& Preset::group(const std::string& name) const {
  for (const auto& [n, v] : groups)
    if (n == name) return v;
  shape_error("preset has no group '" + name + "'");
}

std::size_t Preset::value_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.second.size();
  return n;
}

Preset make_preset(const FvnParams& params, const VelvetConfig& config) {
  check_shapes(params, config);
  Preset p;
  p.model = Model::FVN;
  p.sample_rate = config.sample_rate;
  p.velvet = config;
  std::vector<double> svf;
  for (const auto& chain : params.color)
    for (const auto& s : chain) put_svf(svf, s);
  p.groups = {{"g", params.gains}, {"svf", svf}, {"h0", params.bypass}};
  return p;
}

Preset make_preset(const AfvnParams& params, const VelvetConfig& config) {
  check_shapes(params, config);
  Preset p;
  p.model = Model::AFVN;
  p.sample_rate = config.sample_rate;
  p.velvet = config;
  std::vector<double> initial, delta;
  for (const auto& s : params.initial) put_svf(initial, s);
  for (const auto& chain : params.delta)
    for (const auto& s : chain) put_svf(delta, s);
  p.groups = {{"g", params.gains}, {"svf_initial", initial}, {"svf_delta", delta}, {"h0", params.bypass}};
  return p;
}

Preset make_preset(const DnParams& params, const DnConfig& config) {
  check_shapes(params, config);
  Preset p;
  p.model = Model::DN;
  p.sample_rate = config.sample_rate;
  p.dn = config;
  std::vector<double> gamma, post, absorption;
  for (const auto& row : params.sap_gamma) gamma.insert(gamma.end(), row.begin(), row.end());
  for (const auto& s : params.post) put_svf(post, s);
  for (const auto& band : params.absorption) absorption.insert(absorption.end(), {band.f, band.R, band.G});
  p.groups = {{"b", params.b},       {"c", params.c},
              {"sap_gamma", gamma},  {"post_svf", post},
              {"absorption", absorption}, {"h0", params.bypass}};
  return p;
}

FvnParams preset_fvn(const Preset& p) {
  if (p.model != Model::FVN) throw Error(ErrorKind::InvalidArgument, "preset is not an FVN preset");
  const auto& c = p.velvet;
  c.validate();
  const auto s = static_cast<std::size_t>(c.segments());
  const auto k = static_cast<std::size_t>(c.order);
  expect_groups(p, {"g", "svf", "h0"});
  expect_size(p, "g", s * static_cast<std::size_t>(c.sub_segments));
  expect_size(p, "svf", s * k * 5);
  expect_size(p, "h0", static_cast<std::size_t>(c.bypass_length));
  FvnParams out;
  out.gains = p.group("g");
  out.bypass = p.group("h0");
  const auto& svf = p.group("svf");
  std::size_t at = 0;
  out.color.resize(s);
  for (auto& chain : out.color)
    for (std::size_t j = 0; j < k; ++j) chain.push_back(take_svf(svf, at));
  return out;
}

AfvnParams preset_afvn(const Preset& p) {
  if (p.model != Model::AFVN) throw Error(ErrorKind::InvalidArgument, "preset is not an AFVN preset");
  const auto& c = p.velvet;
  c.validate();
  const auto s = static_cast<std::size_t>(c.segments());
  const auto k1 = static_cast<std::size_t>(c.initial_order);
  const auto kd = static_cast<std::size_t>(c.delta_order);
  expect_groups(p, {"g", "svf_initial", "svf_delta", "h0"});
  expect_size(p, "g", s * static_cast<std::size_t>(c.sub_segments));
  expect_size(p, "svf_initial", k1 * 5);
  expect_size(p, "svf_delta", (s - 1) * kd * 5);
  expect_size(p, "h0", static_cast<std::size_t>(c.bypass_length));
  AfvnParams out;
  out.gains = p.group("g");
  out.bypass = p.group("h0");
  std::size_t at = 0;
  for (std::size_t j = 0; j < k1; ++j) out.initial.push_back(take_svf(p.group("svf_initial"), at));
  at = 0;
  out.delta.resize(s - 1);
  for (auto& chain : out.delta)
    for (std::size_t j = 0; j < kd; ++j) chain.push_back(take_svf(p.group("svf_delta"), at));
  return out;
}

DnParams preset_dn(const Preset& p) {
  if (p.model != Model::DN) throw Error(ErrorKind::InvalidArgument, "preset is not a DN preset");
  const auto& c = p.dn;
  c.validate();
  const auto m = static_cast<std::size_t>(c.channels());
  const auto ku = static_cast<std::size_t>(c.allpasses_per_line());
  expect_groups(p, {"b", "c", "sap_gamma", "post_svf", "absorption", "h0"});
  expect_size(p, "b", m);
  expect_size(p, "c", m);
  expect_size(p, "sap_gamma", m * ku);
  expect_size(p, "post_svf", static_cast<std::size_t>(c.post_order) * 5);
  expect_size(p, "absorption", static_cast<std::size_t>(c.absorption_order) * 3);
  expect_size(p, "h0", static_cast<std::size_t>(c.bypass_length));
  DnParams out = zero_dn_params(c);
  out.b = p.group("b");
  out.c = p.group("c");
  const auto& gamma = p.group("sap_gamma");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < ku; ++j) out.sap_gamma[i][j] = gamma[i * ku + j];
  std::size_t at = 0;
  for (auto& s : out.post) s = take_svf(p.group("post_svf"), at);
  const auto& abs = p.group("absorption");
  for (std::size_t i = 0; i < out.absorption.size(); ++i) {
    out.absorption[i].f = abs[3 * i];
    out.absorption[i].R = abs[3 * i + 1];
    out.absorption[i].G = abs[3 * i + 2];
  }
  out.bypass = p.group("h0");
  return out;
}

std::string preset_serialize(const Preset& p) {
  std::ostringstream out;
  out << "schema_version = " << p.schema_version << "\n";
  out << "model = " << quoted(to_string(p.model)) << "\n";
  out << "sample_rate = " << number(p.sample_rate) << "\n\n";
  out << "[provenance]\n";
  out << "source = " << quoted(p.source) << "\n";
  out << "seed = " << as_toml_int(p.seed) << "\n\n";
  out << "[config]\n";
  out << "structure_seed = " << as_toml_int(p.structure_seed) << "\n";
  if (p.model == Model::DN) {
    const auto& c = p.dn;
    std::vector<int> sap_delays;
    for (const auto& row : c.sap_delays) sap_delays.insert(sap_delays.end(), row.begin(), row.end());
    out << "delays = " << array(c.delays, 8) << "\n";
    out << "sap_delays = " << array(sap_delays, 8) << "\n";
    out << "post_order = " << c.post_order << "\n";
    out << "absorption_order = " << c.absorption_order << "\n";
    out << "n_fft = " << c.n_fft << "\n";
    out << "bypass_length = " << c.bypass_length << "\n";
    out << "rotation_period = " << c.rotation_period << "\n";
  } else {
    const auto& c = p.velvet;
    std::vector<double> gammas;
    std::vector<int> taus;
    for (const auto& s : c.saps) {
      gammas.push_back(s.gamma);
      taus.push_back(s.tau);
    }
    out << "segment_lengths = " << array(c.segment_lengths, 8) << "\n";
    out << "pulse_distances = " << array(c.pulse_distances, 8) << "\n";
    out << "sap_gammas = " << array(gammas) << "\n";
    out << "sap_delays = " << array(taus, 8) << "\n";
    out << "sub_segments = " << c.sub_segments << "\n";
    out << "order = " << c.order << "\n";
    out << "initial_order = " << c.initial_order << "\n";
    out << "delta_order = " << c.delta_order << "\n";
    out << "n_fft = " << c.n_fft << "\n";
    out << "bypass_length = " << c.bypass_length << "\n";
  }
  out << "\n[arps]\n";
  for (const auto& [name, values] : p.groups) out << name << " = " << array(values) << "\n";
  return out.str();
}

Preset preset_parse(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line;
    malformed(msg.str());
  }
  Preset p;
  p.schema_version = get_small_int(root, "schema_version");
  if (p.schema_version != kPresetSchemaVersion)
    throw Error(ErrorKind::SchemaVersionMismatch,
                "preset schema " + std::to_string(p.schema_version) + ", expected " +
                    std::to_string(kPresetSchemaVersion));
  p.model = parse_model(get_string(root, "model"));
  p.sample_rate = get_double(root, "sample_rate");

  const auto& prov = sub_table(root, "provenance");
  p.source = get_string(prov, "source");
  p.seed = static_cast<std::uint64_t>(get_int(prov, "seed"));

  const auto& cfg = sub_table(root, "config");
  p.structure_seed = static_cast<std::uint64_t>(get_int(cfg, "structure_seed"));
  if (p.model == Model::DN) {
    DnConfig c;
    c.sample_rate = p.sample_rate;
    c.delays = ints(cfg, "delays");
    const auto flat = ints(cfg, "sap_delays");
    if (c.delays.empty() || flat.size() % c.delays.size() != 0)
      shape_error("sap_delays must hold the same number of allpasses for every line");
    const std::size_t per_line = flat.size() / c.delays.size();
    c.sap_delays.assign(c.delays.size(), {});
    for (std::size_t i = 0; i < c.delays.size(); ++i)
      c.sap_delays[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(i * per_line),
                             flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_line));
    c.post_order = get_small_int(cfg, "post_order");
    c.absorption_order = get_small_int(cfg, "absorption_order");
    c.n_fft = get_small_int(cfg, "n_fft");
    c.bypass_length = get_small_int(cfg, "bypass_length");
    c.rotation_period = get_small_int(cfg, "rotation_period");
    c.validate();
    p.dn = c;
  } else {
    VelvetConfig c = VelvetConfig::standard();
    c.sample_rate = p.sample_rate;
    c.segment_lengths = ints(cfg, "segment_lengths");
    c.pulse_distances = ints(cfg, "pulse_distances");
    const auto gammas = doubles(get_array(cfg, "sap_gammas"), "sap_gammas");
    const auto taus = ints(cfg, "sap_delays");
    if (gammas.size() != taus.size()) shape_error("sap_gammas and sap_delays differ in length");
    c.saps.clear();
    for (std::size_t i = 0; i < gammas.size(); ++i) c.saps.push_back({gammas[i], taus[i]});
    c.sub_segments = get_small_int(cfg, "sub_segments");
    c.order = get_small_int(cfg, "order");
    c.initial_order = get_small_int(cfg, "initial_order");
    c.delta_order = get_small_int(cfg, "delta_order");
    c.n_fft = get_small_int(cfg, "n_fft");
    c.bypass_length = get_small_int(cfg, "bypass_length");
    c.validate();
    p.velvet = c;
  }

  const auto& arps = sub_table(root, "arps");
  // toml++ tables are unordered; restore the canonical group order.
  const std::vector<std::string> order =
      p.model == Model::FVN    ? std::vector<std::string>{"g", "svf", "h0"}
      : p.model == Model::AFVN ? std::vector<std::string>{"g", "svf_initial", "svf_delta", "h0"}
                               : std::vector<std::string>{"b", "c", "sap_gamma", "post_svf", "absorption", "h0"};
  for (const auto& [key, node] : arps)
    if (std::find(order.begin(), order.end(), std::string(key.str())) == order.end())
      shape_error("unknown group '" + std::string(key.str()) + "' for model " + to_string(p.model));
  for (const auto& name : order) {
    if (!arps.contains(name)) shape_error("missing group '" + name + "'");
    p.groups.emplace_back(name, doubles(get_array(arps, name), name));
  }

  // Shape check against the echoed config.
  switch (p.model) {
    case Model::FVN: (void)preset_fvn(p); break;
    case Model::AFVN: (void)preset_afvn(p); break;
    case Model::DN: (void)preset_dn(p); break;
  }
  return p;
}

Preset preset_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return preset_parse(text.str());
}

void preset_save(const std::string& path, const Preset& preset) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out << preset_serialize(preset);
  if (!out) throw Error(ErrorKind::InvalidArgument, "write failed for " + path);
}

FlopAudit flop_audit(Model model, FlopMode mode, const VelvetConfig& velvet, const DnConfig& dn) {
  constexpr long long kBiquad = 9;  // 5 multiplies, 4 adds
  constexpr long long kAllpass = 4;  // 2 multiplies, 2 adds
  FlopAudit audit;
  auto add = [&](const std::string& name, long long count) {
    audit.parts.emplace_back(name, count);
    audit.total += count;
  };

  if (model == Model::DN) {
    if (mode == FlopMode::AR) throw Error(ErrorKind::InvalidArgument, "DN counts need mode lti or tv");
    dn.validate();
    const long long m = dn.channels();
    const long long sap_count = m * dn.allpasses_per_line();
    add("input gains b", 2 * m);                      // multiply and add into each line
    add("mixing matrix", m * m + m * (m - 1));
    if (mode == FlopMode::TV) add("matrix update Q R", 2 * m * m * m - m * m);
    add("allpasses", kAllpass * sap_count);
    add("absorption filters", kBiquad * dn.absorption_order * m);
    add("output gains c", 2 * m - 1);
    add("post filter", kBiquad * dn.post_order);
    add("bypass FIR", 2LL * dn.bypass_length - 1);
    add("output sum", 1);
    return audit;
  }

  if (mode != FlopMode::AR) throw Error(ErrorKind::InvalidArgument, "velvet counts need mode ar");
  velvet.validate();
  const long long s = velvet.segments();
  const long long m = velvet.sub_segments;
  long long velvet_ops = 0;
  for (int i = 0; i < velvet.segments(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    // Signed taps summed per sub-segment, one gain each, then combined.
    velvet_ops += pulse_count(velvet.pulse_distances[idx], velvet.segment_lengths[idx]) + m - 1;
  }
  add("velvet taps and gains", velvet_ops);
  add("allpasses", kAllpass * static_cast<long long>(velvet.saps.size()));
  if (model == Model::FVN) {
    add("coloration filters", kBiquad * velvet.order * s);
    add("segment sum", s - 1);
  } else {
    add("coloration filters", kBiquad * (velvet.initial_order + velvet.delta_order * (s - 1)));
    add("nested sums", s - 1);
  }
  add("bypass FIR", 2LL * velvet.bypass_length - 1);
  add("output sum", 1);
  return audit;
}

}  // namespace darverb
