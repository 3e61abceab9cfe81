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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "darverb/error.hpp"
#include "darverb/io.hpp"

using namespace darverb;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("darverb_test_" + name)).string();
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no darverb::Error thrown");
  return ErrorKind::InvalidArgument;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void check_round_trip(const Preset& p) {
  const auto text = preset_serialize(p);
  const auto q = preset_parse(text);
  CHECK(q.model == p.model);
  CHECK(q.seed == p.seed);
  CHECK(q.structure_seed == p.structure_seed);
  CHECK(q.source == p.source);
  REQUIRE(q.groups.size() == p.groups.size());
  for (std::size_t i = 0; i < p.groups.size(); ++i) {
    CHECK(q.groups[i].first == p.groups[i].first);
    CHECK(q.groups[i].second == p.groups[i].second);  // bit-exact
  }
  CHECK(preset_serialize(q) == text);
}

}  // namespace

TEST_CASE("float WAV round trip", "[io]") {
  const auto path = temp_path("f32.wav");
  const std::vector<double> x{0.0, 0.5, -0.25, 1e-3, -1.0, 0.7071067811865476};
  wav_write(path, x, 44100);
  const auto w = wav_read(path);
  CHECK(w.sample_rate == 44100);
  REQUIRE(w.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.samples[i] == static_cast<double>(static_cast<float>(x[i])));
  fs::remove(path);
}

TEST_CASE("PCM16 WAV", "[io]") {
  const auto path = temp_path("pcm.wav");
  wav_write(path, std::vector<double>{32767.0 / 32768.0, -1.0, 2.0, 0.0}, 48000, WavFormat::Pcm16);
  const auto w = wav_read(path);
  REQUIRE(w.samples.size() == 4);
  CHECK(w.samples[0] == 32767.0 / 32768.0);
  CHECK(w.samples[1] == -1.0);
  CHECK(w.samples[2] == 32767.0 / 32768.0);  // clipped
  CHECK(w.samples[3] == 0.0);
  fs::remove(path);
}

TEST_CASE("malformed WAV files", "[io]") {
  const auto path = temp_path("bad.wav");
  wav_write(path, std::vector<double>(100, 0.1), 48000);
  const auto good = read_bytes(path);

  write_bytes(path, good.substr(0, 30));
  CHECK(kind_of([&] { wav_read(path); }) == ErrorKind::CorruptHeader);
  write_bytes(path, "RIFX" + good.substr(4));
  CHECK(kind_of([&] { wav_read(path); }) == ErrorKind::CorruptHeader);

  // 8-bit PCM
  auto eight = good;
  eight[20] = 1;
  eight[34] = 8;
  write_bytes(path, eight);
  CHECK(kind_of([&] { wav_read(path); }) == ErrorKind::UnsupportedFormat);
  CHECK(kind_of([&] { wav_read(temp_path("missing.wav")); }) == ErrorKind::InvalidArgument);
  fs::remove(path);
}

TEST_CASE("preset round trips", "[io]") {
  const auto cfg = VelvetConfig::standard();
  auto fvn = make_preset(random_plausible_fvn(cfg, 3).params, cfg);
  fvn.seed = 3;
  fvn.structure_seed = 17;
  fvn.source = "room a.wav";
  CHECK(fvn.value_count() == 930);
  CHECK(fvn.group("g").size() == 80);
  CHECK(fvn.group("svf").size() == 800);
  CHECK(fvn.group("h0").size() == 50);
  check_round_trip(fvn);

  const auto afvn = make_preset(random_plausible_afvn(cfg, 4).params, cfg);
  CHECK(afvn.value_count() == 360);
  check_round_trip(afvn);

  const auto dcfg = DnConfig::standard();
  auto dn = make_preset(dn_random_plausible(dcfg, 5), dcfg);
  dn.seed = 0xFFFFFFFFull;
  CHECK(dn.value_count() == 200);
  check_round_trip(dn);

  // Typed accessors reproduce the parameters.
  const auto back = preset_dn(preset_parse(preset_serialize(dn)));
  CHECK(make_preset(back, dcfg).groups == dn.groups);

  const auto path = temp_path("preset.toml");
  preset_save(path, fvn);
  CHECK(preset_load(path).groups == fvn.groups);
  fs::remove(path);
}

TEST_CASE("preset validation", "[io]") {
  const auto dcfg = DnConfig::standard();
  const auto dn = make_preset(dn_random_plausible(dcfg, 1), dcfg);
  auto text = preset_serialize(dn);

  auto bumped = text;
  bumped.replace(bumped.find("schema_version = 1"), 18, "schema_version = 2");
  CHECK(kind_of([&] { preset_parse(bumped); }) == ErrorKind::SchemaVersionMismatch);

  auto shortened = dn;
  shortened.groups[0].second.pop_back();
  CHECK(kind_of([&] { preset_parse(preset_serialize(shortened)); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { preset_fvn(dn); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { dn.group("nope"); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([&] { preset_parse("schema_version = 1\nmodel = [[["); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("FLOP audit", "[io]") {
  const auto fvn = flop_audit(Model::FVN, FlopMode::AR);
  const auto afvn = flop_audit(Model::AFVN, FlopMode::AR);
  const auto lti = flop_audit(Model::DN, FlopMode::LTI);
  const auto tv = flop_audit(Model::DN, FlopMode::TV);
  for (const auto* a : {&fvn, &afvn, &lti, &tv}) {
    long long sum = 0;
    for (const auto& [name, n] : a->parts) sum += n;
    CHECK(sum == a->total);
  }
  CHECK(afvn.total < fvn.total);
  CHECK(lti.total >= 700);
  CHECK(lti.total <= 1100);
  CHECK(tv.total > lti.total);
  CHECK(kind_of([] { flop_audit(Model::DN, FlopMode::AR); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([] { flop_audit(Model::FVN, FlopMode::TV); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("metrics survive a float WAV round trip", "[io]") {
  const auto cfg = DnConfig::standard();
  const auto ir = render_dn(dn_random_plausible(cfg, 7), cfg, default_mixing(cfg, 7), DnMode::LTI, 48000);
  const auto path = temp_path("metrics.wav");
  wav_write(path, ir, 48000);
  const auto back = wav_read(path).samples;
  fs::remove(path);
  CHECK_THAT(t30(back), Catch::Matchers::WithinRel(t30(ir), 1e-4));
  CHECK(match_loss(back, ir) < 1e-5 * match_loss(std::vector<double>(ir.size(), 0.0), ir));
}
