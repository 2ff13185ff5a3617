// Copyright 2026 The MFHCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "mfhca/errors.hpp"
#include "mfhca/spectrogram.hpp"
#include "mfhca/wav.hpp"

using namespace mfhca;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "mfhca_frontend_tests";
  fs::create_directories(dir);
  return dir / name;
}

void append_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
void append_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

// Hand-assembled PCM16 RIFF file, independent of the library's writer.
std::string build_pcm16_wav(const std::vector<int16_t>& samples, int rate, int channels) {
  std::string payload;
  for (int16_t v : samples) append_u16(payload, static_cast<uint16_t>(v));
  std::string out = "RIFF";
  append_u32(out, static_cast<uint32_t>(36 + payload.size()));
  out += "WAVEfmt ";
  append_u32(out, 16);
  append_u16(out, 1);
  append_u16(out, static_cast<uint16_t>(channels));
  append_u32(out, static_cast<uint32_t>(rate));
  append_u32(out, static_cast<uint32_t>(rate * 2 * channels));
  append_u16(out, static_cast<uint16_t>(2 * channels));
  append_u16(out, 16);
  out += "data";
  append_u32(out, static_cast<uint32_t>(payload.size()));
  out += payload;
  return out;
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

AudioSegment sine(double hz, double seconds, int rate = 16000, float amp = 0.5f) {
  AudioSegment s;
  s.sample_rate = rate;
  const auto n = static_cast<size_t>(seconds * rate);
  s.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    s.samples[i] = amp * static_cast<float>(std::sin(2.0 * M_PI * hz * double(i) / rate));
  return s;
}

}  // namespace

TEST_CASE("load_wav reads a minimal zero PCM16 file") {
  auto p = temp_file("zeros.wav");
  write_file(p, build_pcm16_wav(std::vector<int16_t>(16, 0), 16000, 1));
  auto a = load_wav(p.string());
  REQUIRE(a.samples.size() == 16);
  for (float v : a.samples) CHECK(v == 0.0f);
}

TEST_CASE("load_wav scales PCM16 by 1/32768") {
  auto p = temp_file("fullscale.wav");
  write_file(p, build_pcm16_wav({32767, -32768, 16384}, 16000, 1));
  auto a = load_wav(p.string());
  CHECK(a.samples[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK(a.samples[1] == doctest::Approx(-1.0));
  CHECK(a.samples[2] == doctest::Approx(0.5));
}

TEST_CASE("load_wav downmixes stereo by averaging") {
  auto p = temp_file("stereo.wav");
  write_file(p, build_pcm16_wav({16384, -16384, 8192, 8192}, 16000, 2));
  auto a = load_wav(p.string());
  REQUIRE(a.samples.size() == 2);
  CHECK(a.samples[0] == doctest::Approx(0.0));
  CHECK(a.samples[1] == doctest::Approx(0.25));
}

TEST_CASE("load_wav rejects rate mismatch and bad headers") {
  auto p = temp_file("rate8k.wav");
  write_file(p, build_pcm16_wav({0, 0}, 8000, 1));
  CHECK_THROWS_WITH_AS(load_wav(p.string()), doctest::Contains("sample rate"),
                       ValidationError);
  auto q = temp_file("nonwav.bin");
  write_file(q, "JUNKJUNKJUNKJUNK");
  CHECK_THROWS_WITH_AS(load_wav(q.string()), doctest::Contains("RIFF"), ValidationError);
  // float64 is not a supported codec
  auto r = temp_file("badfmt.wav");
  std::string bytes = build_pcm16_wav({0}, 16000, 1);
  bytes[20] = 3;  // format = IEEE float, but bits stay 16
  write_file(r, bytes);
  CHECK_THROWS_WITH_AS(load_wav(r.string()), doctest::Contains("codec"), ValidationError);
}

TEST_CASE("wav writer round-trips through the loader") {
  std::mt19937 rng(3);
  std::vector<float> x(1000);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  for (auto& v : x) v = d(rng);
  auto p = temp_file("roundtrip.wav");
  write_wav_pcm16(p.string(), x, 16000);
  auto a = load_wav(p.string());
  REQUIRE(a.samples.size() == x.size());
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(a.samples[i] == doctest::Approx(x[i]).epsilon(1e-3));
}

TEST_CASE("segment splits 7 s into 3 padded segments") {
  AudioSegment a;
  a.samples.assign(7 * 16000, 0.25f);
  auto segs = segment(a, 3.0);
  REQUIRE(segs.size() == 3);
  for (const auto& s : segs) CHECK(s.samples.size() == 48000);
  // last segment: 1 s of data + 2 s of zeros
  CHECK(segs[2].samples[15999] == 0.25f);
  CHECK(segs[2].samples[16000] == 0.0f);
  CHECK(segs[2].samples[47999] == 0.0f);
}

TEST_CASE("segment of exactly 3 s is the identity") {
  std::mt19937 rng(5);
  AudioSegment a;
  a.samples.resize(48000);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  for (auto& v : a.samples) v = d(rng);
  auto segs = segment(a, 3.0);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].samples == a.samples);
}

TEST_CASE("short input yields a single zero-padded segment") {
  AudioSegment a;
  a.samples.assign(8000, 1.0f);  // 0.5 s
  auto segs = segment(a, 3.0);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].samples.size() == 48000);
  CHECK(segs[0].samples[7999] == 1.0f);
  for (size_t i = 8000; i < 48000; ++i) REQUIRE(segs[0].samples[i] == 0.0f);
  CHECK_THROWS_AS(segment(AudioSegment{}, 3.0), ValidationError);
}

TEST_CASE("segmentation is lossless on the non-padded prefix") {
  std::mt19937 rng(7);
  AudioSegment a;
  a.samples.resize(100000);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  for (auto& v : a.samples) v = d(rng);
  auto segs = segment(a, 3.0);
  std::vector<float> joined;
  for (const auto& s : segs) joined.insert(joined.end(), s.samples.begin(), s.samples.end());
  joined.resize(a.samples.size());
  CHECK(joined == a.samples);
}

TEST_CASE("frame count matches the closed form over a length sweep") {
  FrontendConfig cfg;
  for (int64_t L = 640; L <= 64000; L += 7) {
    const int expect = static_cast<int>((L - 640) / 160) + 1;
    REQUIRE(frame_count(L, cfg) == expect);
  }
  CHECK_THROWS_AS(frame_count(639, cfg), ValidationError);
}

TEST_CASE("zero signal gives a constant log-floor spectrogram") {
  AudioSegment a;
  a.samples.assign(48000, 0.0f);
  auto spec = log_spectrogram(a);
  CHECK(spec.rows == 297);
  CHECK(spec.cols == 200);
  const float expect = std::log(1e-10f);
  for (float v : spec.values) REQUIRE(v == doctest::Approx(expect));
}

TEST_CASE("3 s at 16 kHz yields a 297x200 spectrogram") {
  auto spec = log_spectrogram(sine(440.0, 3.0));
  CHECK(spec.rows == 297);
  CHECK(spec.cols == 200);
  for (float v : spec.values) REQUIRE(std::isfinite(v));
}

TEST_CASE("a 1 kHz sine peaks at bin 50 in every frame") {
  auto spec = log_spectrogram(sine(1000.0, 3.0));
  for (int r = 0; r < spec.rows; ++r) {
    int argmax = 0;
    for (int c = 1; c < spec.cols; ++c)
      if (spec.at(r, c) > spec.at(r, argmax)) argmax = c;
    REQUIRE(argmax == 50);  // 1000 * 800 / 16000
  }
}

TEST_CASE("log_spectrogram rejects too-short segments") {
  AudioSegment a;
  a.samples.assign(639, 0.0f);
  CHECK_THROWS_AS(log_spectrogram(a), ValidationError);
}

TEST_CASE("the DFT of an impulse has constant magnitude one") {
  std::vector<double> impulse(800, 0.0);
  impulse[0] = 1.0;
  auto mag = dft_magnitude(impulse, 800, 200);
  for (double m : mag) REQUIRE(m == doctest::Approx(1.0).epsilon(1e-9));
  // Shifted impulse keeps unit magnitude too.
  std::vector<double> shifted(800, 0.0);
  shifted[3] = 1.0;
  for (double m : dft_magnitude(shifted, 800, 200)) REQUIRE(m == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("white noise spectrogram energy is flat across bins") {
  std::mt19937 rng(11);
  std::normal_distribution<float> d(0.f, 0.1f);
  std::vector<double> mean_power(200, 0.0);
  int64_t frames = 0;
  for (int trial = 0; trial < 10; ++trial) {
    AudioSegment a;
    a.samples.resize(48000);
    for (auto& v : a.samples) v = d(rng);
    auto spec = log_spectrogram(a);
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < 200; ++c) mean_power[static_cast<size_t>(c)] += std::exp(double(spec.at(r, c)));
    frames += spec.rows;
  }
  double lo = 1e300, hi = 0.0;
  for (double& p : mean_power) {
    p /= double(frames);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  CHECK(hi / lo < 2.0);
}

TEST_CASE("mel option produces the requested band count") {
  FrontendConfig cfg;
  cfg.mel_bins = 40;
  auto spec = log_spectrogram(sine(1000.0, 3.0), cfg);
  CHECK(spec.rows == 297);
  CHECK(spec.cols == 40);
  for (float v : spec.values) REQUIRE(std::isfinite(v));
}

TEST_CASE("normalizer basics") {
  auto spec = log_spectrogram(sine(700.0, 3.0));
  // identity parameters leave values alone
  Spectrogram copy = spec;
  normalize_spectrogram(copy, SpecNormalizer{0.0, 1.0});
  CHECK(copy.values == spec.values);
  // fitting on the spectrogram itself standardizes it
  auto n = fit_normalizer({&spec});
  normalize_spectrogram(spec, n);
  double mean = 0.0;
  for (float v : spec.values) mean += v;
  mean /= double(spec.values.size());
  CHECK(std::fabs(mean) < 1e-5);
  // constant spectrogram has zero variance
  Spectrogram flat;
  flat.rows = 2;
  flat.cols = 3;
  flat.values.assign(6, 4.f);
  CHECK_THROWS_WITH_AS(fit_normalizer({&flat}), doctest::Contains("variance"),
                       ValidationError);
}
