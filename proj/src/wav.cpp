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

#include "mfhca/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mfhca/errors.hpp"

namespace mfhca {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t read_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

}  // namespace

AudioSegment load_wav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open wav file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ValidationError(path + ": not a RIFF/WAVE file (bad RIFF header)");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[5] = {0};
    std::memcpy(id, bytes.data() + pos, 4);
    const uint32_t len = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size())
      throw ValidationError(path + ": truncated '" + id + "' chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ValidationError(path + ": 'fmt ' chunk too short");
      const uint8_t* f = bytes.data() + pos;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = len;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw ValidationError(path + ": missing 'fmt ' chunk");
  if (!data) throw ValidationError(path + ": missing 'data' chunk");
  if (channels != 1 && channels != 2)
    throw ValidationError(path + ": unsupported channel count " + std::to_string(channels));
  if (static_cast<int>(rate) != expected_rate)
    throw ValidationError(path + ": sample rate " + std::to_string(rate) +
                          " differs from required " + std::to_string(expected_rate) +
                          " (resampling not supported)");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw ValidationError(path + ": unsupported codec (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + "-bit); need PCM16 or float32");

  const uint32_t bytes_per_sample = bits / 8;
  const uint32_t frame_size = bytes_per_sample * channels;
  const uint32_t frames = data_len / frame_size;

  AudioSegment out;
  out.sample_rate = expected_rate;
  out.samples.resize(frames);
  for (uint32_t i = 0; i < frames; ++i) {
    float acc = 0.f;
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* p = data + static_cast<size_t>(i) * frame_size + c * bytes_per_sample;
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, p, 2);
        acc += float(v) / 32768.0f;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += v;
      }
    }
    out.samples[i] = acc / float(channels);
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const std::vector<float>& samples,
                     int sample_rate) {
  std::string payload;
  payload.reserve(samples.size() * 2);
  for (float v : samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    const auto q = static_cast<int16_t>(std::lrintf(c * 32767.0f));
    put_u16(payload, static_cast<uint16_t>(q));
  }
  std::string out;
  out.reserve(44 + payload.size());
  out += "RIFF";
  put_u32(out, static_cast<uint32_t>(36 + payload.size()));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(sample_rate));
  put_u32(out, static_cast<uint32_t>(sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, static_cast<uint32_t>(payload.size()));
  out += payload;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<AudioSegment> segment(const AudioSegment& audio, double seg_seconds) {
  if (audio.samples.empty()) throw ValidationError("segment: empty audio");
  const auto seg_len = static_cast<size_t>(std::llround(seg_seconds * audio.sample_rate));
  if (seg_len == 0) throw ValidationError("segment: zero segment length");
  const size_t n = audio.samples.size();
  const size_t count = (n + seg_len - 1) / seg_len;
  std::vector<AudioSegment> out;
  out.reserve(count);
  for (size_t s = 0; s < count; ++s) {
    AudioSegment seg;
    seg.sample_rate = audio.sample_rate;
    seg.samples.assign(seg_len, 0.0f);
    const size_t begin = s * seg_len;
    const size_t take = std::min(seg_len, n - begin);
    std::copy_n(audio.samples.begin() + static_cast<std::ptrdiff_t>(begin), take,
                seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace mfhca
