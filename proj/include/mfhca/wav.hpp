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

#pragma once

#include <string>
#include <vector>

namespace mfhca {

struct AudioSegment {
  std::vector<float> samples;  // mono, nominally in [-1,1]
  int sample_rate = 16000;
};

// Reads RIFF/WAVE, PCM 16-bit or IEEE float 32-bit, mono or stereo (stereo is
// downmixed by averaging). 16-bit samples are scaled by 1/32768. Files whose
// rate differs from `expected_rate` are rejected; there is no resampling.
AudioSegment load_wav(const std::string& path, int expected_rate = 16000);

// Mono PCM16 writer; samples are clamped to [-1,1] and quantized by 32767.
void write_wav_pcm16(const std::string& path, const std::vector<float>& samples,
                     int sample_rate);

// Consecutive non-overlapping windows of `seg_seconds`; the final remainder is
// zero-padded to full length. Always yields at least one segment.
std::vector<AudioSegment> segment(const AudioSegment& audio, double seg_seconds = 3.0);

}  // namespace mfhca
