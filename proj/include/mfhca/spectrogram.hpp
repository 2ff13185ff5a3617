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

// Log-spectrogram frontend: 40 ms symmetric Hamming frames with 10 ms hop,
// zero-padded to an 800-point DFT, keeping the first 200 bins as
// log(magnitude^2 + floor).

#pragma once

#include <string>
#include <vector>

#include "mfhca/wav.hpp"

namespace mfhca {

struct FrontendConfig {
  int sample_rate = 16000;
  int frame_ms = 40;
  int hop_ms = 10;
  int dft_len = 800;
  int bins = 200;
  double log_floor = 1e-10;
  // 0 keeps the linear-frequency bins above; >0 swaps in a triangular mel
  // filterbank with that many bands.
  int mel_bins = 0;

  int frame_len() const { return sample_rate * frame_ms / 1000; }
  int hop_len() const { return sample_rate * hop_ms / 1000; }
  int out_bins() const { return mel_bins > 0 ? mel_bins : bins; }
};

struct Spectrogram {
  int rows = 0;  // frames
  int cols = 0;  // frequency bins
  std::vector<float> values;  // row-major rows x cols

  float at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  float& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
};

// floor((L - frame)/hop) + 1; raises if L is shorter than one frame.
int frame_count(int64_t num_samples, const FrontendConfig& cfg);

// Magnitudes of the first `bins` DFT points of `frame` (implicitly zero-padded
// to dft_len). Direct O(bins * len) evaluation in double.
std::vector<double> dft_magnitude(const std::vector<double>& frame, int dft_len, int bins);

Spectrogram log_spectrogram(const AudioSegment& seg, const FrontendConfig& cfg = {});

// Global scalar standardization, fitted on the training fold only.
struct SpecNormalizer {
  double mean = 0.0;
  double stddev = 1.0;
};

SpecNormalizer fit_normalizer(const std::vector<const Spectrogram*>& training_specs);
void normalize_spectrogram(Spectrogram& spec, const SpecNormalizer& n);

}  // namespace mfhca
