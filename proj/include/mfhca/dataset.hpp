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

// Manifest-driven dataset: each utterance is segmented into 3 s windows, each
// window pairs a log spectrogram with a contiguous slice of the utterance's
// external feature sequence (rows split proportionally across segments).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfhca/feature_io.hpp"
#include "mfhca/spectrogram.hpp"

namespace mfhca {

struct Sample {
  Spectrogram spec;        // raw log spectrogram (normalization happens at batch time)
  FeatureSequence feats;   // this segment's feature rows; empty when features are off
  int label = 0;
  std::string speaker;
  std::string utterance_id;
  int segment_index = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int feature_dim = 0;  // 0 when features were not loaded
  int spec_frames = 0;
  int spec_bins = 0;

  std::vector<std::string> speakers() const;  // sorted, unique
  std::vector<int> indices_of_speaker(const std::string& speaker) const;
};

struct DatasetLoadOptions {
  bool need_spec = true;
  bool need_features = true;
  FrontendConfig frontend;
  double segment_seconds = 3.0;
};

// Relative wav/feature paths resolve against the manifest's directory.
Dataset load_dataset(const std::string& manifest_path, const DatasetLoadOptions& opts);

// Synthetic desk-scale dataset: class k is a 3 s tone at 300*(k+1) Hz plus
// noise, and its fake feature sequences are a class mean vector plus noise.
// Fully deterministic for a fixed seed. Returns the manifest path.
struct SyntheticSpec {
  uint64_t seed = 1;
  int n_per_class = 8;
  int feature_dim = 64;
  int n_speakers = 8;
  int feature_frames = 149;
  float wav_noise = 0.05f;
  float feat_noise = 0.3f;
};

std::string make_synthetic(const std::string& out_dir, const SyntheticSpec& spec);

}  // namespace mfhca
