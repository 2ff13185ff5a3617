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

// Bit-exact persistence. All on-disk formats are little-endian regardless of
// host:
//   feature file:  "MFH1" | u32 rows | u32 cols | rows*cols f32, row-major
//   checkpoint:    "MFC1" | u32 count | per entry: u16 name_len, name bytes,
//                  u8 ndim, ndim x u32 dims, f32 data
//   manifest:      JSON Lines, one object per utterance with fields
//                  utterance_id, speaker_id, session, label, wav_path,
//                  feature_path

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mfhca {

struct FeatureSequence {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;  // row-major rows x cols

  float at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

void write_feature_file(const std::string& path, const FeatureSequence& seq);
FeatureSequence read_feature_file(const std::string& path);

// The 4-class label set; `excited` must be pre-merged into `happy` upstream.
inline constexpr std::array<const char*, 4> kEmotionLabels = {"neutral", "sad", "happy",
                                                              "angry"};
int label_index(const std::string& label);

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string session;
  std::string label;
  std::string wav_path;
  std::string feature_path;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Named-tensor container used for checkpoints.
struct TensorRecord {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

void write_checkpoint_file(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_checkpoint_file(const std::string& path);

}  // namespace mfhca
