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

#include "mfhca/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "mfhca/errors.hpp"
#include "mfhca/wav.hpp"

namespace fs = std::filesystem;

namespace mfhca {

std::vector<std::string> Dataset::speakers() const {
  std::set<std::string> s;
  for (const auto& smp : samples) s.insert(smp.speaker);
  return {s.begin(), s.end()};
}

std::vector<int> Dataset::indices_of_speaker(const std::string& speaker) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].speaker == speaker) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).string();
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path, const DatasetLoadOptions& opts) {
  const auto entries = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset ds;
  for (const auto& e : entries) {
    const int label = label_index(e.label);
    auto audio = load_wav(resolve(base, e.wav_path), opts.frontend.sample_rate);
    auto segs = segment(audio, opts.segment_seconds);
    const int n_segs = static_cast<int>(segs.size());

    FeatureSequence feats;
    if (opts.need_features) {
      feats = read_feature_file(resolve(base, e.feature_path));
      if (feats.rows < n_segs)
        throw ValidationError(e.utterance_id + ": feature sequence has " +
                              std::to_string(feats.rows) + " rows for " +
                              std::to_string(n_segs) + " segments");
      ds.feature_dim = ds.feature_dim == 0 ? feats.cols : ds.feature_dim;
      if (feats.cols != ds.feature_dim)
        throw ValidationError(e.utterance_id + ": feature width " +
                              std::to_string(feats.cols) + " differs from " +
                              std::to_string(ds.feature_dim) + " seen earlier");
    }

    for (int s = 0; s < n_segs; ++s) {
      Sample smp;
      smp.label = label;
      smp.speaker = e.speaker_id;
      smp.utterance_id = e.utterance_id;
      smp.segment_index = s;
      if (opts.need_spec) {
        smp.spec = log_spectrogram(segs[static_cast<size_t>(s)], opts.frontend);
        if (ds.spec_frames == 0) {
          ds.spec_frames = smp.spec.rows;
          ds.spec_bins = smp.spec.cols;
        }
      }
      if (opts.need_features) {
        // Proportional contiguous split of the utterance's rows.
        const int lo = static_cast<int>(int64_t(s) * feats.rows / n_segs);
        const int hi = static_cast<int>(int64_t(s + 1) * feats.rows / n_segs);
        smp.feats.rows = hi - lo;
        smp.feats.cols = feats.cols;
        smp.feats.values.assign(
            feats.values.begin() + int64_t(lo) * feats.cols,
            feats.values.begin() + int64_t(hi) * feats.cols);
      }
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

std::string make_synthetic(const std::string& out_dir, const SyntheticSpec& spec) {
  if (spec.n_per_class < 1 || spec.feature_dim < 1 || spec.n_speakers < 1)
    throw ValidationError("make_synthetic: counts must be positive");
  fs::create_directories(fs::path(out_dir) / "wavs");
  fs::create_directories(fs::path(out_dir) / "feats");

  std::mt19937 rng(static_cast<uint32_t>(spec.seed ^ (spec.seed >> 32)));
  std::normal_distribution<float> noise{0.f, 1.f};

  // Class mean vectors, drawn before any utterance so counts do not shift them.
  std::vector<std::vector<float>> class_means(4, std::vector<float>(static_cast<size_t>(spec.feature_dim)));
  for (auto& mean : class_means)
    for (auto& v : mean) v = 2.0f * noise(rng);

  const int sr = 16000;
  const int len = 3 * sr;
  std::vector<ManifestEntry> entries;
  std::vector<float> wav(static_cast<size_t>(len));
  for (int k = 0; k < 4; ++k) {
    const double hz = 300.0 * (k + 1);
    for (int i = 0; i < spec.n_per_class; ++i) {
      const int speaker = i % spec.n_speakers;
      const float amp = 0.4f + 0.02f * float(speaker);
      const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
      for (int t = 0; t < len; ++t)
        wav[static_cast<size_t>(t)] =
            amp * static_cast<float>(std::sin(2.0 * M_PI * hz * t / sr + phase)) +
            spec.wav_noise * noise(rng);

      FeatureSequence feats;
      feats.rows = spec.feature_frames;
      feats.cols = spec.feature_dim;
      feats.values.resize(static_cast<size_t>(feats.rows) * feats.cols);
      for (int r = 0; r < feats.rows; ++r)
        for (int c = 0; c < feats.cols; ++c)
          feats.values[static_cast<size_t>(r) * feats.cols + c] =
              class_means[static_cast<size_t>(k)][static_cast<size_t>(c)] +
              spec.feat_noise * noise(rng);

      const std::string label = kEmotionLabels[static_cast<size_t>(k)];
      const std::string id = "synth_" + label + "_" + std::to_string(i);
      const std::string wav_rel = "wavs/" + id + ".wav";
      const std::string feat_rel = "feats/" + id + ".mfh";
      write_wav_pcm16((fs::path(out_dir) / wav_rel).string(), wav, sr);
      write_feature_file((fs::path(out_dir) / feat_rel).string(), feats);
      entries.push_back({id, "spk" + std::to_string(speaker), "s1", label, wav_rel, feat_rel});
    }
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace mfhca
