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

// Training loop with Adam and early stopping, leave-one-speaker-out
// cross-validation, and the ablation driver. Predictions aggregate to
// utterance level by averaging segment logits.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfhca/dataset.hpp"
#include "mfhca/metrics.hpp"
#include "mfhca/model.hpp"

namespace mfhca {

struct TrainConfig {
  double lr = 1e-5;
  int batch = 32;
  int patience = 10;  // epochs without validation-UA improvement
  int max_epochs = 100;
  uint64_t seed = 1;
  bool stop_on_perfect_train = false;
  bool verbose = false;

  void validate() const {
    if (lr <= 0) throw ValidationError("train: lr must be positive");
    if (patience < 1) throw ValidationError("train: patience must be >= 1");
    if (batch < 1 || max_epochs < 1)
      throw ValidationError("train: batch and max_epochs must be >= 1");
  }
};

// Tracks the best value of a metric; stop() fires after `patience` epochs
// without strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool observe(double metric) {
    ++epoch_;
    if (metric > best_) {
      best_ = metric;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
  }

  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  int patience_;
  int epoch_ = -1;
  int best_epoch_ = -1;
  int since_best_ = 0;
  double best_ = -1e300;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_ua = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_ua = 0.0;
  int epochs_trained = 0;
};

// Trains in place on data[train_indices], monitoring utterance-level UA on
// data[val_indices]; the parameters of the best validation epoch are restored
// before returning.
TrainResult train_fold(ModelParams<float>& params, const Dataset& data,
                       const SpecNormalizer& norm, const std::vector<int>& train_indices,
                       const std::vector<int>& val_indices, const TrainConfig& cfg);

struct EvalResult {
  ConfusionMatrix cm;
  double wa = 0.0;
  double ua = 0.0;
};

// Utterance-level evaluation (mean segment logits, then argmax).
EvalResult evaluate(ModelParams<float>& params, const Dataset& data,
                    const SpecNormalizer& norm, const std::vector<int>& indices,
                    int batch);

// Mean recall over classes that appear in the matrix; used to monitor
// validation folds whose speaker may lack some classes.
double ua_over_present_classes(const ConfusionMatrix& cm);

struct FoldResult {
  int fold = 0;
  std::string held_out_speaker;
  std::string val_speaker;
  double wa = 0.0;
  double ua = 0.0;
  int epochs_trained = 0;
  ConfusionMatrix cm{4};
};

struct FoldIndices {
  std::vector<int> train, val, test;
};

// Deterministic speaker partition for fold `fold` (speakers sorted; the
// validation speaker is drawn from the remaining speakers with the fold seed).
FoldIndices make_fold(const Dataset& data, int fold, uint64_t seed,
                      std::string* held_out = nullptr, std::string* val_spk = nullptr);

struct LosoResult {
  std::vector<FoldResult> folds;
  double mean_wa = 0.0;
  double mean_ua = 0.0;
};

LosoResult loso_cv(const ModelConfig& model_cfg, const Dataset& data,
                   const TrainConfig& cfg);

struct AblationRow {
  std::string name;
  bool uses_spec = false, uses_feat = false, mf = false, hca = false;
  int64_t param_count = 0;
  double wa = 0.0;
  double ua = 0.0;
};

// The seven-variant ablation grid (two spectrogram-only rows, one
// feature-only row, four fusion rows), all run over the same folds and seeds.
std::vector<AblationRow> ablation_run(const ModelConfig& model_cfg, const Dataset& data,
                                      const TrainConfig& cfg);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace mfhca
