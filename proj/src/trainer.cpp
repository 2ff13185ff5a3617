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

#include "mfhca/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "mfhca/adam.hpp"

namespace mfhca {

namespace {

struct Batch {
  Tensor32 spec;   // (B,1,T,F); undefined when the spectrogram branch is off
  Tensor32 feats;  // (B,Th,D); undefined when the feature branch is off
  std::vector<int> labels;
  std::vector<int> indices;
};

Batch make_batch(const Dataset& data, const SpecNormalizer& norm,
                 const std::vector<int>& idx, bool need_spec, bool need_feats) {
  Batch b;
  b.indices = idx;
  const int B = static_cast<int>(idx.size());
  for (int i : idx) b.labels.push_back(data.samples[static_cast<size_t>(i)].label);
  if (need_spec) {
    const auto& first = data.samples[static_cast<size_t>(idx[0])].spec;
    const int T = first.rows, F = first.cols;
    b.spec = Tensor32::zeros({B, 1, T, F});
    const float mu = static_cast<float>(norm.mean);
    const float inv = static_cast<float>(1.0 / norm.stddev);
    for (int n = 0; n < B; ++n) {
      const auto& s = data.samples[static_cast<size_t>(idx[static_cast<size_t>(n)])].spec;
      if (s.rows != T || s.cols != F)
        throw ValidationError("batch: spectrogram shapes differ within a batch");
      float* dst = b.spec.data().data() + static_cast<size_t>(n) * T * F;
      for (size_t j = 0; j < s.values.size(); ++j) dst[j] = (s.values[j] - mu) * inv;
    }
  }
  if (need_feats) {
    const auto& first = data.samples[static_cast<size_t>(idx[0])].feats;
    const int Th = first.rows, D = first.cols;
    b.feats = Tensor32::zeros({B, Th, D});
    for (int n = 0; n < B; ++n) {
      const auto& f = data.samples[static_cast<size_t>(idx[static_cast<size_t>(n)])].feats;
      if (f.rows != Th || f.cols != D)
        throw ValidationError("batch: feature shapes differ within a batch");
      std::copy(f.values.begin(), f.values.end(),
                b.feats.data().begin() + static_cast<size_t>(n) * Th * D);
    }
  }
  return b;
}

// Batches of at most `batch` samples, each uniform in feature length. Order
// follows `order` within each length group.
std::vector<std::vector<int>> plan_batches(const Dataset& data, const std::vector<int>& order,
                                           int batch, bool group_by_feat_len) {
  std::vector<std::vector<int>> out;
  if (!group_by_feat_len) {
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch)) {
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(
                                           std::min(i + static_cast<size_t>(batch), order.size())));
    }
    return out;
  }
  std::map<int, std::vector<int>> groups;  // feature length -> indices in order
  for (int i : order) groups[data.samples[static_cast<size_t>(i)].feats.rows].push_back(i);
  for (auto& [len, idx] : groups)
    for (size_t i = 0; i < idx.size(); i += static_cast<size_t>(batch))
      out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                       idx.begin() + static_cast<std::ptrdiff_t>(
                                         std::min(i + static_cast<size_t>(batch), idx.size())));
  return out;
}

std::vector<std::vector<float>> snapshot_params(const ModelParams<float>& params) {
  std::vector<std::vector<float>> snap;
  for (const auto& [name, t] : params.learnable) snap.push_back(t.data());
  for (const auto& [name, t] : params.buffers) snap.push_back(t.data());
  return snap;
}

void restore_params(ModelParams<float>& params, const std::vector<std::vector<float>>& snap) {
  size_t i = 0;
  for (auto& [name, t] : params.learnable) t.data() = snap[i++];
  for (auto& [name, t] : params.buffers) t.data() = snap[i++];
}

std::string param_norm_report(const ModelParams<float>& params) {
  std::map<std::string, double> sq;
  for (const auto& [name, t] : params.learnable) {
    double& acc = sq[name.substr(0, name.find('.'))];
    for (float v : t.data()) acc += double(v) * v;
  }
  std::ostringstream os;
  for (const auto& [mod, s] : sq) os << " " << mod << "=" << std::sqrt(s);
  return os.str();
}

struct UttAgg {
  std::vector<double> logit_sum;
  int count = 0;
  int label = 0;
};

}  // namespace

double ua_over_present_classes(const ConfusionMatrix& cm) {
  double recall_sum = 0.0;
  int present = 0;
  for (int i = 0; i < cm.num_classes(); ++i) {
    int64_t row = 0;
    for (int j = 0; j < cm.num_classes(); ++j) row += cm.at(i, j);
    if (row == 0) continue;
    recall_sum += double(cm.at(i, i)) / double(row);
    ++present;
  }
  if (present == 0) throw ValidationError("ua_over_present_classes: empty matrix");
  return recall_sum / present;
}

EvalResult evaluate(ModelParams<float>& params, const Dataset& data,
                    const SpecNormalizer& norm, const std::vector<int>& indices,
                    int batch) {
  const bool need_spec = params.cfg.ablation.use_spec;
  const bool need_feats = params.cfg.ablation.use_feat;
  params.set_training(false);
  std::map<std::string, UttAgg> agg;
  const int K = params.cfg.hca.num_classes;
  auto batches = plan_batches(data, indices, batch, need_feats);
  for (const auto& bidx : batches) {
    auto b = make_batch(data, norm, bidx, need_spec, need_feats);
    auto out = model_forward(params, b.spec, b.feats);
    for (float v : out.logits.data())
      if (!std::isfinite(v))
        throw NumericalError("evaluate: non-finite logits; the model state is corrupt");
    for (size_t n = 0; n < bidx.size(); ++n) {
      const auto& smp = data.samples[static_cast<size_t>(bidx[n])];
      auto& a = agg[smp.utterance_id];
      if (a.logit_sum.empty()) {
        a.logit_sum.assign(static_cast<size_t>(K), 0.0);
        a.label = smp.label;
      }
      for (int k = 0; k < K; ++k)
        a.logit_sum[static_cast<size_t>(k)] += out.logits.at({static_cast<int>(n), k});
      a.count += 1;
    }
  }
  EvalResult res{ConfusionMatrix(K), 0.0, 0.0};
  for (const auto& [utt, a] : agg) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (a.logit_sum[static_cast<size_t>(k)] > a.logit_sum[static_cast<size_t>(best)]) best = k;
    res.cm.add(a.label, best);
  }
  std::tie(res.wa, res.ua) = wa_ua(res.cm);
  return res;
}

TrainResult train_fold(ModelParams<float>& params, const Dataset& data,
                       const SpecNormalizer& norm, const std::vector<int>& train_indices,
                       const std::vector<int>& val_indices, const TrainConfig& cfg) {
  cfg.validate();
  if (train_indices.empty()) throw ValidationError("train_fold: empty training set");
  {
    std::array<bool, 4> present{};
    for (int i : train_indices)
      present[static_cast<size_t>(data.samples[static_cast<size_t>(i)].label)] = true;
    for (size_t k = 0; k < present.size(); ++k)
      if (!present[k] && static_cast<int>(k) < params.cfg.hca.num_classes)
        throw ValidationError(std::string("train_fold: label '") + kEmotionLabels[k] +
                              "' missing from the training set");
  }
  const bool need_spec = params.cfg.ablation.use_spec;
  const bool need_feats = params.cfg.ablation.use_feat;

  auto opt_tensors = params.param_tensors();
  AdamState<float> adam;
  EarlyStopping stopper(cfg.patience);
  TrainResult result;
  auto best = snapshot_params(params);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int> order = train_indices;
    std::mt19937 erng(static_cast<uint32_t>(cfg.seed + 17 * (epoch + 1)));
    std::shuffle(order.begin(), order.end(), erng);
    auto batches = plan_batches(data, order, cfg.batch, need_feats);

    params.set_training(true);
    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      auto b = make_batch(data, norm, batches[bi], need_spec, need_feats);
      for (auto& t : opt_tensors) t.zero_grad();
      auto out = model_forward(params, b.spec, b.feats);
      auto loss = cross_entropy(out.logits, b.labels);
      const double loss_val = loss.item();
      if (!std::isfinite(loss_val))
        throw NumericalError("train_fold: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi) + "; parameter norms:" +
                             param_norm_report(params));
      loss.backward();
      adam_step(opt_tensors, adam, static_cast<float>(cfg.lr));
      loss_sum += loss_val * static_cast<double>(b.labels.size());
      const int K = params.cfg.hca.num_classes;
      for (size_t n = 0; n < b.labels.size(); ++n) {
        int bestk = 0;
        for (int k = 1; k < K; ++k)
          if (out.logits.at({static_cast<int>(n), k}) >
              out.logits.at({static_cast<int>(n), bestk}))
            bestk = k;
        correct += bestk == b.labels[n];
        ++seen;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (!val_indices.empty()) {
      auto val = evaluate(params, data, norm, val_indices, cfg.batch);
      stats.val_ua = ua_over_present_classes(val.cm);
    } else {
      stats.val_ua = stats.train_accuracy;  // no validation set: monitor train accuracy
    }
    result.history.push_back(stats);
    result.epochs_trained = epoch + 1;
    if (cfg.verbose)
      std::cerr << "epoch " << epoch << " loss " << stats.train_loss << " train_acc "
                << stats.train_accuracy << " val_ua " << stats.val_ua << "\n";

    const bool stop = stopper.observe(stats.val_ua);
    if (stopper.best_epoch() == epoch) best = snapshot_params(params);
    if (cfg.stop_on_perfect_train && stats.train_accuracy >= 1.0) {
      best = snapshot_params(params);
      result.best_epoch = epoch;
      result.best_val_ua = stats.val_ua;
      restore_params(params, best);
      return result;
    }
    if (stop) break;
  }
  restore_params(params, best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_ua = stopper.best_metric();
  return result;
}

FoldIndices make_fold(const Dataset& data, int fold, uint64_t seed, std::string* held_out,
                      std::string* val_spk_out) {
  auto spks = data.speakers();
  if (spks.size() < 2) throw ValidationError("LOSO needs at least 2 speakers");
  if (fold < 0 || fold >= static_cast<int>(spks.size()))
    throw ValidationError("fold index out of range");
  const std::string test_spk = spks[static_cast<size_t>(fold)];
  std::vector<std::string> remaining;
  for (const auto& s : spks)
    if (s != test_spk) remaining.push_back(s);
  std::string val_spk;
  if (remaining.size() == 1) {
    val_spk = remaining[0];  // degenerate two-speaker corpus: train == val speaker
  } else {
    std::mt19937 rng(static_cast<uint32_t>(seed + 7919 * (fold + 1)));
    val_spk = remaining[rng() % remaining.size()];
  }
  FoldIndices out;
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const auto& spk = data.samples[i].speaker;
    if (spk == test_spk) out.test.push_back(static_cast<int>(i));
    else if (spk == val_spk && remaining.size() > 1) out.val.push_back(static_cast<int>(i));
    else out.train.push_back(static_cast<int>(i));
  }
  if (remaining.size() == 1) out.val = out.train;
  if (held_out) *held_out = test_spk;
  if (val_spk_out) *val_spk_out = val_spk;
  return out;
}

LosoResult loso_cv(const ModelConfig& model_cfg, const Dataset& data, const TrainConfig& cfg) {
  const auto spks = data.speakers();
  if (spks.size() < 2) throw ValidationError("loso_cv: need at least 2 speakers");
  LosoResult result;
  for (int fold = 0; fold < static_cast<int>(spks.size()); ++fold) {
    const uint64_t fold_seed = cfg.seed + 1000 * static_cast<uint64_t>(fold + 1);
    std::string held_out, val_spk;
    auto idx = make_fold(data, fold, cfg.seed, &held_out, &val_spk);

    SpecNormalizer norm;
    if (model_cfg.ablation.use_spec) {
      std::vector<const Spectrogram*> train_specs;
      for (int i : idx.train) train_specs.push_back(&data.samples[static_cast<size_t>(i)].spec);
      norm = fit_normalizer(train_specs);
    }

    auto params = ModelParams<float>::make(model_cfg, fold_seed);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = fold_seed;
    auto train_res = train_fold(params, data, norm, idx.train, idx.val, fold_cfg);
    auto eval_res = evaluate(params, data, norm, idx.test, cfg.batch);

    FoldResult fr;
    fr.fold = fold;
    fr.held_out_speaker = held_out;
    fr.val_speaker = val_spk;
    fr.wa = eval_res.wa;
    fr.ua = eval_res.ua;
    fr.epochs_trained = train_res.epochs_trained;
    fr.cm = eval_res.cm;
    if (cfg.verbose)
      std::cerr << "fold " << fold << " (" << held_out << "): wa " << fr.wa << " ua "
                << fr.ua << " epochs " << fr.epochs_trained << "\n";
    result.folds.push_back(std::move(fr));
  }
  for (const auto& f : result.folds) {
    result.mean_wa += f.wa;
    result.mean_ua += f.ua;
  }
  result.mean_wa /= static_cast<double>(result.folds.size());
  result.mean_ua /= static_cast<double>(result.folds.size());
  return result;
}

std::vector<AblationRow> ablation_run(const ModelConfig& model_cfg, const Dataset& data,
                                      const TrainConfig& cfg) {
  struct Variant {
    const char* name;
    AblationConfig ab;
  };
  const std::vector<Variant> variants = {
      {"spec", {true, false, false, false}},
      {"spec+mf", {true, false, true, false}},
      {"feat", {false, true, false, false}},
      {"spec+feat", {true, true, false, false}},
      {"spec+feat+mf", {true, true, true, false}},
      {"spec+feat+hca", {true, true, false, true}},
      {"spec+feat+mf+hca", {true, true, true, true}},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ModelConfig c = model_cfg;
    c.ablation = v.ab;
    AblationRow row;
    row.name = v.name;
    row.uses_spec = v.ab.use_spec;
    row.uses_feat = v.ab.use_feat;
    row.mf = v.ab.mf;
    row.hca = v.ab.hca;
    row.param_count = ModelParams<float>::make(c, cfg.seed).count_params();
    auto res = loso_cv(c, data, cfg);
    row.wa = res.mean_wa;
    row.ua = res.mean_ua;
    if (cfg.verbose)
      std::cerr << "ablation " << row.name << ": wa " << row.wa << " ua " << row.ua << "\n";
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %-4s %-4s %12s %8s %8s\n", "variant", "MF",
                "HCA", "params", "WA", "UA");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-20s %-4s %-4s %12lld %8.4f %8.4f\n", r.name.c_str(),
                  r.mf ? "yes" : "no", r.hca ? "yes" : "no",
                  static_cast<long long>(r.param_count), r.wa, r.ua);
    os << buf;
  }
  return os.str();
}

}  // namespace mfhca
