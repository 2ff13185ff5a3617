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

// Full model: MF encoder over the spectrogram, BiLSTM encoder over external
// features, fusion (co-attention or mean-pool baseline), and the classifier,
// with ablation switches for every combination.

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mfhca/feature_io.hpp"
#include "mfhca/hca.hpp"
#include "mfhca/mf_grf.hpp"

namespace mfhca {

struct AblationConfig {
  bool use_spec = true;  // spectrogram branch present
  bool use_feat = true;  // external-feature branch present
  bool mf = true;        // GRF stack (false = plain conv transitions)
  bool hca = true;       // co-attention fusion (false = mean-pool + concat)

  bool both() const { return use_spec && use_feat; }
  bool coattention_active() const { return both() && hca; }
  std::string name() const {
    if (use_spec && !use_feat) return mf ? "spec+mf" : "spec";
    if (!use_spec && use_feat) return "feat";
    std::string n = "spec+feat";
    if (mf) n += "+mf";
    if (hca) n += "+hca";
    return n;
  }
};

// Named ablation presets accepted by the command line.
inline AblationConfig ablation_preset(const std::string& name) {
  AblationConfig a;
  if (name == "none" || name.empty()) return a;
  if (name == "no-mf") { a.mf = false; return a; }
  if (name == "no-hca") { a.hca = false; return a; }
  if (name == "no-mf-no-hca") { a.mf = a.hca = false; return a; }
  if (name == "spec-only") { a.use_feat = false; a.hca = false; return a; }
  if (name == "feat-only") { a.use_spec = false; a.mf = false; a.hca = false; return a; }
  throw ValidationError("unknown ablation '" + name +
                        "'; expected none|no-mf|no-hca|no-mf-no-hca|spec-only|feat-only");
}

struct ModelConfig {
  MfConfig mf;
  HcaConfig hca;
  AblationConfig ablation;
  int input_frames = 297;
  int input_bins = 200;

  void validate() const {
    if (!ablation.use_spec && !ablation.use_feat)
      throw ValidationError("model: at least one branch must be enabled");
    hca.validate();
    if (ablation.use_spec) {
      MfConfig m = mf;
      m.use_grf = ablation.mf;
      mf_shape_chain(m, input_frames, input_bins);
    }
  }

  // Width of the pooled vector entering the classifier.
  int fused_width() const {
    return ablation.both() ? 2 * hca.d_model : hca.d_model;
  }
};

template <class T>
struct ModelParams {
  ModelConfig cfg;
  MfParams<T> mf;
  HcaParams<T> hca;
  ClassifierParams<T> classifier;

  // Name registries, in construction order. `learnable` feeds the optimizer
  // and parameter counts; `buffers` are batchnorm running statistics, which
  // checkpoint but do not train.
  std::vector<std::pair<std::string, Tensor<T>>> learnable;
  std::vector<std::pair<std::string, Tensor<T>>> buffers;

  static ModelParams make(const ModelConfig& config, uint64_t seed) {
    config.validate();
    std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
    ModelParams p;
    p.cfg = config;
    if (config.ablation.use_spec) {
      MfConfig m = config.mf;
      m.use_grf = config.ablation.mf;
      p.mf = MfParams<T>::make(m, rng);
    }
    p.hca = HcaParams<T>::make(config.hca, config.mf.out_channels(),
                               config.ablation.use_spec, config.ablation.use_feat,
                               config.ablation.coattention_active(), rng);
    p.classifier = ClassifierParams<T>::make(config.fused_width(), config.hca, rng);
    p.build_registry();
    return p;
  }

  void build_registry() {
    learnable.clear();
    buffers.clear();
    auto reg = [this](const std::string& name, Tensor<T> t) {
      learnable.emplace_back(name, std::move(t));
    };
    if (cfg.ablation.use_spec) {
      reg("mf.conv_time.weight", mf.conv_time_w);
      reg("mf.conv_time.bias", mf.conv_time_b);
      reg("mf.conv_freq.weight", mf.conv_freq_w);
      reg("mf.conv_freq.bias", mf.conv_freq_b);
      for (size_t i = 0; i < mf.transitions.size(); ++i) {
        const std::string base = "mf.trans" + std::to_string(i + 1);
        reg(base + ".weight", mf.transitions[i].first);
        reg(base + ".bias", mf.transitions[i].second);
      }
      for (size_t i = 0; i < mf.grf.size(); ++i) {
        const std::string base = "mf.grf" + std::to_string(i);
        auto& g = mf.grf[i];
        reg(base + ".gate_reduce.weight", g.gate_reduce_w);
        reg(base + ".gate_reduce.bias", g.gate_reduce_b);
        reg(base + ".gate_bn.gamma", g.gate_bn.gamma);
        reg(base + ".gate_bn.beta", g.gate_bn.beta);
        buffers.emplace_back(base + ".gate_bn.running_mean", g.gate_bn.running_mean);
        buffers.emplace_back(base + ".gate_bn.running_var", g.gate_bn.running_var);
        reg(base + ".gate_h.weight", g.gate_h_w);
        reg(base + ".gate_h.bias", g.gate_h_b);
        reg(base + ".gate_w.weight", g.gate_w_w);
        reg(base + ".gate_w.bias", g.gate_w_b);
        reg(base + ".context.weight", g.context_w);
        reg(base + ".context.bias", g.context_b);
      }
      reg("hca.spec_proj.weight", hca.spec_proj_w);
      reg("hca.spec_proj.bias", hca.spec_proj_b);
    }
    if (cfg.ablation.use_feat) {
      reg("hca.lstm.fw.w_ih", hca.lstm.fw.w_ih);
      reg("hca.lstm.fw.w_hh", hca.lstm.fw.w_hh);
      reg("hca.lstm.fw.bias", hca.lstm.fw.bias);
      reg("hca.lstm.bw.w_ih", hca.lstm.bw.w_ih);
      reg("hca.lstm.bw.w_hh", hca.lstm.bw.w_hh);
      reg("hca.lstm.bw.bias", hca.lstm.bw.bias);
      reg("hca.lstm_out.weight", hca.lstm_out_w);
      reg("hca.lstm_out.bias", hca.lstm_out_b);
      if (cfg.ablation.coattention_active()) {
        reg("hca.hubert_proj.weight", hca.hubert_proj_w);
        reg("hca.hubert_proj.bias", hca.hubert_proj_b);
      }
    }
    reg("classifier.fc1.weight", classifier.fc1_w);
    reg("classifier.fc1.bias", classifier.fc1_b);
    reg("classifier.fc2.weight", classifier.fc2_w);
    reg("classifier.fc2.bias", classifier.fc2_b);
    reg("classifier.fc3.weight", classifier.fc3_w);
    reg("classifier.fc3.bias", classifier.fc3_b);
  }

  void set_training(bool training) {
    for (auto& g : mf.grf) g.gate_bn.training = training;
  }

  std::vector<Tensor<T>> param_tensors() {
    std::vector<Tensor<T>> out;
    out.reserve(learnable.size());
    for (auto& [name, t] : learnable) out.push_back(t);
    return out;
  }

  int64_t count_params() const {
    int64_t n = 0;
    for (const auto& [name, t] : learnable) n += t.numel();
    return n;
  }

  // Per-prefix parameter counts ("mf", "hca", "classifier").
  std::map<std::string, int64_t> count_params_by_module() const {
    std::map<std::string, int64_t> out;
    for (const auto& [name, t] : learnable)
      out[name.substr(0, name.find('.'))] += t.numel();
    return out;
  }
};

template <class T>
struct ModelOutput {
  Tensor<T> logits;     // (N, num_classes)
  Tensor<T> embedding;  // pooled fused feature entering the classifier
};

// Spectrogram branch absent => `spec` may be an undefined tensor; likewise for
// `feats` when the feature branch is off.
template <class T>
ModelOutput<T> model_forward(ModelParams<T>& p, const Tensor<T>& spec, const Tensor<T>& feats) {
  const auto& ab = p.cfg.ablation;
  Tensor<T> f_spec, f_hubert_enc;
  if (ab.use_spec) {
    auto mf_out = mf_forward(spec, p.mf);
    f_spec = spec_to_sequence(mf_out, p.hca);  // (N,T_s,d)
  }
  if (ab.use_feat) f_hubert_enc = encode_hubert(feats, p.hca);  // (N,T_h,d)

  Tensor<T> pooled;
  if (ab.both()) {
    if (ab.hca) {
      auto f_proj = linear(feats, p.hca.hubert_proj_w, p.hca.hubert_proj_b);
      auto fused = coattention(f_spec, f_hubert_enc, f_proj);  // (N,T_s,2d)
      pooled = mean_axis(fused, 1);
    } else {
      // Baseline fusion: pool each branch over time, then concatenate.
      pooled = concat<T>({mean_axis(f_spec, 1), mean_axis(f_hubert_enc, 1)}, 1);
    }
  } else if (ab.use_spec) {
    pooled = mean_axis(f_spec, 1);
  } else {
    pooled = mean_axis(f_hubert_enc, 1);
  }
  return {classify(pooled, p.classifier), pooled};
}

// ---- checkpointing (float models only; files are f32) ----

namespace detail {

inline void push_config_record(std::vector<TensorRecord>& recs, const std::string& name,
                               std::vector<float> vals) {
  recs.push_back({name, {static_cast<uint32_t>(vals.size())}, std::move(vals)});
}

}  // namespace detail

inline std::vector<TensorRecord> config_records(const ModelConfig& cfg) {
  std::vector<TensorRecord> recs;
  std::vector<float> ch(cfg.mf.grf_channels.begin(), cfg.mf.grf_channels.end());
  detail::push_config_record(recs, "config.grf_channels", std::move(ch));
  detail::push_config_record(recs, "config.time_kernel",
                             {float(cfg.mf.time_kernel.first), float(cfg.mf.time_kernel.second)});
  detail::push_config_record(recs, "config.freq_kernel",
                             {float(cfg.mf.freq_kernel.first), float(cfg.mf.freq_kernel.second)});
  detail::push_config_record(recs, "config.ratio_den", {float(cfg.mf.ratio_den)});
  detail::push_config_record(recs, "config.reduction", {float(cfg.mf.reduction)});
  detail::push_config_record(recs, "config.d_model", {float(cfg.hca.d_model)});
  detail::push_config_record(recs, "config.bilstm_hidden", {float(cfg.hca.bilstm_hidden)});
  detail::push_config_record(recs, "config.hubert_dim", {float(cfg.hca.hubert_dim)});
  detail::push_config_record(recs, "config.fc_widths",
                             {float(cfg.hca.fc1_width), float(cfg.hca.fc2_width)});
  detail::push_config_record(recs, "config.num_classes", {float(cfg.hca.num_classes)});
  detail::push_config_record(recs, "config.input_shape",
                             {float(cfg.input_frames), float(cfg.input_bins)});
  detail::push_config_record(recs, "config.ablation",
                             {float(cfg.ablation.use_spec), float(cfg.ablation.use_feat),
                              float(cfg.ablation.mf), float(cfg.ablation.hca)});
  return recs;
}

inline ModelConfig config_from_records(const std::map<std::string, TensorRecord>& recs) {
  auto get = [&recs](const std::string& name) -> const std::vector<float>& {
    auto it = recs.find(name);
    if (it == recs.end())
      throw ValidationError("checkpoint is missing config entry '" + name + "'");
    return it->second.data;
  };
  ModelConfig cfg;
  cfg.mf.grf_channels.clear();
  for (float v : get("config.grf_channels")) cfg.mf.grf_channels.push_back(int(v));
  const auto& tk = get("config.time_kernel");
  cfg.mf.time_kernel = {int(tk[0]), int(tk[1])};
  const auto& fk = get("config.freq_kernel");
  cfg.mf.freq_kernel = {int(fk[0]), int(fk[1])};
  cfg.mf.ratio_den = int(get("config.ratio_den")[0]);
  cfg.mf.reduction = int(get("config.reduction")[0]);
  cfg.hca.d_model = int(get("config.d_model")[0]);
  cfg.hca.bilstm_hidden = int(get("config.bilstm_hidden")[0]);
  cfg.hca.hubert_dim = int(get("config.hubert_dim")[0]);
  const auto& fw = get("config.fc_widths");
  cfg.hca.fc1_width = int(fw[0]);
  cfg.hca.fc2_width = int(fw[1]);
  cfg.hca.num_classes = int(get("config.num_classes")[0]);
  const auto& is = get("config.input_shape");
  cfg.input_frames = int(is[0]);
  cfg.input_bins = int(is[1]);
  const auto& ab = get("config.ablation");
  cfg.ablation.use_spec = ab[0] != 0.f;
  cfg.ablation.use_feat = ab[1] != 0.f;
  cfg.ablation.mf = ab[2] != 0.f;
  cfg.ablation.hca = ab[3] != 0.f;
  return cfg;
}

inline void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                            const std::vector<TensorRecord>& extra = {}) {
  std::vector<TensorRecord> recs = config_records(params.cfg);
  auto emit = [&recs](const std::string& name, const Tensor<float>& t) {
    TensorRecord rec;
    rec.name = name;
    for (int d : t.shape()) rec.dims.push_back(static_cast<uint32_t>(d));
    rec.data = t.data();
    recs.push_back(std::move(rec));
  };
  for (const auto& [name, t] : params.learnable) emit(name, t);
  for (const auto& [name, t] : params.buffers) emit(name, t);
  recs.insert(recs.end(), extra.begin(), extra.end());
  write_checkpoint_file(path, recs);
}

struct LoadedCheckpoint {
  ModelParams<float> params;
  std::vector<TensorRecord> extra;  // records beyond config and parameters
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  auto records = read_checkpoint_file(path);
  std::map<std::string, TensorRecord> by_name;
  for (auto& r : records) {
    if (!by_name.emplace(r.name, std::move(r)).second)
      throw ValidationError(path + ": duplicate checkpoint entry '" + r.name + "'");
  }
  ModelConfig cfg = config_from_records(by_name);
  LoadedCheckpoint out{ModelParams<float>::make(cfg, 0), {}};

  auto fill = [&](const std::string& name, Tensor<float>& t) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ValidationError(path + ": checkpoint is missing parameter '" + name + "'");
    const auto& rec = it->second;
    Shape want = t.shape();
    Shape got(rec.dims.begin(), rec.dims.end());
    if (want != got)
      throw ValidationError(path + ": parameter '" + name + "' has shape " + shape_str(got) +
                            " but the model expects " + shape_str(want));
    t.data() = rec.data;
    by_name.erase(it);
  };
  for (auto& [name, t] : out.params.learnable) fill(name, t);
  for (auto& [name, t] : out.params.buffers) fill(name, t);
  for (auto& [name, rec] : by_name)
    if (name.rfind("config.", 0) != 0) out.extra.push_back(rec);
  return out;
}

}  // namespace mfhca
