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

// Hierarchical Cooperative Attention: the spectrogram sequence attends over
// BiLSTM-encoded self-supervised frames (softmax on the frame axis), the
// attention rows mix a projected copy of the raw frames, and the result is
// concatenated back onto the spectrogram sequence.

#pragma once

#include "mfhca/lstm.hpp"
#include "mfhca/ops.hpp"
#include "mfhca/tensor.hpp"

namespace mfhca {

struct HcaConfig {
  int d_model = 128;       // shared projection width
  int bilstm_hidden = 128; // per direction
  int hubert_dim = 768;    // width of the external feature files
  int fc1_width = 128;
  int fc2_width = 64;
  int num_classes = 4;

  void validate() const {
    if (d_model < 1 || bilstm_hidden < 1 || hubert_dim < 1 || fc1_width < 1 ||
        fc2_width < 1 || num_classes < 2)
      throw ValidationError("hca: all widths must be positive");
  }
};

template <class T>
struct HcaParams {
  HcaConfig cfg;
  Tensor<T> spec_proj_w, spec_proj_b;      // mf channels -> d_model
  BiLstmParams<T> lstm;                    // hubert_dim -> bilstm_hidden per direction
  Tensor<T> lstm_out_w, lstm_out_b;        // 2*hidden -> d_model
  Tensor<T> hubert_proj_w, hubert_proj_b;  // hubert_dim -> d_model (co-attention only)

  // Only the parts a given ablation needs are constructed; the rest stay
  // undefined tensors.
  static HcaParams make(const HcaConfig& cfg, int mf_channels, bool with_spec,
                        bool with_feat, bool with_coattention, std::mt19937& rng) {
    cfg.validate();
    auto lin_init = [&rng](int dout, int din) {
      const T bound = T(1) / std::sqrt(T(din));
      return Tensor<T>::uniform({dout, din}, -bound, bound, rng, true);
    };
    HcaParams p;
    p.cfg = cfg;
    if (with_spec) {
      p.spec_proj_w = lin_init(cfg.d_model, mf_channels);
      p.spec_proj_b = Tensor<T>::zeros({cfg.d_model}, true);
    }
    if (with_feat) {
      p.lstm = BiLstmParams<T>::make(cfg.hubert_dim, cfg.bilstm_hidden, rng);
      p.lstm_out_w = lin_init(cfg.d_model, 2 * cfg.bilstm_hidden);
      p.lstm_out_b = Tensor<T>::zeros({cfg.d_model}, true);
    }
    if (with_coattention) {
      p.hubert_proj_w = lin_init(cfg.d_model, cfg.hubert_dim);
      p.hubert_proj_b = Tensor<T>::zeros({cfg.d_model}, true);
    }
    return p;
  }
};

// Bridges the conv map to sequence form: mean over the frequency axis, then a
// learned projection to d_model. (N,C,T,F) -> (N,T,d).
template <class T>
Tensor<T> spec_to_sequence(const Tensor<T>& mf_out, HcaParams<T>& p) {
  if (mf_out.ndim() != 4)
    throw ValidationError("spec_to_sequence: expected [N,C,T,F], got " +
                          shape_str(mf_out.shape()));
  auto freq_mean = mean_axis(mf_out, 3);          // (N,C,T)
  auto seq = transpose12(freq_mean);              // (N,T,C)
  return linear(seq, p.spec_proj_w, p.spec_proj_b);
}

// BiLSTM over each batch item, then a projection to d_model.
// (N,T_h,D) -> (N,T_h,d).
template <class T>
Tensor<T> encode_hubert(const Tensor<T>& feats, HcaParams<T>& p) {
  if (feats.ndim() != 3)
    throw ValidationError("encode_hubert: expected [N,T,D], got " + shape_str(feats.shape()));
  const int N = feats.dim(0);
  std::vector<Tensor<T>> rows;
  rows.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) rows.push_back(bilstm(select0(feats, n), p.lstm));
  auto enc = stack0(rows);  // (N,T,2H)
  return linear(enc, p.lstm_out_w, p.lstm_out_b);
}

// Two-level co-attention. Per batch item:
//   A      = softmax over the hubert-frame axis of f_spec . f_hubert_enc^T
//   f_att' = A . f_hubert_proj
//   out    = [f_spec, f_att'] on the feature axis
template <class T>
Tensor<T> coattention(const Tensor<T>& f_spec, const Tensor<T>& f_hubert_enc,
                      const Tensor<T>& f_hubert_proj) {
  if (f_spec.ndim() != 3 || f_hubert_enc.ndim() != 3 || f_hubert_proj.ndim() != 3)
    throw ValidationError("coattention: expected 3-D inputs");
  if (f_spec.dim(2) != f_hubert_enc.dim(2) || f_spec.dim(2) != f_hubert_proj.dim(2))
    throw ValidationError("coattention: width mismatch, spec " + shape_str(f_spec.shape()) +
                          " vs hubert " + shape_str(f_hubert_enc.shape()) + " / " +
                          shape_str(f_hubert_proj.shape()));
  if (f_hubert_enc.dim(1) != f_hubert_proj.dim(1))
    throw ValidationError("coattention: hubert sequence lengths disagree");
  const int N = f_spec.dim(0);
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    auto fs = select0(f_spec, n);        // (T_s, d)
    auto fh = select0(f_hubert_enc, n);  // (T_h, d)
    auto fp = select0(f_hubert_proj, n); // (T_h, d)
    auto attn = softmax(matmul(fs, transpose(fh)), 1);  // rows sum to 1 over T_h
    auto mixed = matmul(attn, fp);                      // (T_s, d)
    out.push_back(concat<T>({fs, mixed}, 1));           // (T_s, 2d)
  }
  return stack0(out);
}

template <class T>
struct ClassifierParams {
  Tensor<T> fc1_w, fc1_b;
  Tensor<T> fc2_w, fc2_b;
  Tensor<T> fc3_w, fc3_b;

  static ClassifierParams make(int in_width, const HcaConfig& cfg, std::mt19937& rng) {
    auto lin_init = [&rng](int dout, int din) {
      const T bound = T(1) / std::sqrt(T(din));
      return Tensor<T>::uniform({dout, din}, -bound, bound, rng, true);
    };
    ClassifierParams p;
    p.fc1_w = lin_init(cfg.fc1_width, in_width);
    p.fc1_b = Tensor<T>::zeros({cfg.fc1_width}, true);
    p.fc2_w = lin_init(cfg.fc2_width, cfg.fc1_width);
    p.fc2_b = Tensor<T>::zeros({cfg.fc2_width}, true);
    p.fc3_w = lin_init(cfg.num_classes, cfg.fc2_width);
    p.fc3_b = Tensor<T>::zeros({cfg.num_classes}, true);
    return p;
  }
};

// Three fully connected layers over the pooled feature vector; returns logits.
template <class T>
Tensor<T> classify(const Tensor<T>& pooled, ClassifierParams<T>& p) {
  if (pooled.ndim() != 2)
    throw ValidationError("classify: expected pooled [N,D], got " + shape_str(pooled.shape()));
  auto h1 = relu(linear(pooled, p.fc1_w, p.fc1_b));
  auto h2 = relu(linear(h1, p.fc2_w, p.fc2_b));
  return linear(h2, p.fc3_w, p.fc3_b);
}

}  // namespace mfhca
