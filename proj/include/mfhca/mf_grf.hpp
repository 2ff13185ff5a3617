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

// Multi-Spatial Fusion encoder: two parallel time/frequency convolutions with
// channel concatenation and 2x2 max pooling, followed by a stack of Global
// Receptive Field blocks joined by stride-2 transition convolutions.
//
// A GRF block combines three terms, Y = X + Y_a + Y_b:
//   Y_a — per-axis coordinate gating: pool rows/columns, mix through a 1x1
//         bottleneck (BN + swish), split, restore channels, sigmoid, and apply
//         as a Hadamard product over both axes;
//   Y_b — context branch: average-pool by 1/r, 3x3 convolution, bilinear
//         upsample back to (H,W), added to X.

#pragma once

#include <optional>

#include "mfhca/ops.hpp"
#include "mfhca/tensor.hpp"

namespace mfhca {

struct GrfConfig {
  int channels = 16;
  int reduction = 8;  // bottleneck width = max(8, channels/reduction)
  int ratio_den = 4;  // downsample ratio r = 1/ratio_den; pool kernel = stride = ratio_den

  int reduced() const { return std::max(8, channels / reduction); }
  void validate() const {
    if (channels < 1) throw ValidationError("grf: channels must be positive");
    if (reduction < 1) throw ValidationError("grf: reduction must be positive");
    if (ratio_den < 2) throw ValidationError("grf: sampling ratio denominator must be >= 2");
  }
};

template <class T>
struct GrfParams {
  GrfConfig cfg;
  Tensor<T> gate_reduce_w, gate_reduce_b;  // 1x1, C -> Cr
  BatchNormState<T> gate_bn;               // over Cr
  Tensor<T> gate_h_w, gate_h_b;            // 1x1, Cr -> C
  Tensor<T> gate_w_w, gate_w_b;            // 1x1, Cr -> C
  Tensor<T> context_w, context_b;          // 3x3, C -> C

  static GrfParams make(const GrfConfig& cfg, std::mt19937& rng) {
    cfg.validate();
    const int c = cfg.channels, cr = cfg.reduced();
    auto conv_init = [&rng](int co, int ci, int kh, int kw) {
      const T bound = T(1) / std::sqrt(T(ci * kh * kw));
      return Tensor<T>::uniform({co, ci, kh, kw}, -bound, bound, rng, true);
    };
    GrfParams p;
    p.cfg = cfg;
    p.gate_reduce_w = conv_init(cr, c, 1, 1);
    p.gate_reduce_b = Tensor<T>::zeros({cr}, true);
    p.gate_bn = BatchNormState<T>::make(cr);
    p.gate_h_w = conv_init(c, cr, 1, 1);
    p.gate_h_b = Tensor<T>::zeros({c}, true);
    p.gate_w_w = conv_init(c, cr, 1, 1);
    p.gate_w_b = Tensor<T>::zeros({c}, true);
    p.context_w = conv_init(c, c, 3, 3);
    p.context_b = Tensor<T>::zeros({c}, true);
    return p;
  }
};

// Testing hook: pin both gates to a constant and/or drop the context branch
// from the residual sum entirely.
struct GrfOverride {
  std::optional<double> force_gate;
  bool drop_context_branch = false;
};

// Per-axis global average pooling: z_h[n,c,h] is the mean over width of row h,
// z_w[n,c,w] the mean over height of column w.
template <class T>
std::pair<Tensor<T>, Tensor<T>> coordinate_pool(const Tensor<T>& x) {
  if (x.ndim() != 4)
    throw ValidationError("coordinate_pool: expected [N,C,H,W], got " + shape_str(x.shape()));
  return {mean_axis(x, 3), mean_axis(x, 2)};
}

// Gates from the pooled encodings; every output value lies strictly in (0,1).
template <class T>
std::pair<Tensor<T>, Tensor<T>> grf_gates(const Tensor<T>& z_h, const Tensor<T>& z_w,
                                          GrfParams<T>& p) {
  const int N = z_h.dim(0), C = z_h.dim(1), H = z_h.dim(2), W = z_w.dim(2);
  auto zh4 = reshape(z_h, {N, C, 1, H});
  auto zw4 = reshape(z_w, {N, C, 1, W});
  auto cat = concat<T>({zh4, zw4}, 3);  // spatial cascade, length H+W
  auto f = swish(batchnorm2d(conv2d(cat, p.gate_reduce_w, p.gate_reduce_b), p.gate_bn));
  auto f_h = slice(f, 3, 0, H);
  auto f_w = slice(f, 3, H, W);
  auto g_h = sigmoid(conv2d(f_h, p.gate_h_w, p.gate_h_b));
  auto g_w = sigmoid(conv2d(f_w, p.gate_w_w, p.gate_w_b));
  return {reshape(g_h, {N, C, H}), reshape(g_w, {N, C, W})};
}

// Y_a(i,j) = x(i,j) * g_h(i) * g_w(j)
template <class T>
Tensor<T> grf_branch_a(const Tensor<T>& x, const Tensor<T>& g_h, const Tensor<T>& g_w) {
  return coord_gate_apply(x, g_h, g_w);
}

// Y_b = X + Upsample(conv3x3(AvgPool_r(X)))
template <class T>
Tensor<T> grf_branch_b(const Tensor<T>& x, GrfParams<T>& p) {
  const int H = x.dim(2), W = x.dim(3);
  const int r = p.cfg.ratio_den;
  if (H / r < 1 || W / r < 1)
    throw ValidationError("grf: sampling ratio 1/" + std::to_string(r) +
                          " collapses a " + std::to_string(H) + "x" + std::to_string(W) +
                          " map to zero size");
  auto pooled = avg_pool2d(x, {r, r}, {r, r});
  auto ctx = conv2d(pooled, p.context_w, p.context_b, {1, 1}, {1, 1});
  return add(x, bilinear_upsample(ctx, H, W));
}

// Y = X + Y_a + Y_b
template <class T>
Tensor<T> grf_forward(const Tensor<T>& x, GrfParams<T>& p, const GrfOverride* ov = nullptr) {
  if (x.ndim() != 4 || x.dim(1) != p.cfg.channels)
    throw ValidationError("grf: input " + shape_str(x.shape()) + " does not carry " +
                          std::to_string(p.cfg.channels) + " channels");
  Tensor<T> g_h, g_w;
  if (ov && ov->force_gate) {
    g_h = Tensor<T>::full({x.dim(0), x.dim(1), x.dim(2)}, T(*ov->force_gate));
    g_w = Tensor<T>::full({x.dim(0), x.dim(1), x.dim(3)}, T(*ov->force_gate));
  } else {
    auto [zh, zw] = coordinate_pool(x);
    std::tie(g_h, g_w) = grf_gates(zh, zw, p);
  }
  auto y_a = grf_branch_a(x, g_h, g_w);
  if (ov && ov->drop_context_branch) return add(x, y_a);
  auto y_b = grf_branch_b(x, p);
  return add(add(x, y_a), y_b);
}

// ---- full MF stack ----

struct MfConfig {
  std::vector<int> grf_channels = {16, 32, 48};
  std::pair<int, int> time_kernel = {10, 2};
  std::pair<int, int> freq_kernel = {2, 8};
  int ratio_den = 4;
  int reduction = 8;
  bool use_grf = true;  // false swaps the GRF stack for plain transition convs

  void validate() const {
    if (grf_channels.empty()) throw ValidationError("mf: grf_channels must not be empty");
    for (int c : grf_channels)
      if (c < 1) throw ValidationError("mf: non-positive channel count");
    if (grf_channels[0] % 2 != 0 || grf_channels[0] < 2)
      throw ValidationError("mf: first stage channels must be even (two parallel convs)");
    if (ratio_den < 2) throw ValidationError("mf: ratio denominator must be >= 2");
  }
  int out_channels() const { return grf_channels.back(); }
};

// Padding (lo, hi) that keeps out = ceil(size/stride); the extra unit for even
// kernels goes on the high side.
inline std::pair<int, int> same_pad_amounts(int kernel, int stride, int size) {
  const int out = (size + stride - 1) / stride;
  const int total = std::max(0, (out - 1) * stride + kernel - size);
  return {total / 2, total - total / 2};
}

// Computes the (H,W) chain through pooling, transitions, and GRF sampling,
// rejecting configurations that collapse a map to zero size. Returns the final
// feature-map size.
inline std::pair<int, int> mf_shape_chain(const MfConfig& cfg, int frames, int bins) {
  cfg.validate();
  if (frames < cfg.time_kernel.first || bins < cfg.freq_kernel.second)
    throw ValidationError("mf: input " + std::to_string(frames) + "x" + std::to_string(bins) +
                          " is smaller than the parallel conv kernels");
  int t = frames / 2, f = bins / 2;  // after 2x2 max pool
  for (size_t i = 0; i < cfg.grf_channels.size(); ++i) {
    if (i > 0) {  // stride-2 transition, same padding
      t = (t + 1) / 2;
      f = (f + 1) / 2;
    }
    if (cfg.use_grf && (t / cfg.ratio_den < 1 || f / cfg.ratio_den < 1))
      throw ValidationError("mf: GRF stage " + std::to_string(i) + " map " +
                            std::to_string(t) + "x" + std::to_string(f) +
                            " collapses under sampling ratio 1/" +
                            std::to_string(cfg.ratio_den));
    if (t < 1 || f < 1)
      throw ValidationError("mf: feature map vanished at stage " + std::to_string(i));
  }
  return {t, f};
}

template <class T>
struct MfParams {
  MfConfig cfg;
  Tensor<T> conv_time_w, conv_time_b;
  Tensor<T> conv_freq_w, conv_freq_b;
  std::vector<GrfParams<T>> grf;  // empty when cfg.use_grf is false
  std::vector<std::pair<Tensor<T>, Tensor<T>>> transitions;

  static MfParams make(const MfConfig& cfg, std::mt19937& rng) {
    cfg.validate();
    auto conv_init = [&rng](int co, int ci, int kh, int kw) {
      const T bound = T(1) / std::sqrt(T(ci * kh * kw));
      return Tensor<T>::uniform({co, ci, kh, kw}, -bound, bound, rng, true);
    };
    MfParams p;
    p.cfg = cfg;
    const int half = cfg.grf_channels[0] / 2;
    p.conv_time_w = conv_init(half, 1, cfg.time_kernel.first, cfg.time_kernel.second);
    p.conv_time_b = Tensor<T>::zeros({half}, true);
    p.conv_freq_w = conv_init(half, 1, cfg.freq_kernel.first, cfg.freq_kernel.second);
    p.conv_freq_b = Tensor<T>::zeros({half}, true);
    for (size_t i = 0; i < cfg.grf_channels.size(); ++i) {
      if (i > 0) {
        p.transitions.emplace_back(
            conv_init(cfg.grf_channels[i], cfg.grf_channels[i - 1], 3, 3),
            Tensor<T>::zeros({cfg.grf_channels[i]}, true));
      }
      if (cfg.use_grf) {
        GrfConfig g;
        g.channels = cfg.grf_channels[i];
        g.reduction = cfg.reduction;
        g.ratio_den = cfg.ratio_den;
        p.grf.push_back(GrfParams<T>::make(g, rng));
      }
    }
    return p;
  }
};

// Same-padded convolution realized with an explicit zero-pad.
template <class T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                      std::pair<int, int> stride) {
  const auto [pt, pb] = same_pad_amounts(w.dim(2), stride.first, x.dim(2));
  const auto [pl, pr] = same_pad_amounts(w.dim(3), stride.second, x.dim(3));
  return conv2d(pad2d(x, pt, pb, pl, pr), w, b, stride, {0, 0});
}

// Two parallel same-padded convolutions over time and frequency, concatenated
// on the channel axis, then 2x2 max pooling.
template <class T>
Tensor<T> parallel_conv(const Tensor<T>& spec, MfParams<T>& p) {
  if (spec.ndim() != 4 || spec.dim(1) != 1)
    throw ValidationError("parallel_conv: expected [N,1,T,F], got " + shape_str(spec.shape()));
  if (spec.dim(2) < p.cfg.time_kernel.first || spec.dim(3) < p.cfg.freq_kernel.second)
    throw ValidationError("parallel_conv: input " + shape_str(spec.shape()) +
                          " smaller than kernels");
  auto ct = conv2d_same(spec, p.conv_time_w, p.conv_time_b, {1, 1});
  auto cf = conv2d_same(spec, p.conv_freq_w, p.conv_freq_b, {1, 1});
  return max_pool2d(concat<T>({ct, cf}, 1), {2, 2}, {2, 2});
}

template <class T>
Tensor<T> mf_forward(const Tensor<T>& spec, MfParams<T>& p) {
  auto x = parallel_conv(spec, p);
  for (size_t i = 0; i < p.cfg.grf_channels.size(); ++i) {
    if (i > 0)
      x = conv2d_same(x, p.transitions[i - 1].first, p.transitions[i - 1].second, {2, 2});
    if (p.cfg.use_grf) x = grf_forward(x, p.grf[i]);
  }
  return x;
}

}  // namespace mfhca
