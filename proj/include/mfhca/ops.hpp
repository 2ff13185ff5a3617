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

// Neural-network operators on Tensor<T>. Convolution uses the
// cross-correlation convention (no kernel flip) with zero padding.

#pragma once

#include <cmath>
#include <utility>

#include "mfhca/tensor.hpp"

namespace mfhca {

// ---- convolution ----

// input [N,C,H,W], kernel [Co,C,kh,kw], bias [Co] (or undefined for none).
// Output H' = floor((H + 2*ph - kh)/sh) + 1, likewise W'.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::pair<int, int> stride = {1, 1}, std::pair<int, int> padding = {0, 0}) {
  if (input.ndim() != 4 || kernel.ndim() != 4)
    throw ValidationError("conv2d: expected 4-D input and kernel, got " +
                          shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int sh = stride.first, sw = stride.second;
  const int ph = padding.first, pw = padding.second;
  if (kernel.dim(1) != C)
    throw ValidationError("conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
                          " do not match input channels " + std::to_string(C) +
                          " (input " + shape_str(input.shape()) + ", kernel " +
                          shape_str(kernel.shape()) + ")");
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Co))
    throw ValidationError("conv2d: bias shape " + shape_str(bias.shape()) +
                          " does not match output channels " + std::to_string(Co));
  if (sh < 1 || sw < 1) throw ValidationError("conv2d: stride must be positive");
  const int Ho = (H + 2 * ph - kh) / sh + 1;
  const int Wo = (W + 2 * pw - kw) / sw + 1;
  if (H + 2 * ph < kh || W + 2 * pw < kw || Ho < 1 || Wo < 1)
    throw ValidationError("conv2d: kernel " + shape_str(kernel.shape()) +
                          " larger than padded input " + shape_str(input.shape()));

  std::vector<T> out(static_cast<size_t>(N) * Co * Ho * Wo, T(0));
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      T* o = out.data() + (static_cast<size_t>(n) * Co + co) * Ho * Wo;
      for (int c = 0; c < C; ++c) {
        const T* xc = x + (static_cast<size_t>(n) * C + c) * H * W;
        const T* kc = k + (static_cast<size_t>(co) * C + c) * kh * kw;
        for (int r = 0; r < kh; ++r)
          for (int s = 0; s < kw; ++s) {
            const T kv = kc[r * kw + s];
            if (kv == T(0)) continue;
            for (int oh = 0; oh < Ho; ++oh) {
              const int ih = oh * sh + r - ph;
              if (ih < 0 || ih >= H) continue;
              const T* row = xc + static_cast<size_t>(ih) * W;
              T* orow = o + static_cast<size_t>(oh) * Wo;
              for (int ow = 0; ow < Wo; ++ow) {
                const int iw = ow * sw + s - pw;
                if (iw < 0 || iw >= W) continue;
                orow[ow] += kv * row[iw];
              }
            }
          }
      }
      if (bias.defined()) {
        const T b = bias.data()[static_cast<size_t>(co)];
        for (int64_t i = 0; i < int64_t(Ho) * Wo; ++i) o[i] += b;
      }
    }

  std::vector<Tensor<T>> inputs = bias.defined()
                                      ? std::vector<Tensor<T>>{input, kernel, bias}
                                      : std::vector<Tensor<T>>{input, kernel};
  auto result = detail::make_op_output<T>(
      Shape{N, Co, Ho, Wo}, std::move(out), inputs,
      [=](detail::Node<T>& self) {
        auto& pin = self.parents[0];
        auto& pk = self.parents[1];
        const T* go = self.grad.data();
        const T* kd = pk->value.data();
        const T* xd = pin->value.data();
        if (pin->requires_grad) pin->ensure_grad();
        if (pk->requires_grad) pk->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int co = 0; co < Co; ++co) {
            const T* g = go + (static_cast<size_t>(n) * Co + co) * Ho * Wo;
            for (int c = 0; c < C; ++c)
              for (int r = 0; r < kh; ++r)
                for (int s = 0; s < kw; ++s) {
                  const size_t kidx = ((static_cast<size_t>(co) * C + c) * kh + r) * kw + s;
                  const T kv = kd[kidx];
                  T kacc = 0;
                  for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * sh + r - ph;
                    if (ih < 0 || ih >= H) continue;
                    const size_t xoff = ((static_cast<size_t>(n) * C + c) * H + ih) * W;
                    const T* grow = g + static_cast<size_t>(oh) * Wo;
                    if (pin->requires_grad) {
                      T* gx = pin->grad.data() + xoff;
                      for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * sw + s - pw;
                        if (iw < 0 || iw >= W) continue;
                        gx[iw] += kv * grow[ow];
                      }
                    }
                    if (pk->requires_grad) {
                      const T* xrow = xd + xoff;
                      for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * sw + s - pw;
                        if (iw < 0 || iw >= W) continue;
                        kacc += grow[ow] * xrow[iw];
                      }
                    }
                  }
                  if (pk->requires_grad) pk->grad[kidx] += kacc;
                }
          }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& pb = self.parents[2];
          pb->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
              const T* g = go + (static_cast<size_t>(n) * Co + co) * Ho * Wo;
              T acc = 0;
              for (int64_t i = 0; i < int64_t(Ho) * Wo; ++i) acc += g[i];
              pb->grad[static_cast<size_t>(co)] += acc;
            }
        }
      });
  detail::check_finite(result, "conv2d");
  return result;
}

// Zero padding around the spatial axes of [N,C,H,W].
template <class T>
Tensor<T> pad2d(const Tensor<T>& input, int top, int bottom, int left, int right) {
  if (input.ndim() != 4)
    throw ValidationError("pad2d: expected 4-D input, got " + shape_str(input.shape()));
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw ValidationError("pad2d: negative padding");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Ho = H + top + bottom, Wo = W + left + right;
  std::vector<T> out(static_cast<size_t>(N) * C * Ho * Wo, T(0));
  const T* x = input.data().data();
  for (int nc = 0; nc < N * C; ++nc)
    for (int h = 0; h < H; ++h)
      std::copy_n(x + (static_cast<size_t>(nc) * H + h) * W, W,
                  out.data() + (static_cast<size_t>(nc) * Ho + h + top) * Wo + left);
  return detail::make_op_output<T>(
      Shape{N, C, Ho, Wo}, std::move(out), {input},
      [=](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc)
          for (int h = 0; h < H; ++h) {
            const T* src = self.grad.data() + (static_cast<size_t>(nc) * Ho + h + top) * Wo + left;
            T* dst = p->grad.data() + (static_cast<size_t>(nc) * H + h) * W;
            for (int w = 0; w < W; ++w) dst[w] += src[w];
          }
      });
}

// ---- pooling ----

template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::pair<int, int> kernel,
                     std::pair<int, int> stride) {
  if (input.ndim() != 4)
    throw ValidationError("avg_pool2d: expected 4-D input, got " + shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int kh = kernel.first, kw = kernel.second, sh = stride.first, sw = stride.second;
  if (kh > H || kw > W)
    throw ValidationError("avg_pool2d: kernel " + std::to_string(kh) + "x" +
                          std::to_string(kw) + " larger than input " +
                          shape_str(input.shape()));
  const int Ho = (H - kh) / sh + 1, Wo = (W - kw) / sw + 1;
  const T inv = T(1) / T(kh * kw);
  std::vector<T> out(static_cast<size_t>(N) * C * Ho * Wo);
  const T* x = input.data().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* xc = x + static_cast<size_t>(nc) * H * W;
    T* o = out.data() + static_cast<size_t>(nc) * Ho * Wo;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        T acc = 0;
        for (int r = 0; r < kh; ++r) {
          const T* row = xc + static_cast<size_t>(oh * sh + r) * W + ow * sw;
          for (int s = 0; s < kw; ++s) acc += row[s];
        }
        o[oh * Wo + ow] = acc * inv;
      }
  }
  return detail::make_op_output<T>(
      Shape{N, C, Ho, Wo}, std::move(out), {input},
      [=](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          const T* g = self.grad.data() + static_cast<size_t>(nc) * Ho * Wo;
          T* gx = p->grad.data() + static_cast<size_t>(nc) * H * W;
          for (int oh = 0; oh < Ho; ++oh)
            for (int ow = 0; ow < Wo; ++ow) {
              const T gv = g[oh * Wo + ow] * inv;
              for (int r = 0; r < kh; ++r) {
                T* row = gx + static_cast<size_t>(oh * sh + r) * W + ow * sw;
                for (int s = 0; s < kw; ++s) row[s] += gv;
              }
            }
        }
      });
}

// Backward routes gradient to the argmax; ties go to the first occurrence in
// row-major window order.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::pair<int, int> kernel,
                     std::pair<int, int> stride) {
  if (input.ndim() != 4)
    throw ValidationError("max_pool2d: expected 4-D input, got " + shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int kh = kernel.first, kw = kernel.second, sh = stride.first, sw = stride.second;
  if (kh > H || kw > W)
    throw ValidationError("max_pool2d: kernel " + std::to_string(kh) + "x" +
                          std::to_string(kw) + " larger than input " +
                          shape_str(input.shape()));
  const int Ho = (H - kh) / sh + 1, Wo = (W - kw) / sw + 1;
  std::vector<T> out(static_cast<size_t>(N) * C * Ho * Wo);
  std::vector<int32_t> argmax(out.size());
  const T* x = input.data().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* xc = x + static_cast<size_t>(nc) * H * W;
    const size_t base = static_cast<size_t>(nc) * Ho * Wo;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        T best = xc[static_cast<size_t>(oh * sh) * W + ow * sw];
        int32_t best_idx = oh * sh * W + ow * sw;
        for (int r = 0; r < kh; ++r)
          for (int s = 0; s < kw; ++s) {
            const int32_t idx = (oh * sh + r) * W + ow * sw + s;
            if (xc[idx] > best) {
              best = xc[idx];
              best_idx = idx;
            }
          }
        out[base + oh * Wo + ow] = best;
        argmax[base + oh * Wo + ow] = best_idx;
      }
  }
  return detail::make_op_output<T>(
      Shape{N, C, Ho, Wo}, std::move(out), {input},
      [N, C, H, W, Ho, Wo, argmax](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          const size_t base = static_cast<size_t>(nc) * Ho * Wo;
          T* gx = p->grad.data() + static_cast<size_t>(nc) * H * W;
          for (int64_t i = 0; i < int64_t(Ho) * Wo; ++i)
            gx[argmax[base + i]] += self.grad[base + i];
        }
      });
}

// ---- bilinear upsample (align_corners=false, edge-clamped) ----

template <class T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int out_h, int out_w) {
  if (input.ndim() != 4)
    throw ValidationError("bilinear_upsample: expected 4-D input, got " +
                          shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (out_h < H || out_w < W)
    throw ValidationError("bilinear_upsample: downscaling " + shape_str(input.shape()) +
                          " to " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                          " not supported");
  // Per-axis source indices and blend weights.
  std::vector<int> h0(out_h), h1(out_h);
  std::vector<T> hf(out_h);
  for (int i = 0; i < out_h; ++i) {
    double src = (i + 0.5) * double(H) / out_h - 0.5;
    src = std::min(std::max(src, 0.0), double(H - 1));
    h0[i] = static_cast<int>(src);
    h1[i] = std::min(h0[i] + 1, H - 1);
    hf[i] = T(src - h0[i]);
  }
  std::vector<int> w0(out_w), w1(out_w);
  std::vector<T> wf(out_w);
  for (int j = 0; j < out_w; ++j) {
    double src = (j + 0.5) * double(W) / out_w - 0.5;
    src = std::min(std::max(src, 0.0), double(W - 1));
    w0[j] = static_cast<int>(src);
    w1[j] = std::min(w0[j] + 1, W - 1);
    wf[j] = T(src - w0[j]);
  }
  std::vector<T> out(static_cast<size_t>(N) * C * out_h * out_w);
  const T* x = input.data().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* xc = x + static_cast<size_t>(nc) * H * W;
    T* o = out.data() + static_cast<size_t>(nc) * out_h * out_w;
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const T a = hf[i], b = wf[j];
        o[static_cast<size_t>(i) * out_w + j] =
            (T(1) - a) * ((T(1) - b) * xc[static_cast<size_t>(h0[i]) * W + w0[j]] +
                          b * xc[static_cast<size_t>(h0[i]) * W + w1[j]]) +
            a * ((T(1) - b) * xc[static_cast<size_t>(h1[i]) * W + w0[j]] +
                 b * xc[static_cast<size_t>(h1[i]) * W + w1[j]]);
      }
  }
  return detail::make_op_output<T>(
      Shape{N, C, out_h, out_w}, std::move(out), {input},
      [N, C, H, W, out_h, out_w, h0, h1, hf, w0, w1, wf](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          const T* g = self.grad.data() + static_cast<size_t>(nc) * out_h * out_w;
          T* gx = p->grad.data() + static_cast<size_t>(nc) * H * W;
          for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j) {
              const T a = hf[i], b = wf[j];
              const T gv = g[static_cast<size_t>(i) * out_w + j];
              gx[static_cast<size_t>(h0[i]) * W + w0[j]] += (T(1) - a) * (T(1) - b) * gv;
              gx[static_cast<size_t>(h0[i]) * W + w1[j]] += (T(1) - a) * b * gv;
              gx[static_cast<size_t>(h1[i]) * W + w0[j]] += a * (T(1) - b) * gv;
              gx[static_cast<size_t>(h1[i]) * W + w1[j]] += a * b * gv;
            }
        }
      });
}

// ---- batch normalization ----

template <class T>
struct BatchNormState {
  Tensor<T> gamma;  // learnable scale
  Tensor<T> beta;   // learnable shift
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T epsilon = T(1e-5);
  bool training = true;

  static BatchNormState make(int channels) {
    BatchNormState s;
    s.gamma = Tensor<T>::full({channels}, T(1), true);
    s.beta = Tensor<T>::zeros({channels}, true);
    s.running_mean = Tensor<T>::zeros({channels});
    s.running_var = Tensor<T>::full({channels}, T(1));
    return s;
  }
  int channels() const { return gamma.dim(0); }
};

// Train mode normalizes with per-channel batch statistics over (N,H,W) using
// biased variance and updates running stats; eval mode uses running stats only.
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BatchNormState<T>& state) {
  if (input.ndim() != 4)
    throw ValidationError("batchnorm2d: expected 4-D input, got " + shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (C != state.channels())
    throw ValidationError("batchnorm2d: input channels " + std::to_string(C) +
                          " do not match state channels " + std::to_string(state.channels()));
  const int64_t M = int64_t(N) * H * W;  // samples per channel
  const T eps = state.epsilon;
  const T* x = input.data().data();
  const int64_t hw = int64_t(H) * W;

  std::vector<T> mean(C), var(C);
  if (state.training) {
    if (M < 2)
      throw ValidationError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                            std::to_string(M));
    for (int c = 0; c < C; ++c) {
      T acc = 0;
      for (int n = 0; n < N; ++n) {
        const T* xc = x + (static_cast<size_t>(n) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += xc[i];
      }
      mean[c] = acc / T(M);
      T vacc = 0;
      for (int n = 0; n < N; ++n) {
        const T* xc = x + (static_cast<size_t>(n) * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const T d = xc[i] - mean[c];
          vacc += d * d;
        }
      }
      var[c] = vacc / T(M);
    }
    auto& rm = state.running_mean.data();
    auto& rv = state.running_var.data();
    for (int c = 0; c < C; ++c) {
      rm[c] = (T(1) - state.momentum) * rm[c] + state.momentum * mean[c];
      rv[c] = (T(1) - state.momentum) * rv[c] + state.momentum * var[c];
    }
  } else {
    mean = state.running_mean.data();
    var = state.running_var.data();
  }

  std::vector<T> inv_std(C);
  for (int c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);

  const auto& gm = state.gamma.data();
  const auto& bt = state.beta.data();
  std::vector<T> out(input.data().size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = x + (static_cast<size_t>(n) * C + c) * hw;
      T* o = out.data() + (static_cast<size_t>(n) * C + c) * hw;
      const T a = gm[c] * inv_std[c];
      const T b = bt[c] - a * mean[c];
      for (int64_t i = 0; i < hw; ++i) o[i] = a * xc[i] + b;
    }

  const bool training = state.training;
  auto result = detail::make_op_output<T>(
      input.shape(), std::move(out), {input, state.gamma, state.beta},
      [N, C, H, W, hw, M, mean, inv_std, training](detail::Node<T>& self) {
        auto& pin = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const T* x2 = pin->value.data();
        const T* gma = pg->value.data();
        if (pin->requires_grad) pin->ensure_grad();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int c = 0; c < C; ++c) {
          // Per-channel sums over the batch.
          T sum_dy = 0, sum_dy_xhat = 0;
          for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * hw;
            const T* dy = self.grad.data() + off;
            const T* xv = x2 + off;
            for (int64_t i = 0; i < hw; ++i) {
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * (xv[i] - mean[c]) * inv_std[c];
            }
          }
          if (pg->requires_grad) pg->grad[c] += sum_dy_xhat;
          if (pb->requires_grad) pb->grad[c] += sum_dy;
          if (!pin->requires_grad) continue;
          const T g = gma[c] * inv_std[c];
          if (training) {
            // dx = g * (dy - mean(dy) - xhat * mean(dy*xhat))
            const T mdy = sum_dy / T(M);
            const T mdyx = sum_dy_xhat / T(M);
            for (int n = 0; n < N; ++n) {
              const size_t off = (static_cast<size_t>(n) * C + c) * hw;
              const T* dy = self.grad.data() + off;
              const T* xv = x2 + off;
              T* dx = pin->grad.data() + off;
              for (int64_t i = 0; i < hw; ++i) {
                const T xhat = (xv[i] - mean[c]) * inv_std[c];
                dx[i] += g * (dy[i] - mdy - xhat * mdyx);
              }
            }
          } else {
            for (int n = 0; n < N; ++n) {
              const size_t off = (static_cast<size_t>(n) * C + c) * hw;
              const T* dy = self.grad.data() + off;
              T* dx = pin->grad.data() + off;
              for (int64_t i = 0; i < hw; ++i) dx[i] += g * dy[i];
            }
          }
        }
      });
  detail::check_finite(result, "batchnorm2d");
  return result;
}

// ---- activations ----

namespace detail {
template <class T>
inline T stable_sigmoid(T v) {
  // exp of a negative magnitude only; no overflow for large |v|.
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}
}  // namespace detail

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(a.data()[i]);
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const T s = self.value[i];
          p->grad[i] += self.grad[i] * s * (T(1) - s);
        }
      });
}

// swish(x) = x * sigmoid(x)
template <class T>
Tensor<T> swish(const Tensor<T>& a) {
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] * detail::stable_sigmoid(a.data()[i]);
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const T s = detail::stable_sigmoid(p->value[i]);
          const T x = p->value[i];
          p->grad[i] += self.grad[i] * (s + x * s * (T(1) - s));
        }
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          if (p->value[i] > T(0)) p->grad[i] += self.grad[i];
      });
}

template <class T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          const T t = self.value[i];
          p->grad[i] += self.grad[i] * (T(1) - t * t);
        }
      });
}

enum class Activation { Swish, Sigmoid, Relu };

template <class T>
Tensor<T> activation(const Tensor<T>& a, Activation kind) {
  switch (kind) {
    case Activation::Swish: return swish(a);
    case Activation::Sigmoid: return sigmoid(a);
    case Activation::Relu: return relu(a);
  }
  throw ValidationError("unknown activation kind");
}

// ---- softmax ----

// Max-subtraction stabilized; each slice along `axis` sums to 1.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  int64_t outer, len, inner;
  detail::axis_split(a.shape(), axis, outer, len, inner);
  std::vector<T> out(a.data().size());
  const T* x = a.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * len * inner + i;
      T mx = x[base];
      for (int64_t k = 1; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
      T denom = 0;
      for (int64_t k = 0; k < len; ++k) {
        const T e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int64_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
    }
  auto result = detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [outer, len, inner](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            T dot = 0;
            for (int64_t k = 0; k < len; ++k)
              dot += self.grad[base + k * inner] * self.value[base + k * inner];
            for (int64_t k = 0; k < len; ++k)
              p->grad[base + k * inner] +=
                  self.value[base + k * inner] * (self.grad[base + k * inner] - dot);
          }
      });
  detail::check_finite(result, "softmax");
  return result;
}

// ---- matmul / linear ----

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw ValidationError("matmul: expected 2-D operands, got " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ValidationError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                          " x " + shape_str(b.shape()));
  std::vector<T> out(static_cast<size_t>(m) * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const T av = A[static_cast<size_t>(i) * k + kk];
      const T* brow = B + static_cast<size_t>(kk) * n;
      T* orow = out.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto result = detail::make_op_output<T>(
      Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const T* G = self.grad.data();
        if (pa->requires_grad) {
          pa->ensure_grad();
          const T* B = pb->value.data();
          // dA = G * B^T
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              T acc = 0;
              const T* grow = G + static_cast<size_t>(i) * n;
              const T* brow = B + static_cast<size_t>(kk) * n;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              pa->grad[static_cast<size_t>(i) * k + kk] += acc;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          const T* A = pa->value.data();
          // dB = A^T * G
          for (int kk = 0; kk < k; ++kk)
            for (int i = 0; i < m; ++i) {
              const T av = A[static_cast<size_t>(i) * k + kk];
              const T* grow = G + static_cast<size_t>(i) * n;
              T* brow = pb->grad.data() + static_cast<size_t>(kk) * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
        }
      });
  detail::check_finite(result, "matmul");
  return result;
}

// Affine map on the last axis: input [...,Din], weight [Dout,Din], bias [Dout].
template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.ndim() != 2)
    throw ValidationError("linear: weight must be 2-D, got " + shape_str(weight.shape()));
  const int din = weight.dim(1), dout = weight.dim(0);
  if (input.dim(input.ndim() - 1) != din)
    throw ValidationError("linear: input " + shape_str(input.shape()) +
                          " incompatible with weight " + shape_str(weight.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != dout))
    throw ValidationError("linear: bias shape " + shape_str(bias.shape()) +
                          " does not match output width " + std::to_string(dout));
  const int64_t rows = input.numel() / din;
  std::vector<T> out(static_cast<size_t>(rows) * dout, T(0));
  const T* X = input.data().data();
  const T* Wt = weight.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = X + r * din;
    T* orow = out.data() + r * dout;
    for (int o = 0; o < dout; ++o) {
      const T* wrow = Wt + static_cast<size_t>(o) * din;
      T acc = bias.defined() ? bias.data()[static_cast<size_t>(o)] : T(0);
      for (int i = 0; i < din; ++i) acc += wrow[i] * xrow[i];
      orow[o] = acc;
    }
  }
  Shape out_shape = input.shape();
  out_shape.back() = dout;
  std::vector<Tensor<T>> inputs = bias.defined()
                                      ? std::vector<Tensor<T>>{input, weight, bias}
                                      : std::vector<Tensor<T>>{input, weight};
  auto result = detail::make_op_output<T>(
      std::move(out_shape), std::move(out), inputs,
      [rows, din, dout](detail::Node<T>& self) {
        auto& pin = self.parents[0];
        auto& pw = self.parents[1];
        const T* G = self.grad.data();
        if (pin->requires_grad) {
          pin->ensure_grad();
          const T* Wt = pw->value.data();
          for (int64_t r = 0; r < rows; ++r) {
            const T* grow = G + r * dout;
            T* xg = pin->grad.data() + r * din;
            for (int o = 0; o < dout; ++o) {
              const T gv = grow[o];
              const T* wrow = Wt + static_cast<size_t>(o) * din;
              for (int i = 0; i < din; ++i) xg[i] += gv * wrow[i];
            }
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          const T* X = pin->value.data();
          for (int64_t r = 0; r < rows; ++r) {
            const T* grow = G + r * dout;
            const T* xrow = X + r * din;
            for (int o = 0; o < dout; ++o) {
              const T gv = grow[o];
              T* wg = pw->grad.data() + static_cast<size_t>(o) * din;
              for (int i = 0; i < din; ++i) wg[i] += gv * xrow[i];
            }
          }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& pb = self.parents[2];
          pb->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int o = 0; o < dout; ++o) pb->grad[static_cast<size_t>(o)] += G[r * dout + o];
        }
      });
  detail::check_finite(result, "linear");
  return result;
}

// ---- cross entropy ----

// Mean over the batch of -log softmax(logits)[label], via log-sum-exp.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ValidationError("cross_entropy: expected 2-D logits, got " +
                          shape_str(logits.shape()));
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(N) + " rows");
  for (int n = 0; n < N; ++n)
    if (labels[static_cast<size_t>(n)] < 0 || labels[static_cast<size_t>(n)] >= K)
      throw ValidationError("cross_entropy: label " +
                            std::to_string(labels[static_cast<size_t>(n)]) +
                            " out of range [0," + std::to_string(K) + ")");
  const T* x = logits.data().data();
  std::vector<T> probs(static_cast<size_t>(N) * K);
  T loss = 0;
  for (int n = 0; n < N; ++n) {
    const T* row = x + static_cast<size_t>(n) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T denom = 0;
    for (int k = 0; k < K; ++k) {
      const T e = std::exp(row[k] - mx);
      probs[static_cast<size_t>(n) * K + k] = e;
      denom += e;
    }
    const T lse = mx + std::log(denom);
    loss += lse - row[labels[static_cast<size_t>(n)]];
    const T inv = T(1) / denom;
    for (int k = 0; k < K; ++k) probs[static_cast<size_t>(n) * K + k] *= inv;
  }
  loss /= T(N);
  return detail::make_op_output<T>(
      Shape{1}, std::vector<T>{loss}, {logits},
      [N, K, probs, labels](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T g = self.grad[0] / T(N);
        for (int n = 0; n < N; ++n) {
          T* row = p->grad.data() + static_cast<size_t>(n) * K;
          const T* pr = probs.data() + static_cast<size_t>(n) * K;
          for (int k = 0; k < K; ++k) row[k] += g * pr[k];
          row[labels[static_cast<size_t>(n)]] -= g;
        }
      });
}

// ---- coordinate gating (Hadamard with per-axis gates) ----

// Y[n,c,h,w] = X[n,c,h,w] * gh[n,c,h] * gw[n,c,w]
template <class T>
Tensor<T> coord_gate_apply(const Tensor<T>& x, const Tensor<T>& gh, const Tensor<T>& gw) {
  if (x.ndim() != 4 || gh.ndim() != 3 || gw.ndim() != 3)
    throw ValidationError("coord_gate_apply: expected X[N,C,H,W], gh[N,C,H], gw[N,C,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gh.dim(0) != N || gh.dim(1) != C || gh.dim(2) != H || gw.dim(0) != N ||
      gw.dim(1) != C || gw.dim(2) != W)
    throw ValidationError("coord_gate_apply: gate shapes " + shape_str(gh.shape()) + ", " +
                          shape_str(gw.shape()) + " do not match input " +
                          shape_str(x.shape()));
  std::vector<T> out(x.data().size());
  const T* xd = x.data().data();
  const T* ghd = gh.data().data();
  const T* gwd = gw.data().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const T* xc = xd + static_cast<size_t>(nc) * H * W;
    T* o = out.data() + static_cast<size_t>(nc) * H * W;
    const T* gh_c = ghd + static_cast<size_t>(nc) * H;
    const T* gw_c = gwd + static_cast<size_t>(nc) * W;
    for (int h = 0; h < H; ++h) {
      const T a = gh_c[h];
      for (int w = 0; w < W; ++w) o[static_cast<size_t>(h) * W + w] = xc[static_cast<size_t>(h) * W + w] * a * gw_c[w];
    }
  }
  return detail::make_op_output<T>(
      x.shape(), std::move(out), {x, gh, gw},
      [N, C, H, W](detail::Node<T>& self) {
        auto& px = self.parents[0];
        auto& pgh = self.parents[1];
        auto& pgw = self.parents[2];
        if (px->requires_grad) px->ensure_grad();
        if (pgh->requires_grad) pgh->ensure_grad();
        if (pgw->requires_grad) pgw->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
          const T* g = self.grad.data() + static_cast<size_t>(nc) * H * W;
          const T* xc = px->value.data() + static_cast<size_t>(nc) * H * W;
          const T* gh_c = pgh->value.data() + static_cast<size_t>(nc) * H;
          const T* gw_c = pgw->value.data() + static_cast<size_t>(nc) * W;
          for (int h = 0; h < H; ++h) {
            T gh_acc = 0;
            for (int w = 0; w < W; ++w) {
              const size_t i = static_cast<size_t>(h) * W + w;
              if (px->requires_grad) px->grad[static_cast<size_t>(nc) * H * W + i] += g[i] * gh_c[h] * gw_c[w];
              gh_acc += g[i] * xc[i] * gw_c[w];
              if (pgw->requires_grad)
                pgw->grad[static_cast<size_t>(nc) * W + w] += g[i] * xc[i] * gh_c[h];
            }
            if (pgh->requires_grad) pgh->grad[static_cast<size_t>(nc) * H + h] += gh_acc;
          }
        }
      });
}

}  // namespace mfhca
