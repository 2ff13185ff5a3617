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

// Bidirectional LSTM over a [T,Din] sequence. Each direction is one fused
// graph node with hand-rolled backpropagation through time; gate order is
// (input, forget, cell, output) and initial states are zero.

#pragma once

#include "mfhca/ops.hpp"
#include "mfhca/tensor.hpp"

namespace mfhca {

template <class T>
struct LstmDirParams {
  Tensor<T> w_ih;  // [4H, Din]
  Tensor<T> w_hh;  // [4H, H]
  Tensor<T> bias;  // [4H]

  static LstmDirParams make(int input_dim, int hidden, std::mt19937& rng) {
    const T bound = T(1) / std::sqrt(T(hidden));
    LstmDirParams p;
    p.w_ih = Tensor<T>::uniform({4 * hidden, input_dim}, -bound, bound, rng, true);
    p.w_hh = Tensor<T>::uniform({4 * hidden, hidden}, -bound, bound, rng, true);
    p.bias = Tensor<T>::zeros({4 * hidden}, true);
    return p;
  }
  int hidden() const { return w_hh.dim(1); }
};

template <class T>
struct BiLstmParams {
  LstmDirParams<T> fw;
  LstmDirParams<T> bw;

  static BiLstmParams make(int input_dim, int hidden, std::mt19937& rng) {
    BiLstmParams p;
    p.fw = LstmDirParams<T>::make(input_dim, hidden, rng);
    p.bw = LstmDirParams<T>::make(input_dim, hidden, rng);
    return p;
  }
  int hidden() const { return fw.hidden(); }
};

// One LSTM direction; `reverse` walks the sequence back-to-front while the
// output stays in input time order.
template <class T>
Tensor<T> lstm_dir(const Tensor<T>& seq, const LstmDirParams<T>& params, bool reverse) {
  if (seq.ndim() != 2)
    throw ValidationError("lstm: expected [T,Din] sequence, got " + shape_str(seq.shape()));
  const int Tn = seq.dim(0), Din = seq.dim(1);
  if (Tn < 1) throw ValidationError("lstm: empty sequence");
  const int H = params.hidden();
  const int G = 4 * H;
  if (params.w_ih.dim(1) != Din)
    throw ValidationError("lstm: input width " + std::to_string(Din) +
                          " does not match w_ih " + shape_str(params.w_ih.shape()));

  const T* x = seq.data().data();
  const T* wih = params.w_ih.data().data();
  const T* whh = params.w_hh.data().data();
  const T* b = params.bias.data().data();

  // Saved activations, indexed by step position (0 = first processed step).
  std::vector<T> gates(static_cast<size_t>(Tn) * G);  // post-activation i,f,g,o
  std::vector<T> cells(static_cast<size_t>(Tn) * H);
  std::vector<T> hidden(static_cast<size_t>(Tn) * H);
  std::vector<T> out(static_cast<size_t>(Tn) * H);

  std::vector<T> h_prev(H, T(0)), c_prev(H, T(0)), a(G);
  for (int step = 0; step < Tn; ++step) {
    const int t = reverse ? Tn - 1 - step : step;
    const T* xt = x + static_cast<size_t>(t) * Din;
    for (int j = 0; j < G; ++j) {
      const T* wrow = wih + static_cast<size_t>(j) * Din;
      T acc = b[j];
      for (int i = 0; i < Din; ++i) acc += wrow[i] * xt[i];
      const T* hrow = whh + static_cast<size_t>(j) * H;
      for (int i = 0; i < H; ++i) acc += hrow[i] * h_prev[i];
      a[j] = acc;
    }
    T* g = gates.data() + static_cast<size_t>(step) * G;
    T* c = cells.data() + static_cast<size_t>(step) * H;
    T* h = hidden.data() + static_cast<size_t>(step) * H;
    for (int i = 0; i < H; ++i) {
      const T gi = detail::stable_sigmoid(a[i]);
      const T gf = detail::stable_sigmoid(a[H + i]);
      const T gg = std::tanh(a[2 * H + i]);
      const T go = detail::stable_sigmoid(a[3 * H + i]);
      g[i] = gi;
      g[H + i] = gf;
      g[2 * H + i] = gg;
      g[3 * H + i] = go;
      c[i] = gf * c_prev[i] + gi * gg;
      h[i] = go * std::tanh(c[i]);
    }
    std::copy_n(h, H, h_prev.data());
    std::copy_n(c, H, c_prev.data());
    std::copy_n(h, H, out.data() + static_cast<size_t>(t) * H);
  }

  auto result = detail::make_op_output<T>(
      Shape{Tn, H}, std::move(out), {seq, params.w_ih, params.w_hh, params.bias},
      [Tn, Din, H, G, reverse, gates = std::move(gates), cells = std::move(cells),
       hidden = std::move(hidden)](detail::Node<T>& self) {
        auto& pseq = self.parents[0];
        auto& pwih = self.parents[1];
        auto& pwhh = self.parents[2];
        auto& pb = self.parents[3];
        const T* wih2 = pwih->value.data();
        const T* whh2 = pwhh->value.data();
        const T* x2 = pseq->value.data();
        if (pseq->requires_grad) pseq->ensure_grad();
        if (pwih->requires_grad) pwih->ensure_grad();
        if (pwhh->requires_grad) pwhh->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();

        std::vector<T> dh_next(H, T(0)), dc_next(H, T(0)), da(G), dh(H);
        for (int step = Tn - 1; step >= 0; --step) {
          const int t = reverse ? Tn - 1 - step : step;
          const T* g = gates.data() + static_cast<size_t>(step) * G;
          const T* c = cells.data() + static_cast<size_t>(step) * H;
          const T* c_prev = step > 0 ? cells.data() + static_cast<size_t>(step - 1) * H : nullptr;
          const T* h_prev = step > 0 ? hidden.data() + static_cast<size_t>(step - 1) * H : nullptr;
          for (int i = 0; i < H; ++i)
            dh[i] = self.grad[static_cast<size_t>(t) * H + i] + dh_next[i];
          for (int i = 0; i < H; ++i) {
            const T gi = g[i], gf = g[H + i], gg = g[2 * H + i], go = g[3 * H + i];
            const T tc = std::tanh(c[i]);
            const T d_o = dh[i] * tc;
            const T dc = dc_next[i] + dh[i] * go * (T(1) - tc * tc);
            const T d_i = dc * gg;
            const T d_g = dc * gi;
            const T d_f = dc * (c_prev ? c_prev[i] : T(0));
            da[i] = d_i * gi * (T(1) - gi);
            da[H + i] = d_f * gf * (T(1) - gf);
            da[2 * H + i] = d_g * (T(1) - gg * gg);
            da[3 * H + i] = d_o * go * (T(1) - go);
            dc_next[i] = dc * gf;
          }
          if (pb->requires_grad)
            for (int j = 0; j < G; ++j) pb->grad[static_cast<size_t>(j)] += da[j];
          const T* xt = x2 + static_cast<size_t>(t) * Din;
          if (pwih->requires_grad)
            for (int j = 0; j < G; ++j) {
              const T av = da[j];
              T* wg = pwih->grad.data() + static_cast<size_t>(j) * Din;
              for (int i = 0; i < Din; ++i) wg[i] += av * xt[i];
            }
          if (pwhh->requires_grad && h_prev)
            for (int j = 0; j < G; ++j) {
              const T av = da[j];
              T* wg = pwhh->grad.data() + static_cast<size_t>(j) * H;
              for (int i = 0; i < H; ++i) wg[i] += av * h_prev[i];
            }
          if (pseq->requires_grad) {
            T* xg = pseq->grad.data() + static_cast<size_t>(t) * Din;
            for (int j = 0; j < G; ++j) {
              const T av = da[j];
              const T* wrow = wih2 + static_cast<size_t>(j) * Din;
              for (int i = 0; i < Din; ++i) xg[i] += av * wrow[i];
            }
          }
          std::fill(dh_next.begin(), dh_next.end(), T(0));
          for (int j = 0; j < G; ++j) {
            const T av = da[j];
            const T* wrow = whh2 + static_cast<size_t>(j) * H;
            for (int i = 0; i < H; ++i) dh_next[i] += av * wrow[i];
          }
        }
      });
  detail::check_finite(result, "lstm");
  return result;
}

// Forward and backward direction outputs concatenated per step: [T, 2H].
template <class T>
Tensor<T> bilstm(const Tensor<T>& seq, const BiLstmParams<T>& params) {
  Tensor<T> f = lstm_dir(seq, params.fw, false);
  Tensor<T> r = lstm_dir(seq, params.bw, true);
  return concat<T>({f, r}, 1);
}

}  // namespace mfhca
