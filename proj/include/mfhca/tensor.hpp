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

// Dense row-major tensor with reverse-mode automatic differentiation.
// Ops build an implicit DAG through parent links; backward() replays it in
// reverse creation order (a valid reverse topological order, since inputs
// always exist before the op that consumes them). One graph belongs to one
// thread; distinct graphs are independent.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfhca/errors.hpp"

namespace mfhca {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

namespace detail {

inline std::atomic<uint64_t> g_node_seq{0};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  bool backward_done = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads. Closures capture
  // saved activations by value; parents are reachable through the node itself,
  // so no shared_ptr cycle is formed.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(shape_numel(t.node_->shape), v);
    t.node_->requires_grad = requires_grad;
    t.node_->seq = ++detail::g_node_seq;
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<T> data,
                            bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw ValidationError("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.node_->seq = ++detail::g_node_seq;
    return t;
  }

  static Tensor uniform(Shape shape, T lo, T hi, std::mt19937& rng,
                        bool requires_grad = false) {
    std::uniform_real_distribution<double> dist{double(lo), double(hi)};
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = T(dist(rng));
    return t;
  }

  static Tensor normal(Shape shape, T mean, T stddev, std::mt19937& rng,
                       bool requires_grad = false) {
    std::normal_distribution<double> dist{double(mean), double(stddev)};
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = T(dist(rng));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<T>& data() & { return node_->value; }
  const std::vector<T>& data() const& { return node_->value; }
  // Copy when called on a temporary; the node dies with the handle.
  std::vector<T> data() const&& { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  std::vector<T>& grad() & {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const& {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<T> grad() const&& {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1)
      throw ValidationError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  // Row-major element access; test/debug convenience.
  T at(std::initializer_list<int> idx) const {
    int64_t off = 0;
    size_t i = 0;
    for (int v : idx) {
      off = off * node_->shape[i] + v;
      ++i;
    }
    return node_->value[static_cast<size_t>(off)];
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->value.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(node_->value[i]);
    return Tensor<U>::from_vector(node_->shape, std::move(out), node_->requires_grad);
  }

  std::shared_ptr<Node> node() const { return node_; }

  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <class T>
inline bool any_requires_grad(std::initializer_list<const Tensor<T>*> ins) {
  for (auto* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Makes the output node of an op. Parents and backward_fn are attached only
// when gradients can flow; otherwise the op is a pure forward computation.
template <class T>
inline Tensor<T> make_op_output(Shape shape, std::vector<T> value,
                                std::vector<Tensor<T>> inputs,
                                std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out = Tensor<T>::from_vector(std::move(shape), std::move(value));
  bool rg = false;
  for (const auto& in : inputs) rg |= in.requires_grad();
  if (rg) {
    out.set_requires_grad(true);
    auto node = out.node();
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return out;
}

#ifndef NDEBUG
template <class T>
inline void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data())
    if (!std::isfinite(double(v)))
      throw NumericalError(std::string("non-finite value produced by ") + op);
}
#else
template <class T>
inline void check_finite(const Tensor<T>&, const char*) {}
#endif

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients accumulate (sum) across
// fan-out. A second backward through the same graph is an error; rerun the
// forward pass instead.
template <class T>
void Tensor<T>::backward() const {
  if (!defined()) throw ValidationError("backward() on undefined tensor");
  if (numel() != 1)
    throw ValidationError("backward() requires a scalar loss, got shape " +
                          shape_str(shape()));
  if (node_->backward_done)
    throw ValidationError("backward() called twice on the same graph; rerun forward first");

  // Collect the reachable subgraph.
  std::vector<Node*> order;
  std::vector<std::shared_ptr<Node>> stack{node_};
  std::vector<const Node*> seen;
  auto mark_seen = [&seen](const Node* n) {
    auto it = std::lower_bound(seen.begin(), seen.end(), n);
    if (it != seen.end() && *it == n) return false;
    seen.insert(it, n);
    return true;
  };
  mark_seen(node_.get());
  order.push_back(node_.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (auto& p : n->parents) {
      if (mark_seen(p.get())) {
        order.push_back(p.get());
        stack.push_back(p);
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (Node* n : order) {
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
    n->backward_done = true;
  }
}

// ---- elementwise and reduction primitives ----

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ValidationError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
          auto& p = self.parents[static_cast<size_t>(k)];
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
      });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ValidationError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i)
            pb->grad[i] += self.grad[i] * pa->value[i];
        }
      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return detail::make_op_output<T>(
      a.shape(), std::move(out), {a}, [c](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * c;
      });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return detail::make_op_output<T>(
      Shape{1}, std::vector<T>{acc}, {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T g = self.grad[0];
        for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
      });
}

namespace detail {
// Decomposes shape into (outer, axis, inner) strides around `axis`.
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len,
                       int64_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(s));
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  len = s[static_cast<size_t>(axis)];
  inner = 1;
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

template <class T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis) {
  int64_t outer, len, inner;
  detail::axis_split(a.shape(), axis, outer, len, inner);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + axis);
  std::vector<T> out(static_cast<size_t>(outer * inner), T(0));
  const auto& x = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < len; ++k) {
      const T* src = x.data() + (o * len + k) * inner;
      T* dst = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  const T scale_v = T(1) / T(len);
  for (auto& v : out) v *= scale_v;
  return detail::make_op_output<T>(
      std::move(out_shape), std::move(out), {a},
      [outer, len, inner, scale_v](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t k = 0; k < len; ++k) {
            T* dst = p->grad.data() + (o * len + k) * inner;
            const T* src = self.grad.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * scale_v;
          }
      });
}

// ---- structural ops ----

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw ValidationError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                          shape_str(new_shape));
  return detail::make_op_output<T>(
      std::move(new_shape), a.data(), {a}, [](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
  int64_t outer, alen, inner;
  detail::axis_split(a.shape(), axis, outer, alen, inner);
  if (start < 0 || len < 1 || start + len > alen)
    throw ValidationError("slice: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") invalid for axis length " +
                          std::to_string(alen));
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  std::vector<T> out(static_cast<size_t>(outer * len * inner));
  const auto& x = a.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * alen + start) * inner, len * inner,
                out.data() + o * len * inner);
  return detail::make_op_output<T>(
      std::move(out_shape), std::move(out), {a},
      [outer, alen, inner, start, len](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          T* dst = p->grad.data() + (o * alen + start) * inner;
          const T* src = self.grad.data() + o * len * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ValidationError("concat: empty input list");
  const Shape& s0 = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    if (x.ndim() != static_cast<int>(s0.size()))
      throw ValidationError("concat: rank mismatch");
    for (int d = 0; d < x.ndim(); ++d)
      if (d != axis && x.dim(d) != s0[static_cast<size_t>(d)])
        throw ValidationError("concat: shape mismatch " + shape_str(x.shape()) +
                              " vs " + shape_str(s0) + " on non-axis dim " +
                              std::to_string(d));
    total += x.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = static_cast<int>(total);
  int64_t outer, olen, inner;
  detail::axis_split(out_shape, axis, outer, olen, inner);
  std::vector<T> out(static_cast<size_t>(outer * olen * inner));
  std::vector<int64_t> lens;
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t l = x.dim(axis);
    lens.push_back(l);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(x.data().data() + o * l * inner, l * inner,
                  out.data() + (o * olen + off) * inner);
    off += l;
  }
  return detail::make_op_output<T>(
      std::move(out_shape), std::move(out), xs,
      [outer, olen, inner, lens](detail::Node<T>& self) {
        int64_t off2 = 0;
        for (size_t k = 0; k < self.parents.size(); ++k) {
          auto& p = self.parents[k];
          const int64_t l = lens[k];
          if (p->requires_grad) {
            p->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const T* src = self.grad.data() + (o * olen + off2) * inner;
              T* dst = p->grad.data() + o * l * inner;
              for (int64_t i = 0; i < l * inner; ++i) dst[i] += src[i];
            }
          }
          off2 += l;
        }
      });
}

// 2-D transpose.
template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.ndim() != 2)
    throw ValidationError("transpose expects a 2-D tensor, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<T> out(static_cast<size_t>(a.numel()));
  const auto& x = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = x[static_cast<size_t>(i) * n + j];
  return detail::make_op_output<T>(
      Shape{n, m}, std::move(out), {a}, [m, n](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < m; ++i)
            p->grad[static_cast<size_t>(i) * n + j] +=
                self.grad[static_cast<size_t>(j) * m + i];
      });
}

// Swaps axes 1 and 2 of a 3-D tensor: (A,B,C) -> (A,C,B).
template <class T>
Tensor<T> transpose12(const Tensor<T>& a) {
  if (a.ndim() != 3)
    throw ValidationError("transpose12 expects a 3-D tensor, got " + shape_str(a.shape()));
  const int A = a.dim(0), B = a.dim(1), C = a.dim(2);
  std::vector<T> out(static_cast<size_t>(a.numel()));
  const auto& x = a.data();
  for (int n = 0; n < A; ++n)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        out[(static_cast<size_t>(n) * C + c) * B + b] =
            x[(static_cast<size_t>(n) * B + b) * C + c];
  return detail::make_op_output<T>(
      Shape{A, C, B}, std::move(out), {a}, [A, B, C](detail::Node<T>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int n = 0; n < A; ++n)
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
              p->grad[(static_cast<size_t>(n) * B + b) * C + c] +=
                  self.grad[(static_cast<size_t>(n) * C + c) * B + b];
      });
}

// Selects index `i` along axis 0 and drops that axis.
template <class T>
Tensor<T> select0(const Tensor<T>& a, int i) {
  Tensor<T> s = slice(a, 0, i, 1);
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  return reshape(s, out_shape);
}

// Stacks equal-shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack0(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ValidationError("stack0: empty input list");
  std::vector<Tensor<T>> lifted;
  lifted.reserve(xs.size());
  for (const auto& x : xs) {
    Shape s = x.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(x, s));
  }
  return concat(lifted, 0);
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace mfhca
