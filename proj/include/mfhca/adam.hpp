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

#pragma once

#include <cmath>
#include <vector>

#include "mfhca/errors.hpp"
#include "mfhca/tensor.hpp"

namespace mfhca {

// Bias-corrected Adam. Moment buffers are indexed parallel to the parameter
// list handed to adam_step; the list must be stable across steps.
template <class T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  int64_t step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

// One update over all parameters; gradients are read from each tensor's grad
// buffer. A NaN/Inf gradient aborts the step before any parameter changes.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(static_cast<size_t>(params[i].numel()), T(0));
      state.second_moment[i].assign(static_cast<size_t>(params[i].numel()), T(0));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ValidationError("adam_step: parameter list size changed between steps");

  for (size_t i = 0; i < params.size(); ++i)
    for (T g : params[i].grad())
      if (!std::isfinite(double(g)))
        throw NumericalError("adam_step: non-finite gradient in parameter " +
                             std::to_string(i) + "; step aborted");

  state.step_count += 1;
  const T bc1 = T(1) - std::pow(state.beta1, T(state.step_count));
  const T bc2 = T(1) - std::pow(state.beta2, T(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    const auto& g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.size())
      throw ValidationError("adam_step: parameter " + std::to_string(i) +
                            " changed shape between steps");
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace mfhca
