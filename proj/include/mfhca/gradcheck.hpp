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
#include <string>
#include <vector>

#include "mfhca/tensor.hpp"

namespace mfhca {

// Compares analytic gradients against central finite differences in double
// precision. `loss_fn` must rebuild the forward graph from the given leaves on
// every call and return a scalar tensor. Returns the worst relative error
// |analytic - fd| / max(|analytic|, |fd|, 1e-3) over every leaf entry.
template <class LossFn>
double gradcheck_max_rel_error(std::vector<Tensor<double>> leaves, LossFn&& loss_fn,
                               double h = 1e-5) {
  for (auto& t : leaves) t.zero_grad();
  Tensor<double> loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& t : leaves) analytic.push_back(t.grad());

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].data();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = loss_fn().item();
      vals[i] = orig - h;
      const double fm = loss_fn().item();
      vals[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-3});
      worst = std::max(worst, std::fabs(a - fd) / denom);
    }
  }
  return worst;
}

struct GradcheckResult {
  std::string name;
  double max_rel_error;
};

// Finite-difference suite over every differentiable operator and a tiny
// end-to-end model; implemented in gradcheck.cpp. All entries must come in
// under `tol` (1e-4) for the suite to pass.
std::vector<GradcheckResult> run_gradcheck_suite(uint64_t seed, int num_seeds = 5);
bool gradcheck_suite_passed(const std::vector<GradcheckResult>& results, double tol = 1e-4);

}  // namespace mfhca
