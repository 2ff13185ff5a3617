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

#include <cstdint>
#include <string>
#include <vector>

namespace mfhca {

// K x K counts; rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(int true_class, int predicted_class);
  int64_t at(int true_class, int predicted_class) const;
  int num_classes() const { return k_; }
  int64_t total() const;
  std::string to_string(const std::vector<std::string>& class_names = {}) const;

 private:
  int k_;
  std::vector<int64_t> counts_;
};

// WA = trace/total (overall accuracy); UA = mean of per-class recalls.
// UA is undefined when some class has no samples; that raises.
std::pair<double, double> wa_ua(const ConfusionMatrix& cm);

}  // namespace mfhca
