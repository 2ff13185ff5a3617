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

#include "mfhca/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "mfhca/errors.hpp"

namespace mfhca {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
  counts_.assign(static_cast<size_t>(k_) * k_, 0);
}

void ConfusionMatrix::add(int true_class, int predicted_class) {
  if (true_class < 0 || true_class >= k_ || predicted_class < 0 || predicted_class >= k_)
    throw ValidationError("confusion matrix index out of range");
  counts_[static_cast<size_t>(true_class) * k_ + predicted_class] += 1;
}

int64_t ConfusionMatrix::at(int true_class, int predicted_class) const {
  return counts_[static_cast<size_t>(true_class) * k_ + predicted_class];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

std::string ConfusionMatrix::to_string(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  for (int i = 0; i < k_; ++i) {
    if (!class_names.empty())
      os << std::setw(10) << class_names[static_cast<size_t>(i)] << " |";
    for (int j = 0; j < k_; ++j) os << std::setw(6) << at(i, j);
    os << "\n";
  }
  return os.str();
}

std::pair<double, double> wa_ua(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  const int64_t total = cm.total();
  if (total == 0) throw ValidationError("wa_ua: empty confusion matrix");
  int64_t trace = 0;
  double recall_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    trace += cm.at(i, i);
    int64_t row = 0;
    for (int j = 0; j < k; ++j) row += cm.at(i, j);
    if (row == 0)
      throw ValidationError("wa_ua: class " + std::to_string(i) +
                            " has no samples; UA recall undefined");
    recall_sum += double(cm.at(i, i)) / double(row);
  }
  return {double(trace) / double(total), recall_sum / k};
}

}  // namespace mfhca
