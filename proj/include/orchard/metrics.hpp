// Copyright 2026 The OrchardSeg Authors.
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
#include <vector>

#include "orchard/common.hpp"

namespace orchard::metrics {

/// Rows are true classes, columns predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes);

  void accumulate(const std::vector<int>& truths, const std::vector<int>& preds);
  void add(int truth, int pred, int64_t count = 1);

  /// Elementwise sum, for merging shard-local matrices.
  void merge(const ConfusionMatrix& other);

  int n_classes() const { return n_classes_; }
  int64_t count(int truth, int pred) const { return counts_[truth * n_classes_ + pred]; }
  int64_t total() const;

 private:
  int n_classes_;
  std::vector<int64_t> counts_;
};

struct IouReport {
  std::vector<double> per_class;  // NaN for classes absent from truth and prediction
  double mean = 0.0;              // over the present classes only
};

/// IoU_c = TP / (TP + FP + FN). Classes absent from both truth and
/// prediction are excluded from the mean; if every class is absent the
/// matrix describes nothing and a DataError is thrown.
IouReport miou(const ConfusionMatrix& cm);

}  // namespace orchard::metrics
