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

#include "orchard/metrics.hpp"

#include <limits>

namespace orchard::metrics {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_classes_(n_classes) {
  if (n_classes < 1) throw DataError("confusion matrix needs >= 1 class");
  counts_.assign(static_cast<size_t>(n_classes) * n_classes, 0);
}

void ConfusionMatrix::add(int truth, int pred, int64_t count) {
  if (truth < 0 || truth >= n_classes_ || pred < 0 || pred >= n_classes_) {
    throw DataError("class id out of range: truth=" + std::to_string(truth) +
                    " pred=" + std::to_string(pred) + " with " +
                    std::to_string(n_classes_) + " classes");
  }
  counts_[truth * n_classes_ + pred] += count;
}

void ConfusionMatrix::accumulate(const std::vector<int>& truths,
                                 const std::vector<int>& preds) {
  if (truths.size() != preds.size()) {
    throw DataError("truth length " + std::to_string(truths.size()) +
                    " != prediction length " + std::to_string(preds.size()));
  }
  for (size_t i = 0; i < truths.size(); ++i) add(truths[i], preds[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_classes_ != n_classes_) {
    throw DataError("cannot merge confusion matrices of different sizes");
  }
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const int64_t c : counts_) t += c;
  return t;
}

IouReport miou(const ConfusionMatrix& cm) {
  IouReport report;
  report.per_class.assign(cm.n_classes(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < cm.n_classes(); ++c) {
    const int64_t tp = cm.count(c, c);
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < cm.n_classes(); ++o) {
      if (o == c) continue;
      fp += cm.count(o, c);
      fn += cm.count(c, o);
    }
    if (tp + fp + fn == 0) continue;  // absent from truth and prediction
    report.per_class[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    sum += report.per_class[c];
    ++present;
  }
  if (present == 0) throw DataError("all classes absent; mIoU undefined");
  report.mean = sum / present;
  return report;
}

}  // namespace orchard::metrics
