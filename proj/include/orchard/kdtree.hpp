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

#include <vector>

#include "orchard/common.hpp"

namespace orchard {

/// Exact k-nearest-neighbour search over a static point set. Results are
/// identical to a brute-force scan: ascending squared distance, ties broken
/// by the lower point index. Median-split tree, no approximation.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points);

  // k nearest points to `query` (k is clamped to the set size).
  // `exclude` skips one index, e.g. the query point itself.
  std::vector<int> knn(const Vec3& query, int k, int exclude = -1) const;

  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int left = -1;
    int right = -1;
    int begin = 0;  // leaf range into order_
    int end = 0;
    int axis = 0;
    double split = 0.0;
  };

  int build(int begin, int end, int depth);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace orchard
