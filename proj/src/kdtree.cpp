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

#include "orchard/kdtree.hpp"

#include <algorithm>
#include <queue>

namespace orchard {

namespace {

constexpr int kLeafSize = 16;

double axis_value(const Vec3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

// Max-heap entry: the worst candidate sits on top. On equal distance the
// higher index is considered worse, so ties resolve to the lower index.
struct Candidate {
  double d2;
  int idx;
  bool operator<(const Candidate& o) const {
    if (d2 != o.d2) return d2 < o.d2;
    return idx < o.idx;
  }
};

}  // namespace

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
  order_.resize(points_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 8);
    root_ = build(0, static_cast<int>(points_.size()), 0);
  }
}

int KdTree::build(int begin, int end, int depth) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.axis = depth % 3;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     const double va = axis_value(points_[a], node.axis);
                     const double vb = axis_value(points_[b], node.axis);
                     if (va != vb) return va < vb;
                     return a < b;
                   });
  node.split = axis_value(points_[order_[mid]], node.axis);
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

std::vector<int> KdTree::knn(const Vec3& query, int k, int exclude) const {
  if (points_.empty()) return {};
  std::priority_queue<Candidate> heap;
  const size_t avail = points_.size() - (exclude >= 0 ? 1 : 0);
  const size_t want = std::min<size_t>(static_cast<size_t>(std::max(k, 0)), avail);
  if (want == 0) return {};

  auto consider = [&](int idx) {
    if (idx == exclude) return;
    const Candidate c{dist2(query, points_[idx]), idx};
    if (heap.size() < want) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
  };

  // Iterative DFS, nearer child first; prune once the heap is full and the
  // splitting plane is farther than the current worst candidate.
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) consider(order_[i]);
      continue;
    }
    const double delta = axis_value(query, node.axis) - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    if (heap.size() < want || delta * delta <= heap.top().d2) {
      stack.push_back(far);
    }
    stack.push_back(near);
  }

  std::vector<Candidate> found;
  found.reserve(heap.size());
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::vector<int> out(found.size());
  for (size_t i = 0; i < found.size(); ++i) {
    out[found.size() - 1 - i] = found[i].idx;
  }
  return out;
}

}  // namespace orchard
