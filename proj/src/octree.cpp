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

#include "orchard/octree.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace orchard::octree {

namespace {

// Margin added to each side of the root cube so points lying exactly on the
// tight bounding box satisfy the half-open upper bound.
constexpr double kRootMargin = 1e-6;

Aabb root_box(const PointCloud& cloud) {
  Vec3 lo = cloud.positions[0];
  Vec3 hi = cloud.positions[0];
  for (const Vec3& p : cloud.positions) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
  }
  const Vec3 center{(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5, (lo.z + hi.z) * 0.5};
  const double longest =
      std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  const double half = longest * 0.5 + kRootMargin;
  return {{center.x - half, center.y - half, center.z - half},
          {center.x + half, center.y + half, center.z + half}};
}

void split(const PointCloud& cloud, const Aabb& box, std::vector<int>&& indices,
           int depth, const PartitionSpec& spec, std::vector<OctreeBlock>& out) {
  if (static_cast<int>(indices.size()) <= spec.capacity) {
    out.push_back({box, std::move(indices), depth, false});
    return;
  }
  if (depth >= spec.max_depth) {
    out.push_back({box, std::move(indices), depth, true});
    return;
  }
  const Vec3 c = box.center();
  std::array<std::vector<int>, 8> child_idx;
  for (const int i : indices) {
    const Vec3& p = cloud.positions[i];
    const int code = (p.x >= c.x ? 1 : 0) | (p.y >= c.y ? 2 : 0) | (p.z >= c.z ? 4 : 0);
    child_idx[code].push_back(i);
  }
  indices.clear();
  for (int code = 0; code < 8; ++code) {
    if (child_idx[code].empty()) continue;
    Aabb child = box;
    ((code & 1) ? child.lo.x : child.hi.x) = c.x;
    ((code & 2) ? child.lo.y : child.hi.y) = c.y;
    ((code & 4) ? child.lo.z : child.hi.z) = c.z;
    split(cloud, child, std::move(child_idx[code]), depth + 1, spec, out);
  }
}

}  // namespace

std::vector<OctreeBlock> build_partition(const PointCloud& cloud, const PartitionSpec& spec) {
  if (spec.capacity < 1) throw DataError("partition capacity must be >= 1");
  if (spec.max_depth < 0) throw DataError("partition max_depth must be >= 0");
  if (cloud.empty()) throw DataError("cannot partition an empty cloud");
  const int n = static_cast<int>(cloud.size());
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  std::vector<OctreeBlock> out;
  split(cloud, root_box(cloud), std::move(all), 0, spec, out);
  return out;
}

void validate_partition(const std::vector<OctreeBlock>& blocks, int n_points) {
  std::vector<uint8_t> seen(n_points, 0);
  for (const OctreeBlock& b : blocks) {
    for (const int i : b.indices) {
      if (i < 0 || i >= n_points) {
        throw DataError("partition references point " + std::to_string(i) +
                        " outside [0, " + std::to_string(n_points) + ")");
      }
      if (seen[i]) {
        throw DataError("partition lists point " + std::to_string(i) + " twice");
      }
      seen[i] = 1;
    }
  }
  for (int i = 0; i < n_points; ++i) {
    if (!seen[i]) {
      throw DataError("partition misses point " + std::to_string(i));
    }
  }
}

std::vector<int> assemble_predictions(
    const std::vector<std::vector<std::vector<double>>>& block_logits,
    const std::vector<std::vector<int>>& block_rows, int n_points, int n_classes) {
  if (block_logits.size() != block_rows.size()) {
    throw DataError("logit blocks and row maps differ in count");
  }
  std::vector<double> sums(static_cast<size_t>(n_points) * n_classes, 0.0);
  std::vector<int> hits(n_points, 0);
  for (size_t b = 0; b < block_logits.size(); ++b) {
    const auto& logits = block_logits[b];
    const auto& rows = block_rows[b];
    if (logits.size() != rows.size()) {
      throw DataError("block " + std::to_string(b) + " has " +
                      std::to_string(logits.size()) + " score rows for " +
                      std::to_string(rows.size()) + " points");
    }
    for (size_t r = 0; r < rows.size(); ++r) {
      const int p = rows[r];
      if (p < 0 || p >= n_points) {
        throw DataError("block " + std::to_string(b) + " row " + std::to_string(r) +
                        " maps to out-of-range point " + std::to_string(p));
      }
      if (static_cast<int>(logits[r].size()) != n_classes) {
        throw DataError("block " + std::to_string(b) + " row " + std::to_string(r) +
                        " has " + std::to_string(logits[r].size()) + " scores, expected " +
                        std::to_string(n_classes));
      }
      for (int c = 0; c < n_classes; ++c) sums[static_cast<size_t>(p) * n_classes + c] += logits[r][c];
      ++hits[p];
    }
  }
  std::vector<int> labels(n_points, 0);
  for (int p = 0; p < n_points; ++p) {
    if (hits[p] == 0) {
      throw DataError("point " + std::to_string(p) + " received no prediction");
    }
    const double* row = &sums[static_cast<size_t>(p) * n_classes];
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (row[c] > row[best]) best = c;  // ties keep the lowest class id
    }
    labels[p] = best;
  }
  return labels;
}

}  // namespace orchard::octree
