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

#include "orchard/cloud.hpp"
#include "orchard/common.hpp"

namespace orchard::octree {

using orchard::PointCloud;

// Axis-aligned cube cell. Half-open on each axis: a point belongs to the
// cell iff lo <= p < hi componentwise, except that the root box is padded
// so every input point satisfies the strict upper bound.
struct Aabb {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};

  Vec3 center() const { return {(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5, (lo.z + hi.z) * 0.5}; }
  double side() const { return hi.x - lo.x; }
};

// One leaf of the partition. `indices` point into the original cloud and
// are kept in ascending order. `oversized` marks a leaf that still exceeds
// the capacity after reaching the depth limit (degenerate inputs such as
// many coincident points); callers must split it by other means.
struct OctreeBlock {
  Aabb box;
  std::vector<int> indices;
  int depth = 0;
  bool oversized = false;
};

struct PartitionSpec {
  int capacity = 4096;  // maximum points per leaf
  int max_depth = 12;   // subdivision limit guarding against coincident points
};

// Recursively splits the cloud into cubic leaves holding at most
// `spec.capacity` points each. The root cube is the tight bounding box of
// the cloud, symmetrically expanded to the longest axis extent plus a small
// margin so boundary points fall strictly inside. Children are visited in
// octant-code order (bit 0: x >= cx, bit 1: y >= cy, bit 2: z >= cz), which
// fixes the leaf order for a given input. Empty octants produce no leaf.
std::vector<OctreeBlock> build_partition(const PointCloud& cloud, const PartitionSpec& spec);

// Checks that `blocks` is a disjoint and complete cover of point indices
// [0, n_points). Throws DataError naming a duplicated or missing index.
void validate_partition(const std::vector<OctreeBlock>& blocks, int n_points);

// Merges per-block class scores back onto the original cloud. `block_rows`
// maps each row of `block_logits[b]` to a scene point index; points that
// appear in several rows (padding replicas) get their scores averaged.
// Returns per-point argmax labels, ties resolved to the lowest class id.
// Throws DataError if a scene point receives no score at all.
std::vector<int> assemble_predictions(
    const std::vector<std::vector<std::vector<double>>>& block_logits,
    const std::vector<std::vector<int>>& block_rows, int n_points, int n_classes);

}  // namespace orchard::octree
