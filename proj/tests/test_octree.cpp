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

#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/octree.hpp"

using orchard::DataError;
using orchard::PointCloud;
using orchard::Rng;
using orchard::Vec3;
namespace octree = orchard::octree;

namespace {

PointCloud random_cloud(int n, Rng& rng) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.positions.push_back({rng.uniform(-1.0, 3.0), rng.uniform(0.0, 2.0),
                               rng.uniform(-0.5, 0.5)});
  }
  return cloud;
}

void check_cover(const std::vector<octree::OctreeBlock>& blocks, int n) {
  std::vector<int> seen(n, 0);
  for (const octree::OctreeBlock& b : blocks) {
    REQUIRE_FALSE(b.indices.empty());
    for (const int i : b.indices) {
      REQUIRE(i >= 0);
      REQUIRE(i < n);
      seen[i]++;
    }
  }
  for (int i = 0; i < n; ++i) REQUIRE(seen[i] == 1);
}

}  // namespace

TEST_SUITE("octree") {

TEST_CASE("cube corners separate into eight singleton leaves") {
  PointCloud cloud;
  for (int c = 0; c < 8; ++c) {
    cloud.positions.push_back({static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
                               static_cast<double>((c >> 2) & 1)});
  }
  octree::PartitionSpec spec;
  spec.capacity = 1;
  const auto blocks = octree::build_partition(cloud, spec);
  REQUIRE(blocks.size() == 8);
  for (const auto& b : blocks) CHECK(b.indices.size() == 1);
  check_cover(blocks, 8);
}

TEST_CASE("a cloud within capacity stays a single root leaf") {
  Rng rng(1);
  const PointCloud cloud = random_cloud(100, rng);
  octree::PartitionSpec spec;
  spec.capacity = 128;
  const auto blocks = octree::build_partition(cloud, spec);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].depth == 0);
  CHECK(blocks[0].indices.size() == 100);
}

TEST_CASE("fuzzed partitions stay disjoint, complete, and within capacity") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(600));
    const PointCloud cloud = random_cloud(n, rng);
    octree::PartitionSpec spec;
    spec.capacity = 1 + static_cast<int>(rng.index(64));
    CAPTURE(trial);
    const auto blocks = octree::build_partition(cloud, spec);
    check_cover(blocks, n);
    octree::validate_partition(blocks, n);
    for (const auto& b : blocks) {
      if (!b.oversized) REQUIRE(static_cast<int>(b.indices.size()) <= spec.capacity);
      for (const int i : b.indices) {
        const Vec3& p = cloud.positions[i];
        REQUIRE(p.x >= b.box.lo.x);
        REQUIRE(p.x < b.box.hi.x);
        REQUIRE(p.y >= b.box.lo.y);
        REQUIRE(p.y < b.box.hi.y);
        REQUIRE(p.z >= b.box.lo.z);
        REQUIRE(p.z < b.box.hi.z);
      }
    }
  }
}

TEST_CASE("rebuilding a partition reproduces it exactly") {
  Rng rng(3);
  const PointCloud cloud = random_cloud(2000, rng);
  octree::PartitionSpec spec;
  spec.capacity = 64;
  const auto a = octree::build_partition(cloud, spec);
  const auto b = octree::build_partition(cloud, spec);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].indices == b[i].indices);
    CHECK(a[i].depth == b[i].depth);
    CHECK(a[i].box.lo.x == b[i].box.lo.x);
    CHECK(a[i].box.hi.z == b[i].box.hi.z);
  }
}

TEST_CASE("leaf boxes are exact octant subdivisions of the root") {
  Rng rng(4);
  const PointCloud cloud = random_cloud(3000, rng);
  octree::PartitionSpec spec;
  spec.capacity = 100;
  const auto blocks = octree::build_partition(cloud, spec);

  // The whole tree shares one root; reconstruct it from any depth-d leaf by
  // checking side length and containment.
  double root_side = 0.0;
  for (const auto& b : blocks) {
    root_side = std::max(root_side, b.box.side() * std::pow(2.0, b.depth));
  }
  for (const auto& b : blocks) {
    CHECK(b.box.side() * std::pow(2.0, b.depth) == doctest::Approx(root_side).epsilon(1e-9));
    CHECK(b.box.hi.x - b.box.lo.x == doctest::Approx(b.box.hi.y - b.box.lo.y));
    CHECK(b.box.hi.x - b.box.lo.x == doctest::Approx(b.box.hi.z - b.box.lo.z));
  }
}

TEST_CASE("coincident points trip the depth limit and get flagged") {
  PointCloud cloud;
  for (int i = 0; i < 10; ++i) cloud.positions.push_back({0.5, 0.5, 0.5});
  octree::PartitionSpec spec;
  spec.capacity = 2;
  spec.max_depth = 4;
  const auto blocks = octree::build_partition(cloud, spec);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].oversized);
  CHECK(blocks[0].depth == 4);
  CHECK(blocks[0].indices.size() == 10);
}

TEST_CASE("partition rejects an empty cloud") {
  CHECK_THROWS_AS(octree::build_partition(PointCloud{}, octree::PartitionSpec{}), DataError);
}

TEST_CASE("validate_partition names duplicated and missing points") {
  octree::OctreeBlock a;
  a.indices = {0, 1};
  octree::OctreeBlock b;
  b.indices = {1, 2};
  CHECK_THROWS_WITH_AS(octree::validate_partition({a, b}, 3), doctest::Contains("1"), DataError);

  octree::OctreeBlock c;
  c.indices = {0, 2};
  CHECK_THROWS_WITH_AS(octree::validate_partition({c}, 3), doctest::Contains("1"), DataError);
}

TEST_CASE("single-block assembly reduces to per-row argmax") {
  const std::vector<std::vector<std::vector<double>>> logits{
      {{1.0, 2.0}, {3.0, 0.5}, {0.0, 0.0}}};
  const std::vector<std::vector<int>> rows{{0, 1, 2}};
  const std::vector<int> labels = octree::assemble_predictions(logits, rows, 3, 2);
  CHECK(labels == std::vector<int>{1, 0, 0});  // tie at the last row goes low
}

TEST_CASE("padding replicas average their scores before argmax") {
  const std::vector<std::vector<std::vector<double>>> logits{{{2.0, 0.0}}, {{0.0, 4.0}}};
  const std::vector<std::vector<int>> rows{{0}, {0}};
  // Averaged scores (1, 2) decide class 1.
  CHECK(octree::assemble_predictions(logits, rows, 1, 2) == std::vector<int>{1});
}

TEST_CASE("multi-block assembly matches a scatter-then-argmax oracle") {
  Rng rng(5);
  const int n = 120, n_classes = 3;
  std::vector<std::vector<std::vector<double>>> logits(3);
  std::vector<std::vector<int>> rows(3);
  for (int b = 0; b < 3; ++b) {
    const int m = 50 + static_cast<int>(rng.index(30));
    for (int r = 0; r < m; ++r) {
      rows[b].push_back(static_cast<int>(rng.index(n)));
      logits[b].push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                           rng.uniform(-2.0, 2.0)});
    }
  }
  // Ensure full coverage.
  for (int i = 0; i < n; ++i) {
    rows[i % 3].push_back(i);
    logits[i % 3].push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }

  std::vector<std::vector<double>> sums(n, std::vector<double>(n_classes, 0.0));
  std::vector<int> hits(n, 0);
  for (int b = 0; b < 3; ++b) {
    for (size_t r = 0; r < rows[b].size(); ++r) {
      for (int c = 0; c < n_classes; ++c) sums[rows[b][r]][c] += logits[b][r][c];
      hits[rows[b][r]]++;
    }
  }
  std::vector<int> expected(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (sums[i][c] / hits[i] > sums[i][best] / hits[i]) best = c;
    }
    expected[i] = best;
  }
  CHECK(octree::assemble_predictions(logits, rows, n, n_classes) == expected);
}

TEST_CASE("assembly reports a point that never got a score") {
  const std::vector<std::vector<std::vector<double>>> logits{{{1.0, 0.0}}};
  const std::vector<std::vector<int>> rows{{0}};
  CHECK_THROWS_AS(octree::assemble_predictions(logits, rows, 2, 2), DataError);
}

}  // TEST_SUITE
