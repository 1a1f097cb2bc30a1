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

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "doctest.h"
#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/reference.hpp"
#include "support/tempdir.hpp"

using orchard::DataError;
using orchard::ParseError;
using orchard::PointCloud;
using orchard::Rng;
using orchard::Vec3;
using testsupport::TempDir;
using testsupport::write_text;

namespace {

PointCloud random_cloud(int n, uint64_t seed, bool colors, bool labels) {
  Rng rng(seed);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.positions.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                               rng.uniform(0.0, 3.0)});
    if (colors) {
      cloud.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    if (labels) cloud.labels.push_back(static_cast<int>(rng.index(2)));
  }
  return cloud;
}

}  // namespace

TEST_SUITE("cloud") {

TEST_CASE("ply without color parses to a colorless cloud") {
  TempDir dir("cloud_plain");
  const std::string path = dir.file("plain.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 3\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n"
             "0 0 0\n1 0 0\n0 1 0\n");
  const PointCloud cloud = orchard::read_cloud(path);
  CHECK(cloud.size() == 3);
  CHECK_FALSE(cloud.has_colors());
  CHECK_FALSE(cloud.has_labels());
  CHECK(cloud.positions[1].x == doctest::Approx(1.0));
}

TEST_CASE("color bytes rescale to the unit interval") {
  TempDir dir("cloud_color");
  const std::string path = dir.file("red.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
             "0 0 0 255 0 0\n");
  const PointCloud cloud = orchard::read_cloud(path);
  REQUIRE(cloud.has_colors());
  CHECK(cloud.colors[0].x == doctest::Approx(1.0));
  CHECK(cloud.colors[0].y == doctest::Approx(0.0));
  CHECK(cloud.colors[0].z == doctest::Approx(0.0));
}

TEST_CASE("write then read is identity on a random cloud") {
  const PointCloud cloud = random_cloud(1000, 11, true, true);
  for (const char* name : {"roundtrip.ply", "roundtrip.pcd"}) {
    CAPTURE(name);
    TempDir dir("cloud_roundtrip");
    const std::string path = dir.file(name);
    orchard::write_cloud(cloud, path);
    const PointCloud back = orchard::read_cloud(path);
    REQUIRE(back.size() == cloud.size());
    REQUIRE(back.has_colors());
    REQUIRE(back.has_labels());
    for (size_t i = 0; i < cloud.size(); ++i) {
      CHECK(std::fabs(back.positions[i].x - cloud.positions[i].x) < 1e-6);
      CHECK(std::fabs(back.positions[i].y - cloud.positions[i].y) < 1e-6);
      CHECK(std::fabs(back.positions[i].z - cloud.positions[i].z) < 1e-6);
      // Colors quantize to 8 bits on disk; the byte must round-trip exactly.
      CHECK(std::lround(back.colors[i].x * 255.0) == std::lround(cloud.colors[i].x * 255.0));
      CHECK(back.labels[i] == cloud.labels[i]);
    }
  }
}

TEST_CASE("empty cloud round-trips as a zero-count file") {
  TempDir dir("cloud_empty");
  const std::string path = dir.file("empty.ply");
  orchard::write_cloud(PointCloud{}, path);
  const PointCloud back = orchard::read_cloud(path);
  CHECK(back.empty());
}

TEST_CASE("labels survive a write-read cycle exactly") {
  PointCloud cloud = random_cloud(64, 3, false, false);
  for (int i = 0; i < 64; ++i) cloud.labels.push_back(i % 3);
  TempDir dir("cloud_labels");
  const std::string path = dir.file("labeled.ply");
  orchard::write_cloud(cloud, path);
  const PointCloud back = orchard::read_cloud(path);
  CHECK(back.labels == cloud.labels);
}

TEST_CASE("malformed input names the offending line") {
  TempDir dir("cloud_bad");

  SUBCASE("header missing end_header") {
    const std::string path = dir.file("header.ply");
    write_text(path, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n");
    CHECK_THROWS_AS(orchard::read_cloud(path), ParseError);
  }
  SUBCASE("fewer rows than the declared count") {
    const std::string path = dir.file("short.ply");
    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 2\n"
               "property float x\nproperty float y\nproperty float z\nend_header\n"
               "0 0 0\n");
    CHECK_THROWS_AS(orchard::read_cloud(path), ParseError);
  }
  SUBCASE("non-finite coordinate") {
    const std::string path = dir.file("nan.ply");
    write_text(path,
               "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property float x\nproperty float y\nproperty float z\nend_header\n"
               "nan 0 0\n");
    CHECK_THROWS_WITH_AS(orchard::read_cloud(path), doctest::Contains(":8"), ParseError);
  }
}

TEST_CASE("voxel cells keep points apart at twice the cell size") {
  PointCloud cloud;
  cloud.positions = {{0.0, 0.0, 0.0}, {0.02, 0.0, 0.0}};
  const PointCloud out = orchard::voxel_downsample(cloud, orchard::VoxelSpec{0.01});
  CHECK(out.size() == 2);
}

TEST_CASE("points sharing a voxel merge into their centroid") {
  PointCloud cloud;
  cloud.positions = {{0.0040, 0.005, 0.005}, {0.0050, 0.005, 0.005}};
  const PointCloud out = orchard::voxel_downsample(cloud, orchard::VoxelSpec{0.01});
  REQUIRE(out.size() == 1);
  CHECK(out.positions[0].x == doctest::Approx(0.0045));
  CHECK(out.positions[0].y == doctest::Approx(0.005));
}

TEST_CASE("voxel output matches a brute-force bucketing oracle") {
  const double cell = 0.05;
  const PointCloud cloud = random_cloud(10000, 21, true, true);
  const PointCloud out = orchard::voxel_downsample(cloud, orchard::VoxelSpec{cell});

  // Rebuild the buckets independently: key on the floored cell coordinates,
  // emit in first-occurrence order, centroid position, mean color, majority
  // label with ties to the lowest id.
  struct Bucket {
    Vec3 pos{}, color{};
    std::map<int, int> labels;
    int n = 0;
  };
  std::map<std::array<int64_t, 3>, Bucket> buckets;
  std::vector<std::array<int64_t, 3>> order;
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const std::array<int64_t, 3> key{static_cast<int64_t>(std::floor(p.x / cell)),
                                     static_cast<int64_t>(std::floor(p.y / cell)),
                                     static_cast<int64_t>(std::floor(p.z / cell))};
    if (buckets.find(key) == buckets.end()) order.push_back(key);
    Bucket& b = buckets[key];
    b.pos = b.pos + p;
    b.color = b.color + cloud.colors[i];
    b.labels[cloud.labels[i]]++;
    b.n++;
  }

  REQUIRE(out.size() == buckets.size());
  for (size_t i = 0; i < order.size(); ++i) {
    const Bucket& b = buckets[order[i]];
    CHECK(out.positions[i].x == b.pos.x / b.n);
    CHECK(out.positions[i].y == b.pos.y / b.n);
    CHECK(out.positions[i].z == b.pos.z / b.n);
    CHECK(out.colors[i].x == b.color.x / b.n);
    int best_label = -1, best_count = 0;
    for (const auto& [label, count] : b.labels) {
      if (count > best_count) {
        best_count = count;
        best_label = label;
      }
    }
    CHECK(out.labels[i] == best_label);
  }
}

TEST_CASE("voxel downsampling is idempotent") {
  const PointCloud cloud = random_cloud(5000, 33, false, false);
  const PointCloud once = orchard::voxel_downsample(cloud, orchard::VoxelSpec{0.05});
  const PointCloud twice = orchard::voxel_downsample(once, orchard::VoxelSpec{0.05});
  REQUIRE(twice.size() == once.size());
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(std::fabs(twice.positions[i].x - once.positions[i].x) < 1e-9);
    CHECK(std::fabs(twice.positions[i].y - once.positions[i].y) < 1e-9);
    CHECK(std::fabs(twice.positions[i].z - once.positions[i].z) < 1e-9);
  }
}

TEST_CASE("voxel rejects a non-positive cell size") {
  CHECK_THROWS_AS(orchard::voxel_downsample(random_cloud(4, 1, false, false),
                                            orchard::VoxelSpec{0.0}),
                  DataError);
}

TEST_CASE("a lone far point is removed, the tight cluster survives") {
  Rng rng(5);
  PointCloud cloud;
  for (int i = 0; i < 100; ++i) {
    cloud.positions.push_back(
        {rng.uniform(0.0, 0.1), rng.uniform(0.0, 0.1), rng.uniform(0.0, 0.1)});
  }
  cloud.positions.push_back({10.0, 0.0, 0.0});
  const PointCloud out = orchard::remove_outliers(cloud, 8, 2.0);
  CHECK(out.size() == 100);
  for (const Vec3& p : out.positions) CHECK(p.x < 1.0);
}

TEST_CASE("survivor set matches brute-force mean-distance statistics") {
  const PointCloud cloud = random_cloud(400, 9, false, false);
  const int k = 12;
  const double ratio = 1.5;
  const std::vector<double> dists =
      orchard::reference::knn_mean_distances(cloud.positions, k);
  double mean = 0.0;
  for (const double d : dists) mean += d;
  mean /= dists.size();
  double var = 0.0;
  for (const double d : dists) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / dists.size());

  const PointCloud out = orchard::remove_outliers(cloud, k, ratio);
  std::vector<Vec3> expected;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (dists[i] <= mean + ratio * stddev) expected.push_back(cloud.positions[i]);
  }
  REQUIRE(out.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(out.positions[i].x == expected[i].x);
    CHECK(out.positions[i].z == expected[i].z);
  }
}

TEST_CASE("a generous threshold keeps every grid point") {
  PointCloud cloud;
  for (int x = 0; x < 5; ++x) {
    for (int y = 0; y < 5; ++y) {
      for (int z = 0; z < 4; ++z) cloud.positions.push_back({x * 0.01, y * 0.01, z * 0.01});
    }
  }
  const PointCloud out = orchard::remove_outliers(cloud, 6, 10.0);
  CHECK(out.size() == cloud.size());
}

TEST_CASE("outlier removal needs more points than neighbours") {
  CHECK_THROWS_AS(orchard::remove_outliers(random_cloud(5, 2, false, false), 5, 1.0), DataError);
}

}  // TEST_SUITE
