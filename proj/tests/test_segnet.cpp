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
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/config.hpp"
#include "orchard/geom.hpp"
#include "orchard/octree.hpp"
#include "orchard/segnet.hpp"
#include "orchard/tensor.hpp"
#include "support/gradcheck.hpp"

using orchard::DataError;
using orchard::PointCloud;
using orchard::Rng;
using orchard::Vec3;
using orchard::derive_seed;
namespace diff = orchard::diff;
namespace geom = orchard::geom;
namespace segnet = orchard::segnet;
using diff::ParameterStore;
using diff::Tensor;

namespace {

PointCloud random_cloud(Rng& rng, int n, bool with_colors, double extent = 1.0) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.positions.push_back(
        {rng.uniform(0.0, extent), rng.uniform(0.0, extent), rng.uniform(0.0, extent)});
    if (with_colors) {
      cloud.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
  }
  return cloud;
}

// Overwrites every affine weight and bias under the store with random values
// so oracle comparisons exercise a nontrivial MLP.
void randomize_affine(ParameterStore& store, uint64_t seed) {
  Rng rng(seed);
  for (const std::string& name : store.names()) {
    if (name.size() < 2) continue;
    const std::string tail = name.substr(name.size() - 2);
    if (tail != ".w" && tail != ".b") continue;
    for (double& v : store.get(name).raw_values()) v = rng.uniform(-0.8, 0.8);
  }
}

// Row-by-row affine + ReLU chain over plain vectors, the loop counterpart of
// mlp_forward without normalization.
std::vector<double> plain_mlp(const std::vector<double>& row, ParameterStore& store,
                              const std::string& prefix, const std::vector<int>& channels) {
  std::vector<double> cur = row;
  for (size_t layer = 0; layer < channels.size(); ++layer) {
    const std::string base = prefix + ".mlp" + std::to_string(layer);
    const Tensor w = store.get(base + ".w");
    const Tensor b = store.get(base + ".b");
    std::vector<double> next(channels[layer], 0.0);
    for (int out = 0; out < channels[layer]; ++out) {
      double acc = b.values()[out];
      for (size_t in = 0; in < cur.size(); ++in) {
        acc += cur[in] * w.values()[in * channels[layer] + out];
      }
      next[out] = std::max(acc, 0.0);
    }
    cur = std::move(next);
  }
  return cur;
}

// A four-stage network small enough for exhaustive tests: 64-point blocks,
// narrow channels, neighborhood search by k nearest so every group is full.
segnet::NetworkSpec tiny_spec(segnet::FusionMode fusion) {
  segnet::NetworkSpec spec;
  spec.block_size = 64;
  auto stage = [](int n, double radius, int k, std::vector<int> ch) {
    segnet::SABlockSpec s;
    s.n_centroids = n;
    s.grouping = {geom::GroupingMethod::Knn, k, radius};
    s.mlp_channels = std::move(ch);
    return s;
  };
  spec.sa_blocks = {stage(32, 0.1, 8, {8, 8}), stage(16, 0.2, 8, {8, 12}),
                    stage(8, 0.4, 4, {12, 16}), stage(4, 0.8, 4, {16, 16})};
  spec.fp_blocks = {{{8}}, {{12}}, {{12}}, {{16}}};
  segnet::ColorBranchSpec color;
  color.grouping = {geom::GroupingMethod::Knn, 4, 0.1};
  color.mlp_channels = {6};
  spec.color_branch = color;
  spec.fusion = fusion;
  spec.head_channels = {8};
  return spec;
}

}  // namespace

TEST_SUITE("segnet") {

TEST_CASE("sa forward matches a per-group loop evaluation") {
  Rng rng(301);
  const int m = 40, n = 8, k = 6;
  std::vector<Vec3> positions;
  for (int i = 0; i < m; ++i) {
    positions.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  std::vector<double> feat_vals;
  for (int i = 0; i < m * 5; ++i) feat_vals.push_back(rng.uniform(-1.0, 1.0));
  Tensor features = Tensor::constant(m, 5, feat_vals);

  segnet::SABlockSpec spec;
  spec.n_centroids = n;
  spec.grouping = {geom::GroupingMethod::Ball, k, 0.3};
  spec.mlp_channels = {7, 9};

  ParameterStore store;
  segnet::create_mlp_params(store, "sa", 3 + 5, spec.mlp_channels, false);
  randomize_affine(store, 99);

  const uint64_t seed = 4242;
  segnet::SAOutput out =
      segnet::sa_forward(positions, features, spec, store, "sa", false, false, seed);
  REQUIRE(out.centroids.size() == static_cast<size_t>(n));
  REQUIRE(out.features.rows() == n);
  REQUIRE(out.features.cols() == 9);

  const std::vector<int> picked =
      geom::sample(positions, {geom::SamplingMethod::Fps, n, seed});
  std::vector<Vec3> centroids;
  for (int i : picked) centroids.push_back(positions[i]);
  for (size_t c = 0; c < centroids.size(); ++c) {
    CHECK(out.centroids[c].x == centroids[c].x);
    CHECK(out.centroids[c].y == centroids[c].y);
    CHECK(out.centroids[c].z == centroids[c].z);
  }

  const std::vector<int> groups = geom::group(positions, centroids, spec.grouping);
  for (int c = 0; c < n; ++c) {
    std::vector<double> pooled(9, -1e300);
    for (int j = 0; j < k; ++j) {
      const int p = groups[static_cast<size_t>(c) * k + j];
      const Vec3 d = positions[p] - centroids[c];
      std::vector<double> row = {d.x, d.y, d.z};
      for (int f = 0; f < 5; ++f) row.push_back(feat_vals[static_cast<size_t>(p) * 5 + f]);
      const std::vector<double> activ = plain_mlp(row, store, "sa", spec.mlp_channels);
      for (int f = 0; f < 9; ++f) pooled[f] = std::max(pooled[f], activ[f]);
    }
    for (int f = 0; f < 9; ++f) {
      CHECK(std::abs(out.features.values()[static_cast<size_t>(c) * 9 + f] - pooled[f]) < 1e-9);
    }
  }
}

TEST_CASE("sa forward collapses a single point to a zero-offset group") {
  std::vector<Vec3> positions = {{0.4, 0.5, 0.6}};
  segnet::SABlockSpec spec;
  spec.n_centroids = 1;
  spec.grouping = {geom::GroupingMethod::Ball, 3, 0.5};
  spec.mlp_channels = {4};
  ParameterStore store;
  segnet::create_mlp_params(store, "sa", 3, spec.mlp_channels, false);
  randomize_affine(store, 5);

  segnet::SAOutput out =
      segnet::sa_forward(positions, Tensor(), spec, store, "sa", false, false, 17);
  CHECK(out.centroids[0].x == 0.4);
  CHECK(out.centroids[0].y == 0.5);
  CHECK(out.centroids[0].z == 0.6);
  // The only group member is the centroid itself, so the recentered input is
  // the zero row and the pooled feature reduces to MLP(0).
  const std::vector<double> expect = plain_mlp({0.0, 0.0, 0.0}, store, "sa", {4});
  for (int f = 0; f < 4; ++f) {
    CHECK(out.features.values()[f] == doctest::Approx(expect[f]).epsilon(1e-12));
  }
}

TEST_CASE("sa forward treats coincident points identically") {
  std::vector<Vec3> positions = {{0.2, 0.2, 0.2}, {0.2, 0.2, 0.2}};
  std::vector<double> feat_vals = {0.5, -0.25, 0.5, -0.25};
  Tensor features = Tensor::constant(2, 2, feat_vals);
  segnet::SABlockSpec spec;
  spec.n_centroids = 2;
  spec.grouping = {geom::GroupingMethod::Ball, 2, 0.1};
  spec.mlp_channels = {5};
  ParameterStore store;
  segnet::create_mlp_params(store, "sa", 5, spec.mlp_channels, false);
  randomize_affine(store, 7);
  segnet::SAOutput out =
      segnet::sa_forward(positions, features, spec, store, "sa", false, false, 3);
  for (int f = 0; f < 5; ++f) {
    CHECK(out.features.values()[f] == out.features.values()[5 + f]);
  }
}

TEST_CASE("fp forward matches a loop evaluation") {
  Rng rng(303);
  std::vector<Vec3> queries, sources;
  for (int i = 0; i < 30; ++i) {
    queries.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  for (int i = 0; i < 7; ++i) {
    sources.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  std::vector<double> src_vals, skip_vals;
  for (int i = 0; i < 7 * 6; ++i) src_vals.push_back(rng.uniform(-1.0, 1.0));
  for (int i = 0; i < 30 * 4; ++i) skip_vals.push_back(rng.uniform(-1.0, 1.0));
  Tensor src = Tensor::constant(7, 6, src_vals);
  Tensor skip = Tensor::constant(30, 4, skip_vals);

  segnet::FPBlockSpec spec{{5}};
  ParameterStore store;
  segnet::create_mlp_params(store, "fp", 6 + 4, spec.mlp_channels, false);
  randomize_affine(store, 11);

  Tensor out = segnet::fp_forward(queries, sources, src, skip, spec, store, "fp", false, false);
  REQUIRE(out.rows() == 30);
  REQUIRE(out.cols() == 5);

  const std::vector<geom::ThreeNN> nn = geom::three_nn_interpolate_weights(queries, sources);
  for (int q = 0; q < 30; ++q) {
    std::vector<double> row(6, 0.0);
    for (int j = 0; j < 3; ++j) {
      for (int f = 0; f < 6; ++f) {
        row[f] += nn[q].weights[j] * src_vals[static_cast<size_t>(nn[q].indices[j]) * 6 + f];
      }
    }
    for (int f = 0; f < 4; ++f) row.push_back(skip_vals[static_cast<size_t>(q) * 4 + f]);
    const std::vector<double> expect = plain_mlp(row, store, "fp", spec.mlp_channels);
    for (int f = 0; f < 5; ++f) {
      CHECK(std::abs(out.values()[static_cast<size_t>(q) * 5 + f] - expect[f]) < 1e-9);
    }
  }
}

TEST_CASE("fp forward interpolation is a near-identity on matching point sets") {
  Rng rng(305);
  std::vector<Vec3> pts;
  for (int i = 0; i < 12; ++i) {
    pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  }
  std::vector<double> feat_vals;
  for (int i = 0; i < 12 * 3; ++i) feat_vals.push_back(rng.uniform(0.1, 1.0));
  Tensor features = Tensor::constant(12, 3, feat_vals);

  // Identity MLP: unit diagonal, zero bias, positive inputs pass ReLU intact.
  segnet::FPBlockSpec spec{{3}};
  ParameterStore store;
  segnet::create_mlp_params(store, "fp", 3, spec.mlp_channels, false);
  auto& w = store.get("fp.mlp0.w").raw_values();
  for (int i = 0; i < 3; ++i) w[static_cast<size_t>(i) * 3 + i] = 1.0;

  Tensor out = segnet::fp_forward(pts, pts, features, Tensor(), spec, store, "fp", false, false);
  for (size_t i = 0; i < feat_vals.size(); ++i) {
    CHECK(std::abs(out.values()[i] - feat_vals[i]) < 1e-6);
  }

  // A lone source reaches every query with full weight.
  std::vector<Vec3> one = {{0.5, 0.5, 0.5}};
  Tensor one_feat = Tensor::constant(1, 3, {0.3, 0.6, 0.9});
  Tensor spread = segnet::fp_forward(pts, one, one_feat, Tensor(), spec, store, "fp", false, false);
  for (int q = 0; q < 12; ++q) {
    CHECK(std::abs(spread.values()[static_cast<size_t>(q) * 3] - 0.3) < 1e-6);
    CHECK(std::abs(spread.values()[static_cast<size_t>(q) * 3 + 1] - 0.6) < 1e-6);
    CHECK(std::abs(spread.values()[static_cast<size_t>(q) * 3 + 2] - 0.9) < 1e-6);
  }
}

TEST_CASE("color branch pools neighbor color context") {
  Rng rng(307);
  PointCloud block = random_cloud(rng, 5, true);
  segnet::ColorBranchSpec spec;
  spec.grouping = {geom::GroupingMethod::Knn, 2, 0.1};
  spec.mlp_channels = {4};
  ParameterStore store;
  segnet::create_mlp_params(store, "color", 3, spec.mlp_channels, false);
  randomize_affine(store, 13);

  Tensor out = segnet::color_branch_forward(block, spec, store, "color", false, false);
  REQUIRE(out.rows() == 5);
  REQUIRE(out.cols() == 4);

  const std::vector<int> groups = geom::group(block.positions, block.positions, spec.grouping);
  for (int c = 0; c < 5; ++c) {
    std::vector<double> pooled(4, -1e300);
    for (int j = 0; j < 2; ++j) {
      const int p = groups[static_cast<size_t>(c) * 2 + j];
      const Vec3& rgb = block.colors[p];
      const std::vector<double> activ =
          plain_mlp({rgb.x, rgb.y, rgb.z}, store, "color", spec.mlp_channels);
      for (int f = 0; f < 4; ++f) pooled[f] = std::max(pooled[f], activ[f]);
    }
    for (int f = 0; f < 4; ++f) {
      CHECK(std::abs(out.values()[static_cast<size_t>(c) * 4 + f] - pooled[f]) < 1e-9);
    }
  }

  PointCloud colorless = block;
  colorless.colors.clear();
  CHECK_THROWS_AS(segnet::color_branch_forward(colorless, spec, store, "color", false, false),
                  DataError);
}

TEST_CASE("zero-initialized head scores every class evenly") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  Rng rng(309);
  PointCloud block = random_cloud(rng, 64, true);
  Tensor logits = net.forward(block, false, 1);
  REQUIRE(logits.rows() == 64);
  REQUIRE(logits.cols() == 2);
  for (double v : logits.values()) CHECK(v == 0.0);
  Tensor probs = diff::softmax_rows(logits);
  for (double p : probs.values()) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("permuting block points permutes the logits") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  net.init_params(21);
  Rng rng(311);
  PointCloud block = random_cloud(rng, 64, true);

  const uint64_t seed = 77;
  Tensor base = net.forward(block, false, seed);

  // The first sampling pick at the top level is positional, so the shuffle
  // must keep that row in place for the two runs to visit the same points.
  const int anchor = static_cast<int>(derive_seed(seed, 0) % 64);
  std::vector<int> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 63; i > 0; --i) {
    std::swap(perm[i], perm[rng.index(static_cast<size_t>(i) + 1)]);
  }
  const auto anchor_at = std::find(perm.begin(), perm.end(), anchor);
  std::swap(*anchor_at, perm[anchor]);
  REQUIRE(perm[anchor] == anchor);

  PointCloud shuffled = block.select(perm);
  Tensor moved = net.forward(shuffled, false, seed);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(moved.values()[static_cast<size_t>(r) * 2 + c] -
                     base.values()[static_cast<size_t>(perm[r]) * 2 + c]) <= 1e-6);
    }
  }
}

TEST_CASE("translating a block leaves the logits unchanged") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  net.init_params(23);
  Rng rng(313);
  PointCloud block = random_cloud(rng, 64, true);
  Tensor base = net.forward(block, false, 5);

  PointCloud moved = block;
  const Vec3 shift{12.5, -3.25, 40.0};
  for (Vec3& p : moved.positions) p = p + shift;
  Tensor shifted = net.forward(moved, false, 5);
  for (size_t i = 0; i < base.values().size(); ++i) {
    CHECK(std::abs(shifted.values()[i] - base.values()[i]) < 1e-6);
  }
}

TEST_CASE("fusion none ignores colors entirely") {
  segnet::NetworkSpec spec = tiny_spec(segnet::FusionMode::kNone);
  segnet::SegNet net(spec);
  net.init_params(25);
  Rng rng(315);
  PointCloud block = random_cloud(rng, 64, true);
  Tensor with_colors = net.forward(block, false, 9);

  PointCloud repainted = block;
  for (Vec3& c : repainted.colors) c = {1.0 - c.x, c.z, c.y};
  Tensor repainted_logits = net.forward(repainted, false, 9);
  CHECK(with_colors.values() == repainted_logits.values());

  PointCloud bare = block;
  bare.colors.clear();
  Tensor no_colors = net.forward(bare, false, 9);
  CHECK(with_colors.values() == no_colors.values());
}

TEST_CASE("early fusion reads the raw colors") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kEarly));
  net.init_params(27);
  Rng rng(317);
  PointCloud block = random_cloud(rng, 64, true);
  Tensor base = net.forward(block, false, 9);
  PointCloud repainted = block;
  for (Vec3& c : repainted.colors) c = {1.0 - c.x, c.z, c.y};
  Tensor changed = net.forward(repainted, false, 9);
  double delta = 0.0;
  for (size_t i = 0; i < base.values().size(); ++i) {
    delta = std::max(delta, std::abs(base.values()[i] - changed.values()[i]));
  }
  CHECK(delta > 0.0);
}

TEST_CASE("forward guards block size and missing colors") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  Rng rng(319);
  PointCloud small = random_cloud(rng, 32, true);
  CHECK_THROWS_WITH_AS(net.forward(small, false, 1), doctest::Contains("64"), DataError);
  PointCloud bare = random_cloud(rng, 64, false);
  CHECK_THROWS_WITH_AS(net.forward(bare, false, 1), doctest::Contains("late"), DataError);
}

TEST_CASE("whole-network gradients match finite differences") {
  segnet::NetworkSpec spec;
  spec.block_size = 16;
  auto stage = [](int n, int k, std::vector<int> ch) {
    segnet::SABlockSpec s;
    s.n_centroids = n;
    s.grouping = {geom::GroupingMethod::Knn, k, 0.1};
    s.mlp_channels = std::move(ch);
    return s;
  };
  spec.sa_blocks = {stage(8, 4, {6}), stage(4, 4, {8})};
  spec.fp_blocks = {{{6}}, {{8}}};
  segnet::ColorBranchSpec color;
  color.grouping = {geom::GroupingMethod::Knn, 4, 0.1};
  color.mlp_channels = {5};
  spec.color_branch = color;
  spec.fusion = segnet::FusionMode::kLate;
  spec.head_channels = {6};

  segnet::SegNet net(spec);
  net.init_params(31);
  Rng rng(321);
  PointCloud block = random_cloud(rng, 16, true);
  std::vector<int> labels(16);
  for (int& l : labels) l = static_cast<int>(rng.index(2));

  const std::vector<double> alpha = {0.75, 1.25};
  auto loss = [&] {
    Tensor logits = net.forward(block, true, 13);
    return diff::nll_weighted(diff::log_softmax_rows(logits), labels, alpha);
  };
  testsupport::check_store_gradients(net.params(), loss, 1e-3);
}

TEST_CASE("pad block repeats points and maps them home") {
  Rng rng(323);
  PointCloud block = random_cloud(rng, 10, true);
  block.labels.assign(10, 0);
  block.labels[3] = 1;

  auto [exact, exact_map] = segnet::pad_block(block, 10, 5);
  CHECK(exact.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(exact_map[i] == i);
  for (int i = 0; i < 10; ++i) {
    CHECK(exact.positions[i].x == block.positions[i].x);
    CHECK(exact.colors[i].y == block.colors[i].y);
    CHECK(exact.labels[i] == block.labels[i]);
  }

  PointCloud lone;
  lone.positions.push_back({1.0, 2.0, 3.0});
  auto [four, four_map] = segnet::pad_block(lone, 4, 5);
  CHECK(four.size() == 4);
  CHECK(four_map == std::vector<int>{0, 0, 0, 0});
  for (int i = 0; i < 4; ++i) CHECK(four.positions[i].z == 3.0);

  auto [padded, map] = segnet::pad_block(block, 32, 7);
  CHECK(padded.size() == 32);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 32; ++i) {
    REQUIRE(map[i] >= 0);
    REQUIRE(map[i] < 10);
    seen[map[i]] += 1;
    CHECK(padded.positions[i].x == block.positions[map[i]].x);
  }
  for (int i = 0; i < 10; ++i) CHECK(seen[i] >= 1);

  auto [again, again_map] = segnet::pad_block(block, 32, 7);
  CHECK(again_map == map);

  CHECK_THROWS_AS(segnet::pad_block(PointCloud{}, 8, 1), DataError);
  CHECK_THROWS_AS(segnet::pad_block(block, 4, 1), DataError);
}

TEST_CASE("scene inference labels every point deterministically") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  net.init_params(33);
  Rng rng(325);
  PointCloud scene = random_cloud(rng, 300, true, 2.0);

  orchard::octree::PartitionSpec partition;
  partition.capacity = 64;
  partition.max_depth = 12;
  const std::vector<int> labels = segnet::infer_scene(scene, net, partition, 11);
  REQUIRE(labels.size() == 300);
  for (int l : labels) {
    CHECK(l >= 0);
    CHECK(l < 2);
  }
  CHECK(segnet::infer_scene(scene, net, partition, 11) == labels);

  PointCloud moved = scene;
  for (Vec3& p : moved.positions) p = p + Vec3{5.0, 7.0, -2.0};
  CHECK(segnet::infer_scene(moved, net, partition, 11) == labels);
}

TEST_CASE("a scene that fits one block reduces to a single forward pass") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  net.init_params(35);
  Rng rng(327);
  PointCloud scene = random_cloud(rng, 64, true);

  orchard::octree::PartitionSpec partition;
  partition.capacity = 64;
  const uint64_t seed = 19;
  const std::vector<int> labels = segnet::infer_scene(scene, net, partition, seed);

  // One full leaf means no padding, so block b = 0 runs with the derived
  // forward seed and the labels are plain row argmaxes.
  Tensor logits = net.forward(scene, false, derive_seed(seed, 0));
  for (int r = 0; r < 64; ++r) {
    const double a = logits.values()[static_cast<size_t>(r) * 2];
    const double b = logits.values()[static_cast<size_t>(r) * 2 + 1];
    const int expect = b > a ? 1 : 0;
    CHECK(labels[r] == expect);
  }
}

TEST_CASE("infer scene rejects a capacity above the block size") {
  segnet::SegNet net(tiny_spec(segnet::FusionMode::kLate));
  Rng rng(329);
  PointCloud scene = random_cloud(rng, 100, true);
  orchard::octree::PartitionSpec partition;
  partition.capacity = 128;
  CHECK_THROWS_WITH_AS(segnet::infer_scene(scene, net, partition, 1),
                       doctest::Contains("capacity"), DataError);
}

TEST_CASE("network spec validation rejects structural mistakes") {
  segnet::NetworkSpec spec = tiny_spec(segnet::FusionMode::kLate);
  CHECK_NOTHROW(spec.validate());

  segnet::NetworkSpec uneven = spec;
  uneven.fp_blocks.pop_back();
  CHECK_THROWS_WITH_AS(uneven.validate(), doctest::Contains("matching"), DataError);

  segnet::NetworkSpec no_color = spec;
  no_color.color_branch.reset();
  CHECK_THROWS_AS(no_color.validate(), DataError);

  segnet::NetworkSpec hollow = spec;
  hollow.sa_blocks[1].mlp_channels.clear();
  CHECK_THROWS_AS(hollow.validate(), DataError);

  segnet::NetworkSpec shrinking = tiny_spec(segnet::FusionMode::kLate);
  for (auto& sa : shrinking.sa_blocks) sa.grouping.method = geom::GroupingMethod::Ball;
  shrinking.sa_blocks[2].grouping.radius = shrinking.sa_blocks[1].grouping.radius;
  CHECK_THROWS_AS(shrinking.validate(), DataError);

  CHECK(segnet::NetworkSpec::standard(4096).sa_blocks[0].n_centroids == 1024);
  CHECK(segnet::NetworkSpec::standard(8192).sa_blocks[0].n_centroids == 2048);
  CHECK_THROWS_AS(segnet::NetworkSpec::standard(1000), DataError);
  CHECK_NOTHROW(segnet::NetworkSpec::standard(4096).validate());
  CHECK_NOTHROW(segnet::NetworkSpec::reduced().validate());
}

TEST_CASE("network config applies presets and per-stage overrides") {
  const orchard::config::ConfigFile cfg = orchard::config::ConfigFile::parse_string(
      "[network]\n"
      "preset=reduced\n"
      "fusion=none\n"
      "grouping=knn\n"
      "sa1_centroids=128\n"
      "sa1_k=12\n"
      "fp1_channels=32,16\n"
      "color_channels=8\n"
      "n_classes=3\n",
      "inline");
  segnet::NetworkSpec spec = segnet::network_from_config(cfg);
  CHECK(spec.block_size == 1024);
  CHECK(spec.fusion == segnet::FusionMode::kNone);
  CHECK(spec.sa_blocks[0].n_centroids == 128);
  CHECK(spec.sa_blocks[0].grouping.k == 12);
  CHECK(spec.sa_blocks[0].grouping.method == geom::GroupingMethod::Knn);
  CHECK(spec.sa_blocks[3].grouping.method == geom::GroupingMethod::Knn);
  CHECK(spec.fp_blocks[0].mlp_channels == std::vector<int>{32, 16});
  CHECK(spec.color_branch.has_value());
  CHECK(spec.color_branch->mlp_channels == std::vector<int>{8});
  CHECK(spec.n_classes == 3);

  const auto bad = orchard::config::ConfigFile::parse_string(
      "[network]\npreset=reduced\nsa9_centroids=1\n", "inline");
  CHECK_THROWS_AS(segnet::network_from_config(bad), DataError);

  const auto grouping = orchard::config::ConfigFile::parse_string(
      "[network]\ngrouping=cube\n", "inline");
  CHECK_THROWS_AS(segnet::network_from_config(grouping), DataError);
}

TEST_CASE("parameter initialization is deterministic per seed") {
  segnet::NetworkSpec spec = tiny_spec(segnet::FusionMode::kLate);
  segnet::SegNet a(spec), b(spec);
  a.init_params(41);
  b.init_params(41);
  for (const std::string& name : a.params().names()) {
    CHECK(a.params().get(name).values() == b.params().get(name).values());
  }
  segnet::SegNet c(spec);
  c.init_params(42);
  bool any_different = false;
  for (const std::string& name : a.params().names()) {
    if (a.params().get(name).values() != c.params().get(name).values()) {
      any_different = true;
      break;
    }
  }
  CHECK(any_different);
}

TEST_CASE("fusion mode names round trip") {
  using segnet::FusionMode;
  for (FusionMode m : {FusionMode::kNone, FusionMode::kEarly, FusionMode::kLate,
                       FusionMode::kEarlyLate}) {
    CHECK(segnet::parse_fusion(segnet::to_string(m)) == m);
  }
  CHECK_THROWS_WITH_AS(segnet::parse_fusion("midway"),
                       doctest::Contains("none|early|late|early+late"), DataError);
}

}  // TEST_SUITE
