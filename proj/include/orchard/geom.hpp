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

#include <array>
#include <cstdint>
#include <vector>

#include "orchard/common.hpp"

namespace orchard::geom {

enum class SamplingMethod { Fps, Random };
enum class GroupingMethod { Knn, Ball };

struct SamplingSpec {
  SamplingMethod method = SamplingMethod::Fps;
  int n_centroids = 1;
  uint64_t seed = 0;  // first FPS centroid and the random-sampling stream
};

struct GroupingSpec {
  GroupingMethod method = GroupingMethod::Ball;
  int k = 24;
  double radius = 0.0;  // ball method only
};

// Greedy farthest-point sampling. The first index is seed mod M; each later
// pick maximizes the minimum squared distance to the chosen set, ties to the
// lowest index. If n > M the selection repeats from its start. Length is
// always n.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& positions, int n,
                                       uint64_t seed);

// Uniform without replacement (partial Fisher-Yates); with replacement only
// when n exceeds the point count.
std::vector<int> random_sample(const std::vector<Vec3>& positions, int n,
                               uint64_t seed);

std::vector<int> sample(const std::vector<Vec3>& positions, const SamplingSpec& spec);

/// Row-major |centroids| x k index matrix: for each centroid the first k
/// points (ascending index) with distance <= radius. Short groups repeat the
/// first in-radius index; empty groups fall back to k copies of the nearest
/// point's index.
std::vector<int> ball_query(const std::vector<Vec3>& positions,
                            const std::vector<Vec3>& centroids, double radius,
                            int k);

/// Row-major |centroids| x k matrix of the k nearest indices per centroid,
/// ascending distance, ties to the lowest index. Requires k <= point count.
std::vector<int> knn_query(const std::vector<Vec3>& positions,
                           const std::vector<Vec3>& centroids, int k);

std::vector<int> group(const std::vector<Vec3>& positions,
                       const std::vector<Vec3>& centroids, const GroupingSpec& spec);

struct ThreeNN {
  std::array<int, 3> indices;
  std::array<double, 3> weights;  // sums to 1
};

/// Inverse-squared-distance weights over the 3 nearest sources,
/// w_i = (1/(d_i^2 + eps)) / sum_j (1/(d_j^2 + eps)) with eps = 1e-8.
/// Fewer than 3 sources duplicate the nearest to fill the slots.
std::vector<ThreeNN> three_nn_interpolate_weights(const std::vector<Vec3>& queries,
                                                  const std::vector<Vec3>& sources);

}  // namespace orchard::geom
