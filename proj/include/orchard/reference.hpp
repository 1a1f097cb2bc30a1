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
#include <vector>

#include "orchard/common.hpp"

// Deliberately slow, obviously correct implementations of the parallel
// kernels. Tests compare the production kernels against these; the bench
// binary measures the gap. Nothing here is linked into the main library.
namespace orchard::reference {

// Greedy farthest-point sampling, recomputing every distance each round.
// First pick is seed % size; ties on the max-min distance go to the lowest
// index; with n > size, picks repeat cyclically.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int n, uint64_t seed);

// All indices within radius of the centroid, ascending, truncated to k and
// padded to k with the first element (or k copies of the nearest point
// when the ball is empty).
std::vector<int> ball_query(const std::vector<Vec3>& points, const Vec3& centroid, double radius,
                            int k);

// Exact k nearest neighbours by full sort of (squared distance, index).
std::vector<int> knn_query(const std::vector<Vec3>& points, const Vec3& query, int k);

// Indices and normalized inverse-square-distance weights of the 3 nearest
// sources; missing slots repeat the nearest.
void three_nn(const std::vector<Vec3>& sources, const Vec3& query, std::array<int, 3>& indices,
              std::array<double, 3>& weights);

// Plain triple-loop matrix product, row-major.
std::vector<double> matmul(const std::vector<double>& a, int m, int k,
                           const std::vector<double>& b, int n);

// Mean distance from each point to its k nearest neighbours (self
// excluded), by exhaustive scan.
std::vector<double> knn_mean_distances(const std::vector<Vec3>& points, int k);

}  // namespace orchard::reference
