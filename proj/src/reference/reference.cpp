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

#include "orchard/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orchard::reference {

std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int n, uint64_t seed) {
  if (points.empty()) throw DataError("empty point set");
  if (n < 1) throw DataError("sample count must be >= 1");
  const int m = static_cast<int>(points.size());
  const int unique = std::min(n, m);

  std::vector<bool> chosen(m, false);
  std::vector<int> picked;
  picked.reserve(n);
  int current = static_cast<int>(seed % static_cast<uint64_t>(m));
  picked.push_back(current);
  chosen[current] = true;

  for (int step = 1; step < unique; ++step) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < m; ++i) {
      if (chosen[i]) continue;
      // Distance to the closest already-picked point, recomputed from
      // scratch every round.
      double d = std::numeric_limits<double>::max();
      for (const int p : picked) d = std::min(d, dist2(points[i], points[p]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    picked.push_back(best);
    chosen[best] = true;
  }
  for (int i = unique; i < n; ++i) picked.push_back(picked[i - unique]);
  return picked;
}

std::vector<int> ball_query(const std::vector<Vec3>& points, const Vec3& centroid, double radius,
                            int k) {
  if (points.empty()) throw DataError("empty point set");
  const double r2 = radius * radius;
  std::vector<int> inside;
  int nearest = 0;
  double nearest_d2 = std::numeric_limits<double>::max();
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const double d = dist2(points[i], centroid);
    if (d < nearest_d2) {
      nearest_d2 = d;
      nearest = i;
    }
    if (d <= r2) inside.push_back(i);
  }
  std::vector<int> row(k);
  if (inside.empty()) {
    std::fill(row.begin(), row.end(), nearest);
    return row;
  }
  for (int j = 0; j < k; ++j) {
    row[j] = j < static_cast<int>(inside.size()) ? inside[j] : inside[0];
  }
  return row;
}

std::vector<int> knn_query(const std::vector<Vec3>& points, const Vec3& query, int k) {
  if (k > static_cast<int>(points.size())) {
    throw DataError("knn k exceeds point count");
  }
  std::vector<std::pair<double, int>> all;
  all.reserve(points.size());
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    all.emplace_back(dist2(points[i], query), i);
  }
  std::sort(all.begin(), all.end());
  std::vector<int> out(k);
  for (int j = 0; j < k; ++j) out[j] = all[j].second;
  return out;
}

void three_nn(const std::vector<Vec3>& sources, const Vec3& query, std::array<int, 3>& indices,
              std::array<double, 3>& weights) {
  if (sources.empty()) throw DataError("empty source set");
  std::vector<std::pair<double, int>> all;
  all.reserve(sources.size());
  for (int i = 0; i < static_cast<int>(sources.size()); ++i) {
    all.emplace_back(dist2(sources[i], query), i);
  }
  std::sort(all.begin(), all.end());
  std::array<std::pair<double, int>, 3> best;
  for (int j = 0; j < 3; ++j) {
    best[j] = j < static_cast<int>(all.size()) ? all[j] : all[0];
  }
  constexpr double kEps = 1e-8;
  double total = 0.0;
  for (int j = 0; j < 3; ++j) {
    indices[j] = best[j].second;
    weights[j] = 1.0 / (best[j].first + kEps);
    total += weights[j];
  }
  for (int j = 0; j < 3; ++j) weights[j] /= total;
}

std::vector<double> matmul(const std::vector<double>& a, int m, int k,
                           const std::vector<double>& b, int n) {
  if (a.size() != static_cast<size_t>(m) * k || b.size() != static_cast<size_t>(k) * n) {
    throw DataError("matmul buffer sizes disagree with dimensions");
  }
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) {
        acc += a[static_cast<size_t>(i) * k + t] * b[static_cast<size_t>(t) * n + j];
      }
      out[static_cast<size_t>(i) * n + j] = acc;
    }
  }
  return out;
}

std::vector<double> knn_mean_distances(const std::vector<Vec3>& points, int k) {
  const int m = static_cast<int>(points.size());
  if (k < 1 || k >= m) throw DataError("need 1 <= k < point count");
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    std::vector<std::pair<double, int>> all;
    all.reserve(m - 1);
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      all.emplace_back(dist2(points[j], points[i]), j);
    }
    std::sort(all.begin(), all.end());
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += std::sqrt(all[j].first);
    out[i] = acc / k;
  }
  return out;
}

}  // namespace orchard::reference
