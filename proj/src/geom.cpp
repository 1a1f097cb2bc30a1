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

#include "orchard/geom.hpp"

#include <algorithm>
#include <limits>

#include "orchard/parallel.hpp"

namespace orchard::geom {

namespace {

void require_nonempty(const std::vector<Vec3>& positions) {
  if (positions.empty()) throw DataError("empty point set");
}

// Deterministic parallel argmax: per-thread bests over static chunks are
// merged serially, strictly-greater comparison keeps the lowest index on ties
// for any thread count.
int argmax_dist(const std::vector<double>& dist) {
  const int64_t n = static_cast<int64_t>(dist.size());
  const int threads = max_threads();
  std::vector<std::pair<double, int64_t>> best(threads, {-1.0, -1});
#pragma omp parallel num_threads(threads)
  {
    const int t = current_thread();
    double bv = -1.0;
    int64_t bi = -1;
#pragma omp for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      if (dist[i] > bv) {
        bv = dist[i];
        bi = i;
      }
    }
    best[t] = {bv, bi};
  }
  double bv = -1.0;
  int64_t bi = -1;
  for (const auto& [v, i] : best) {
    if (v > bv || (v == bv && i >= 0 && (bi < 0 || i < bi))) {
      bv = v;
      bi = i;
    }
  }
  return static_cast<int>(bi);
}

}  // namespace

std::vector<int> farthest_point_sample(const std::vector<Vec3>& positions, int n,
                                       uint64_t seed) {
  require_nonempty(positions);
  if (n < 1) throw DataError("sample count must be >= 1");
  const int64_t m = static_cast<int64_t>(positions.size());
  const int unique = static_cast<int>(std::min<int64_t>(n, m));

  std::vector<int> picked;
  picked.reserve(n);
  // Chosen entries are held at -1 so the argmax can only land on the
  // not-yet-chosen points, even when every remaining distance is zero.
  std::vector<double> min_dist(m, std::numeric_limits<double>::max());
  int current = static_cast<int>(seed % static_cast<uint64_t>(m));
  picked.push_back(current);
  min_dist[current] = -1.0;

  init_threads();
  for (int step = 1; step < unique; ++step) {
    const Vec3 pivot = positions[current];
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      if (min_dist[i] < 0.0) continue;
      const double d = dist2(positions[i], pivot);
      if (d < min_dist[i]) min_dist[i] = d;
    }
    current = argmax_dist(min_dist);
    picked.push_back(current);
    min_dist[current] = -1.0;
  }

  for (int i = unique; i < n; ++i) picked.push_back(picked[i - unique]);
  return picked;
}

std::vector<int> random_sample(const std::vector<Vec3>& positions, int n,
                               uint64_t seed) {
  require_nonempty(positions);
  if (n < 1) throw DataError("sample count must be >= 1");
  const size_t m = positions.size();
  Rng rng(seed);
  std::vector<int> out;
  out.reserve(n);
  if (static_cast<size_t>(n) <= m) {
    std::vector<int> pool(m);
    for (size_t i = 0; i < m; ++i) pool[i] = static_cast<int>(i);
    for (int i = 0; i < n; ++i) {
      const size_t j = i + rng.index(m - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<int>(rng.index(m)));
  }
  return out;
}

std::vector<int> sample(const std::vector<Vec3>& positions, const SamplingSpec& spec) {
  return spec.method == SamplingMethod::Fps
             ? farthest_point_sample(positions, spec.n_centroids, spec.seed)
             : random_sample(positions, spec.n_centroids, spec.seed);
}

std::vector<int> ball_query(const std::vector<Vec3>& positions,
                            const std::vector<Vec3>& centroids, double radius,
                            int k) {
  require_nonempty(positions);
  if (k < 1) throw DataError("group size k must be >= 1");
  if (!(radius > 0.0)) throw DataError("ball radius must be positive");
  const int64_t m = static_cast<int64_t>(positions.size());
  const int64_t c = static_cast<int64_t>(centroids.size());
  const double r2 = radius * radius;
  std::vector<int> out(static_cast<size_t>(c) * k);
  init_threads();
#pragma omp parallel for schedule(static)
  for (int64_t ci = 0; ci < c; ++ci) {
    int* row = out.data() + ci * k;
    int found = 0;
    int nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::max();
    for (int64_t pi = 0; pi < m && found < k; ++pi) {
      const double d = dist2(positions[pi], centroids[ci]);
      if (d < nearest_d2) {
        nearest_d2 = d;
        nearest = static_cast<int>(pi);
      }
      if (d <= r2) row[found++] = static_cast<int>(pi);
    }
    if (found == 0) {
      // The scan only stops early once the group fills, so with found == 0
      // every point was seen and `nearest` is the true nearest.
      for (int j = 0; j < k; ++j) row[j] = nearest;
    } else {
      for (int j = found; j < k; ++j) row[j] = row[0];
    }
  }
  return out;
}

std::vector<int> knn_query(const std::vector<Vec3>& positions,
                           const std::vector<Vec3>& centroids, int k) {
  require_nonempty(positions);
  if (k < 1) throw DataError("k must be >= 1");
  const int64_t m = static_cast<int64_t>(positions.size());
  if (k > m) {
    throw DataError("knn k=" + std::to_string(k) + " exceeds point count " +
                    std::to_string(m));
  }
  const int64_t c = static_cast<int64_t>(centroids.size());
  std::vector<int> out(static_cast<size_t>(c) * k);
  init_threads();
#pragma omp parallel for schedule(static)
  for (int64_t ci = 0; ci < c; ++ci) {
    // (distance, index) pairs; worst candidate kept at the heap front.
    std::vector<std::pair<double, int>> heap;
    heap.reserve(k + 1);
    auto worse = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
      if (a.first != b.first) return a.first < b.first;
      return a.second < b.second;
    };
    for (int64_t pi = 0; pi < m; ++pi) {
      const std::pair<double, int> cand{dist2(positions[pi], centroids[ci]),
                                        static_cast<int>(pi)};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), worse);
      } else if (worse(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), worse);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), worse);
      }
    }
    std::sort(heap.begin(), heap.end(), worse);
    int* row = out.data() + ci * k;
    for (int j = 0; j < k; ++j) row[j] = heap[j].second;
  }
  return out;
}

std::vector<int> group(const std::vector<Vec3>& positions,
                       const std::vector<Vec3>& centroids, const GroupingSpec& spec) {
  return spec.method == GroupingMethod::Ball
             ? ball_query(positions, centroids, spec.radius, spec.k)
             : knn_query(positions, centroids, spec.k);
}

std::vector<ThreeNN> three_nn_interpolate_weights(const std::vector<Vec3>& queries,
                                                  const std::vector<Vec3>& sources) {
  require_nonempty(sources);
  constexpr double kEps = 1e-8;
  const int64_t q = static_cast<int64_t>(queries.size());
  const int64_t s = static_cast<int64_t>(sources.size());
  std::vector<ThreeNN> out(q);
  init_threads();
#pragma omp parallel for schedule(static)
  for (int64_t qi = 0; qi < q; ++qi) {
    std::array<std::pair<double, int>, 3> best;
    best.fill({std::numeric_limits<double>::max(), -1});
    for (int64_t si = 0; si < s; ++si) {
      std::pair<double, int> cand{dist2(queries[qi], sources[si]),
                                  static_cast<int>(si)};
      for (auto& slot : best) {
        const bool better = cand.first < slot.first ||
                            (cand.first == slot.first && cand.second < slot.second);
        if (better) std::swap(cand, slot);
      }
    }
    // Fewer than 3 sources: duplicate the nearest.
    for (auto& slot : best) {
      if (slot.second < 0) slot = best[0];
    }
    ThreeNN r;
    double total = 0.0;
    for (int j = 0; j < 3; ++j) {
      r.indices[j] = best[j].second;
      r.weights[j] = 1.0 / (best[j].first + kEps);
      total += r.weights[j];
    }
    for (int j = 0; j < 3; ++j) r.weights[j] /= total;
    out[qi] = r;
  }
  return out;
}

}  // namespace orchard::geom
