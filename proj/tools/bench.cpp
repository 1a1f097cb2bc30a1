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

// Times the parallel kernels against their single-threaded reference
// mirrors and checks that both routes produce identical output (the
// parallel versions are written to be bitwise deterministic). --smoke runs
// a quick small-size pass for CI.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/geom.hpp"
#include "orchard/parallel.hpp"
#include "orchard/reference.hpp"
#include "orchard/tensor.hpp"

namespace {

using orchard::Rng;
using orchard::Vec3;

std::vector<Vec3> random_points(int n, Rng& rng) {
  std::vector<Vec3> out(n);
  for (Vec3& p : out) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  return out;
}

double time_ms(const std::function<void()>& fn, int reps) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

int failures = 0;

void report(const std::string& name, const std::string& size, double serial_ms,
            double parallel_ms, bool match) {
  if (!match) ++failures;
  std::printf("%-22s %-18s %10.2f %10.2f %8.2fx  %s\n", name.c_str(), size.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms, match ? "match" : "MISMATCH");
}

void bench_fps(int n_points, int n_samples, int reps, Rng& rng) {
  const std::vector<Vec3> pts = random_points(n_points, rng);
  std::vector<int> serial, parallel;
  const double ts = time_ms([&] { serial = orchard::reference::farthest_point_sample(pts, n_samples, 7); }, reps);
  const double tp = time_ms([&] { parallel = orchard::geom::farthest_point_sample(pts, n_samples, 7); }, reps);
  report("farthest_point_sample", std::to_string(n_points) + "->" + std::to_string(n_samples), ts,
         tp, serial == parallel);
}

void bench_ball(int n_points, int n_centroids, int k, int reps, Rng& rng) {
  const std::vector<Vec3> pts = random_points(n_points, rng);
  const std::vector<Vec3> centroids = random_points(n_centroids, rng);
  const double radius = 0.05;
  std::vector<int> serial, parallel;
  const double ts = time_ms(
      [&] {
        serial.clear();
        for (const Vec3& c : centroids) {
          const std::vector<int> g = orchard::reference::ball_query(pts, c, radius, k);
          serial.insert(serial.end(), g.begin(), g.end());
        }
      },
      reps);
  const double tp =
      time_ms([&] { parallel = orchard::geom::ball_query(pts, centroids, radius, k); }, reps);
  report("ball_query", std::to_string(n_points) + "x" + std::to_string(n_centroids), ts, tp,
         serial == parallel);
}

void bench_knn(int n_points, int n_centroids, int k, int reps, Rng& rng) {
  const std::vector<Vec3> pts = random_points(n_points, rng);
  const std::vector<Vec3> centroids = random_points(n_centroids, rng);
  std::vector<int> serial, parallel;
  const double ts = time_ms(
      [&] {
        serial.clear();
        for (const Vec3& c : centroids) {
          const std::vector<int> g = orchard::reference::knn_query(pts, c, k);
          serial.insert(serial.end(), g.begin(), g.end());
        }
      },
      reps);
  const double tp =
      time_ms([&] { parallel = orchard::geom::knn_query(pts, centroids, k); }, reps);
  report("knn_query", std::to_string(n_points) + "x" + std::to_string(n_centroids), ts, tp,
         serial == parallel);
}

void bench_three_nn(int n_queries, int n_sources, int reps, Rng& rng) {
  const std::vector<Vec3> queries = random_points(n_queries, rng);
  const std::vector<Vec3> sources = random_points(n_sources, rng);
  std::vector<orchard::geom::ThreeNN> parallel;
  std::vector<std::array<int, 3>> serial_idx(n_queries);
  std::vector<std::array<double, 3>> serial_w(n_queries);
  const double ts = time_ms(
      [&] {
        for (int q = 0; q < n_queries; ++q) {
          orchard::reference::three_nn(sources, queries[q], serial_idx[q], serial_w[q]);
        }
      },
      reps);
  const double tp = time_ms(
      [&] { parallel = orchard::geom::three_nn_interpolate_weights(queries, sources); }, reps);
  bool match = true;
  for (int q = 0; q < n_queries && match; ++q) {
    match = parallel[q].indices == serial_idx[q] && parallel[q].weights == serial_w[q];
  }
  report("three_nn", std::to_string(n_queries) + "x" + std::to_string(n_sources), ts, tp, match);
}

void bench_matmul(int m, int k, int n, int reps, Rng& rng) {
  std::vector<double> a(m * k), b(k * n);
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  for (double& v : b) v = rng.uniform(-1.0, 1.0);
  const orchard::diff::Tensor ta = orchard::diff::Tensor::constant(m, k, a);
  const orchard::diff::Tensor tb = orchard::diff::Tensor::constant(k, n, b);
  std::vector<double> serial, parallel;
  const double ts = time_ms([&] { serial = orchard::reference::matmul(a, m, k, b, n); }, reps);
  const double tp = time_ms([&] { parallel = orchard::diff::matmul(ta, tb).values(); }, reps);
  char size[48];
  std::snprintf(size, sizeof(size), "%dx%dx%d", m, k, n);
  report("matmul", size, ts, tp, serial == parallel);
}

void bench_outlier_distances(int n_points, int k, int reps, Rng& rng) {
  orchard::PointCloud cloud;
  cloud.positions = random_points(n_points, rng);
  std::vector<double> serial, parallel;
  const double ts = time_ms(
      [&] { serial = orchard::reference::knn_mean_distances(cloud.positions, k); }, reps);
  const double tp = time_ms([&] { parallel = orchard::knn_mean_distances(cloud, k); }, reps);
  report("knn_mean_distances", std::to_string(n_points) + " k=" + std::to_string(k), ts, tp,
         serial == parallel);
}

}  // namespace

int main(int argc, char** argv) {
  orchard::init_threads();

  CLI::App app{"Parallel kernels vs single-threaded references"};
  bool smoke = false;
  int reps = 3;
  app.add_flag("--smoke", smoke, "Small sizes, one rep (CI check)");
  app.add_option("--reps", reps, "Timed repetitions per kernel");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads: %d\n", orchard::max_threads());
  std::printf("%-22s %-18s %10s %10s %9s\n", "kernel", "size", "serial", "parallel", "speedup");

  Rng rng(42);
  if (smoke) {
    bench_fps(2000, 64, 1, rng);
    bench_ball(2000, 256, 24, 1, rng);
    bench_knn(2000, 256, 24, 1, rng);
    bench_three_nn(2000, 256, 1, rng);
    bench_matmul(256, 64, 128, 1, rng);
    bench_outlier_distances(2000, 12, 1, rng);
  } else {
    bench_fps(8000, 256, reps, rng);
    bench_ball(50000, 2048, 24, reps, rng);
    bench_knn(50000, 2048, 24, reps, rng);
    bench_three_nn(50000, 4096, reps, rng);
    bench_matmul(2048, 256, 512, reps, rng);
    bench_outlier_distances(10000, 12, reps, rng);
  }
  return failures == 0 ? 0 : 1;
}
