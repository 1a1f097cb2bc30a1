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

#include "orchard/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace orchard::synth {

namespace {

// Fixed proportions of the tree; only the recipe fields are user-facing.
constexpr double kTrunkRadius = 0.06;
constexpr double kTrunkHeightFrac = 0.45;  // of extent.z
constexpr int kBranchCount = 8;
constexpr double kBranchRadius = 0.025;
constexpr double kLeafSphereRadius = 0.05;  // curvature close to a fruit's
constexpr double kLeafCapHeight = 0.03;
constexpr double kLeavesPerCubicMetre = 650.0;
constexpr double kAmbiguousLeafShare = 0.35;
constexpr double kColorJitter = 0.03;
constexpr int kMaxPoints = 1000000;

constexpr Vec3 kFruitColor{0.85, 0.22, 0.18};
constexpr Vec3 kLeafColor{0.20, 0.55, 0.25};
constexpr Vec3 kWoodColor{0.38, 0.27, 0.16};
constexpr Vec3 kDrabColor{0.45, 0.50, 0.45};

struct Layout {
  Vec3 trunk_base;
  double trunk_height = 0.0;
  Vec3 canopy_center;
  double canopy_radius = 0.0;
  int leaf_count = 0;
};

Layout make_layout(const SceneRecipe& r) {
  Layout out;
  out.trunk_base = {r.extent.x * 0.5, r.extent.y * 0.5, 0.0};
  out.trunk_height = kTrunkHeightFrac * r.extent.z;
  const double headroom = r.extent.z - out.trunk_height;
  out.canopy_radius =
      std::min({0.48 * headroom, 0.35 * r.extent.x, 0.35 * r.extent.y});
  out.canopy_center = {out.trunk_base.x, out.trunk_base.y,
                       out.trunk_height + out.canopy_radius};
  const double volume =
      4.0 / 3.0 * M_PI * out.canopy_radius * out.canopy_radius * out.canopy_radius;
  out.leaf_count = std::max(1, static_cast<int>(std::llround(kLeavesPerCubicMetre * volume)));
  return out;
}

double leaf_cap_area() { return 2.0 * M_PI * kLeafSphereRadius * kLeafCapHeight; }

// Surface areas of everything the sampler walks, branch lengths taken at
// their expected value (uniform in [0.8, 1.2] of the canopy radius).
struct AreaBudget {
  double trunk = 0.0;
  double branches = 0.0;
  double leaves = 0.0;
  double fruit = 0.0;
  double total() const { return trunk + branches + leaves + fruit; }
};

AreaBudget area_budget(const SceneRecipe& r, const Layout& lay) {
  AreaBudget a;
  a.trunk = 2.0 * M_PI * kTrunkRadius * lay.trunk_height;
  a.branches = kBranchCount * 2.0 * M_PI * kBranchRadius * lay.canopy_radius;
  a.leaves = lay.leaf_count * leaf_cap_area();
  a.fruit = r.fruit_count * 4.0 * M_PI * r.fruit_radius * r.fruit_radius;
  return a;
}

// Tangent frame for a unit axis; any stable choice works.
void tangent_frame(const Vec3& axis, Vec3* u, Vec3* v) {
  const Vec3 pick = std::fabs(axis.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const Vec3 raw{pick.y * axis.z - pick.z * axis.y, pick.z * axis.x - pick.x * axis.z,
                 pick.x * axis.y - pick.y * axis.x};
  *u = raw * (1.0 / raw.norm());
  *v = {axis.y * u->z - axis.z * u->y, axis.z * u->x - axis.x * u->z,
        axis.x * u->y - axis.y * u->x};
}

Vec3 random_unit(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {s * std::cos(phi), s * std::sin(phi), z};
}

int point_count(double area, double density) {
  return std::max(1, static_cast<int>(std::llround(area * density)));
}

void emit(PointCloud* cloud, const Vec3& p, const Vec3& base_color, int label, Rng& rng) {
  cloud->positions.push_back(p);
  cloud->colors.push_back({std::clamp(base_color.x + rng.uniform(-kColorJitter, kColorJitter), 0.0, 1.0),
                           std::clamp(base_color.y + rng.uniform(-kColorJitter, kColorJitter), 0.0, 1.0),
                           std::clamp(base_color.z + rng.uniform(-kColorJitter, kColorJitter), 0.0, 1.0)});
  cloud->labels.push_back(label);
}

void sample_cylinder(PointCloud* cloud, const Vec3& base, const Vec3& axis, double length,
                     double radius, double density, const Vec3& color, Rng& rng) {
  Vec3 u, v;
  tangent_frame(axis, &u, &v);
  const int n = point_count(2.0 * M_PI * radius * length, density);
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, length);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const Vec3 p = base + axis * t + u * (radius * std::cos(phi)) + v * (radius * std::sin(phi));
    emit(cloud, p, color, 0, rng);
  }
}

// Spherical cap of height kLeafCapHeight around a random axis: a small
// doubly curved patch whose curvature matches a fruit's scale.
void sample_leaf(PointCloud* cloud, const Vec3& center, const Vec3& color, double density,
                 Rng& rng) {
  const Vec3 axis = random_unit(rng);
  Vec3 u, v;
  tangent_frame(axis, &u, &v);
  const double cos_cap = 1.0 - kLeafCapHeight / kLeafSphereRadius;
  const int n = point_count(leaf_cap_area(), density);
  for (int i = 0; i < n; ++i) {
    const double c = rng.uniform(cos_cap, 1.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const Vec3 p = center + (axis * c + u * (s * std::cos(phi)) + v * (s * std::sin(phi))) *
                                kLeafSphereRadius;
    emit(cloud, p, color, 0, rng);
  }
}

void sample_fruit(PointCloud* cloud, const Vec3& center, double radius, const Vec3& color,
                  double density, Rng& rng) {
  const int n = point_count(4.0 * M_PI * radius * radius, density);
  for (int i = 0; i < n; ++i) {
    emit(cloud, center + random_unit(rng) * radius, color, 1, rng);
  }
}

// Gaussian displacement with the norm clamped at 3 sigma, so labels stay
// consistent with the geometry they were sampled from.
void jitter_positions(PointCloud* cloud, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  const double cap = 3.0 * sigma;
  for (Vec3& p : cloud->positions) {
    Vec3 d{rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma)};
    const double len = d.norm();
    if (len > cap) d = d * (cap / len);
    p = p + d;
  }
}

}  // namespace

std::string to_string(ColorMode mode) {
  switch (mode) {
    case ColorMode::kSeparable: return "separable";
    case ColorMode::kGeometryOnly: return "geometry-only";
    case ColorMode::kAmbiguous: return "ambiguous";
  }
  throw DataError("unknown color mode");
}

ColorMode parse_color_mode(const std::string& text) {
  if (text == "separable") return ColorMode::kSeparable;
  if (text == "geometry-only") return ColorMode::kGeometryOnly;
  if (text == "ambiguous") return ColorMode::kAmbiguous;
  throw DataError("unknown color mode: " + text +
                  " (expected separable, geometry-only, or ambiguous)");
}

void SceneRecipe::validate() const {
  if (!(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0)) {
    throw DataError("scene extent must be positive in every axis");
  }
  if (fruit_count < 0) throw DataError("fruit_count must be >= 0");
  if (!(fruit_radius > 0.0)) throw DataError("fruit_radius must be positive");
  if (!(point_density > 0.0)) throw DataError("point_density must be positive");
  if (noise_sigma < 0.0) throw DataError("noise_sigma must be >= 0");
  const Layout lay = make_layout(*this);
  if (!(lay.canopy_radius > fruit_radius)) {
    throw DataError("extent too small to hold a canopy around the fruit");
  }
  const double expected = area_budget(*this, lay).total() * point_density;
  if (expected > kMaxPoints) {
    throw DataError("recipe asks for about " + std::to_string(static_cast<long long>(expected)) +
                    " points, above the limit of " + std::to_string(kMaxPoints));
  }
}

double SceneRecipe::expected_fruit_fraction() const {
  const AreaBudget a = area_budget(*this, make_layout(*this));
  return a.total() > 0.0 ? a.fruit / a.total() : 0.0;
}

PointCloud generate_scene(const SceneRecipe& recipe) {
  recipe.validate();
  const Layout lay = make_layout(recipe);
  Rng rng(recipe.seed);
  PointCloud cloud;

  const bool drab = recipe.color_mode == ColorMode::kGeometryOnly;
  const Vec3 wood = drab ? kDrabColor : kWoodColor;

  sample_cylinder(&cloud, lay.trunk_base, {0, 0, 1}, lay.trunk_height, kTrunkRadius,
                  recipe.point_density, wood, rng);

  for (int b = 0; b < kBranchCount; ++b) {
    const double start = rng.uniform(0.6 * lay.trunk_height, lay.trunk_height);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    const double up = rng.uniform(0.3, 0.9);
    Vec3 axis{std::cos(heading), std::sin(heading), up};
    axis = axis * (1.0 / axis.norm());
    const double length = lay.canopy_radius * rng.uniform(0.8, 1.2);
    const Vec3 base = lay.trunk_base + Vec3{0, 0, start};
    sample_cylinder(&cloud, base, axis, length, kBranchRadius, recipe.point_density, wood, rng);
  }

  for (int l = 0; l < lay.leaf_count; ++l) {
    // Uniform position inside the canopy ball, leaving room for the patch.
    const double rad = (lay.canopy_radius - kLeafSphereRadius) *
                       std::cbrt(rng.uniform(0.0, 1.0));
    const Vec3 center = lay.canopy_center + random_unit(rng) * rad;
    Vec3 color = drab ? kDrabColor : kLeafColor;
    if (recipe.color_mode == ColorMode::kAmbiguous &&
        rng.uniform(0.0, 1.0) < kAmbiguousLeafShare) {
      color = kFruitColor;
    }
    sample_leaf(&cloud, center, color, recipe.point_density, rng);
  }

  for (int f = 0; f < recipe.fruit_count; ++f) {
    const double rad = (lay.canopy_radius - recipe.fruit_radius) *
                       std::cbrt(rng.uniform(0.0, 1.0));
    const Vec3 center = lay.canopy_center + random_unit(rng) * rad;
    sample_fruit(&cloud, center, recipe.fruit_radius, drab ? kDrabColor : kFruitColor,
                 recipe.point_density, rng);
  }

  jitter_positions(&cloud, recipe.noise_sigma, rng);

  if (static_cast<int>(cloud.size()) > kMaxPoints) {
    throw DataError("generated " + std::to_string(cloud.size()) + " points, above the limit of " +
                    std::to_string(kMaxPoints));
  }
  cloud.validate();
  return cloud;
}

PointCloud generate_rgbd_like(const SceneRecipe& recipe, double distance) {
  if (distance < 0.0) throw DataError("capture distance must be >= 0");
  PointCloud cloud = generate_scene(recipe);
  if (distance == 0.0) return cloud;

  Rng rng(derive_seed(recipe.seed, 0x5000000000000000ull +
                                       static_cast<uint64_t>(std::llround(distance * 1000.0))));
  jitter_positions(&cloud, 0.002 * distance * distance, rng);
  const double color_jitter = 0.04 * distance;
  for (Vec3& c : cloud.colors) {
    c.x = std::clamp(c.x + rng.uniform(-color_jitter, color_jitter), 0.0, 1.0);
    c.y = std::clamp(c.y + rng.uniform(-color_jitter, color_jitter), 0.0, 1.0);
    c.z = std::clamp(c.z + rng.uniform(-color_jitter, color_jitter), 0.0, 1.0);
  }
  return cloud;
}

}  // namespace orchard::synth
