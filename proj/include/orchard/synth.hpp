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
#include <string>

#include "orchard/cloud.hpp"
#include "orchard/common.hpp"

// Synthetic labeled tree scenes for end-to-end validation: a trunk and a few
// branches (cylinders), a canopy of small curved leaf patches, and fruit
// spheres. Fruit surface points carry label 1, everything else label 0.

namespace orchard::synth {

// How informative the colors are about the fruit class.
enum class ColorMode {
  kSeparable,     // fruit red, foliage green: color alone nearly decides it
  kGeometryOnly,  // one drab color everywhere: color carries no signal
  kAmbiguous,     // a fraction of leaf patches borrow the fruit color
};

std::string to_string(ColorMode mode);
ColorMode parse_color_mode(const std::string& text);

struct SceneRecipe {
  Vec3 extent{2.5, 3.0, 2.0};    // bounding box of the scene, metres
  int fruit_count = 18;
  double fruit_radius = 0.04;    // metres
  double point_density = 25000;  // points per square metre of surface
  ColorMode color_mode = ColorMode::kSeparable;
  double noise_sigma = 0.002;    // per-point positional jitter, metres
  uint64_t seed = 0;

  void validate() const;

  // Analytic fruit-surface share of the total sampled area. The generated
  // label-1 fraction lands near this value (rounding and the randomised
  // branch lengths move it a little).
  double expected_fruit_fraction() const;
};

// Deterministic per recipe (bitwise identical reruns). Positional jitter is
// Gaussian with the displacement norm clamped at three sigma, so every
// label-1 point stays within fruit_radius + 3 * noise_sigma of its fruit
// centre. Throws DataError when the recipe asks for more than one million
// points.
PointCloud generate_scene(const SceneRecipe& recipe);

// Same scene with sensing degradation that grows with capture distance
// (metres): extra positional jitter with sigma 0.002 * distance^2 and a
// per-channel color jitter of up to 0.04 * distance. distance 0 returns the
// clean scene.
PointCloud generate_rgbd_like(const SceneRecipe& recipe, double distance);

}  // namespace orchard::synth
