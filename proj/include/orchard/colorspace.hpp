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

#include <algorithm>
#include <cmath>

#include "orchard/common.hpp"

namespace orchard::colorspace {

// Hue, saturation, value, each in [0, 1]; hue wraps.
struct Hsv {
  double h = 0.0, s = 0.0, v = 0.0;
};

inline Hsv rgb_to_hsv(const Vec3& rgb) {
  const double r = rgb.x, g = rgb.y, b = rgb.z;
  const double cmax = std::max({r, g, b});
  const double cmin = std::min({r, g, b});
  const double delta = cmax - cmin;
  Hsv out;
  out.v = cmax;
  out.s = cmax > 0.0 ? delta / cmax : 0.0;
  if (delta > 0.0) {
    double h;
    if (cmax == r) {
      h = (g - b) / delta;
    } else if (cmax == g) {
      h = 2.0 + (b - r) / delta;
    } else {
      h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    out.h = h;
  }
  return out;
}

inline Vec3 hsv_to_rgb(const Hsv& hsv) {
  const double h = (hsv.h - std::floor(hsv.h)) * 6.0;
  const int sector = std::min(5, static_cast<int>(h));
  const double f = h - sector;
  const double v = hsv.v;
  const double p = v * (1.0 - hsv.s);
  const double q = v * (1.0 - hsv.s * f);
  const double t = v * (1.0 - hsv.s * (1.0 - f));
  switch (sector) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

}  // namespace orchard::colorspace
