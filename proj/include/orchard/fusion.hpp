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
#include <optional>
#include <string>
#include <vector>

#include "orchard/cloud.hpp"
#include "orchard/common.hpp"

namespace orchard::fusion {

using orchard::PointCloud;

// Pinhole camera with 5-coefficient plumb-bob distortion (k1, k2, p1, p2, k3).
struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  std::array<double, 5> distortion{0, 0, 0, 0, 0};

  // Throws DataError unless fx, fy > 0, 0 < cx < width, 0 < cy < height.
  void validate() const;
};

// Rigid transform from the LiDAR frame into the camera frame.
struct Extrinsic {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 translation{0, 0, 0};

  // Throws DataError unless rotation is orthonormal with det +1 (1e-9).
  void validate() const;

  Vec3 apply(const Vec3& p) const {
    const auto& r = rotation;
    return {r[0] * p.x + r[1] * p.y + r[2] * p.z + translation.x,
            r[3] * p.x + r[4] * p.y + r[5] * p.z + translation.y,
            r[6] * p.x + r[7] * p.y + r[8] * p.z + translation.z};
  }
};

// Row-major RGB raster with channels in [0, 1].
struct ColorImage {
  int width = 0, height = 0;
  std::vector<Vec3> pixels;

  const Vec3& at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  Vec3& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  void validate() const;
};

struct Pixel {
  double u = 0, v = 0;
};

// Projects a LiDAR-frame point into the image plane. Returns nullopt when
// the point sits at or behind the camera (camera-frame z <= 1e-6) or lands
// outside [0, width) x [0, height) after distortion.
std::optional<Pixel> project_point(const Vec3& p, const CameraModel& cam, const Extrinsic& ext);

// Assigns each surviving point the color of the pixel it projects onto
// (nearest pixel, i.e. floor of the continuous coordinate). Points that do
// not project into the image are dropped; survivor order is preserved.
// Input labels, if present, follow their points. Throws DataError when the
// image extent disagrees with the camera model.
PointCloud colorize(const PointCloud& cloud, const ColorImage& image, const CameraModel& cam,
                    const Extrinsic& ext);

// Concatenates frames already expressed in one common frame. All frames
// must agree on whether they carry colors and labels.
PointCloud accumulate(const std::vector<PointCloud>& frames);

// Reads a calibration file of `key = value` lines: fx, fy, cx, cy, width,
// height, optional k1 k2 p1 p2 k3 (default 0), and `extrinsic` holding the
// 12 row-major entries of [R | t]. '#' starts a comment.
struct Calibration {
  CameraModel camera;
  Extrinsic extrinsic;
};
Calibration read_calibration(const std::string& path);

// PPM raster I/O. Reading accepts ASCII P3 and 8-bit binary P6; writing
// always emits P6 with maxval 255.
ColorImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ColorImage& image);

}  // namespace orchard::fusion
