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

#include "orchard/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace orchard::fusion {

namespace {

constexpr double kMinDepth = 1e-6;
constexpr double kOrthoTol = 1e-9;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw DataError("camera image size must be positive");
  if (!(cx > 0.0 && cx < width)) throw DataError("camera cx must lie inside the image");
  if (!(cy > 0.0 && cy < height)) throw DataError("camera cy must lie inside the image");
}

void Extrinsic::validate() const {
  const auto& r = rotation;
  // R^T R = I
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[k * 3 + i] * r[k * 3 + j];
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - want) > kOrthoTol) {
        throw DataError("extrinsic rotation is not orthonormal");
      }
    }
  }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (std::abs(det - 1.0) > kOrthoTol) {
    throw DataError("extrinsic rotation determinant is not +1");
  }
}

void ColorImage::validate() const {
  if (width < 1 || height < 1) throw DataError("image size must be positive");
  if (pixels.size() != static_cast<size_t>(width) * height) {
    throw DataError("image pixel count does not match width*height");
  }
}

std::optional<Pixel> project_point(const Vec3& p, const CameraModel& cam, const Extrinsic& ext) {
  const Vec3 q = ext.apply(p);
  if (q.z <= kMinDepth) return std::nullopt;
  const double xn = q.x / q.z;
  const double yn = q.y / q.z;
  const double k1 = cam.distortion[0], k2 = cam.distortion[1];
  const double p1 = cam.distortion[2], p2 = cam.distortion[3];
  const double k3 = cam.distortion[4];
  const double r2 = xn * xn + yn * yn;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn);
  const double yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn;
  const double u = cam.fx * xd + cam.cx;
  const double v = cam.fy * yd + cam.cy;
  if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) return std::nullopt;
  return Pixel{u, v};
}

PointCloud colorize(const PointCloud& cloud, const ColorImage& image, const CameraModel& cam,
                    const Extrinsic& ext) {
  cam.validate();
  ext.validate();
  image.validate();
  if (image.width != cam.width || image.height != cam.height) {
    throw DataError("image is " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) + " but the camera model expects " +
                    std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
  PointCloud out;
  const int n = static_cast<int>(cloud.size());
  for (int i = 0; i < n; ++i) {
    const auto px = project_point(cloud.positions[i], cam, ext);
    if (!px) continue;
    const int x = static_cast<int>(std::floor(px->u));
    const int y = static_cast<int>(std::floor(px->v));
    out.positions.push_back(cloud.positions[i]);
    out.colors.push_back(image.at(x, y));
    if (cloud.has_labels()) out.labels.push_back(cloud.labels[i]);
  }
  return out;
}

PointCloud accumulate(const std::vector<PointCloud>& frames) {
  if (frames.empty()) throw DataError("no frames to accumulate");
  const bool colors = frames[0].has_colors();
  const bool labels = frames[0].has_labels();
  for (size_t f = 1; f < frames.size(); ++f) {
    if (frames[f].has_colors() != colors) {
      throw DataError("frame " + std::to_string(f) + " disagrees on color presence");
    }
    if (frames[f].has_labels() != labels) {
      throw DataError("frame " + std::to_string(f) + " disagrees on label presence");
    }
  }
  PointCloud out;
  for (const PointCloud& f : frames) {
    f.validate();
    out.positions.insert(out.positions.end(), f.positions.begin(), f.positions.end());
    if (colors) out.colors.insert(out.colors.end(), f.colors.begin(), f.colors.end());
    if (labels) out.labels.insert(out.labels.end(), f.labels.begin(), f.labels.end());
  }
  return out;
}

Calibration read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open calibration file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }

  auto parse_double = [&](const std::string& key, bool required, double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw ParseError(path + ": missing key '" + key + "'");
      return fallback;
    }
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError(path + ": key '" + key + "' has non-numeric value '" + it->second + "'");
    }
  };

  Calibration calib;
  calib.camera.fx = parse_double("fx", true, 0);
  calib.camera.fy = parse_double("fy", true, 0);
  calib.camera.cx = parse_double("cx", true, 0);
  calib.camera.cy = parse_double("cy", true, 0);
  calib.camera.width = static_cast<int>(parse_double("width", true, 0));
  calib.camera.height = static_cast<int>(parse_double("height", true, 0));
  const char* dist_keys[5] = {"k1", "k2", "p1", "p2", "k3"};
  for (int i = 0; i < 5; ++i) {
    calib.camera.distortion[i] = parse_double(dist_keys[i], false, 0.0);
  }

  const auto ext_it = kv.find("extrinsic");
  if (ext_it == kv.end()) throw ParseError(path + ": missing key 'extrinsic'");
  std::istringstream ext(ext_it->second);
  double vals[12];
  for (int i = 0; i < 12; ++i) {
    if (!(ext >> vals[i])) {
      throw ParseError(path + ": 'extrinsic' needs 12 row-major values of [R | t]");
    }
  }
  double extra;
  if (ext >> extra) {
    throw ParseError(path + ": 'extrinsic' has more than 12 values");
  }
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      calib.extrinsic.rotation[row * 3 + col] = vals[row * 4 + col];
    }
  }
  calib.extrinsic.translation = {vals[3], vals[7], vals[11]};

  calib.camera.validate();
  calib.extrinsic.validate();
  return calib;
}

namespace {

// Reads the next whitespace-delimited token of a PPM header, skipping
// '#' comments that run to end of line.
std::string ppm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ParseError(path + ": truncated image header");
  return tok;
}

int ppm_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = ppm_token(in, path);
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ": bad " + what + " '" + tok + "'");
  }
}

}  // namespace

ColorImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image " + path);
  const std::string magic = ppm_token(in, path);
  if (magic != "P3" && magic != "P6") {
    throw ParseError(path + ": unsupported image magic '" + magic + "' (P3/P6 only)");
  }
  ColorImage img;
  img.width = ppm_int(in, path, "width");
  img.height = ppm_int(in, path, "height");
  const int maxval = ppm_int(in, path, "maxval");
  if (img.width < 1 || img.height < 1) throw ParseError(path + ": non-positive image size");
  if (maxval < 1 || maxval > 255) {
    throw ParseError(path + ": maxval " + std::to_string(maxval) + " unsupported (1..255)");
  }
  const size_t n = static_cast<size_t>(img.width) * img.height;
  img.pixels.resize(n);
  const double scale = 1.0 / maxval;
  if (magic == "P3") {
    for (size_t i = 0; i < n; ++i) {
      const int r = ppm_int(in, path, "sample");
      const int g = ppm_int(in, path, "sample");
      const int b = ppm_int(in, path, "sample");
      if (r < 0 || r > maxval || g < 0 || g > maxval || b < 0 || b > maxval) {
        throw ParseError(path + ": sample outside [0, maxval]");
      }
      img.pixels[i] = {r * scale, g * scale, b * scale};
    }
  } else {
    // Exactly one whitespace byte separates the header from binary data.
    std::vector<unsigned char> raw(n * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
      throw ParseError(path + ": truncated pixel data");
    }
    for (size_t i = 0; i < n; ++i) {
      img.pixels[i] = {raw[i * 3] * scale, raw[i * 3 + 1] * scale, raw[i * 3 + 2] * scale};
    }
  }
  return img;
}

void write_ppm(const std::string& path, const ColorImage& image) {
  image.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(image.pixels.size() * 3);
  for (const Vec3& px : image.pixels) {
    raw.push_back(static_cast<unsigned char>(std::lround(clamp01(px.x) * 255.0)));
    raw.push_back(static_cast<unsigned char>(std::lround(clamp01(px.y) * 255.0)));
    raw.push_back(static_cast<unsigned char>(std::lround(clamp01(px.z) * 255.0)));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace orchard::fusion
