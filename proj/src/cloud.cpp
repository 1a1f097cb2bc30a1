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

#include "orchard/cloud.hpp"

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "orchard/kdtree.hpp"
#include "orchard/parallel.hpp"

namespace orchard {

namespace {

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

int color_byte(double c) {
  const int b = static_cast<int>(std::lround(c * 255.0));
  return std::clamp(b, 0, 255);
}

struct LineReader {
  std::istream& in;
  int line_no = 0;

  bool next(std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      return true;
    }
    return false;
  }
};

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, const std::string& path, int line) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    fail(path, line, "expected a number, got '" + tok + "'");
  }
  if (pos != tok.size()) fail(path, line, "trailing junk in number '" + tok + "'");
  if (!std::isfinite(v)) fail(path, line, "non-finite value '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, const std::string& path, int line) {
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    fail(path, line, "expected an integer, got '" + tok + "'");
  }
  if (pos != tok.size()) fail(path, line, "trailing junk in integer '" + tok + "'");
  return v;
}

PointCloud read_ply(std::istream& in, const std::string& path) {
  LineReader reader{in};
  std::string line;
  if (!reader.next(line) || split_ws(line) != std::vector<std::string>{"ply"}) {
    fail(path, reader.line_no, "missing 'ply' magic");
  }

  long vertex_count = -1;
  std::vector<std::string> props;  // property names of the vertex element
  bool in_vertex_element = false;
  bool seen_format = false;
  while (true) {
    if (!reader.next(line)) fail(path, reader.line_no, "unexpected end of header");
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") {
        fail(path, reader.line_no, "only 'format ascii 1.0' is supported");
      }
      seen_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) fail(path, reader.line_no, "malformed element line");
      in_vertex_element = tok[1] == "vertex";
      if (in_vertex_element) vertex_count = parse_long(tok[2], path, reader.line_no);
      else fail(path, reader.line_no, "unsupported element '" + tok[1] + "'");
    } else if (tok[0] == "property") {
      if (!in_vertex_element) fail(path, reader.line_no, "property outside vertex element");
      if (tok.size() != 3) fail(path, reader.line_no, "malformed property line");
      if (tok[1] == "list") fail(path, reader.line_no, "list properties not supported");
      props.push_back(tok[2]);
    } else if (tok[0] == "end_header") {
      break;
    } else {
      fail(path, reader.line_no, "unrecognized header line '" + tok[0] + "'");
    }
  }
  if (!seen_format) fail(path, reader.line_no, "header missing format line");
  if (vertex_count < 0) fail(path, reader.line_no, "header missing 'element vertex'");

  auto find_prop = [&](const char* name) {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
  if (ix < 0 || iy < 0 || iz < 0) fail(path, reader.line_no, "vertex element lacks x/y/z");
  const int ir = find_prop("red"), ig = find_prop("green"), ib = find_prop("blue");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
  if ((ir >= 0 || ig >= 0 || ib >= 0) && !has_color) {
    fail(path, reader.line_no, "partial red/green/blue properties");
  }
  const int il = find_prop("label");

  PointCloud cloud;
  cloud.positions.reserve(vertex_count);
  if (has_color) cloud.colors.reserve(vertex_count);
  if (il >= 0) cloud.labels.reserve(vertex_count);
  for (long i = 0; i < vertex_count; ++i) {
    if (!reader.next(line)) {
      fail(path, reader.line_no, "expected " + std::to_string(vertex_count) +
                                     " vertices, file ended after " + std::to_string(i));
    }
    const auto tok = split_ws(line);
    if (tok.size() != props.size()) {
      fail(path, reader.line_no, "expected " + std::to_string(props.size()) +
                                     " values, got " + std::to_string(tok.size()));
    }
    Vec3 p{parse_double(tok[ix], path, reader.line_no),
           parse_double(tok[iy], path, reader.line_no),
           parse_double(tok[iz], path, reader.line_no)};
    cloud.positions.push_back(p);
    if (has_color) {
      const long r = parse_long(tok[ir], path, reader.line_no);
      const long g = parse_long(tok[ig], path, reader.line_no);
      const long b = parse_long(tok[ib], path, reader.line_no);
      if (r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
        fail(path, reader.line_no, "color byte out of [0,255]");
      }
      cloud.colors.push_back({r / 255.0, g / 255.0, b / 255.0});
    }
    if (il >= 0) {
      const long l = parse_long(tok[il], path, reader.line_no);
      if (l < 0) fail(path, reader.line_no, "negative label");
      cloud.labels.push_back(static_cast<int>(l));
    }
  }
  // Trailing content after the declared count is a count mismatch.
  while (reader.next(line)) {
    if (!split_ws(line).empty()) {
      fail(path, reader.line_no, "data beyond declared vertex count");
    }
  }
  return cloud;
}

PointCloud read_pcd(std::istream& in, const std::string& path) {
  LineReader reader{in};
  std::string line;
  std::vector<std::string> fields;
  long point_count = -1;
  bool saw_data = false;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "FIELDS") {
      fields.assign(tok.begin() + 1, tok.end());
    } else if (tok[0] == "POINTS") {
      if (tok.size() != 2) fail(path, reader.line_no, "malformed POINTS line");
      point_count = parse_long(tok[1], path, reader.line_no);
    } else if (tok[0] == "DATA") {
      if (tok.size() != 2 || tok[1] != "ascii") {
        fail(path, reader.line_no, "only 'DATA ascii' is supported");
      }
      saw_data = true;
      break;
    }
    // SIZE/TYPE/COUNT/WIDTH/HEIGHT/VERSION/VIEWPOINT are accepted as written.
  }
  if (!saw_data) fail(path, reader.line_no, "missing DATA line");
  if (point_count < 0) fail(path, reader.line_no, "missing POINTS line");

  auto field_index = [&](const char* name) {
    const auto it = std::find(fields.begin(), fields.end(), name);
    return it == fields.end() ? -1 : static_cast<int>(it - fields.begin());
  };
  const int ix = field_index("x"), iy = field_index("y"), iz = field_index("z");
  if (ix < 0 || iy < 0 || iz < 0) fail(path, reader.line_no, "FIELDS lacks x/y/z");
  const int irgb = field_index("rgb");
  const int il = field_index("label");

  PointCloud cloud;
  cloud.positions.reserve(point_count);
  for (long i = 0; i < point_count; ++i) {
    if (!reader.next(line)) {
      fail(path, reader.line_no, "expected " + std::to_string(point_count) +
                                     " points, file ended after " + std::to_string(i));
    }
    const auto tok = split_ws(line);
    if (tok.size() != fields.size()) {
      fail(path, reader.line_no, "expected " + std::to_string(fields.size()) +
                                     " values, got " + std::to_string(tok.size()));
    }
    cloud.positions.push_back({parse_double(tok[ix], path, reader.line_no),
                               parse_double(tok[iy], path, reader.line_no),
                               parse_double(tok[iz], path, reader.line_no)});
    if (irgb >= 0) {
      const long packed = parse_long(tok[irgb], path, reader.line_no);
      if (packed < 0 || packed > 0xffffff) fail(path, reader.line_no, "rgb out of range");
      cloud.colors.push_back({((packed >> 16) & 0xff) / 255.0,
                              ((packed >> 8) & 0xff) / 255.0,
                              (packed & 0xff) / 255.0});
    }
    if (il >= 0) {
      const long l = parse_long(tok[il], path, reader.line_no);
      if (l < 0) fail(path, reader.line_no, "negative label");
      cloud.labels.push_back(static_cast<int>(l));
    }
  }
  while (reader.next(line)) {
    if (!split_ws(line).empty()) {
      fail(path, reader.line_no, "data beyond declared point count");
    }
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, std::ostream& out) {
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  if (cloud.has_labels()) out << "property int label\n";
  out << "end_header\n";
  char buf[128];
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", p.x, p.y, p.z);
    out << buf;
    if (cloud.has_colors()) {
      const Vec3& c = cloud.colors[i];
      out << ' ' << color_byte(c.x) << ' ' << color_byte(c.y) << ' ' << color_byte(c.z);
    }
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
}

void write_pcd(const PointCloud& cloud, std::ostream& out) {
  std::string fields = "x y z";
  std::string size = "4 4 4";
  std::string type = "F F F";
  std::string count = "1 1 1";
  if (cloud.has_colors()) {
    fields += " rgb";
    size += " 4";
    type += " U";
    count += " 1";
  }
  if (cloud.has_labels()) {
    fields += " label";
    size += " 4";
    type += " I";
    count += " 1";
  }
  out << "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n";
  out << "FIELDS " << fields << "\nSIZE " << size << "\nTYPE " << type
      << "\nCOUNT " << count << "\n";
  out << "WIDTH " << cloud.size() << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n";
  out << "POINTS " << cloud.size() << "\nDATA ascii\n";
  char buf[128];
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", p.x, p.y, p.z);
    out << buf;
    if (cloud.has_colors()) {
      const Vec3& c = cloud.colors[i];
      const long packed = (static_cast<long>(color_byte(c.x)) << 16) |
                          (static_cast<long>(color_byte(c.y)) << 8) |
                          static_cast<long>(color_byte(c.z));
      out << ' ' << packed;
    }
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
}

}  // namespace

void PointCloud::validate() const {
  if (has_colors() && colors.size() != positions.size()) {
    throw DataError("colors length " + std::to_string(colors.size()) +
                    " != positions length " + std::to_string(positions.size()));
  }
  if (has_labels() && labels.size() != positions.size()) {
    throw DataError("labels length " + std::to_string(labels.size()) +
                    " != positions length " + std::to_string(positions.size()));
  }
  for (size_t i = 0; i < positions.size(); ++i) {
    const Vec3& p = positions[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw DataError("non-finite position at index " + std::to_string(i));
    }
  }
  for (size_t i = 0; i < colors.size(); ++i) {
    const Vec3& c = colors[i];
    if (!(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0 && c.z >= 0.0 &&
          c.z <= 1.0)) {
      throw DataError("color out of [0,1] at index " + std::to_string(i));
    }
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("negative label at index " + std::to_string(i));
  }
}

PointCloud PointCloud::select(const std::vector<int>& indices) const {
  PointCloud out;
  out.positions.reserve(indices.size());
  if (has_colors()) out.colors.reserve(indices.size());
  if (has_labels()) out.labels.reserve(indices.size());
  for (const int i : indices) {
    out.positions.push_back(positions[i]);
    if (has_colors()) out.colors.push_back(colors[i]);
    if (has_labels()) out.labels.push_back(labels[i]);
  }
  return out;
}

CloudFormat format_for_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == "ply") return CloudFormat::PlyAscii;
  if (ext == "pcd") return CloudFormat::PcdAscii;
  throw DataError("cannot infer cloud format from '" + path + "' (use .ply or .pcd)");
}

PointCloud read_cloud(const std::string& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  PointCloud cloud =
      format == CloudFormat::PlyAscii ? read_ply(in, path) : read_pcd(in, path);
  cloud.validate();
  return cloud;
}

PointCloud read_cloud(const std::string& path) {
  return read_cloud(path, format_for_path(path));
}

void write_cloud(const PointCloud& cloud, const std::string& path,
                 CloudFormat format) {
  cloud.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  if (format == CloudFormat::PlyAscii) write_ply(cloud, out);
  else write_pcd(cloud, out);
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_cloud(const PointCloud& cloud, const std::string& path) {
  write_cloud(cloud, path, format_for_path(path));
}

PointCloud voxel_downsample(const PointCloud& cloud, const VoxelSpec& spec) {
  if (!(spec.cell_size > 0.0)) {
    throw DataError("voxel cell size must be positive");
  }
  cloud.validate();

  struct Slot {
    Vec3 pos_sum{};
    Vec3 color_sum{};
    std::map<int, int> label_counts;
    int n = 0;
  };
  struct KeyHash {
    size_t operator()(const std::array<int64_t, 3>& k) const {
      size_t h = 1469598103934665603ull;
      for (const int64_t v : k) {
        h ^= static_cast<size_t>(v);
        h *= 1099511628211ull;
      }
      return h;
    }
  };

  // Slots are appended at first occurrence, so the output order does not
  // depend on the hash layout.
  std::unordered_map<std::array<int64_t, 3>, int, KeyHash> index;
  std::vector<Slot> slots;
  index.reserve(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const std::array<int64_t, 3> key{
        static_cast<int64_t>(std::floor(p.x / spec.cell_size)),
        static_cast<int64_t>(std::floor(p.y / spec.cell_size)),
        static_cast<int64_t>(std::floor(p.z / spec.cell_size))};
    auto [it, inserted] = index.try_emplace(key, static_cast<int>(slots.size()));
    if (inserted) slots.emplace_back();
    Slot& slot = slots[it->second];
    slot.pos_sum = slot.pos_sum + p;
    if (cloud.has_colors()) slot.color_sum = slot.color_sum + cloud.colors[i];
    if (cloud.has_labels()) slot.label_counts[cloud.labels[i]]++;
    slot.n++;
  }

  PointCloud out;
  out.positions.reserve(slots.size());
  if (cloud.has_colors()) out.colors.reserve(slots.size());
  if (cloud.has_labels()) out.labels.reserve(slots.size());
  for (const Slot& slot : slots) {
    const double inv = 1.0 / slot.n;
    out.positions.push_back(slot.pos_sum * inv);
    if (cloud.has_colors()) out.colors.push_back(slot.color_sum * inv);
    if (cloud.has_labels()) {
      int best_label = -1, best_count = -1;
      for (const auto& [label, count] : slot.label_counts) {
        if (count > best_count) {  // map iterates ascending, ties keep lowest id
          best_count = count;
          best_label = label;
        }
      }
      out.labels.push_back(best_label);
    }
  }
  return out;
}

std::vector<double> knn_mean_distances(const PointCloud& cloud, int k) {
  if (k < 1) throw DataError("outlier k must be >= 1");
  if (cloud.size() <= static_cast<size_t>(k)) {
    throw DataError("outlier removal needs more than k=" + std::to_string(k) +
                    " points, have " + std::to_string(cloud.size()));
  }
  const KdTree tree(cloud.positions);
  std::vector<double> mean_dist(cloud.size());
  const int64_t n = static_cast<int64_t>(cloud.size());
  init_threads();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const auto nn = tree.knn(cloud.positions[i], k, static_cast<int>(i));
    double sum = 0.0;
    for (const int j : nn) sum += std::sqrt(dist2(cloud.positions[i], cloud.positions[j]));
    mean_dist[i] = sum / k;
  }
  return mean_dist;
}

PointCloud remove_outliers(const PointCloud& cloud, int k, double std_ratio) {
  if (!(std_ratio > 0.0)) throw DataError("std_ratio must be positive");
  cloud.validate();
  const std::vector<double> mean_dist = knn_mean_distances(cloud, k);

  double mean = 0.0;
  for (const double d : mean_dist) mean += d;
  mean /= mean_dist.size();
  double var = 0.0;
  for (const double d : mean_dist) var += (d - mean) * (d - mean);
  var /= mean_dist.size();
  const double threshold = mean + std_ratio * std::sqrt(var);

  std::vector<int> keep;
  keep.reserve(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (mean_dist[i] <= threshold) keep.push_back(static_cast<int>(i));
  }
  return cloud.select(keep);
}

}  // namespace orchard
