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

#include <string>
#include <vector>

#include "orchard/common.hpp"

namespace orchard {

/// Columnar point set. `colors` / `labels` are either empty (absent) or the
/// same length as `positions`. Colors are unit-interval scalars in memory
/// and 8-bit per channel on disk. Label 0 is background, 1 is fruit.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  std::vector<int> labels;

  size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_labels() const { return !labels.empty(); }

  // Throws DataError on length mismatch, non-finite coordinates,
  // out-of-range colors or negative labels.
  void validate() const;

  // Copies the points at `indices`, in the given order.
  PointCloud select(const std::vector<int>& indices) const;
};

struct VoxelSpec {
  double cell_size = 0.01;  // meters per axis, uniform
};

enum class CloudFormat { PlyAscii, PcdAscii };

/// Picks the format from the file extension (.ply / .pcd).
CloudFormat format_for_path(const std::string& path);

// ASCII PLY: `element vertex N` with float x,y,z, optional uchar
// red/green/blue, optional int label. ASCII PCD: FIELDS x y z [rgb] [label],
// rgb packed as (r<<16 | g<<8 | b). Parse failures name the offending line.
PointCloud read_cloud(const std::string& path, CloudFormat format);
PointCloud read_cloud(const std::string& path);

// Positions are written with 9 significant digits; colors as 8-bit bytes.
void write_cloud(const PointCloud& cloud, const std::string& path,
                 CloudFormat format);
void write_cloud(const PointCloud& cloud, const std::string& path);

/// One output point per occupied voxel: centroid position, mean color,
/// majority label (ties to the lowest class id). Output order is the order
/// in which voxels are first seen in the input, which makes the result
/// independent of any internal parallelism.
PointCloud voxel_downsample(const PointCloud& cloud, const VoxelSpec& spec);

/// Statistical outlier removal: drops points whose mean distance to their
/// k nearest neighbours exceeds mean + std_ratio * std of that statistic
/// over the whole cloud (population standard deviation). Survivor order is
/// preserved. Requires cloud.size() > k.
PointCloud remove_outliers(const PointCloud& cloud, int k, double std_ratio);

/// Per-point mean distance to the k nearest neighbours (the statistic that
/// remove_outliers thresholds). Exposed for tests and tooling.
std::vector<double> knn_mean_distances(const PointCloud& cloud, int k);

}  // namespace orchard
