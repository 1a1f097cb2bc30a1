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

#include <optional>
#include <string>
#include <vector>

#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/geom.hpp"
#include "orchard/octree.hpp"
#include "orchard/tensor.hpp"

// Hierarchical point-set segmentation network: four set-abstraction (SA)
// encoder stages, four feature-propagation (FP) decoder stages with skip
// links, and an optional color branch whose features join either at the
// input (early) or right before the classification head (late).
namespace orchard::config {
class ConfigFile;
}

namespace orchard::segnet {

using diff::ParameterStore;
using diff::Tensor;
using orchard::PointCloud;

enum class FusionMode { kNone, kEarly, kLate, kEarlyLate };

std::string to_string(FusionMode mode);
FusionMode parse_fusion(const std::string& text);  // "none|early|late|early+late"

struct SABlockSpec {
  int n_centroids = 0;
  geom::SamplingMethod sampling = geom::SamplingMethod::Fps;
  geom::GroupingSpec grouping;
  std::vector<int> mlp_channels;
};

struct FPBlockSpec {
  std::vector<int> mlp_channels;
};

// SA-style block over colors: every input point is a centroid and groups
// carry neighbor RGB only, so the branch goes inert when colors carry no
// information. The MLP ends at the fused color channel count.
struct ColorBranchSpec {
  geom::GroupingSpec grouping{geom::GroupingMethod::Ball, 24, 0.02};
  std::vector<int> mlp_channels{32};
};

struct NetworkSpec {
  std::vector<SABlockSpec> sa_blocks;
  std::vector<FPBlockSpec> fp_blocks;
  std::optional<ColorBranchSpec> color_branch;
  FusionMode fusion = FusionMode::kLate;
  int n_classes = 2;
  int block_size = 4096;
  std::vector<int> head_channels{128};
  bool use_batch_norm = true;

  // Field-scale presets. block_size 4096: centroid ladder 1024/256/64/16,
  // ball radii 0.01/0.02/0.04/0.08 m, K = 24, encoder widths
  // (32,64)/(64,128)/(128,256)/(256,512). block_size 8192 doubles the
  // centroid ladder to 2048/512/128/32.
  static NetworkSpec standard(int block_size);
  // Desk-scale preset for fast experiments: block 1024, ladder
  // 256/64/32/16, halved widths, SA radii doubled for the sparser centroid
  // neighborhoods, color radius unchanged (raw-point density does not
  // shrink with the block), 16 color channels.
  static NetworkSpec reduced();

  // Throws DataError on structural problems: SA/FP count mismatch, empty
  // channel lists, non-increasing ball radii across levels, color fusion
  // without a color branch.
  void validate() const;

  int input_feature_channels() const;  // 3 with early fusion, else 0
};

// Builds a NetworkSpec from the [network] section of a config file. Starts
// from the preset selected by `preset` (standard|reduced, default standard)
// and `block_size`, then applies any per-stage overrides such as
// sa1_centroids, sa2_radius, fp1_channels, color_channels, fusion, or
// grouping. Unknown keys are rejected.
NetworkSpec network_from_config(const config::ConfigFile& cfg);

// --- building blocks (exposed for direct testing) ---------------------------

// Creates affine + normalization parameters for a stack of 1x1 layers under
// `prefix`: <prefix>.mlp<i>.{w,b} and, with norm, .bn.{gamma,beta,rmean,rvar}.
void create_mlp_params(ParameterStore& store, const std::string& prefix, int in_channels,
                       const std::vector<int>& channels, bool with_norm);

// Shared MLP: per row, affine -> (batch norm) -> ReLU for each layer.
Tensor mlp_forward(const Tensor& x, ParameterStore& store, const std::string& prefix,
                   const std::vector<int>& channels, bool with_norm, bool train);

struct SAOutput {
  std::vector<Vec3> centroids;  // in pick order
  Tensor features;              // n_centroids x last mlp channel
};

// Sampling + grouping + shared MLP + channelwise max over each group.
// `features` may be undefined (first level without early fusion); group
// inputs are then just the recentered coordinates.
SAOutput sa_forward(const std::vector<Vec3>& positions, const Tensor& features,
                    const SABlockSpec& spec, ParameterStore& store, const std::string& prefix,
                    bool with_norm, bool train, uint64_t sampling_seed);

// Inverse-distance 3-NN interpolation of source features onto the queries,
// concatenated with skip features (when defined), then the shared MLP.
Tensor fp_forward(const std::vector<Vec3>& queries, const std::vector<Vec3>& sources,
                  const Tensor& source_features, const Tensor& skip_features,
                  const FPBlockSpec& spec, ParameterStore& store, const std::string& prefix,
                  bool with_norm, bool train);

// Color branch: one SA-style stage whose centroids are all block points.
Tensor color_branch_forward(const PointCloud& block, const ColorBranchSpec& spec,
                            ParameterStore& store, const std::string& prefix, bool with_norm,
                            bool train);

// --- the assembled network --------------------------------------------------

class SegNet {
 public:
  // Creates all parameters (zero weights, identity normalization) so a
  // checkpoint can be loaded immediately; call init_params for training.
  explicit SegNet(NetworkSpec spec);

  // He-initialized weights, deterministic per seed.
  void init_params(uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Per-point logits (block_size x n_classes) for one block of exactly
  // block_size points. Colors are required unless fusion is none. `seed`
  // drives the centroid samplers.
  Tensor forward(const PointCloud& block, bool train, uint64_t seed);

 private:
  NetworkSpec spec_;
  ParameterStore store_;
};

// Resamples a leaf up to `target` points: the original points once, in
// order, then uniform draws with replacement. Returns the padded cloud and
// the map from padded row to original row. Throws DataError on an empty
// block or one already larger than target.
std::pair<PointCloud, std::vector<int>> pad_block(const PointCloud& block, int target,
                                                  uint64_t seed);

// Octree partition -> pad -> forward -> reassemble, averaging scores of
// points duplicated by padding. Oversized leaves (depth-capped) are cut
// into consecutive chunks of at most block_size points. Deterministic for
// a fixed seed.
std::vector<int> infer_scene(const PointCloud& cloud, SegNet& net,
                             const octree::PartitionSpec& partition, uint64_t seed);

}  // namespace orchard::segnet
