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

#include "orchard/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "orchard/config.hpp"

namespace orchard::segnet {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kNone:
      return "none";
    case FusionMode::kEarly:
      return "early";
    case FusionMode::kLate:
      return "late";
    case FusionMode::kEarlyLate:
      return "early+late";
  }
  throw DataError("unhandled fusion mode");
}

FusionMode parse_fusion(const std::string& text) {
  if (text == "none") return FusionMode::kNone;
  if (text == "early") return FusionMode::kEarly;
  if (text == "late") return FusionMode::kLate;
  if (text == "early+late") return FusionMode::kEarlyLate;
  throw DataError("unknown fusion mode '" + text + "' (none|early|late|early+late)");
}

namespace {

bool uses_early(FusionMode m) {
  return m == FusionMode::kEarly || m == FusionMode::kEarlyLate;
}
bool uses_late(FusionMode m) {
  return m == FusionMode::kLate || m == FusionMode::kEarlyLate;
}

SABlockSpec sa_spec(int n, double radius, int k, std::vector<int> channels) {
  SABlockSpec s;
  s.n_centroids = n;
  s.grouping = {geom::GroupingMethod::Ball, k, radius};
  s.mlp_channels = std::move(channels);
  return s;
}

}  // namespace

NetworkSpec NetworkSpec::standard(int block_size) {
  if (block_size != 4096 && block_size != 8192) {
    throw DataError("standard network expects block_size 4096 or 8192, got " +
                    std::to_string(block_size));
  }
  const int base = block_size == 4096 ? 1024 : 2048;
  NetworkSpec spec;
  spec.block_size = block_size;
  spec.sa_blocks = {sa_spec(base, 0.01, 24, {32, 64}), sa_spec(base / 4, 0.02, 24, {64, 128}),
                    sa_spec(base / 16, 0.04, 24, {128, 256}),
                    sa_spec(base / 64, 0.08, 24, {256, 512})};
  spec.fp_blocks = {{{128, 128}}, {{256, 128}}, {{256, 256}}, {{256, 256}}};
  spec.color_branch = ColorBranchSpec{};
  spec.fusion = FusionMode::kLate;
  spec.head_channels = {128};
  return spec;
}

NetworkSpec NetworkSpec::reduced() {
  NetworkSpec spec;
  spec.block_size = 1024;
  spec.sa_blocks = {sa_spec(256, 0.02, 24, {16, 32}), sa_spec(64, 0.04, 24, {32, 64}),
                    sa_spec(32, 0.08, 24, {64, 128}), sa_spec(16, 0.16, 24, {128, 256})};
  spec.fp_blocks = {{{64, 64}}, {{128, 64}}, {{128, 128}}, {{128, 128}}};
  // The color branch pools raw block points, whose local density is set by
  // the scene rather than the block size, so its radius stays at the
  // field-scale value instead of following the doubled SA ladder.
  ColorBranchSpec color;
  color.grouping = {geom::GroupingMethod::Ball, 16, 0.02};
  color.mlp_channels = {16};
  spec.color_branch = color;
  spec.fusion = FusionMode::kLate;
  spec.head_channels = {64};
  return spec;
}

void NetworkSpec::validate() const {
  if (sa_blocks.empty() || sa_blocks.size() != fp_blocks.size()) {
    throw DataError("network needs matching SA/FP stage counts, got " +
                    std::to_string(sa_blocks.size()) + " SA and " +
                    std::to_string(fp_blocks.size()) + " FP");
  }
  if (n_classes < 2) throw DataError("network needs >= 2 classes");
  if (block_size < 1) throw DataError("block_size must be positive");
  double prev_radius = 0.0;
  int prev_n = block_size;
  for (size_t l = 0; l < sa_blocks.size(); ++l) {
    const SABlockSpec& sa = sa_blocks[l];
    if (sa.mlp_channels.empty()) {
      throw DataError("SA stage " + std::to_string(l + 1) + " has no MLP channels");
    }
    if (sa.n_centroids < 1 || sa.n_centroids > prev_n) {
      throw DataError("SA stage " + std::to_string(l + 1) + " centroid count " +
                      std::to_string(sa.n_centroids) + " not in [1, " + std::to_string(prev_n) +
                      "]");
    }
    if (sa.grouping.method == geom::GroupingMethod::Ball) {
      if (!(sa.grouping.radius > prev_radius)) {
        throw DataError("ball radii must strictly increase across SA stages");
      }
      prev_radius = sa.grouping.radius;
    }
    if (sa.grouping.k < 1) throw DataError("grouping size k must be >= 1");
    prev_n = sa.n_centroids;
  }
  for (size_t l = 0; l < fp_blocks.size(); ++l) {
    if (fp_blocks[l].mlp_channels.empty()) {
      throw DataError("FP stage " + std::to_string(l + 1) + " has no MLP channels");
    }
  }
  if (uses_late(fusion)) {
    if (!color_branch) throw DataError("late color fusion configured without a color branch");
    if (color_branch->mlp_channels.empty()) {
      throw DataError("color branch has no MLP channels");
    }
  }
  if (head_channels.empty()) throw DataError("head needs at least one hidden width");
}

int NetworkSpec::input_feature_channels() const { return uses_early(fusion) ? 3 : 0; }

NetworkSpec network_from_config(const config::ConfigFile& cfg) {
  const std::string section = "network";
  std::vector<std::string> known{"preset", "block_size", "fusion",   "n_classes",
                                 "batch_norm", "grouping",   "head_channels",
                                 "color_radius", "color_k", "color_channels"};
  for (int l = 1; l <= 4; ++l) {
    const std::string sa = "sa" + std::to_string(l);
    known.push_back(sa + "_centroids");
    known.push_back(sa + "_radius");
    known.push_back(sa + "_k");
    known.push_back(sa + "_channels");
    known.push_back("fp" + std::to_string(l) + "_channels");
  }
  cfg.require_known(section, known);

  const std::string preset = cfg.get_or(section, "preset", "standard");
  NetworkSpec spec;
  if (preset == "reduced") {
    spec = NetworkSpec::reduced();
    if (cfg.has(section, "block_size")) spec.block_size = cfg.integer(section, "block_size");
  } else if (preset == "standard") {
    spec = NetworkSpec::standard(cfg.integer_or(section, "block_size", 4096));
  } else {
    throw DataError("unknown network preset '" + preset + "' (standard|reduced)");
  }

  spec.fusion = parse_fusion(cfg.get_or(section, "fusion", to_string(spec.fusion)));
  spec.n_classes = cfg.integer_or(section, "n_classes", spec.n_classes);
  spec.use_batch_norm = cfg.flag_or(section, "batch_norm", spec.use_batch_norm);
  if (cfg.has(section, "head_channels")) spec.head_channels = cfg.int_list(section, "head_channels");

  if (cfg.has(section, "grouping")) {
    const std::string g = cfg.get(section, "grouping");
    geom::GroupingMethod method;
    if (g == "ball") {
      method = geom::GroupingMethod::Ball;
    } else if (g == "knn") {
      method = geom::GroupingMethod::Knn;
    } else {
      throw DataError("unknown grouping '" + g + "' (ball|knn)");
    }
    for (auto& sa : spec.sa_blocks) sa.grouping.method = method;
    if (spec.color_branch) spec.color_branch->grouping.method = method;
  }

  for (size_t l = 0; l < spec.sa_blocks.size() && l < 4; ++l) {
    const std::string sa = "sa" + std::to_string(l + 1);
    SABlockSpec& blk = spec.sa_blocks[l];
    blk.n_centroids = cfg.integer_or(section, sa + "_centroids", blk.n_centroids);
    blk.grouping.radius = cfg.number_or(section, sa + "_radius", blk.grouping.radius);
    blk.grouping.k = cfg.integer_or(section, sa + "_k", blk.grouping.k);
    if (cfg.has(section, sa + "_channels")) {
      blk.mlp_channels = cfg.int_list(section, sa + "_channels");
    }
    const std::string fp = "fp" + std::to_string(l + 1) + "_channels";
    if (cfg.has(section, fp)) spec.fp_blocks[l].mlp_channels = cfg.int_list(section, fp);
  }
  if (spec.color_branch) {
    spec.color_branch->grouping.radius =
        cfg.number_or(section, "color_radius", spec.color_branch->grouping.radius);
    spec.color_branch->grouping.k = cfg.integer_or(section, "color_k", spec.color_branch->grouping.k);
    if (cfg.has(section, "color_channels")) {
      spec.color_branch->mlp_channels = cfg.int_list(section, "color_channels");
    }
  }
  spec.validate();
  return spec;
}

// --- building blocks --------------------------------------------------------

void create_mlp_params(ParameterStore& store, const std::string& prefix, int in_channels,
                       const std::vector<int>& channels, bool with_norm) {
  int in = in_channels;
  for (size_t i = 0; i < channels.size(); ++i) {
    const int out = channels[i];
    const std::string base = prefix + ".mlp" + std::to_string(i);
    store.create(base + ".w", in, out, std::vector<double>(static_cast<size_t>(in) * out, 0.0));
    store.create(base + ".b", 1, out, std::vector<double>(out, 0.0));
    if (with_norm) {
      store.create(base + ".bn.gamma", 1, out, std::vector<double>(out, 1.0));
      store.create(base + ".bn.beta", 1, out, std::vector<double>(out, 0.0));
      store.create(base + ".bn.rmean", 1, out, std::vector<double>(out, 0.0), false);
      store.create(base + ".bn.rvar", 1, out, std::vector<double>(out, 1.0), false);
    }
    in = out;
  }
}

Tensor mlp_forward(const Tensor& x, ParameterStore& store, const std::string& prefix,
                   const std::vector<int>& channels, bool with_norm, bool train) {
  Tensor cur = x;
  for (size_t i = 0; i < channels.size(); ++i) {
    const std::string base = prefix + ".mlp" + std::to_string(i);
    cur = add_rowvec(matmul(cur, store.get(base + ".w")), store.get(base + ".b"));
    if (with_norm) {
      diff::BatchNormState bn{store.get(base + ".bn.gamma"), store.get(base + ".bn.beta"),
                              store.get(base + ".bn.rmean"), store.get(base + ".bn.rvar")};
      cur = batch_norm(cur, bn, train);
    }
    cur = relu(cur);
  }
  return cur;
}

namespace {

// Recentered group coordinates plus gathered neighbor features, as one
// (n_centroids * k) x (3 + C) matrix in centroid-major order.
Tensor group_inputs(const std::vector<Vec3>& positions, const Tensor& features,
                    const std::vector<Vec3>& centroids, const std::vector<int>& groups, int k) {
  const int n = static_cast<int>(centroids.size());
  std::vector<double> xyz(static_cast<size_t>(n) * k * 3);
  for (int c = 0; c < n; ++c) {
    for (int j = 0; j < k; ++j) {
      const Vec3 d = positions[groups[static_cast<size_t>(c) * k + j]] - centroids[c];
      const size_t o = (static_cast<size_t>(c) * k + j) * 3;
      xyz[o] = d.x;
      xyz[o + 1] = d.y;
      xyz[o + 2] = d.z;
    }
  }
  Tensor recentered = Tensor::constant(n * k, 3, std::move(xyz));
  if (!features.defined()) return recentered;
  return concat_cols(recentered, gather_rows(features, groups));
}

}  // namespace

SAOutput sa_forward(const std::vector<Vec3>& positions, const Tensor& features,
                    const SABlockSpec& spec, ParameterStore& store, const std::string& prefix,
                    bool with_norm, bool train, uint64_t sampling_seed) {
  if (positions.empty()) throw DataError("SA stage got an empty point set");
  if (features.defined() && features.rows() != static_cast<int>(positions.size())) {
    throw DataError("SA stage got " + std::to_string(positions.size()) + " positions but " +
                    std::to_string(features.rows()) + " feature rows");
  }
  geom::SamplingSpec sampling{spec.sampling, spec.n_centroids, sampling_seed};
  const std::vector<int> picked = geom::sample(positions, sampling);
  SAOutput out;
  out.centroids.reserve(picked.size());
  for (const int i : picked) out.centroids.push_back(positions[i]);

  const std::vector<int> groups = geom::group(positions, out.centroids, spec.grouping);
  Tensor x = group_inputs(positions, features, out.centroids, groups, spec.grouping.k);
  x = mlp_forward(x, store, prefix, spec.mlp_channels, with_norm, train);
  out.features = max_pool_rows(x, static_cast<int>(out.centroids.size()), spec.grouping.k);
  return out;
}

Tensor fp_forward(const std::vector<Vec3>& queries, const std::vector<Vec3>& sources,
                  const Tensor& source_features, const Tensor& skip_features,
                  const FPBlockSpec& spec, ParameterStore& store, const std::string& prefix,
                  bool with_norm, bool train) {
  if (sources.empty()) throw DataError("FP stage got an empty source set");
  if (source_features.rows() != static_cast<int>(sources.size())) {
    throw DataError("FP stage got " + std::to_string(sources.size()) + " sources but " +
                    std::to_string(source_features.rows()) + " feature rows");
  }
  const std::vector<geom::ThreeNN> nn = geom::three_nn_interpolate_weights(queries, sources);
  std::vector<std::array<int, 3>> idx(nn.size());
  std::vector<std::array<double, 3>> wts(nn.size());
  for (size_t i = 0; i < nn.size(); ++i) {
    idx[i] = nn[i].indices;
    wts[i] = nn[i].weights;
  }
  Tensor x = interp3(source_features, idx, wts);
  if (skip_features.defined()) x = concat_cols(x, skip_features);
  return mlp_forward(x, store, prefix, spec.mlp_channels, with_norm, train);
}

Tensor color_branch_forward(const PointCloud& block, const ColorBranchSpec& spec,
                            ParameterStore& store, const std::string& prefix, bool with_norm,
                            bool train) {
  if (!block.has_colors()) throw DataError("color branch needs a colorized block");
  const int m = static_cast<int>(block.size());
  const int k = spec.grouping.k;
  const std::vector<int> groups = geom::group(block.positions, block.positions, spec.grouping);
  // Groups carry neighbor RGB only. Keeping positional offsets out of this
  // branch means its contribution vanishes when colors are uninformative,
  // so any accuracy gain over the point-only network is attributable to
  // color rather than to a second geometry pathway.
  std::vector<double> vals(static_cast<size_t>(m) * k * 3);
  for (int c = 0; c < m; ++c) {
    for (int j = 0; j < k; ++j) {
      const int p = groups[static_cast<size_t>(c) * k + j];
      const Vec3& rgb = block.colors[p];
      const size_t o = (static_cast<size_t>(c) * k + j) * 3;
      vals[o] = rgb.x;
      vals[o + 1] = rgb.y;
      vals[o + 2] = rgb.z;
    }
  }
  Tensor x = Tensor::constant(m * k, 3, std::move(vals));
  x = mlp_forward(x, store, prefix, spec.mlp_channels, with_norm, train);
  return max_pool_rows(x, m, k);
}

// --- assembled network ------------------------------------------------------

SegNet::SegNet(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const bool norm = spec_.use_batch_norm;
  int channels = spec_.input_feature_channels();
  std::vector<int> skip_channels{channels};
  for (size_t l = 0; l < spec_.sa_blocks.size(); ++l) {
    create_mlp_params(store_, "sa" + std::to_string(l + 1), 3 + channels,
                      spec_.sa_blocks[l].mlp_channels, norm);
    channels = spec_.sa_blocks[l].mlp_channels.back();
    skip_channels.push_back(channels);
  }
  for (size_t l = spec_.fp_blocks.size(); l-- > 0;) {
    create_mlp_params(store_, "fp" + std::to_string(l + 1), channels + skip_channels[l],
                      spec_.fp_blocks[l].mlp_channels, norm);
    channels = spec_.fp_blocks[l].mlp_channels.back();
  }
  if (uses_late(spec_.fusion)) {
    create_mlp_params(store_, "color", 3, spec_.color_branch->mlp_channels, norm);
    channels += spec_.color_branch->mlp_channels.back();
  }
  create_mlp_params(store_, "head", channels, spec_.head_channels, norm);
  const int last = spec_.head_channels.back();
  store_.create("head.out.w", last, spec_.n_classes,
                std::vector<double>(static_cast<size_t>(last) * spec_.n_classes, 0.0));
  store_.create("head.out.b", 1, spec_.n_classes, std::vector<double>(spec_.n_classes, 0.0));
}

void SegNet::init_params(uint64_t seed) {
  Rng rng(seed);
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const std::string& name : store_.names()) {
    Tensor t = store_.get(name);
    auto& v = t.raw_values();
    if (ends_with(name, ".w")) {
      const double sigma = std::sqrt(2.0 / t.rows());
      for (double& x : v) x = rng.normal(0.0, sigma);
    } else if (ends_with(name, ".bn.gamma") || ends_with(name, ".bn.rvar")) {
      std::fill(v.begin(), v.end(), 1.0);
    } else {
      std::fill(v.begin(), v.end(), 0.0);  // biases, beta, running means
    }
    t.zero_grad();
  }
}

Tensor SegNet::forward(const PointCloud& block, bool train, uint64_t seed) {
  block.validate();
  const int m = static_cast<int>(block.size());
  if (m != spec_.block_size) {
    throw DataError("network expects blocks of " + std::to_string(spec_.block_size) +
                    " points, got " + std::to_string(m));
  }
  if (spec_.fusion != FusionMode::kNone && !block.has_colors()) {
    throw DataError("fusion mode '" + to_string(spec_.fusion) + "' needs colorized points");
  }
  const bool norm = spec_.use_batch_norm;

  std::vector<std::vector<Vec3>> level_pos;
  std::vector<Tensor> level_feat;
  level_pos.push_back(block.positions);
  Tensor input_feat;
  if (uses_early(spec_.fusion)) {
    std::vector<double> rgb(static_cast<size_t>(m) * 3);
    for (int i = 0; i < m; ++i) {
      rgb[static_cast<size_t>(i) * 3] = block.colors[i].x;
      rgb[static_cast<size_t>(i) * 3 + 1] = block.colors[i].y;
      rgb[static_cast<size_t>(i) * 3 + 2] = block.colors[i].z;
    }
    input_feat = Tensor::constant(m, 3, std::move(rgb));
  }
  level_feat.push_back(input_feat);

  for (size_t l = 0; l < spec_.sa_blocks.size(); ++l) {
    SAOutput out = sa_forward(level_pos[l], level_feat[l], spec_.sa_blocks[l], store_,
                              "sa" + std::to_string(l + 1), norm, train, derive_seed(seed, l));
    level_pos.push_back(std::move(out.centroids));
    level_feat.push_back(out.features);
  }

  Tensor cur = level_feat.back();
  for (size_t l = spec_.fp_blocks.size(); l-- > 0;) {
    cur = fp_forward(level_pos[l], level_pos[l + 1], cur, level_feat[l], spec_.fp_blocks[l],
                     store_, "fp" + std::to_string(l + 1), norm, train);
  }

  if (uses_late(spec_.fusion)) {
    cur = concat_cols(cur, color_branch_forward(block, *spec_.color_branch, store_, "color",
                                                norm, train));
  }
  cur = mlp_forward(cur, store_, "head", spec_.head_channels, norm, train);
  return add_rowvec(matmul(cur, store_.get("head.out.w")), store_.get("head.out.b"));
}

// --- block padding and whole-scene inference --------------------------------

std::pair<PointCloud, std::vector<int>> pad_block(const PointCloud& block, int target,
                                                  uint64_t seed) {
  if (block.empty()) throw DataError("cannot pad an empty block");
  const int n = static_cast<int>(block.size());
  if (n > target) {
    throw DataError("block of " + std::to_string(n) + " points exceeds target " +
                    std::to_string(target));
  }
  std::vector<int> map(target);
  for (int i = 0; i < n; ++i) map[i] = i;
  Rng rng(seed);
  for (int i = n; i < target; ++i) {
    map[i] = static_cast<int>(rng.index(block.size()));
  }
  PointCloud padded = block.select(map);
  return {std::move(padded), std::move(map)};
}

std::vector<int> infer_scene(const PointCloud& cloud, SegNet& net,
                             const octree::PartitionSpec& partition, uint64_t seed) {
  cloud.validate();
  if (cloud.empty()) throw DataError("cannot run inference on an empty cloud");
  const int block_size = net.spec().block_size;
  if (partition.capacity > block_size) {
    throw DataError("partition capacity " + std::to_string(partition.capacity) +
                    " exceeds network block size " + std::to_string(block_size));
  }
  const int n_points = static_cast<int>(cloud.size());
  std::vector<octree::OctreeBlock> leaves = octree::build_partition(cloud, partition);
  octree::validate_partition(leaves, n_points);

  // Depth-capped leaves can exceed the capacity; cut them into consecutive
  // chunks so every piece fits one forward pass.
  std::vector<std::vector<int>> pieces;
  for (octree::OctreeBlock& leaf : leaves) {
    if (static_cast<int>(leaf.indices.size()) <= block_size) {
      pieces.push_back(std::move(leaf.indices));
      continue;
    }
    for (size_t start = 0; start < leaf.indices.size(); start += block_size) {
      const size_t stop = std::min(leaf.indices.size(), start + block_size);
      pieces.emplace_back(leaf.indices.begin() + start, leaf.indices.begin() + stop);
    }
  }

  std::vector<std::vector<std::vector<double>>> block_logits;
  std::vector<std::vector<int>> block_rows;
  block_logits.reserve(pieces.size());
  block_rows.reserve(pieces.size());
  const int n_classes = net.spec().n_classes;
  for (size_t b = 0; b < pieces.size(); ++b) {
    const PointCloud sub = cloud.select(pieces[b]);
    auto [padded, origin] = pad_block(sub, block_size, derive_seed(seed, b * 2 + 1));
    Tensor logits = net.forward(padded, false, derive_seed(seed, b * 2));
    std::vector<std::vector<double>> rows(block_size, std::vector<double>(n_classes));
    std::vector<int> scene_rows(block_size);
    const auto& vals = logits.values();
    for (int r = 0; r < block_size; ++r) {
      for (int c = 0; c < n_classes; ++c) {
        rows[r][c] = vals[static_cast<size_t>(r) * n_classes + c];
      }
      scene_rows[r] = pieces[b][origin[r]];
    }
    block_logits.push_back(std::move(rows));
    block_rows.push_back(std::move(scene_rows));
  }
  return octree::assemble_predictions(block_logits, block_rows, n_points, n_classes);
}

}  // namespace orchard::segnet
