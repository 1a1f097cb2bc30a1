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

// orchardseg: the pipeline as one executable. Subcommands cover the whole
// flow from synthetic scenes (or sensor files) to evaluated predictions:
//
//   synth        write a labeled synthetic tree scene (PLY + recipe manifest)
//   colorize     project an image onto a cloud via a calibration file
//   voxelize     grid downsampling, optional statistical outlier removal
//   partition    octree split into network-sized leaf blocks (PLYs + manifest)
//   make-dataset crop labeled training blocks around random seed points
//   train        fit the segmentation network, write checkpoint + metrics CSV
//   infer        label a full scene through octree-partitioned inference
//   eval         compare two labeled clouds, print per-class IoU + mIoU CSV
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// Progress goes to stderr; machine-readable results to stdout or files.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/config.hpp"
#include "orchard/fusion.hpp"
#include "orchard/metrics.hpp"
#include "orchard/octree.hpp"
#include "orchard/parallel.hpp"
#include "orchard/segnet.hpp"
#include "orchard/synth.hpp"
#include "orchard/tensor.hpp"
#include "orchard/train.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using orchard::DataError;
using orchard::PointCloud;

// Sub-seed tags used by the command layer; the library reserves 1..4 << 32.
constexpr uint64_t kTagInit = 5ull << 32;
constexpr uint64_t kTagSplit = 6ull << 32;

void note(const std::string& line) { std::cerr << "[orchardseg] " << line << "\n"; }

std::string with_extension(const std::string& path, const std::string& ext) {
  return fs::path(path).replace_extension(ext).string();
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw orchard::ParseError(path + ": " + e.what());
  }
  return doc;
}

// Shared --config handling: parse the file when given, then let explicit
// command-line flags override individual keys.
struct ConfigOpts {
  std::string path;
  int blocks = 0;
  std::string fusion;
  uint64_t seed = 0;
  double alpha_nobj = 0.0;
  double alpha_obj = 0.0;
  int min_fruit_pts = 0;

  CLI::Option* blocks_opt = nullptr;
  CLI::Option* fusion_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* alpha_nobj_opt = nullptr;
  CLI::Option* alpha_obj_opt = nullptr;
  CLI::Option* min_fruit_opt = nullptr;

  void add_network_flags(CLI::App* cmd) {
    cmd->add_option("--config", path, "Key-value config file (sections in brackets)");
    blocks_opt = cmd->add_option("--blocks", blocks, "Points per network block")
                     ->check(CLI::IsMember({4096, 8192}));
    fusion_opt = cmd->add_option("--fusion", fusion, "Color fusion stage")
                     ->check(CLI::IsMember({"none", "early", "late", "early+late"}));
  }

  void add_train_flags(CLI::App* cmd) {
    seed_opt = cmd->add_option("--seed", seed, "Training seed");
    alpha_nobj_opt = cmd->add_option("--alpha-nobj", alpha_nobj, "Loss weight of class 0");
    alpha_obj_opt = cmd->add_option("--alpha-obj", alpha_obj, "Loss weight of class 1");
    min_fruit_opt = cmd->add_option("--min-fruit-pts", min_fruit_pts,
                                    "Drop training blocks with fewer fruit points");
  }

  orchard::config::ConfigFile load() const {
    orchard::config::ConfigFile cfg;
    if (!path.empty()) cfg = orchard::config::ConfigFile::parse_file(path);
    if (blocks_opt && blocks_opt->count()) {
      cfg.set("network", "block_size", std::to_string(blocks));
    }
    if (fusion_opt && fusion_opt->count()) cfg.set("network", "fusion", fusion);
    if (seed_opt && seed_opt->count()) cfg.set("train", "seed", std::to_string(seed));
    if (alpha_nobj_opt && alpha_nobj_opt->count()) {
      cfg.set("train", "alpha_nobj", std::to_string(alpha_nobj));
    }
    if (alpha_obj_opt && alpha_obj_opt->count()) {
      cfg.set("train", "alpha_obj", std::to_string(alpha_obj));
    }
    if (min_fruit_opt && min_fruit_opt->count()) {
      cfg.set("train", "min_fruit_points", std::to_string(min_fruit_pts));
    }
    return cfg;
  }
};

// --- synth ------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::string manifest;
  uint64_t seed = 0;
  int fruit_count = 18;
  double fruit_radius = 0.04;
  double density = 25000.0;
  std::string color_mode = "separable";
  double noise_sigma = 0.002;
  std::vector<double> extent{2.5, 3.0, 2.0};
  double rgbd_distance = 0.0;
};

void run_synth(const SynthOpts& opt) {
  if (opt.extent.size() != 3) {
    throw CLI::ValidationError("--extent", "expected three comma-separated values");
  }
  orchard::synth::SceneRecipe recipe;
  recipe.extent = {opt.extent[0], opt.extent[1], opt.extent[2]};
  recipe.fruit_count = opt.fruit_count;
  recipe.fruit_radius = opt.fruit_radius;
  recipe.point_density = opt.density;
  recipe.color_mode = orchard::synth::parse_color_mode(opt.color_mode);
  recipe.noise_sigma = opt.noise_sigma;
  recipe.seed = opt.seed;

  const PointCloud cloud = opt.rgbd_distance > 0.0
                               ? orchard::synth::generate_rgbd_like(recipe, opt.rgbd_distance)
                               : orchard::synth::generate_scene(recipe);
  int64_t fruit = 0;
  for (const int l : cloud.labels) fruit += l == 1 ? 1 : 0;
  orchard::write_cloud(cloud, opt.out);
  note("wrote " + std::to_string(cloud.size()) + " points (" + std::to_string(fruit) +
       " fruit) to " + opt.out);

  json manifest{{"output", opt.out},
                {"seed", opt.seed},
                {"extent", opt.extent},
                {"fruit_count", opt.fruit_count},
                {"fruit_radius", opt.fruit_radius},
                {"point_density", opt.density},
                {"color_mode", opt.color_mode},
                {"noise_sigma", opt.noise_sigma},
                {"rgbd_distance", opt.rgbd_distance},
                {"point_total", cloud.size()},
                {"fruit_points", fruit},
                {"expected_fruit_fraction", recipe.expected_fruit_fraction()}};
  const std::string manifest_path =
      opt.manifest.empty() ? with_extension(opt.out, ".json") : opt.manifest;
  write_json(manifest_path, manifest);
}

// --- colorize ---------------------------------------------------------------

struct ColorizeOpts {
  std::string input;
  std::string calib;
  std::string image;
  std::string out;
};

void run_colorize(const ColorizeOpts& opt) {
  const PointCloud cloud = orchard::read_cloud(opt.input);
  const orchard::fusion::Calibration calib = orchard::fusion::read_calibration(opt.calib);
  const orchard::fusion::ColorImage image = orchard::fusion::read_ppm(opt.image);
  const PointCloud colored =
      orchard::fusion::colorize(cloud, image, calib.camera, calib.extrinsic);
  orchard::write_cloud(colored, opt.out);
  note("colorized " + std::to_string(colored.size()) + " of " + std::to_string(cloud.size()) +
       " points (rest outside the image)");
}

// --- voxelize ---------------------------------------------------------------

struct VoxelizeOpts {
  std::string input;
  std::string out;
  double leaf = 0.01;
  int outlier_k = 0;
  double outlier_std = 1.0;
};

void run_voxelize(const VoxelizeOpts& opt) {
  PointCloud cloud = orchard::read_cloud(opt.input);
  const size_t before = cloud.size();
  cloud = orchard::voxel_downsample(cloud, orchard::VoxelSpec{opt.leaf});
  note("voxel grid " + std::to_string(opt.leaf) + " m: " + std::to_string(before) + " -> " +
       std::to_string(cloud.size()) + " points");
  if (opt.outlier_k > 0) {
    const size_t kept_before = cloud.size();
    cloud = orchard::remove_outliers(cloud, opt.outlier_k, opt.outlier_std);
    note("outlier removal (k=" + std::to_string(opt.outlier_k) + "): dropped " +
         std::to_string(kept_before - cloud.size()) + " points");
  }
  orchard::write_cloud(cloud, opt.out);
}

// --- partition --------------------------------------------------------------

struct PartitionOpts {
  std::string input;
  std::string out_dir;
  int capacity = 4096;
  int max_depth = 12;
};

void run_partition(const PartitionOpts& opt) {
  const PointCloud cloud = orchard::read_cloud(opt.input);
  orchard::octree::PartitionSpec spec;
  spec.capacity = opt.capacity;
  spec.max_depth = opt.max_depth;
  const std::vector<orchard::octree::OctreeBlock> blocks =
      orchard::octree::build_partition(cloud, spec);
  orchard::octree::validate_partition(blocks, static_cast<int>(cloud.size()));

  fs::create_directories(opt.out_dir);
  json leaves = json::array();
  for (size_t b = 0; b < blocks.size(); ++b) {
    char name[32];
    std::snprintf(name, sizeof(name), "leaf_%04zu.ply", b);
    orchard::write_cloud(cloud.select(blocks[b].indices), (fs::path(opt.out_dir) / name).string());
    leaves.push_back({{"id", b},
                      {"file", name},
                      {"count", blocks[b].indices.size()},
                      {"depth", blocks[b].depth},
                      {"oversized", blocks[b].oversized},
                      {"lo", {blocks[b].box.lo.x, blocks[b].box.lo.y, blocks[b].box.lo.z}},
                      {"hi", {blocks[b].box.hi.x, blocks[b].box.hi.y, blocks[b].box.hi.z}},
                      {"indices", blocks[b].indices}});
  }
  write_json((fs::path(opt.out_dir) / "manifest.json").string(),
             json{{"source", opt.input},
                  {"capacity", opt.capacity},
                  {"max_depth", opt.max_depth},
                  {"point_count", cloud.size()},
                  {"leaves", leaves}});
  note("partitioned " + std::to_string(cloud.size()) + " points into " +
       std::to_string(blocks.size()) + " leaves in " + opt.out_dir);
}

// --- make-dataset -----------------------------------------------------------

struct MakeDatasetOpts {
  std::vector<std::string> scenes;
  std::string out_dir;
  int seeds_per_scene = 150;
  uint64_t seed = 0;
  ConfigOpts config;
};

void run_make_dataset(const MakeDatasetOpts& opt) {
  const orchard::config::ConfigFile cfg = opt.config.load();
  const int block_size = cfg.integer_or("network", "block_size", 4096);
  const orchard::train::TrainConfig tcfg = orchard::train::train_from_config(cfg);

  std::vector<PointCloud> scenes;
  for (const std::string& path : opt.scenes) {
    scenes.push_back(orchard::read_cloud(path));
    note("loaded " + std::to_string(scenes.back().size()) + " points from " + path);
  }
  const std::vector<orchard::train::TrainingSample> samples = orchard::train::make_dataset(
      scenes, block_size, opt.seeds_per_scene, tcfg.min_object_points, opt.seed);

  fs::create_directories(opt.out_dir);
  json entries = json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "block_%05zu.ply", i);
    orchard::write_cloud(samples[i].block, (fs::path(opt.out_dir) / name).string());
    int fruit = 0;
    for (const int l : samples[i].block.labels) fruit += l == 1 ? 1 : 0;
    entries.push_back({{"file", name},
                       {"scene", samples[i].scene_id},
                       {"scene_file", opt.scenes[samples[i].scene_id]},
                       {"seed_point", samples[i].seed_point},
                       {"fruit_points", fruit}});
  }
  write_json((fs::path(opt.out_dir) / "manifest.json").string(),
             json{{"block_size", block_size},
                  {"min_fruit_points", tcfg.min_object_points},
                  {"seeds_per_scene", opt.seeds_per_scene},
                  {"seed", opt.seed},
                  {"blocks", entries}});
  note("kept " + std::to_string(samples.size()) + " of " +
       std::to_string(scenes.size() * static_cast<size_t>(opt.seeds_per_scene)) +
       " crops in " + opt.out_dir);
  std::cout << json{{"blocks", samples.size()}, {"out_dir", opt.out_dir}}.dump() << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainOpts {
  std::string data_dir;
  std::string out;
  std::string metrics;
  double val_fraction = 0.2;
  ConfigOpts config;
};

std::vector<orchard::train::TrainingSample> load_dataset(const std::string& dir) {
  const json manifest = read_json((fs::path(dir) / "manifest.json").string());
  std::vector<orchard::train::TrainingSample> samples;
  for (const json& entry : manifest.at("blocks")) {
    orchard::train::TrainingSample s;
    s.block = orchard::read_cloud((fs::path(dir) / entry.at("file").get<std::string>()).string());
    s.scene_id = entry.value("scene", -1);
    s.seed_point = entry.value("seed_point", -1);
    samples.push_back(std::move(s));
  }
  return samples;
}

void run_train(const TrainOpts& opt) {
  const orchard::config::ConfigFile cfg = opt.config.load();
  const orchard::segnet::NetworkSpec spec = orchard::segnet::network_from_config(cfg);
  orchard::train::TrainConfig tcfg = orchard::train::train_from_config(cfg);

  std::vector<orchard::train::TrainingSample> samples = load_dataset(opt.data_dir);
  if (samples.empty()) throw DataError("dataset in " + opt.data_dir + " is empty");
  for (const auto& s : samples) {
    if (static_cast<int>(s.block.size()) != spec.block_size) {
      throw DataError("dataset block has " + std::to_string(s.block.size()) +
                      " points but the network wants " + std::to_string(spec.block_size));
    }
  }

  // Deterministic split, then the under-sampling threshold on the training
  // half only, so ablations keep a comparable validation set.
  const int n = static_cast<int>(samples.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  orchard::Rng rng(orchard::derive_seed(tcfg.seed, kTagSplit));
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<int>(rng.index(i + 1))]);
  }
  int n_val = static_cast<int>(std::llround(opt.val_fraction * n));
  if (opt.val_fraction > 0.0 && n > 1) n_val = std::max(1, std::min(n - 1, n_val));
  std::vector<orchard::train::TrainingSample> train_set, val_set;
  for (int i = 0; i < n; ++i) {
    const orchard::train::TrainingSample& s = samples[order[i]];
    if (i < n - n_val) {
      int fruit = 0;
      for (const int l : s.block.labels) fruit += l == 1 ? 1 : 0;
      if (fruit >= tcfg.min_object_points) train_set.push_back(s);
    } else {
      val_set.push_back(s);
    }
  }
  note("training on " + std::to_string(train_set.size()) + " blocks, validating on " +
       std::to_string(val_set.size()));

  orchard::segnet::SegNet net(spec);
  net.init_params(orchard::derive_seed(tcfg.seed, kTagInit));
  const orchard::train::TrainResult result =
      orchard::train::train(net, train_set, val_set, tcfg, [&](const orchard::train::EpochStats& e) {
        char line[128];
        std::snprintf(line, sizeof(line), "epoch %d/%d lr %.6f loss %.4f val mIoU %.4f", e.epoch + 1,
                      tcfg.epochs, e.lr, e.train_loss, e.val_miou);
        note(line);
      });

  orchard::diff::save_parameters(net.params(), opt.out);
  const std::string metrics_path =
      opt.metrics.empty() ? with_extension(opt.out, ".metrics.csv") : opt.metrics;
  orchard::train::write_metrics_csv(metrics_path, result.log);
  note("checkpoint " + opt.out + ", metrics " + metrics_path);
  std::cout << json{{"best_epoch", result.best_epoch},
                    {"best_val_miou", result.best_val_miou},
                    {"train_blocks", train_set.size()},
                    {"val_blocks", val_set.size()},
                    {"checkpoint", opt.out},
                    {"metrics_csv", metrics_path}}
                   .dump()
            << "\n";
}

// --- infer ------------------------------------------------------------------

struct InferOpts {
  std::string input;
  std::string checkpoint;
  std::string out;
  uint64_t seed = 0;
  int capacity = 0;  // 0: one network block per leaf
  int max_depth = 12;
  ConfigOpts config;
};

void run_infer(const InferOpts& opt) {
  const orchard::config::ConfigFile cfg = opt.config.load();
  const orchard::segnet::NetworkSpec spec = orchard::segnet::network_from_config(cfg);
  orchard::segnet::SegNet net(spec);
  orchard::diff::load_parameters(net.params(), opt.checkpoint);

  PointCloud cloud = orchard::read_cloud(opt.input);
  note("labeling " + std::to_string(cloud.size()) + " points from " + opt.input);
  orchard::octree::PartitionSpec partition;
  partition.capacity = opt.capacity > 0 ? opt.capacity : spec.block_size;
  partition.max_depth = opt.max_depth;

  const auto start = std::chrono::steady_clock::now();
  cloud.labels = orchard::segnet::infer_scene(cloud, net, partition, opt.seed);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  orchard::write_cloud(cloud, opt.out);
  std::vector<int64_t> counts(spec.n_classes, 0);
  for (const int l : cloud.labels) ++counts[l];
  note("wrote " + opt.out);
  std::cout << json{{"points", cloud.size()},
                    {"class_counts", counts},
                    {"runtime_seconds", seconds}}
                   .dump()
            << "\n";
}

// --- eval -------------------------------------------------------------------

struct EvalOpts {
  std::string truth;
  std::string prediction;
};

void run_eval(const EvalOpts& opt) {
  const PointCloud truth = orchard::read_cloud(opt.truth);
  const PointCloud pred = orchard::read_cloud(opt.prediction);
  if (!truth.has_labels()) throw DataError(opt.truth + " has no labels");
  if (!pred.has_labels()) throw DataError(opt.prediction + " has no labels");
  if (truth.size() != pred.size()) {
    throw DataError("clouds disagree on size: " + std::to_string(truth.size()) + " vs " +
                    std::to_string(pred.size()));
  }
  int n_classes = 2;
  for (const int l : truth.labels) n_classes = std::max(n_classes, l + 1);
  for (const int l : pred.labels) n_classes = std::max(n_classes, l + 1);
  orchard::metrics::ConfusionMatrix cm(n_classes);
  cm.accumulate(truth.labels, pred.labels);
  const orchard::metrics::IouReport report = orchard::metrics::miou(cm);

  std::printf("class,iou\n");
  for (int c = 0; c < n_classes; ++c) std::printf("%d,%.6f\n", c, report.per_class[c]);
  std::printf("miou,%.6f\n", report.mean);
}

}  // namespace

int main(int argc, char** argv) {
  orchard::init_threads();

  CLI::App app{"Fruit segmentation on colorized point clouds"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthOpts synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic tree scene");
  synth_cmd->add_option("--out", synth.out, "Output PLY/PCD path")->required();
  synth_cmd->add_option("--manifest", synth.manifest, "Recipe manifest path (default: out .json)");
  synth_cmd->add_option("--seed", synth.seed, "Scene seed");
  synth_cmd->add_option("--fruit-count", synth.fruit_count, "Number of fruit spheres");
  synth_cmd->add_option("--fruit-radius", synth.fruit_radius, "Fruit radius, metres");
  synth_cmd->add_option("--density", synth.density, "Points per square metre of surface");
  synth_cmd->add_option("--color-mode", synth.color_mode, "How informative colors are")
      ->check(CLI::IsMember({"separable", "geometry-only", "ambiguous"}));
  synth_cmd->add_option("--noise-sigma", synth.noise_sigma, "Positional jitter sigma, metres");
  synth_cmd->add_option("--extent", synth.extent, "Scene bounds, metres as x,y,z")
      ->delimiter(',');
  synth_cmd->add_option("--rgbd-distance", synth.rgbd_distance,
                        "Simulated capture distance in metres (0: clean)");
  synth_cmd->callback([&] { run_synth(synth); });

  ColorizeOpts colorize;
  CLI::App* colorize_cmd =
      app.add_subcommand("colorize", "Project image colors onto a cloud");
  colorize_cmd->add_option("input", colorize.input, "Input cloud (PLY/PCD)")->required();
  colorize_cmd->add_option("--calib", colorize.calib, "Calibration key-value file")->required();
  colorize_cmd->add_option("--image", colorize.image, "PPM image (P3 or P6)")->required();
  colorize_cmd->add_option("--out", colorize.out, "Output cloud path")->required();
  colorize_cmd->callback([&] { run_colorize(colorize); });

  VoxelizeOpts voxelize;
  CLI::App* voxelize_cmd =
      app.add_subcommand("voxelize", "Voxel-grid downsample, optional outlier removal");
  voxelize_cmd->add_option("input", voxelize.input, "Input cloud")->required();
  voxelize_cmd->add_option("--out", voxelize.out, "Output cloud path")->required();
  voxelize_cmd->add_option("--leaf", voxelize.leaf, "Voxel edge length, metres");
  voxelize_cmd->add_option("--outlier-k", voxelize.outlier_k,
                           "Neighbours for outlier removal (0: off)");
  voxelize_cmd->add_option("--outlier-std", voxelize.outlier_std,
                           "Outlier distance threshold in standard deviations");
  voxelize_cmd->callback([&] { run_voxelize(voxelize); });

  PartitionOpts partition;
  CLI::App* partition_cmd =
      app.add_subcommand("partition", "Octree-split a scene into leaf blocks");
  partition_cmd->add_option("input", partition.input, "Input cloud")->required();
  partition_cmd->add_option("--out-dir", partition.out_dir, "Directory for leaf PLYs + manifest")
      ->required();
  partition_cmd->add_option("--capacity", partition.capacity, "Leaf capacity in points");
  partition_cmd->add_option("--max-depth", partition.max_depth, "Maximum split depth");
  partition_cmd->callback([&] { run_partition(partition); });

  MakeDatasetOpts make_dataset;
  CLI::App* make_dataset_cmd =
      app.add_subcommand("make-dataset", "Crop labeled training blocks from scenes");
  make_dataset_cmd->add_option("scenes", make_dataset.scenes, "Labeled scene clouds")
      ->required();
  make_dataset_cmd->add_option("--out-dir", make_dataset.out_dir, "Output directory")->required();
  make_dataset_cmd->add_option("--seeds-per-scene", make_dataset.seeds_per_scene,
                               "Crop attempts per scene");
  make_dataset_cmd->add_option("--seed", make_dataset.seed, "Cropping seed");
  make_dataset.config.add_network_flags(make_dataset_cmd);
  make_dataset.config.min_fruit_opt =
      make_dataset_cmd->add_option("--min-fruit-pts", make_dataset.config.min_fruit_pts,
                                   "Keep crops with at least this many fruit points");
  make_dataset_cmd->callback([&] { run_make_dataset(make_dataset); });

  TrainOpts train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the segmentation network");
  train_cmd->add_option("--data", train.data_dir, "Dataset directory from make-dataset")
      ->required();
  train_cmd->add_option("--out", train.out, "Checkpoint output path")->required();
  train_cmd->add_option("--metrics", train.metrics, "Metrics CSV path (default: out .metrics.csv)");
  train_cmd->add_option("--val-fraction", train.val_fraction, "Held-out share of the dataset");
  train.config.add_network_flags(train_cmd);
  train.config.add_train_flags(train_cmd);
  train_cmd->callback([&] { run_train(train); });

  InferOpts infer;
  CLI::App* infer_cmd = app.add_subcommand("infer", "Label a scene with a trained network");
  infer_cmd->add_option("input", infer.input, "Input cloud")->required();
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Trained parameter container")
      ->required();
  infer_cmd->add_option("--out", infer.out, "Labeled output cloud")->required();
  infer_cmd->add_option("--seed", infer.seed, "Inference seed");
  infer_cmd->add_option("--capacity", infer.capacity,
                        "Octree leaf capacity (default: network block size)");
  infer_cmd->add_option("--max-depth", infer.max_depth, "Maximum octree depth");
  infer.config.add_network_flags(infer_cmd);
  infer_cmd->callback([&] { run_infer(infer); });

  EvalOpts eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Compare two labeled clouds (per-class IoU + mIoU CSV)");
  eval_cmd->add_option("truth", eval.truth, "Ground-truth labeled cloud")->required();
  eval_cmd->add_option("prediction", eval.prediction, "Predicted labeled cloud")->required();
  eval_cmd->callback([&] { run_eval(eval); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const orchard::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const orchard::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
