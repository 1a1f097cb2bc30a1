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

#include "orchard/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "orchard/colorspace.hpp"
#include "orchard/config.hpp"
#include "orchard/kdtree.hpp"
#include "orchard/metrics.hpp"

namespace orchard::train {

namespace {

// Disjoint tag spaces for sub-seed derivation.
constexpr uint64_t kTagShuffle = 1ull << 32;
constexpr uint64_t kTagAugment = 2ull << 32;
constexpr uint64_t kTagForward = 3ull << 32;
constexpr uint64_t kTagValidation = 4ull << 32;
constexpr uint64_t kEpochStride = 1000003;  // > any sane dataset size

}  // namespace

void TrainConfig::validate(int block_size, int n_classes) const {
  if (static_cast<int>(class_weights.size()) != n_classes) {
    throw DataError("got " + std::to_string(class_weights.size()) + " class weights for " +
                    std::to_string(n_classes) + " classes");
  }
  for (const double a : class_weights) {
    if (!(a >= 0.0 && a <= 2.0)) {
      throw DataError("class weights must lie in [0, 2], got " + std::to_string(a));
    }
  }
  if (min_object_points < 0 || min_object_points >= block_size) {
    throw DataError("min_object_points must lie in [0, block_size), got " +
                    std::to_string(min_object_points));
  }
  if (!(lr0 > 0.0)) throw DataError("lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw DataError("lr_decay must lie in (0, 1]");
  if (!(lr_min > 0.0 && lr_min <= lr0)) throw DataError("lr_min must lie in (0, lr0]");
  if (epochs < 1) throw DataError("epochs must be >= 1");
  if (batch_size < 4 || batch_size > 16) {
    throw DataError("batch_size must lie in [4, 16], got " + std::to_string(batch_size));
  }
  if (best_window < 0 || best_window > epochs) {
    throw DataError("best_window must lie in [0, epochs]");
  }
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  return std::max(cfg.lr_min, cfg.lr0 * std::pow(cfg.lr_decay, epoch));
}

std::vector<TrainingSample> make_dataset(const std::vector<PointCloud>& scenes, int block_size,
                                         int seeds_per_scene, int min_object_points,
                                         uint64_t seed) {
  if (block_size < 1) throw DataError("block_size must be positive");
  if (seeds_per_scene < 1) throw DataError("seeds_per_scene must be >= 1");
  if (min_object_points >= block_size) {
    throw DataError("min_object_points " + std::to_string(min_object_points) +
                    " must stay below the block size " + std::to_string(block_size));
  }
  std::vector<TrainingSample> out;
  for (size_t s = 0; s < scenes.size(); ++s) {
    const PointCloud& scene = scenes[s];
    scene.validate();
    if (!scene.has_labels()) {
      throw DataError("scene " + std::to_string(s) + " has no labels");
    }
    if (static_cast<int>(scene.size()) < block_size) {
      throw DataError("scene " + std::to_string(s) + " has " + std::to_string(scene.size()) +
                      " points, below the block size " + std::to_string(block_size));
    }
    const KdTree tree(scene.positions);
    Rng rng(derive_seed(seed, s));
    for (int c = 0; c < seeds_per_scene; ++c) {
      const int pivot = static_cast<int>(rng.index(scene.size()));
      const std::vector<int> crop = tree.knn(scene.positions[pivot], block_size);
      int object_points = 0;
      for (const int i : crop) object_points += scene.labels[i] == 1 ? 1 : 0;
      if (object_points < min_object_points) continue;
      TrainingSample sample;
      sample.block = scene.select(crop);
      sample.scene_id = static_cast<int>(s);
      sample.seed_point = pivot;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

TrainingSample augment(const TrainingSample& sample, uint64_t seed, const AugmentConfig& cfg) {
  TrainingSample out = sample;
  PointCloud& block = out.block;
  Rng rng(seed);

  if (cfg.rotate && !block.empty()) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double c = std::cos(angle), s = std::sin(angle);
    Vec3 center{0, 0, 0};
    for (const Vec3& p : block.positions) center = center + p;
    center = center * (1.0 / static_cast<double>(block.size()));
    for (Vec3& p : block.positions) {
      const double dx = p.x - center.x, dy = p.y - center.y;
      p.x = center.x + c * dx - s * dy;
      p.y = center.y + s * dx + c * dy;
    }
  }
  if (block.has_colors()) {
    const double s_scale = rng.uniform(cfg.hsv_scale_lo, cfg.hsv_scale_hi);
    const double v_scale = rng.uniform(cfg.hsv_scale_lo, cfg.hsv_scale_hi);
    for (Vec3& rgb : block.colors) {
      colorspace::Hsv hsv = colorspace::rgb_to_hsv(rgb);
      hsv.s = std::clamp(hsv.s * s_scale, 0.0, 1.0);
      hsv.v = std::clamp(hsv.v * v_scale, 0.0, 1.0);
      rgb = colorspace::hsv_to_rgb(hsv);
    }
  }
  if (cfg.noise_sigma > 0.0) {
    for (Vec3& p : block.positions) {
      p.x += rng.normal(0.0, cfg.noise_sigma);
      p.y += rng.normal(0.0, cfg.noise_sigma);
      p.z += rng.normal(0.0, cfg.noise_sigma);
    }
  }
  return out;
}

diff::Tensor wce_loss(const diff::Tensor& logits, const std::vector<int>& labels,
                      const std::vector<double>& alpha) {
  return diff::nll_weighted(diff::log_softmax_rows(logits), labels, alpha);
}

double dataset_miou(segnet::SegNet& net, const std::vector<TrainingSample>& samples,
                    uint64_t seed) {
  if (samples.empty()) throw DataError("no samples to evaluate");
  const int n_classes = net.spec().n_classes;
  metrics::ConfusionMatrix cm(n_classes);
  for (size_t i = 0; i < samples.size(); ++i) {
    const PointCloud& block = samples[i].block;
    if (!block.has_labels()) throw DataError("evaluation block has no labels");
    const diff::Tensor logits = net.forward(block, false, derive_seed(seed, i));
    const auto& vals = logits.values();
    std::vector<int> preds(block.size());
    for (size_t r = 0; r < block.size(); ++r) {
      int best = 0;
      for (int c = 1; c < n_classes; ++c) {
        if (vals[r * n_classes + c] > vals[r * n_classes + best]) best = c;
      }
      preds[r] = best;
    }
    cm.accumulate(block.labels, preds);
  }
  return metrics::miou(cm).mean;
}

TrainResult train(segnet::SegNet& net, const std::vector<TrainingSample>& dataset,
                  const std::vector<TrainingSample>& validation, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate(net.spec().block_size, net.spec().n_classes);
  if (dataset.empty()) throw DataError("empty training dataset");
  for (const TrainingSample& s : dataset) {
    if (static_cast<int>(s.block.size()) != net.spec().block_size) {
      throw DataError("training block has " + std::to_string(s.block.size()) +
                      " points, expected " + std::to_string(net.spec().block_size));
    }
    if (!s.block.has_labels()) throw DataError("training block has no labels");
  }

  diff::ParameterStore& store = net.params();
  const int n = static_cast<int>(dataset.size());
  TrainResult result;
  std::map<std::string, std::vector<double>> best_weights;
  double best_miou = -1.0;
  int best_epoch = -1;

  auto snapshot = [&] {
    best_weights.clear();
    for (const std::string& name : store.names()) {
      if (name.rfind("opt.", 0) == 0) continue;
      best_weights[name] = store.get(name).values();
    }
  };
  auto restore = [&] {
    for (auto& [name, values] : best_weights) store.get(name).raw_values() = values;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng shuffle(derive_seed(cfg.seed, kTagShuffle + epoch));
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<int>(shuffle.index(i + 1))]);
    }

    double loss_sum = 0.0;
    int batch_index = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const int stop = std::min(n, start + cfg.batch_size);
      const double inv_batch = 1.0 / (stop - start);
      store.zero_grads();
      for (int i = start; i < stop; ++i) {
        const uint64_t step_tag = static_cast<uint64_t>(epoch) * kEpochStride + i;
        const TrainingSample& raw = dataset[order[i]];
        const TrainingSample sample =
            cfg.augment ? augment(raw, derive_seed(cfg.seed, kTagAugment + step_tag)) : raw;
        diff::Tensor logits =
            net.forward(sample.block, true, derive_seed(cfg.seed, kTagForward + step_tag));
        diff::Tensor loss = wce_loss(logits, sample.block.labels, cfg.class_weights);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index) + ", lr " +
                             std::to_string(lr));
        }
        loss_sum += value;
        diff::scale(loss, inv_batch).backward();
      }
      diff::adam_step(store, lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / n;
    stats.val_miou = validation.empty()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : dataset_miou(net, validation, derive_seed(cfg.seed, kTagValidation));
    result.log.push_back(stats);
    if (on_epoch) on_epoch(stats);

    const bool eligible = cfg.best_window == 0 || epoch >= cfg.epochs - cfg.best_window;
    if (!validation.empty() && eligible && stats.val_miou > best_miou) {
      best_miou = stats.val_miou;
      best_epoch = epoch;
      snapshot();
    }
  }

  if (best_epoch >= 0) {
    restore();
    result.best_epoch = best_epoch;
    result.best_val_miou = best_miou;
  } else {
    result.best_epoch = cfg.epochs - 1;
    result.best_val_miou = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

TrainConfig train_from_config(const config::ConfigFile& cfg) {
  const std::string section = "train";
  cfg.require_known(section,
                    {"alpha_nobj", "alpha_obj", "min_fruit_points", "lr0", "lr_decay", "lr_min",
                     "epochs", "batch_size", "seed", "best_window", "augment"});
  TrainConfig out;
  out.class_weights = {cfg.number_or(section, "alpha_nobj", 1.0),
                       cfg.number_or(section, "alpha_obj", 1.0)};
  out.min_object_points = cfg.integer_or(section, "min_fruit_points", out.min_object_points);
  out.lr0 = cfg.number_or(section, "lr0", out.lr0);
  out.lr_decay = cfg.number_or(section, "lr_decay", out.lr_decay);
  out.lr_min = cfg.number_or(section, "lr_min", out.lr_min);
  out.epochs = cfg.integer_or(section, "epochs", out.epochs);
  out.batch_size = cfg.integer_or(section, "batch_size", out.batch_size);
  out.seed = static_cast<uint64_t>(cfg.integer_or(section, "seed", 0));
  out.best_window = cfg.integer_or(section, "best_window", out.best_window);
  out.augment = cfg.flag_or(section, "augment", out.augment);
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "epoch,lr,train_loss,val_miou\n";
  char line[128];
  for (const EpochStats& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.train_loss,
                  e.val_miou);
    out << line;
  }
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace orchard::train
