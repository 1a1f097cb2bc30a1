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
#include <functional>
#include <string>
#include <vector>

#include "orchard/cloud.hpp"
#include "orchard/common.hpp"
#include "orchard/segnet.hpp"
#include "orchard/tensor.hpp"

namespace orchard::config {
class ConfigFile;
}

namespace orchard::train {

using orchard::PointCloud;

struct TrainConfig {
  std::vector<double> class_weights{1.0, 1.0};  // alpha per class, each in [0, 2]
  int min_object_points = 1000;                 // under-sampling threshold
  double lr0 = 0.001;
  double lr_decay = 0.95;  // per epoch, floored at lr_min
  double lr_min = 0.0001;
  int epochs = 100;
  int batch_size = 16;  // 4..16
  uint64_t seed = 0;
  // Checkpoint selection window: 0 considers every epoch, k > 0 only the
  // final k epochs.
  int best_window = 0;
  bool augment = true;

  void validate(int block_size, int n_classes) const;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);  // epoch counted from 0

struct TrainingSample {
  PointCloud block;    // exactly block_size points, colors + labels
  int scene_id = -1;
  int seed_point = -1;  // index of the crop seed in the source scene
};

// Crops `seeds_per_scene` random seed points per scene, taking each seed's
// block_size nearest neighbours (distance ascending, ties by index), and
// keeps only crops whose object-class (label 1) count reaches
// min_object_points. Deterministic per seed. Throws DataError when a scene
// is unlabeled or smaller than block_size.
std::vector<TrainingSample> make_dataset(const std::vector<PointCloud>& scenes, int block_size,
                                         int seeds_per_scene, int min_object_points,
                                         uint64_t seed);

struct AugmentConfig {
  bool rotate = true;        // about the vertical axis through the block centroid
  double noise_sigma = 0.003;  // meters, per coordinate
  double hsv_scale_lo = 0.8;   // saturation/value jitter bounds
  double hsv_scale_hi = 1.2;
};

// Random z-rotation, additive Gaussian position noise, and per-sample HSV
// saturation/value scaling (clamped to [0, 1]). Labels pass through.
TrainingSample augment(const TrainingSample& sample, uint64_t seed,
                       const AugmentConfig& cfg = {});

// softmax + per-point weighted negative log likelihood:
//   loss = -(1/N) sum_i alpha[label_i] * log p_i[label_i]
diff::Tensor wce_loss(const diff::Tensor& logits, const std::vector<int>& labels,
                      const std::vector<double>& alpha);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_miou = 0.0;  // NaN when no validation set was given
};

struct TrainResult {
  std::vector<EpochStats> log;
  int best_epoch = -1;        // epoch whose weights the net ends up with
  double best_val_miou = 0.0;
};

// Mini-batch Adam loop over shuffled samples with per-epoch learning-rate
// decay. After each epoch the validation mIoU is measured in eval mode;
// the network is left holding the weights of the best eligible epoch (see
// TrainConfig::best_window). Gradients of a batch are accumulated sample
// by sample, each scaled by 1/batch, so results do not depend on batch
// assembly details. Throws NumericError with epoch/batch/lr context if the
// loss turns non-finite.
TrainResult train(segnet::SegNet& net, const std::vector<TrainingSample>& dataset,
                  const std::vector<TrainingSample>& validation, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// Eval-mode mIoU over a list of labeled blocks (the per-epoch validation
// metric; also handy for held-out evaluation).
double dataset_miou(segnet::SegNet& net, const std::vector<TrainingSample>& samples,
                    uint64_t seed);

// Reads the [train] section; unknown keys are rejected.
TrainConfig train_from_config(const config::ConfigFile& cfg);

// epoch,lr,train_loss,val_miou rows with a header line.
void write_metrics_csv(const std::string& path, const std::vector<EpochStats>& log);

}  // namespace orchard::train
