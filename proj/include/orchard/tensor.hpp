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
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "orchard/common.hpp"

// Reverse-mode automatic differentiation over dense row-major matrices.
// Every tensor is rank 2 (rows x cols); scalars are 1x1. Ops build a tape
// of shared nodes; Tensor::backward() on a scalar walks it once in reverse
// topological order. All arithmetic is double precision.
namespace orchard::diff {

namespace detail {

struct Node {
  int rows = 0, cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // unset for leaves and constants

  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  // Constant: never receives a gradient.
  static Tensor constant(int rows, int cols, std::vector<double> values);
  static Tensor zeros(int rows, int cols);
  // Leaf: participates in backward; grad accumulates across passes until
  // zero_grad().
  static Tensor leaf(int rows, int cols, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int64_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->values; }
  // In-place value edit for leaves (optimizer updates). Using this on a
  // node that is already part of a tape invalidates recorded forwards.
  std::vector<double>& raw_values() { return node_->values; }

  // Empty until populated by a backward pass.
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;

  // Seeds d(self)/d(self) = 1 and accumulates gradients into every leaf
  // this scalar depends on. Throws DataError unless the tensor is 1x1.
  void backward();

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// --- differentiable ops -----------------------------------------------------
// Shape preconditions throw DataError naming both offending shapes.

Tensor matmul(const Tensor& a, const Tensor& b);          // (m,k)x(k,n) -> (m,n)
Tensor add(const Tensor& a, const Tensor& b);             // elementwise
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& x, double s);
Tensor add_rowvec(const Tensor& x, const Tensor& bias);   // bias is (1,n)
Tensor relu(const Tensor& x);
// x has groups*group_size rows; channelwise max over each consecutive run
// of group_size rows. Gradient flows only to the argmax row (ties to the
// lowest row index).
Tensor max_pool_rows(const Tensor& x, int groups, int group_size);
Tensor mean_all(const Tensor& x);                         // -> 1x1
Tensor concat_cols(const Tensor& a, const Tensor& b);
// out[r] = x[rows[r]]; backward scatter-adds, so duplicate rows accumulate.
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);
// out[q] = sum_j weights[q][j] * source[indices[q][j]]. Indices and weights
// come from geometry and are treated as constants.
Tensor interp3(const Tensor& source, const std::vector<std::array<int, 3>>& indices,
               const std::vector<std::array<double, 3>>& weights);
Tensor softmax_rows(const Tensor& x);
Tensor log_elem(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
// -(1/m) * sum_i alpha[label_i] * logp[i][label_i]
Tensor nll_weighted(const Tensor& logp, const std::vector<int>& labels,
                    const std::vector<double>& alpha);

// Per-channel batch normalization over rows. gamma/beta are learnable
// (1,C) leaves; the running statistics are plain (1,C) tensors mutated in
// place during training-mode forwards:
//   running <- momentum * running + (1 - momentum) * batch_statistic
// Variance is the population variance (divide by row count); eps = 1e-8.
struct BatchNormState {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
};
Tensor batch_norm(const Tensor& x, BatchNormState& state, bool train, double momentum = 0.9);

inline constexpr double kBatchNormEps = 1e-8;

// --- parameter container ----------------------------------------------------

class ParameterStore {
 public:
  // Creates a named leaf (trainable) or plain tensor (not trainable).
  // Throws DataError on duplicate names or value/shape disagreement.
  Tensor create(const std::string& name, int rows, int cols, std::vector<double> init,
                bool trainable = true);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  bool trainable(const std::string& name) const;
  std::vector<std::string> names() const;  // ascending
  int64_t trainable_count() const;         // total trainable scalars
  void zero_grads();

 private:
  struct Entry {
    Tensor tensor;
    bool trainable = false;
  };
  std::map<std::string, Entry> entries_;
};

// One Adam update over every trainable entry using the gradients currently
// stored on the tensors. First/second moments and the step counter live in
// the store under the reserved "opt." prefix, so optimizer state survives
// checkpointing when requested. Throws DataError when a trainable entry has
// no gradient.
void adam_step(ParameterStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Flat binary container. Layout: magic "FPN1", then for each entry in name
// order: u32 name length, name bytes, u8 dtype (1 = float64), u8 rank (2),
// u32 dims, raw little-endian doubles. Entries under "opt." are skipped
// unless include_optimizer_state is set.
void save_parameters(const ParameterStore& store, const std::string& path,
                     bool include_optimizer_state = false);
// Loads into an existing store: every non-"opt." store entry must appear in
// the file with the same shape and vice versa. "opt." entries present in
// the file are created on demand.
void load_parameters(ParameterStore& store, const std::string& path);

}  // namespace orchard::diff
