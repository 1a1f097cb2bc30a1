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

#include "orchard/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>
#include <utility>

namespace orchard::diff {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

std::string shape_str(const Node& n) {
  return "(" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + ")";
}

NodePtr make_node(int rows, int cols, bool requires_grad) {
  if (rows < 1 || cols < 1) {
    throw DataError("tensor shape must be positive, got (" + std::to_string(rows) + "x" +
                    std::to_string(cols) + ")");
  }
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->values.assign(static_cast<size_t>(rows) * cols, 0.0);
  n->requires_grad = requires_grad;
  return n;
}

void ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.size()), 0.0);
}

bool any_grad(const std::vector<NodePtr>& parents) {
  for (const auto& p : parents) {
    if (p->requires_grad) return true;
  }
  return false;
}

// Result node inheriting requires_grad from its parents. The caller
// attaches backward_fn only when requires_grad came out true.
NodePtr op_node(int rows, int cols, std::vector<NodePtr> parents) {
  NodePtr n = make_node(rows, cols, any_grad(parents));
  n->parents = std::move(parents);
  return n;
}

}  // namespace

Tensor Tensor::constant(int rows, int cols, std::vector<double> values) {
  NodePtr n = make_node(rows, cols, false);
  if (values.size() != n->values.size()) {
    throw DataError("constant needs " + std::to_string(n->values.size()) + " values, got " +
                    std::to_string(values.size()));
  }
  n->values = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(make_node(rows, cols, false)); }

Tensor Tensor::leaf(int rows, int cols, std::vector<double> values) {
  NodePtr n = make_node(rows, cols, true);
  if (values.size() != n->values.size()) {
    throw DataError("leaf needs " + std::to_string(n->values.size()) + " values, got " +
                    std::to_string(values.size()));
  }
  n->values = std::move(values);
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (size() != 1) throw DataError("item() on non-scalar tensor " + shape_str(*node_));
  return node_->values[0];
}

void Tensor::backward() {
  if (size() != 1) {
    throw DataError("backward() starts from a scalar, got " + shape_str(*node_));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS over grad-requiring ancestors: a node is
  // emitted after all of its parents, so the reversed order visits every
  // node before the nodes it feeds.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  std::unordered_set<Node*> seen;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  NodePtr an = a.node(), bn = b.node();
  if (an->cols != bn->rows) {
    throw DataError("matmul shape mismatch " + shape_str(*an) + " x " + shape_str(*bn));
  }
  const int m = an->rows, k = an->cols, n = bn->cols;
  NodePtr out = op_node(m, n, {an, bn});
  {
    const double* av = an->values.data();
    const double* bv = bn->values.data();
    double* ov = out->values.data();
#pragma omp parallel for schedule(static) if (m > 16)
    for (int i = 0; i < m; ++i) {
      double* orow = ov + static_cast<size_t>(i) * n;
      const double* arow = av + static_cast<size_t>(i) * k;
      for (int t = 0; t < k; ++t) {
        const double av_it = arow[t];
        const double* brow = bv + static_cast<size_t>(t) * n;
        for (int j = 0; j < n; ++j) orow[j] += av_it * brow[j];
      }
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, an, bn, m, k, n] {
      const double* g = self->grad.data();
      if (an->requires_grad) {
        ensure_grad(*an);
        const double* bv = bn->values.data();
        double* ga = an->grad.data();
#pragma omp parallel for schedule(static) if (m > 16)
        for (int i = 0; i < m; ++i) {
          const double* grow = g + static_cast<size_t>(i) * n;
          double* garow = ga + static_cast<size_t>(i) * k;
          for (int t = 0; t < k; ++t) {
            const double* brow = bv + static_cast<size_t>(t) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[t] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        const double* av = an->values.data();
        double* gb = bn->grad.data();
#pragma omp parallel for schedule(static) if (k > 16)
        for (int t = 0; t < k; ++t) {
          double* gbrow = gb + static_cast<size_t>(t) * n;
          for (int i = 0; i < m; ++i) {
            const double av_it = av[static_cast<size_t>(i) * k + t];
            const double* grow = g + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av_it * grow[j];
          }
        }
      }
    };
  }
  return Tensor::wrap(out);
}

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, bool is_mul) {
  NodePtr an = a.node(), bn = b.node();
  if (an->rows != bn->rows || an->cols != bn->cols) {
    throw DataError(std::string(is_mul ? "mul" : "add") + " shape mismatch " + shape_str(*an) +
                    " vs " + shape_str(*bn));
  }
  NodePtr out = op_node(an->rows, an->cols, {an, bn});
  const size_t sz = out->values.size();
  for (size_t i = 0; i < sz; ++i) {
    out->values[i] = is_mul ? an->values[i] * bn->values[i] : an->values[i] + bn->values[i];
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, an, bn, is_mul, sz] {
      const double* g = self->grad.data();
      if (an->requires_grad) {
        ensure_grad(*an);
        for (size_t i = 0; i < sz; ++i) an->grad[i] += is_mul ? g[i] * bn->values[i] : g[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (size_t i = 0; i < sz; ++i) bn->grad[i] += is_mul ? g[i] * an->values[i] : g[i];
      }
    };
  }
  return Tensor::wrap(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, true); }

Tensor scale(const Tensor& x, double s) {
  NodePtr xn = x.node();
  NodePtr out = op_node(xn->rows, xn->cols, {xn});
  const size_t sz = out->values.size();
  for (size_t i = 0; i < sz; ++i) out->values[i] = xn->values[i] * s;
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, s, sz] {
      ensure_grad(*xn);
      for (size_t i = 0; i < sz; ++i) xn->grad[i] += self->grad[i] * s;
    };
  }
  return Tensor::wrap(out);
}

Tensor add_rowvec(const Tensor& x, const Tensor& bias) {
  NodePtr xn = x.node(), bnode = bias.node();
  if (bnode->rows != 1 || bnode->cols != xn->cols) {
    throw DataError("add_rowvec bias " + shape_str(*bnode) + " does not broadcast over " +
                    shape_str(*xn));
  }
  const int m = xn->rows, n = xn->cols;
  NodePtr out = op_node(m, n, {xn, bnode});
#pragma omp parallel for schedule(static) if (m > 64)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out->values[static_cast<size_t>(i) * n + j] =
          xn->values[static_cast<size_t>(i) * n + j] + bnode->values[j];
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, bnode, m, n] {
      const double* g = self->grad.data();
      if (xn->requires_grad) {
        ensure_grad(*xn);
        const size_t sz = static_cast<size_t>(m) * n;
        for (size_t i = 0; i < sz; ++i) xn->grad[i] += g[i];
      }
      if (bnode->requires_grad) {
        ensure_grad(*bnode);
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += g[static_cast<size_t>(i) * n + j];
          bnode->grad[j] += acc;
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor relu(const Tensor& x) {
  NodePtr xn = x.node();
  NodePtr out = op_node(xn->rows, xn->cols, {xn});
  const size_t sz = out->values.size();
  for (size_t i = 0; i < sz; ++i) out->values[i] = xn->values[i] > 0.0 ? xn->values[i] : 0.0;
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, sz] {
      ensure_grad(*xn);
      for (size_t i = 0; i < sz; ++i) {
        if (xn->values[i] > 0.0) xn->grad[i] += self->grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor max_pool_rows(const Tensor& x, int groups, int group_size) {
  NodePtr xn = x.node();
  if (groups < 1 || group_size < 1 || xn->rows != groups * group_size) {
    throw DataError("max_pool_rows expects " + std::to_string(groups) + "*" +
                    std::to_string(group_size) + " rows, tensor is " + shape_str(*xn));
  }
  const int n = xn->cols;
  NodePtr out = op_node(groups, n, {xn});
  auto args = std::make_shared<std::vector<int>>(static_cast<size_t>(groups) * n);
#pragma omp parallel for schedule(static) if (groups > 16)
  for (int g = 0; g < groups; ++g) {
    for (int j = 0; j < n; ++j) {
      int best_row = g * group_size;
      double best = xn->values[static_cast<size_t>(best_row) * n + j];
      for (int k = 1; k < group_size; ++k) {
        const int row = g * group_size + k;
        const double v = xn->values[static_cast<size_t>(row) * n + j];
        if (v > best) {  // strict, so ties keep the lowest row
          best = v;
          best_row = row;
        }
      }
      out->values[static_cast<size_t>(g) * n + j] = best;
      (*args)[static_cast<size_t>(g) * n + j] = best_row;
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, args, groups, n] {
      ensure_grad(*xn);
      for (int g = 0; g < groups; ++g) {
        for (int j = 0; j < n; ++j) {
          const size_t o = static_cast<size_t>(g) * n + j;
          xn->grad[static_cast<size_t>((*args)[o]) * n + j] += self->grad[o];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor mean_all(const Tensor& x) {
  NodePtr xn = x.node();
  NodePtr out = op_node(1, 1, {xn});
  double acc = 0.0;
  for (const double v : xn->values) acc += v;
  const double inv = 1.0 / static_cast<double>(xn->size());
  out->values[0] = acc * inv;
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, inv] {
      ensure_grad(*xn);
      const double g = self->grad[0] * inv;
      for (double& gv : xn->grad) gv += g;
    };
  }
  return Tensor::wrap(out);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  NodePtr an = a.node(), bn = b.node();
  if (an->rows != bn->rows) {
    throw DataError("concat_cols row mismatch " + shape_str(*an) + " vs " + shape_str(*bn));
  }
  const int m = an->rows, na = an->cols, nb = bn->cols;
  NodePtr out = op_node(m, na + nb, {an, bn});
#pragma omp parallel for schedule(static) if (m > 64)
  for (int i = 0; i < m; ++i) {
    double* orow = out->values.data() + static_cast<size_t>(i) * (na + nb);
    std::memcpy(orow, an->values.data() + static_cast<size_t>(i) * na, sizeof(double) * na);
    std::memcpy(orow + na, bn->values.data() + static_cast<size_t>(i) * nb, sizeof(double) * nb);
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, an, bn, m, na, nb] {
      if (an->requires_grad) ensure_grad(*an);
      if (bn->requires_grad) ensure_grad(*bn);
      for (int i = 0; i < m; ++i) {
        const double* grow = self->grad.data() + static_cast<size_t>(i) * (na + nb);
        if (an->requires_grad) {
          for (int j = 0; j < na; ++j) an->grad[static_cast<size_t>(i) * na + j] += grow[j];
        }
        if (bn->requires_grad) {
          for (int j = 0; j < nb; ++j) bn->grad[static_cast<size_t>(i) * nb + j] += grow[na + j];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  NodePtr xn = x.node();
  if (rows.empty()) throw DataError("gather_rows needs at least one row index");
  for (const int r : rows) {
    if (r < 0 || r >= xn->rows) {
      throw DataError("gather_rows index " + std::to_string(r) + " outside tensor " +
                      shape_str(*xn));
    }
  }
  const int m = static_cast<int>(rows.size()), n = xn->cols;
  NodePtr out = op_node(m, n, {xn});
  auto idx = std::make_shared<std::vector<int>>(rows);
#pragma omp parallel for schedule(static) if (m > 64)
  for (int i = 0; i < m; ++i) {
    std::memcpy(out->values.data() + static_cast<size_t>(i) * n,
                xn->values.data() + static_cast<size_t>((*idx)[i]) * n, sizeof(double) * n);
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, idx, m, n] {
      ensure_grad(*xn);
      // Duplicate indices scatter into the same row. Parallelizing over
      // columns keeps each element's accumulation order fixed (ascending
      // i), so the result is identical for any thread count.
#pragma omp parallel for schedule(static) if (n > 16 && m > 256)
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) {
          xn->grad[static_cast<size_t>((*idx)[i]) * n + j] +=
              self->grad[static_cast<size_t>(i) * n + j];
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor interp3(const Tensor& source, const std::vector<std::array<int, 3>>& indices,
               const std::vector<std::array<double, 3>>& weights) {
  NodePtr sn = source.node();
  if (indices.size() != weights.size()) {
    throw DataError("interp3 index/weight count mismatch");
  }
  if (indices.empty()) throw DataError("interp3 needs at least one query");
  for (const auto& tri : indices) {
    for (const int r : tri) {
      if (r < 0 || r >= sn->rows) {
        throw DataError("interp3 index " + std::to_string(r) + " outside tensor " +
                        shape_str(*sn));
      }
    }
  }
  const int p = static_cast<int>(indices.size()), n = sn->cols;
  NodePtr out = op_node(p, n, {sn});
  auto idx = std::make_shared<std::vector<std::array<int, 3>>>(indices);
  auto wts = std::make_shared<std::vector<std::array<double, 3>>>(weights);
#pragma omp parallel for schedule(static) if (p > 64)
  for (int q = 0; q < p; ++q) {
    double* orow = out->values.data() + static_cast<size_t>(q) * n;
    for (int t = 0; t < 3; ++t) {
      const double w = (*wts)[q][t];
      const double* srow = sn->values.data() + static_cast<size_t>((*idx)[q][t]) * n;
      for (int j = 0; j < n; ++j) orow[j] += w * srow[j];
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, sn, idx, wts, p, n] {
      ensure_grad(*sn);
      // Column-parallel scatter for the same determinism reason as
      // gather_rows.
#pragma omp parallel for schedule(static) if (n > 16 && p > 256)
      for (int j = 0; j < n; ++j) {
        for (int q = 0; q < p; ++q) {
          const double g = self->grad[static_cast<size_t>(q) * n + j];
          for (int t = 0; t < 3; ++t) {
            sn->grad[static_cast<size_t>((*idx)[q][t]) * n + j] += (*wts)[q][t] * g;
          }
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor softmax_rows(const Tensor& x) {
  NodePtr xn = x.node();
  const int m = xn->rows, n = xn->cols;
  NodePtr out = op_node(m, n, {xn});
  for (int i = 0; i < m; ++i) {
    const double* row = xn->values.data() + static_cast<size_t>(i) * n;
    double* orow = out->values.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= sum;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, m, n] {
      ensure_grad(*xn);
      for (int i = 0; i < m; ++i) {
        const double* y = self->values.data() + static_cast<size_t>(i) * n;
        const double* gy = self->grad.data() + static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < n; ++j) {
          xn->grad[static_cast<size_t>(i) * n + j] += y[j] * (gy[j] - dot);
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor log_elem(const Tensor& x) {
  NodePtr xn = x.node();
  NodePtr out = op_node(xn->rows, xn->cols, {xn});
  const size_t sz = out->values.size();
  for (size_t i = 0; i < sz; ++i) {
    if (!(xn->values[i] > 0.0)) {
      throw NumericError("log of non-positive value " + std::to_string(xn->values[i]));
    }
    out->values[i] = std::log(xn->values[i]);
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, sz] {
      ensure_grad(*xn);
      for (size_t i = 0; i < sz; ++i) xn->grad[i] += self->grad[i] / xn->values[i];
    };
  }
  return Tensor::wrap(out);
}

Tensor log_softmax_rows(const Tensor& x) {
  NodePtr xn = x.node();
  const int m = xn->rows, n = xn->cols;
  NodePtr out = op_node(m, n, {xn});
  for (int i = 0; i < m; ++i) {
    const double* row = xn->values.data() + static_cast<size_t>(i) * n;
    double* orow = out->values.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) orow[j] = row[j] - lse;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, m, n] {
      ensure_grad(*xn);
      for (int i = 0; i < m; ++i) {
        const double* lp = self->values.data() + static_cast<size_t>(i) * n;
        const double* gy = self->grad.data() + static_cast<size_t>(i) * n;
        double gsum = 0.0;
        for (int j = 0; j < n; ++j) gsum += gy[j];
        for (int j = 0; j < n; ++j) {
          xn->grad[static_cast<size_t>(i) * n + j] += gy[j] - std::exp(lp[j]) * gsum;
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor nll_weighted(const Tensor& logp, const std::vector<int>& labels,
                    const std::vector<double>& alpha) {
  NodePtr ln = logp.node();
  const int m = ln->rows, c = ln->cols;
  if (static_cast<int>(labels.size()) != m) {
    throw DataError("nll_weighted got " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(m) + " rows");
  }
  if (static_cast<int>(alpha.size()) != c) {
    throw DataError("nll_weighted got " + std::to_string(alpha.size()) + " class weights for " +
                    std::to_string(c) + " classes");
  }
  for (const int l : labels) {
    if (l < 0 || l >= c) {
      throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  NodePtr out = op_node(1, 1, {ln});
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    acc += alpha[labels[i]] * ln->values[static_cast<size_t>(i) * c + labels[i]];
  }
  out->values[0] = -acc / m;
  if (out->requires_grad) {
    Node* self = out.get();
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto al = std::make_shared<std::vector<double>>(alpha);
    out->backward_fn = [self, ln, lab, al, m, c] {
      ensure_grad(*ln);
      const double g = self->grad[0] / m;
      for (int i = 0; i < m; ++i) {
        ln->grad[static_cast<size_t>(i) * c + (*lab)[i]] -= (*al)[(*lab)[i]] * g;
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, bool train, double momentum) {
  NodePtr xn = x.node();
  const int m = xn->rows, c = xn->cols;
  auto check = [&](const Tensor& t, const char* what) {
    if (!t.defined() || t.rows() != 1 || t.cols() != c) {
      throw DataError(std::string("batch_norm ") + what + " must be (1x" + std::to_string(c) +
                      ") to match input " + shape_str(*xn));
    }
  };
  check(state.gamma, "gamma");
  check(state.beta, "beta");
  check(state.running_mean, "running_mean");
  check(state.running_var, "running_var");

  NodePtr gn = state.gamma.node(), bn = state.beta.node();
  NodePtr out = op_node(m, c, {xn, gn, bn});

  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * c);
  auto inv_std = std::make_shared<std::vector<double>>(c);

  if (train) {
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) mean[j] += xn->values[static_cast<size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j) mean[j] /= m;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) {
        const double d = xn->values[static_cast<size_t>(i) * c + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (int j = 0; j < c; ++j) var[j] /= m;  // population variance
    for (int j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) {
        const size_t o = static_cast<size_t>(i) * c + j;
        (*xhat)[o] = (xn->values[o] - mean[j]) * (*inv_std)[j];
        out->values[o] = gn->values[j] * (*xhat)[o] + bn->values[j];
      }
    }
    auto& rm = state.running_mean.raw_values();
    auto& rv = state.running_var.raw_values();
    for (int j = 0; j < c; ++j) {
      rm[j] = momentum * rm[j] + (1.0 - momentum) * mean[j];
      rv[j] = momentum * rv[j] + (1.0 - momentum) * var[j];
    }
  } else {
    const auto& rm = state.running_mean.values();
    const auto& rv = state.running_var.values();
    for (int j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(rv[j] + kBatchNormEps);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) {
        const size_t o = static_cast<size_t>(i) * c + j;
        (*xhat)[o] = (xn->values[o] - rm[j]) * (*inv_std)[j];
        out->values[o] = gn->values[j] * (*xhat)[o] + bn->values[j];
      }
    }
  }

  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, xn, gn, bn, xhat, inv_std, m, c, train] {
      const double* g = self->grad.data();
      if (gn->requires_grad) {
        ensure_grad(*gn);
        for (int j = 0; j < c; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) {
            const size_t o = static_cast<size_t>(i) * c + j;
            acc += g[o] * (*xhat)[o];
          }
          gn->grad[j] += acc;
        }
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (int j = 0; j < c; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += g[static_cast<size_t>(i) * c + j];
          bn->grad[j] += acc;
        }
      }
      if (!xn->requires_grad) return;
      ensure_grad(*xn);
      if (!train) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < c; ++j) {
            const size_t o = static_cast<size_t>(i) * c + j;
            xn->grad[o] += g[o] * gn->values[j] * (*inv_std)[j];
          }
        }
        return;
      }
      // Training mode differentiates through the batch statistics:
      // dx = inv_std/m * (m*dxh - sum(dxh) - xhat * sum(dxh*xhat))
      for (int j = 0; j < c; ++j) {
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < m; ++i) {
          const size_t o = static_cast<size_t>(i) * c + j;
          const double dxh = g[o] * gn->values[j];
          s1 += dxh;
          s2 += dxh * (*xhat)[o];
        }
        const double k = (*inv_std)[j] / m;
        for (int i = 0; i < m; ++i) {
          const size_t o = static_cast<size_t>(i) * c + j;
          const double dxh = g[o] * gn->values[j];
          xn->grad[o] += k * (m * dxh - s1 - (*xhat)[o] * s2);
        }
      }
    };
  }
  return Tensor::wrap(out);
}

// --- parameter store --------------------------------------------------------

Tensor ParameterStore::create(const std::string& name, int rows, int cols,
                              std::vector<double> init, bool trainable) {
  if (name.empty()) throw DataError("parameter name must not be empty");
  if (entries_.count(name)) throw DataError("duplicate parameter name '" + name + "'");
  Tensor t = trainable ? Tensor::leaf(rows, cols, std::move(init))
                       : Tensor::constant(rows, cols, std::move(init));
  entries_.emplace(name, Entry{t, trainable});
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("no parameter named '" + name + "'");
  return it->second.tensor;
}

bool ParameterStore::trainable(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("no parameter named '" + name + "'");
  return it->second.trainable;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

int64_t ParameterStore::trainable_count() const {
  int64_t total = 0;
  for (const auto& [name, entry] : entries_) {
    if (entry.trainable) total += entry.tensor.size();
  }
  return total;
}

void ParameterStore::zero_grads() {
  for (auto& [name, entry] : entries_) entry.tensor.zero_grad();
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps) {
  if (!store.has("opt.step")) store.create("opt.step", 1, 1, {0.0}, false);
  Tensor step = store.get("opt.step");
  const double t = (step.raw_values()[0] += 1.0);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);

  for (const std::string& name : store.names()) {
    if (name.rfind("opt.", 0) == 0 || !store.trainable(name)) continue;
    Tensor p = store.get(name);
    if (p.grad().empty()) {
      throw DataError("parameter '" + name + "' has no gradient; run backward first");
    }
    const std::string mname = "opt.m." + name, vname = "opt.v." + name;
    if (!store.has(mname)) {
      store.create(mname, p.rows(), p.cols(), std::vector<double>(p.size(), 0.0), false);
      store.create(vname, p.rows(), p.cols(), std::vector<double>(p.size(), 0.0), false);
    }
    auto& m = store.get(mname).raw_values();
    auto& v = store.get(vname).raw_values();
    auto& val = p.raw_values();
    const auto& g = p.grad();
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'P', 'N', '1'};
constexpr uint8_t kDtypeF64 = 1;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double d) {
  const uint64_t v = std::bit_cast<uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

uint32_t take_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError(path + ": truncated parameter container");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double take_f64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw ParseError(path + ": truncated parameter container");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

bool is_optimizer_entry(const std::string& name) { return name.rfind("opt.", 0) == 0; }

}  // namespace

void save_parameters(const ParameterStore& store, const std::string& path,
                     bool include_optimizer_state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  for (const std::string& name : store.names()) {
    if (!include_optimizer_state && is_optimizer_entry(name)) continue;
    const Tensor t = store.get(name);
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(kDtypeF64));
    out.put(static_cast<char>(2));  // rank
    put_u32(out, static_cast<uint32_t>(t.rows()));
    put_u32(out, static_cast<uint32_t>(t.cols()));
    for (const double v : t.values()) put_f64(out, v);
  }
  if (!out) throw DataError("failed writing " + path);
}

void load_parameters(ParameterStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open parameter container " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path + ": not a parameter container (bad magic)");
  }
  struct FileEntry {
    int rows, cols;
    std::vector<double> values;
  };
  std::map<std::string, FileEntry> file;
  while (in.peek() != EOF) {
    const uint32_t name_len = take_u32(in, path);
    if (name_len == 0 || name_len > 4096) {
      throw ParseError(path + ": implausible name length " + std::to_string(name_len));
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError(path + ": truncated name");
    const int dtype = in.get();
    const int rank = in.get();
    if (dtype != kDtypeF64) throw ParseError(path + ": unsupported dtype code");
    if (rank != 2) throw ParseError(path + ": unsupported rank " + std::to_string(rank));
    const uint32_t rows = take_u32(in, path);
    const uint32_t cols = take_u32(in, path);
    if (rows == 0 || cols == 0 || static_cast<uint64_t>(rows) * cols > (1u << 28)) {
      throw ParseError(path + ": implausible shape for '" + name + "'");
    }
    FileEntry e{static_cast<int>(rows), static_cast<int>(cols), {}};
    e.values.resize(static_cast<size_t>(rows) * cols);
    for (double& v : e.values) v = take_f64(in, path);
    if (!file.emplace(std::move(name), std::move(e)).second) {
      throw ParseError(path + ": duplicate entry");
    }
  }

  for (const std::string& name : store.names()) {
    if (is_optimizer_entry(name)) continue;
    if (!file.count(name)) {
      throw DataError(path + " is missing parameter '" + name + "'");
    }
  }
  for (auto& [name, e] : file) {
    if (!store.has(name)) {
      if (is_optimizer_entry(name)) {
        store.create(name, e.rows, e.cols, std::move(e.values), false);
        continue;
      }
      throw DataError(path + " holds unknown parameter '" + name + "'");
    }
    Tensor t = store.get(name);
    if (t.rows() != e.rows || t.cols() != e.cols) {
      throw DataError("parameter '" + name + "' is (" + std::to_string(e.rows) + "x" +
                      std::to_string(e.cols) + ") in " + path + " but (" +
                      std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                      ") in the network");
    }
    t.raw_values() = std::move(e.values);
  }
}

}  // namespace orchard::diff
