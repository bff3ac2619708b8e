/*
 * Copyright 2026 CIGN Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "cign/common.hpp"
#include "cign/igmath.hpp"
#include "cign/kernels.hpp"
#include "cign/parameters.hpp"
#include "cign/rng.hpp"
#include "cign/tensor.hpp"

namespace cign {

// Define-by-run reverse-mode tape over the fixed layer set. A fresh tape is
// built per minibatch (the routing masks differ every step), forward values
// are computed eagerly at node creation, and backward() walks the nodes in
// reverse creation order, which is a valid topological order by
// construction. Parameters live outside the tape; their tape nodes copy the
// value in and accumulate gradients out.
template <typename T>
class Tape {
 public:
  using NodeId = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  const Tensor<T>& value(NodeId id) const { return nodes_[check(id)]->val; }
  const Tensor<T>& grad(NodeId id) const {
    if (!backward_done_) throw UsageError("tape: gradient requested before backward()");
    return nodes_[check(id)]->grad;
  }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  NodeId input(Tensor<T> v) {
    auto n = std::make_unique<Node>();
    n->val = std::move(v);
    return push(std::move(n));
  }

  NodeId param(Parameter<T>& p) {
    auto n = std::make_unique<ParamNode>();
    n->val = p.value;
    n->parameter = &p;
    return push(std::move(n));
  }

  NodeId conv2d(NodeId x, NodeId w, NodeId b, kernels::Padding padding, int stride = 1) {
    const Tensor<T>& in = value(x);
    const Tensor<T>& wt = value(w);
    const Tensor<T>& bias = value(b);
    if (in.rank() != 4) throw ConfigError("conv2d: input must be NHWC");
    if (wt.rank() != 4) throw ConfigError("conv2d: weights must be [k,k,in_c,out_c]");
    if (wt.dim(2) != in.dim(3)) {
      throw ConfigError("conv2d: weight input channels " + std::to_string(wt.dim(2)) +
                        " do not match input channels " + std::to_string(in.dim(3)));
    }
    const int filters = wt.dim(3);
    if (bias.size() != static_cast<std::size_t>(filters)) {
      throw ConfigError("conv2d: bias size does not match filter count");
    }
    auto n = std::make_unique<Conv2dNode>();
    n->x = x;
    n->w = w;
    n->b = b;
    n->geom = kernels::ConvGeom::make(in.dim(1), in.dim(2), in.dim(3), wt.dim(0), stride, padding);
    const int batch = in.dim(0);
    const int out_rows = batch * n->geom.out_h * n->geom.out_w;
    const int patch = n->geom.kernel * n->geom.kernel * n->geom.in_c;
    n->col = Tensor<T>({out_rows, patch});
    kernels::im2col(in, n->geom, n->col);
    n->val = Tensor<T>({batch, n->geom.out_h, n->geom.out_w, filters});
    // broadcast bias, then accumulate col * W
    T* out = n->val.data();
    for (int r = 0; r < out_rows; ++r) {
      for (int f = 0; f < filters; ++f) out[static_cast<std::size_t>(r) * filters + f] = bias[f];
    }
    kernels::matmul_accum(n->col.data(), wt.data(), out, out_rows, patch, filters);
    return push(std::move(n));
  }

  NodeId maxpool(NodeId x, int kernel, int stride) {
    const Tensor<T>& in = value(x);
    if (in.rank() != 4) throw ConfigError("maxpool: input must be NHWC");
    auto n = std::make_unique<MaxpoolNode>();
    n->x = x;
    n->geom = kernels::ConvGeom::make(in.dim(1), in.dim(2), in.dim(3), kernel, stride,
                                      kernels::Padding::valid);
    n->val = Tensor<T>({in.dim(0), n->geom.out_h, n->geom.out_w, in.dim(3)});
    n->argmax.assign(n->val.size(), -1);
    kernels::maxpool_forward(in, n->geom, n->val, n->argmax);
    return push(std::move(n));
  }

  NodeId relu(NodeId x) {
    const Tensor<T>& in = value(x);
    auto n = std::make_unique<ReluNode>();
    n->x = x;
    n->val = in;
    for (std::size_t i = 0; i < n->val.size(); ++i) {
      if (n->val[i] < T(0)) n->val[i] = T(0);
    }
    return push(std::move(n));
  }

  NodeId linear(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& in = value(x);
    const Tensor<T>& wt = value(w);
    const Tensor<T>& bias = value(b);
    if (in.rank() != 2) throw ConfigError("linear: input must be [rows, features]");
    if (wt.rank() != 2 || wt.dim(0) != in.dim(1)) {
      throw ConfigError("linear: weight shape " + shape_string(wt.shape()) +
                        " does not match input " + shape_string(in.shape()));
    }
    const int rows = in.dim(0), units = wt.dim(1);
    if (bias.size() != static_cast<std::size_t>(units)) {
      throw ConfigError("linear: bias size does not match output width");
    }
    auto n = std::make_unique<LinearNode>();
    n->x = x;
    n->w = w;
    n->b = b;
    n->val = Tensor<T>({rows, units});
    T* out = n->val.data();
    for (int r = 0; r < rows; ++r) {
      for (int u = 0; u < units; ++u) out[static_cast<std::size_t>(r) * units + u] = bias[u];
    }
    kernels::matmul_accum(in.data(), wt.data(), out, rows, in.dim(1), units);
    return push(std::move(n));
  }

  // Inverted dropout: in train mode kept activations are scaled by
  // 1/(1-p) so eval is the exact identity (no node is created).
  NodeId dropout(NodeId x, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
    if (mode == Mode::eval || p == 0.0) return x;
    const Tensor<T>& in = value(x);
    auto n = std::make_unique<DropoutNode>();
    n->x = x;
    n->scale = static_cast<T>(1.0 / (1.0 - p));
    n->mask.resize(in.size());
    n->val = Tensor<T>(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
      n->mask[i] = rng.uniform() >= p ? 1 : 0;
      n->val[i] = n->mask[i] ? in[i] * n->scale : T(0);
    }
    return push(std::move(n));
  }

  NodeId flatten(NodeId x) {
    const Tensor<T>& in = value(x);
    if (in.rank() < 2) throw ConfigError("flatten: input must have a batch dimension");
    const int rows = in.dim(0);
    const int cols = static_cast<int>(in.size()) / rows;
    auto n = std::make_unique<FlattenNode>();
    n->x = x;
    n->val = Tensor<T>({rows, cols});
    std::copy(in.data(), in.data() + in.size(), n->val.data());
    return push(std::move(n));
  }

  // Selects rows (leading-dimension slices) by index; the routing masks are
  // applied to minibatches through this node. Backward scatter-adds, so a
  // row selected by several children accumulates all its error signals in
  // the parent.
  NodeId gather_rows(NodeId x, std::vector<int> rows) {
    const Tensor<T>& in = value(x);
    if (rows.empty()) throw UsageError("gather_rows: empty row selection");
    std::vector<int> shape = in.shape();
    const std::size_t row_sz = in.size() / static_cast<std::size_t>(shape[0]);
    for (int r : rows) {
      if (r < 0 || r >= shape[0]) throw UsageError("gather_rows: row index out of range");
    }
    shape[0] = static_cast<int>(rows.size());
    auto n = std::make_unique<GatherRowsNode>();
    n->x = x;
    n->rows = std::move(rows);
    n->val = Tensor<T>(shape);
    for (std::size_t i = 0; i < n->rows.size(); ++i) {
      std::copy(in.data() + n->rows[i] * row_sz, in.data() + (n->rows[i] + 1) * row_sz,
                n->val.data() + i * row_sz);
    }
    return push(std::move(n));
  }

  NodeId tempered_softmax(NodeId logits, T tau) {
    auto n = std::make_unique<TemperedSoftmaxNode>();
    n->x = logits;
    n->tau = tau;
    n->val = ig::tempered_softmax(value(logits), tau);
    return push(std::move(n));
  }

  // Weighted multinomial cross-entropy: sum_r weight[r] * (-log p(label_r)).
  // Fused with the softmax for stability.
  NodeId softmax_xent(NodeId logits, std::vector<int> labels, std::vector<T> weights) {
    const Tensor<T>& z = value(logits);
    if (z.rank() != 2) throw ConfigError("softmax_xent: logits must be [rows, classes]");
    const int rows = z.dim(0), classes = z.dim(1);
    if (static_cast<int>(labels.size()) != rows || weights.size() != labels.size()) {
      throw UsageError("softmax_xent: labels/weights do not match logits rows");
    }
    auto n = std::make_unique<SoftmaxXentNode>();
    n->x = logits;
    n->labels = std::move(labels);
    n->weights = std::move(weights);
    n->probs = ig::tempered_softmax(z, T(1));
    T loss = 0;
    for (int r = 0; r < rows; ++r) {
      const int y = n->labels[r];
      if (y < 0 || y >= classes) throw UsageError("softmax_xent: label out of range");
      const T p = std::max(n->probs.at2(r, y), static_cast<T>(ig::kLogClamp));
      loss -= n->weights[r] * std::log(p);
    }
    n->val = Tensor<T>::scalar(loss);
    return push(std::move(n));
  }

  // Routing loss at one split node: -lambda_ig * IG_balanced of the joint
  // estimated from the branch probabilities. Gradients flow through the
  // joint estimate into the probabilities (and further into router logits).
  NodeId ig_loss(NodeId probs, std::vector<int> labels, int class_count, T lambda_ig,
                 T lambda_balance) {
    const Tensor<T>& p = value(probs);
    auto n = std::make_unique<IgLossNode>();
    n->x = probs;
    n->labels = std::move(labels);
    n->lambda_ig = lambda_ig;
    n->lambda_balance = lambda_balance;
    n->joint = ig::estimate_joint(std::span<const int>(n->labels), p, class_count);
    n->val = Tensor<T>::scalar(ig::ig_loss_value(n->joint, lambda_ig, lambda_balance));
    return push(std::move(n));
  }

  NodeId sum_scalars(std::vector<NodeId> parts) {
    if (parts.empty()) throw UsageError("sum_scalars: no inputs");
    auto n = std::make_unique<SumScalarsNode>();
    T total = 0;
    for (NodeId id : parts) {
      if (value(id).size() != 1) throw UsageError("sum_scalars: inputs must be scalars");
      total += value(id)[0];
    }
    n->parts = std::move(parts);
    n->val = Tensor<T>::scalar(total);
    return push(std::move(n));
  }

  NodeId scale_scalar(NodeId x, T factor) {
    if (value(x).size() != 1) throw UsageError("scale_scalar: input must be scalar");
    auto n = std::make_unique<ScaleScalarNode>();
    n->x = x;
    n->factor = factor;
    n->val = Tensor<T>::scalar(value(x)[0] * factor);
    return push(std::move(n));
  }

  NodeId sum_all(NodeId x) {
    auto n = std::make_unique<SumAllNode>();
    n->x = x;
    T total = 0;
    for (std::size_t i = 0; i < value(x).size(); ++i) total += value(x)[i];
    n->val = Tensor<T>::scalar(total);
    return push(std::move(n));
  }

  NodeId half_sum_squares(NodeId x) {
    auto n = std::make_unique<HalfSumSquaresNode>();
    n->x = x;
    T total = 0;
    for (std::size_t i = 0; i < value(x).size(); ++i) total += value(x)[i] * value(x)[i];
    n->val = Tensor<T>::scalar(total / T(2));
    return push(std::move(n));
  }

  // Reverse pass from a scalar loss. Gradient slots of every node at or
  // before the loss are populated; parameters referenced by param() nodes
  // receive accumulated gradients. Unreached nodes keep zero gradient.
  void backward(NodeId loss) {
    if (value(loss).size() != 1) throw UsageError("backward: loss must be a scalar");
    for (NodeId id = 0; id <= loss; ++id) {
      Node& n = *nodes_[static_cast<std::size_t>(id)];
      if (!n.grad.same_shape(n.val)) n.grad = Tensor<T>(n.val.shape());
      else n.grad.fill(T(0));
    }
    backward_done_ = true;
    nodes_[static_cast<std::size_t>(loss)]->grad[0] = T(1);
    for (NodeId id = loss; id >= 0; --id) {
      nodes_[static_cast<std::size_t>(id)]->backward_step(*this);
    }
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    virtual void backward_step(Tape&) {}
    virtual ~Node() = default;
  };

  Tensor<T>& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)]->grad; }

  struct ParamNode : Node {
    Parameter<T>* parameter = nullptr;
    void backward_step(Tape&) override {
      T* g = parameter->grad.data();
      for (std::size_t i = 0; i < this->grad.size(); ++i) g[i] += this->grad[i];
    }
  };

  struct Conv2dNode : Node {
    NodeId x = -1, w = -1, b = -1;
    kernels::ConvGeom geom;
    Tensor<T> col;
    void backward_step(Tape& t) override {
      const int filters = this->val.dim(3);
      const int out_rows = static_cast<int>(this->val.size()) / filters;
      const int patch = geom.kernel * geom.kernel * geom.in_c;
      // dW += col' * dOut
      kernels::matmul_at_b_accum(col.data(), this->grad.data(), t.grad_ref(w).data(), out_rows,
                                 patch, filters);
      // db += column sums of dOut
      T* db = t.grad_ref(b).data();
      const T* g = this->grad.data();
      for (int r = 0; r < out_rows; ++r) {
        for (int f = 0; f < filters; ++f) db[f] += g[static_cast<std::size_t>(r) * filters + f];
      }
      // dIn += col2im(dOut * W')
      Tensor<T> dcol({out_rows, patch});
      kernels::matmul_a_bt_accum(this->grad.data(), t.value(w).data(), dcol.data(), out_rows,
                                 filters, patch);
      kernels::col2im_accum(dcol, geom, t.grad_ref(x));
    }
  };

  struct MaxpoolNode : Node {
    NodeId x = -1;
    kernels::ConvGeom geom;
    std::vector<int> argmax;
    void backward_step(Tape& t) override {
      kernels::maxpool_backward(this->grad, argmax, t.grad_ref(x));
    }
  };

  struct ReluNode : Node {
    NodeId x = -1;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      for (std::size_t i = 0; i < this->val.size(); ++i) {
        if (this->val[i] > T(0)) dx[i] += this->grad[i];
      }
    }
  };

  struct LinearNode : Node {
    NodeId x = -1, w = -1, b = -1;
    void backward_step(Tape& t) override {
      const Tensor<T>& in = t.value(x);
      const int rows = in.dim(0), features = in.dim(1), units = this->val.dim(1);
      kernels::matmul_at_b_accum(in.data(), this->grad.data(), t.grad_ref(w).data(), rows,
                                 features, units);
      T* db = t.grad_ref(b).data();
      const T* g = this->grad.data();
      for (int r = 0; r < rows; ++r) {
        for (int u = 0; u < units; ++u) db[u] += g[static_cast<std::size_t>(r) * units + u];
      }
      kernels::matmul_a_bt_accum(this->grad.data(), t.value(w).data(), t.grad_ref(x).data(), rows,
                                 units, features);
    }
  };

  struct DropoutNode : Node {
    NodeId x = -1;
    T scale = T(1);
    std::vector<std::uint8_t> mask;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      for (std::size_t i = 0; i < this->grad.size(); ++i) {
        if (mask[i]) dx[i] += this->grad[i] * scale;
      }
    }
  };

  struct FlattenNode : Node {
    NodeId x = -1;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      for (std::size_t i = 0; i < this->grad.size(); ++i) dx[i] += this->grad[i];
    }
  };

  struct GatherRowsNode : Node {
    NodeId x = -1;
    std::vector<int> rows;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      const std::size_t row_sz = this->val.size() / rows.size();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        T* dst = dx.data() + rows[i] * row_sz;
        const T* src = this->grad.data() + i * row_sz;
        for (std::size_t j = 0; j < row_sz; ++j) dst[j] += src[j];
      }
    }
  };

  struct TemperedSoftmaxNode : Node {
    NodeId x = -1;
    T tau = T(1);
    void backward_step(Tape& t) override {
      Tensor<T>& dz = t.grad_ref(x);
      const int rows = this->val.dim(0), k = this->val.dim(1);
      for (int r = 0; r < rows; ++r) {
        const T* p = this->val.data() + static_cast<std::size_t>(r) * k;
        const T* g = this->grad.data() + static_cast<std::size_t>(r) * k;
        T dot = 0;
        for (int j = 0; j < k; ++j) dot += g[j] * p[j];
        T* d = dz.data() + static_cast<std::size_t>(r) * k;
        for (int j = 0; j < k; ++j) d[j] += p[j] * (g[j] - dot) / tau;
      }
    }
  };

  struct SoftmaxXentNode : Node {
    NodeId x = -1;
    std::vector<int> labels;
    std::vector<T> weights;
    Tensor<T> probs;
    void backward_step(Tape& t) override {
      const T up = this->grad[0];
      Tensor<T>& dz = t.grad_ref(x);
      const int rows = probs.dim(0), classes = probs.dim(1);
      for (int r = 0; r < rows; ++r) {
        const T wr = up * weights[static_cast<std::size_t>(r)];
        T* d = dz.data() + static_cast<std::size_t>(r) * classes;
        const T* p = probs.data() + static_cast<std::size_t>(r) * classes;
        for (int c = 0; c < classes; ++c) d[c] += wr * p[c];
        d[labels[static_cast<std::size_t>(r)]] -= wr;
      }
    }
  };

  struct IgLossNode : Node {
    NodeId x = -1;
    std::vector<int> labels;
    T lambda_ig = T(1), lambda_balance = T(1);
    ig::JointEstimate<T> joint;
    void backward_step(Tape& t) override {
      ig::ig_loss_grad(joint, std::span<const int>(labels), lambda_ig, lambda_balance,
                       this->grad[0], t.grad_ref(x));
    }
  };

  struct SumScalarsNode : Node {
    std::vector<NodeId> parts;
    void backward_step(Tape& t) override {
      for (NodeId id : parts) t.grad_ref(id)[0] += this->grad[0];
    }
  };

  struct ScaleScalarNode : Node {
    NodeId x = -1;
    T factor = T(1);
    void backward_step(Tape& t) override { t.grad_ref(x)[0] += this->grad[0] * factor; }
  };

  struct SumAllNode : Node {
    NodeId x = -1;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += this->grad[0];
    }
  };

  struct HalfSumSquaresNode : Node {
    NodeId x = -1;
    void backward_step(Tape& t) override {
      Tensor<T>& dx = t.grad_ref(x);
      const Tensor<T>& v = t.value(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += this->grad[0] * v[i];
    }
  };

  std::size_t check(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
      throw UsageError("tape: invalid node id");
    }
    return static_cast<std::size_t>(id);
  }

  NodeId push(std::unique_ptr<Node> n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

}  // namespace cign
