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

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cign/archs.hpp"
#include "cign/autodiff.hpp"
#include "cign/igmath.hpp"
#include "cign/parameters.hpp"
#include "cign/rng.hpp"
#include "cign/tensor.hpp"
#include "cign/tree.hpp"

namespace cign {

// Sparse-execution bookkeeping for one forward pass: which batch rows each
// node saw, and the branch distribution its router produced for them.
template <typename T>
struct RoutingState {
  struct PerNode {
    bool reached = false;
    std::vector<int> sample_rows;  // ascending batch row indices
    Tensor<T> branch_probs;        // [rows, K], split nodes only
  };
  int batch_size = 0;
  std::vector<PerNode> nodes;

  std::vector<char> mask_of(int node) const {
    std::vector<char> m(static_cast<std::size_t>(batch_size), 0);
    for (int r : nodes[static_cast<std::size_t>(node)].sample_rows) m[static_cast<std::size_t>(r)] = 1;
    return m;
  }

  // Mask invariants: the root sees the whole batch; in eval mode the child
  // masks of every split partition its mask; in train mode they are subsets
  // covering it. Returns an explanation for the first violation.
  std::optional<std::string> verify(const TreeSpec& tree, Mode mode) const {
    const auto& root = nodes[0];
    if (static_cast<int>(root.sample_rows.size()) != batch_size) {
      return "root mask does not cover the batch";
    }
    for (int id : tree.split_ids()) {
      const auto& n = nodes[static_cast<std::size_t>(id)];
      if (!n.reached) continue;
      const int k = tree.child_count(id);
      std::vector<int> seen(static_cast<std::size_t>(batch_size), 0);
      for (int j = 0; j < k; ++j) {
        const auto& c = nodes[static_cast<std::size_t>(tree.child(id, j))];
        for (int r : c.sample_rows) ++seen[static_cast<std::size_t>(r)];
      }
      std::vector<char> parent = mask_of(id);
      for (int r = 0; r < batch_size; ++r) {
        const int count = seen[static_cast<std::size_t>(r)];
        if (!parent[static_cast<std::size_t>(r)]) {
          if (count != 0) return "child mask of node " + std::to_string(id) + " escapes parent";
          continue;
        }
        if (count < 1) return "sample lost at node " + std::to_string(id);
        if (mode == Mode::eval && count != 1) {
          return "eval mask of node " + std::to_string(id) + " is not a partition";
        }
        if (count > k) return "sample duplicated beyond fan-out at node " + std::to_string(id);
      }
    }
    // every sample reaches at least one leaf (exactly one in eval mode)
    std::vector<int> leaf_hits(static_cast<std::size_t>(batch_size), 0);
    for (int id : tree.leaf_ids()) {
      for (int r : nodes[static_cast<std::size_t>(id)].sample_rows) ++leaf_hits[static_cast<std::size_t>(r)];
    }
    for (int r = 0; r < batch_size; ++r) {
      if (leaf_hits[static_cast<std::size_t>(r)] < 1) return "sample reaches no leaf";
      if (mode == Mode::eval && leaf_hits[static_cast<std::size_t>(r)] != 1) {
        return "sample reaches more than one leaf in eval mode";
      }
    }
    return std::nullopt;
  }
};

struct LossWeights {
  double lambda_ig = 1.0;
  double lambda_balance = 1.0;
};

struct StarvedNode {
  int node = 0;
  bool split = false;
};

// The tree-structured network. Owns the parameters; builds a fresh autodiff
// tape per minibatch with the routing masks of that batch.
template <typename T>
class CignNetwork {
 public:
  explicit CignNetwork(TreeSpec spec, std::uint64_t init_seed = 1)
      : spec_(std::move(spec)) {
    spec_.validate();
    init_parameters(init_seed);
  }

  const TreeSpec& spec() const { return spec_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  struct Forward {
    Tape<T> tape;
    RoutingState<T> routing;
    // split-node outputs, indexed by node id (empty optional when starved
    // or when the node is a leaf)
    std::vector<std::optional<ig::JointEstimate<T>>> joints;
    std::vector<int> leaf_logits;      // tape node id per tree node (-1 if absent)
    std::vector<int> ig_loss_nodes;    // tape node id per tree node (-1 if absent)
    int class_loss = -1;               // tape node id (scalar)
    int total_loss = -1;               // tape node id (scalar)
    std::vector<StarvedNode> starved;

    double class_loss_value() const { return class_loss < 0 ? 0.0 : double(tape.value(class_loss)[0]); }
    double total_loss_value() const { return total_loss < 0 ? 0.0 : double(tape.value(total_loss)[0]); }
  };

  // Runs the masked forward pass and assembles the losses. `labels` may be
  // empty in eval mode (no loss nodes are created then). Dropout draws from
  // `dropout_rng` in a fixed node order.
  Forward forward(const Tensor<T>& images, std::span<const int> labels, const RoutingPolicy& policy,
                  T tau, Rng* dropout_rng = nullptr) const {
    return forward_impl(images, labels, policy, tau, dropout_rng, LossWeights{});
  }

  Forward forward(const Tensor<T>& images, std::span<const int> labels, const RoutingPolicy& policy,
                  T tau, Rng* dropout_rng, const LossWeights& lw) const {
    return forward_impl(images, labels, policy, tau, dropout_rng, lw);
  }

  // Eval-mode predictions for a batch: argmax over the single visited
  // leaf's logits per sample.
  std::vector<int> predict(const Tensor<T>& images) const {
    RoutingPolicy policy{Mode::eval, 0.0};
    Forward f = forward(images, {}, policy, T(1), nullptr);
    std::vector<int> pred(static_cast<std::size_t>(images.dim(0)), -1);
    for (int leaf : spec_.leaf_ids()) {
      const int node_id = f.leaf_logits[static_cast<std::size_t>(leaf)];
      if (node_id < 0) continue;
      const Tensor<T>& z = f.tape.value(node_id);
      const auto& rows = f.routing.nodes[static_cast<std::size_t>(leaf)].sample_rows;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        pred[static_cast<std::size_t>(rows[i])] =
            argmax_row(z.data() + i * static_cast<std::size_t>(z.dim(1)), z.dim(1));
      }
    }
    return pred;
  }

  // Parameter accounting per node and tag; used by count-params and the
  // budget checks.
  struct NodeCount {
    int node = 0;
    std::size_t f_params = 0;
    std::size_t h_params = 0;
  };
  std::vector<NodeCount> parameter_counts() const {
    std::vector<NodeCount> out;
    for (int id = 0; id < spec_.node_count(); ++id) {
      NodeCount c;
      c.node = id;
      c.f_params = stack_param_count(spec_.nodes[static_cast<std::size_t>(id)].f_stack, node_input_shape(id));
      c.h_params = stack_param_count(spec_.nodes[static_cast<std::size_t>(id)].h_stack, router_input_shape(id));
      out.push_back(c);
    }
    return out;
  }

  std::size_t total_params(ParamTag tag) const { return params_.value_count(tag); }
  std::size_t total_params() const { return params_.value_count(); }

  // Parameters touched by one sample at eval time: the F stacks on one
  // root-leaf path plus the routers along it.
  struct PathBudget {
    int leaf = 0;
    std::size_t expert_f = 0;
    std::size_t routers_h = 0;
  };
  std::vector<PathBudget> path_budgets() const {
    const auto counts = parameter_counts();
    std::vector<PathBudget> out;
    for (int leaf : spec_.leaf_ids()) {
      PathBudget b;
      b.leaf = leaf;
      for (int id : spec_.path_to(leaf)) {
        b.expert_f += counts[static_cast<std::size_t>(id)].f_params;
        b.routers_h += counts[static_cast<std::size_t>(id)].h_params;
      }
      out.push_back(b);
    }
    return out;
  }

  // Input shape (with batch placeholder 1) arriving at a node's F stack.
  std::vector<int> node_input_shape(int id) const {
    std::vector<int> shape = {1, spec_.input_shape[0], spec_.input_shape[1], spec_.input_shape[2]};
    for (int node : spec_.path_to(id)) {
      if (node == id) break;
      shape = stack_output_shape(spec_.nodes[static_cast<std::size_t>(node)].f_stack, shape);
    }
    return shape;
  }

  std::vector<int> router_input_shape(int id) const {
    if (spec_.is_leaf(id)) return {};
    if (spec_.router_source == RouterSource::independent) {
      return {1, spec_.input_shape[0], spec_.input_shape[1], spec_.input_shape[2]};
    }
    const NodeSpec& n = spec_.nodes[static_cast<std::size_t>(id)];
    const int tap = spec_.f_tap_index < 0 ? static_cast<int>(n.f_stack.size()) - 1 : spec_.f_tap_index;
    std::vector<int> shape = node_input_shape(id);
    for (int i = 0; i <= tap; ++i) shape = layer_output_shape(n.f_stack[static_cast<std::size_t>(i)], shape);
    return shape;
  }

 private:
  // Parameter names: n<id>.{F|H}.<layer>.{w|b}
  static std::string pname(int node, const char* stack, int layer, const char* leaf) {
    return "n" + std::to_string(node) + "." + stack + "." + std::to_string(layer) + "." + leaf;
  }

  void init_parameters(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9a7f));
    for (int id = 0; id < spec_.node_count(); ++id) {
      create_stack_params(id, "F", spec_.nodes[static_cast<std::size_t>(id)].f_stack, node_input_shape(id),
                          ParamTag::weights_f, rng);
      if (!spec_.is_leaf(id)) {
        create_stack_params(id, "H", spec_.nodes[static_cast<std::size_t>(id)].h_stack,
                            router_input_shape(id), ParamTag::weights_h, rng);
      }
    }
  }

  void create_stack_params(int node, const char* stack_name, const std::vector<LayerSpec>& stack,
                           std::vector<int> shape, ParamTag tag, Rng& rng) {
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const LayerSpec& l = stack[li];
      if (l.kind == LayerKind::conv2d) {
        auto& w = params_.add(pname(node, stack_name, static_cast<int>(li), "w"), tag,
                              {l.kernel, l.kernel, shape[3], l.filters}, true);
        for (std::size_t i = 0; i < w.value.size(); ++i) {
          w.value[i] = static_cast<T>(rng.truncated_normal(0.1));
        }
        params_.add(pname(node, stack_name, static_cast<int>(li), "b"), tag, {l.filters}, false);
      } else if (l.kind == LayerKind::fully_connected) {
        auto& w = params_.add(pname(node, stack_name, static_cast<int>(li), "w"), tag,
                              {shape[1], l.width}, true);
        for (std::size_t i = 0; i < w.value.size(); ++i) {
          w.value[i] = static_cast<T>(rng.truncated_normal(0.1));
        }
        params_.add(pname(node, stack_name, static_cast<int>(li), "b"), tag, {l.width}, false);
      }
      shape = layer_output_shape(l, shape);
    }
  }

  // Applies a stack to `input`, returning every intermediate tape node (one
  // entry per layer; index i = output of layer i).
  std::vector<int> apply_stack(Tape<T>& tape, int input, int node, const char* stack_name,
                               const std::vector<LayerSpec>& stack, Mode mode, Rng* rng) const {
    std::vector<int> outs;
    int cur = input;
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const LayerSpec& l = stack[li];
      switch (l.kind) {
        case LayerKind::conv2d: {
          auto* w = const_cast<ParameterSet<T>&>(params_).find(pname(node, stack_name, static_cast<int>(li), "w"));
          auto* b = const_cast<ParameterSet<T>&>(params_).find(pname(node, stack_name, static_cast<int>(li), "b"));
          cur = tape.conv2d(cur, tape.param(*w), tape.param(*b), l.padding, l.stride);
          break;
        }
        case LayerKind::fully_connected: {
          auto* w = const_cast<ParameterSet<T>&>(params_).find(pname(node, stack_name, static_cast<int>(li), "w"));
          auto* b = const_cast<ParameterSet<T>&>(params_).find(pname(node, stack_name, static_cast<int>(li), "b"));
          cur = tape.linear(cur, tape.param(*w), tape.param(*b));
          break;
        }
        case LayerKind::maxpool:
          cur = tape.maxpool(cur, l.kernel, l.stride);
          break;
        case LayerKind::relu:
          cur = tape.relu(cur);
          break;
        case LayerKind::flatten:
          cur = tape.flatten(cur);
          break;
        case LayerKind::dropout: {
          if (mode == Mode::train && l.drop_p > 0.0 && rng == nullptr) {
            throw UsageError("dropout in train mode requires an rng");
          }
          static Rng unused(0);
          cur = tape.dropout(cur, l.drop_p, mode, rng ? *rng : unused);
          break;
        }
      }
      outs.push_back(cur);
    }
    return outs;
  }

  Forward forward_impl(const Tensor<T>& images, std::span<const int> labels,
                       const RoutingPolicy& policy, T tau, Rng* dropout_rng,
                       const LossWeights& lw) const {
    if (images.rank() != 4) throw ConfigError("forward: image batch must be NHWC");
    const int batch = images.dim(0);
    if (batch < 1) throw UsageError("forward: empty batch");
    policy.validate(spec_.max_branching());
    const bool with_loss = !labels.empty();
    if (with_loss && static_cast<int>(labels.size()) != batch) {
      throw UsageError("forward: label count does not match batch");
    }

    Forward f;
    f.routing.batch_size = batch;
    f.routing.nodes.resize(static_cast<std::size_t>(spec_.node_count()));
    f.joints.resize(static_cast<std::size_t>(spec_.node_count()));
    f.leaf_logits.assign(static_cast<std::size_t>(spec_.node_count()), -1);
    f.ig_loss_nodes.assign(static_cast<std::size_t>(spec_.node_count()), -1);

    const int x0 = f.tape.input(images);

    // per-node: tape id of the node's input activation (rows = node's samples)
    std::vector<int> node_input(static_cast<std::size_t>(spec_.node_count()), -1);
    node_input[0] = x0;
    auto& root_rows = f.routing.nodes[0].sample_rows;
    root_rows.resize(static_cast<std::size_t>(batch));
    for (int r = 0; r < batch; ++r) root_rows[static_cast<std::size_t>(r)] = r;
    f.routing.nodes[0].reached = true;

    std::vector<int> ig_parts;
    // Nodes run in breadth-first id order, so every split routes before its
    // children execute and every sample's leaf multiplicity is known before
    // the leaf losses are weighted.
    for (int id = 0; id < spec_.node_count(); ++id) {
      auto& nr = f.routing.nodes[static_cast<std::size_t>(id)];
      if (!nr.reached) continue;  // inside a starved subtree
      if (nr.sample_rows.empty()) {
        // Empty after masking: skip the node (and its IG term) this step.
        if (policy.mode == Mode::train) f.starved.push_back({id, !spec_.is_leaf(id)});
        continue;
      }
      const NodeSpec& node = spec_.nodes[static_cast<std::size_t>(id)];
      if (spec_.is_leaf(id)) {
        const auto outs = apply_stack(f.tape, node_input[static_cast<std::size_t>(id)], id, "F",
                                      node.f_stack, policy.mode, dropout_rng);
        f.leaf_logits[static_cast<std::size_t>(id)] = outs.back();
        continue;
      }
      // split node: F stack on the masked subset
      const auto f_outs = apply_stack(f.tape, node_input[static_cast<std::size_t>(id)], id, "F",
                                      node.f_stack, policy.mode, dropout_rng);
      // router input
      int h_in;
      if (spec_.router_source == RouterSource::independent) {
        if (id == 0) {
          h_in = x0;
        } else {
          h_in = f.tape.gather_rows(x0, nr.sample_rows);
        }
      } else {
        const int tap = spec_.f_tap_index < 0 ? static_cast<int>(f_outs.size()) - 1 : spec_.f_tap_index;
        h_in = f_outs[static_cast<std::size_t>(tap)];
      }
      const auto h_outs = apply_stack(f.tape, h_in, id, "H", node.h_stack, policy.mode, dropout_rng);
      const int probs_node = f.tape.tempered_softmax(h_outs.back(), tau);
      nr.branch_probs = f.tape.value(probs_node);

      std::vector<int> node_labels;
      if (with_loss) {
        node_labels.reserve(nr.sample_rows.size());
        for (int r : nr.sample_rows) node_labels.push_back(labels[static_cast<std::size_t>(r)]);
        f.joints[static_cast<std::size_t>(id)] =
            ig::estimate_joint(std::span<const int>(node_labels), nr.branch_probs, spec_.class_count);
        if (policy.mode == Mode::train && lw.lambda_ig != 0.0) {
          const int ig_node = f.tape.ig_loss(probs_node, node_labels, spec_.class_count,
                                             static_cast<T>(lw.lambda_ig),
                                             static_cast<T>(lw.lambda_balance));
          f.ig_loss_nodes[static_cast<std::size_t>(id)] = ig_node;
          ig_parts.push_back(ig_node);
        }
      }

      // route to children
      const auto members = route(nr.branch_probs, policy);
      for (int j = 0; j < spec_.child_count(id); ++j) {
        const int cid = spec_.child(id, j);
        auto& cr = f.routing.nodes[static_cast<std::size_t>(cid)];
        cr.reached = true;
        const auto& local = members[static_cast<std::size_t>(j)];
        cr.sample_rows.reserve(local.size());
        for (int lr : local) cr.sample_rows.push_back(nr.sample_rows[static_cast<std::size_t>(lr)]);
        if (!local.empty()) {
          const bool full = static_cast<int>(local.size()) == static_cast<int>(nr.sample_rows.size());
          node_input[static_cast<std::size_t>(cid)] =
              full ? f_outs.back() : f.tape.gather_rows(f_outs.back(), local);
        }
      }
    }

    if (with_loss) {
      // leaf multiplicity per sample
      std::vector<int> multiplicity(static_cast<std::size_t>(batch), 0);
      for (int leaf : spec_.leaf_ids()) {
        for (int r : f.routing.nodes[static_cast<std::size_t>(leaf)].sample_rows) {
          ++multiplicity[static_cast<std::size_t>(r)];
        }
      }
      for (int r = 0; r < batch; ++r) {
        if (multiplicity[static_cast<std::size_t>(r)] == 0) {
          throw UsageError("forward: sample reached no leaf");
        }
      }
      // J_C: each sample spreads weight 1/m over its visited leaves, then
      // the batch mean is taken.
      std::vector<int> xent_parts;
      for (int leaf : spec_.leaf_ids()) {
        const int logits = f.leaf_logits[static_cast<std::size_t>(leaf)];
        if (logits < 0) continue;
        const auto& rows = f.routing.nodes[static_cast<std::size_t>(leaf)].sample_rows;
        std::vector<int> leaf_labels(rows.size());
        std::vector<T> weights(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          leaf_labels[i] = labels[static_cast<std::size_t>(rows[i])];
          weights[i] = T(1) / (static_cast<T>(batch) *
                               static_cast<T>(multiplicity[static_cast<std::size_t>(rows[i])]));
        }
        xent_parts.push_back(f.tape.softmax_xent(logits, std::move(leaf_labels), std::move(weights)));
      }
      f.class_loss = f.tape.sum_scalars(std::move(xent_parts));
      if (ig_parts.empty()) {
        f.total_loss = f.class_loss;
      } else {
        std::vector<int> all{f.class_loss};
        all.insert(all.end(), ig_parts.begin(), ig_parts.end());
        f.total_loss = f.tape.sum_scalars(std::move(all));
      }
    }
    return f;
  }

  TreeSpec spec_;
  ParameterSet<T> params_;
};

}  // namespace cign
