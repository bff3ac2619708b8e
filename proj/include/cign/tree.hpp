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

#include <span>
#include <string>
#include <vector>

#include "cign/common.hpp"
#include "cign/layers.hpp"
#include "cign/tensor.hpp"

namespace cign {

// Where a split node's router takes its input from: the raw network input
// (the H transformations form a separate parallel network) or a tap into the
// node's own F stack.
enum class RouterSource { independent, fed_from_f };

inline const char* router_source_name(RouterSource s) {
  return s == RouterSource::independent ? "independent" : "fed_from_f";
}

struct NodeSpec {
  std::vector<LayerSpec> f_stack;
  std::vector<LayerSpec> h_stack;  // empty on leaves
};

// Tree topology plus per-node layer stacks. Nodes are indexed breadth-first:
// node 0 is the root; branching {2,2} yields split nodes 0..2 and leaves
// 3..6. An empty branching list describes a plain (non-conditional) network:
// the root is the only node and is a leaf.
struct TreeSpec {
  std::string name;  // reporting label
  std::vector<int> branching;
  std::vector<NodeSpec> nodes;
  RouterSource router_source = RouterSource::independent;
  int f_tap_index = -1;  // fed_from_f: tap after f_stack[f_tap_index]; -1 = stack output
  int class_count = 10;
  std::vector<int> input_shape = {28, 28, 1};  // H, W, C

  int node_count() const { return static_cast<int>(nodes.size()); }

  int depth_levels() const { return static_cast<int>(branching.size()) + 1; }

  // first node index of each level, plus one-past-the-end sentinel
  std::vector<int> level_offsets() const {
    std::vector<int> off{0};
    int level_size = 1;
    off.push_back(1);
    for (int b : branching) {
      level_size *= b;
      off.push_back(off.back() + level_size);
    }
    return off;
  }

  int expected_node_count() const { return level_offsets().back(); }

  int level_of(int id) const {
    const auto off = level_offsets();
    for (std::size_t lv = 0; lv + 1 < off.size(); ++lv) {
      if (id >= off[lv] && id < off[lv + 1]) return static_cast<int>(lv);
    }
    throw UsageError("node id out of range");
  }

  bool is_leaf(int id) const { return level_of(id) == static_cast<int>(branching.size()); }

  int child_count(int id) const {
    const int lv = level_of(id);
    return is_leaf(id) ? 0 : branching[static_cast<std::size_t>(lv)];
  }

  int child(int id, int j) const {
    const auto off = level_offsets();
    const int lv = level_of(id);
    const int pos = id - off[static_cast<std::size_t>(lv)];
    return off[static_cast<std::size_t>(lv) + 1] + pos * branching[static_cast<std::size_t>(lv)] + j;
  }

  int parent(int id) const {
    if (id == 0) return -1;
    const auto off = level_offsets();
    const int lv = level_of(id);
    const int pos = id - off[static_cast<std::size_t>(lv)];
    return off[static_cast<std::size_t>(lv) - 1] + pos / branching[static_cast<std::size_t>(lv) - 1];
  }

  std::vector<int> leaf_ids() const {
    std::vector<int> out;
    for (int id = 0; id < node_count(); ++id) {
      if (is_leaf(id)) out.push_back(id);
    }
    return out;
  }

  std::vector<int> split_ids() const {
    std::vector<int> out;
    for (int id = 0; id < node_count(); ++id) {
      if (!is_leaf(id)) out.push_back(id);
    }
    return out;
  }

  // Root-to-leaf node sequence.
  std::vector<int> path_to(int leaf) const {
    std::vector<int> path{leaf};
    while (path.back() != 0) path.push_back(parent(path.back()));
    return {path.rbegin(), path.rend()};
  }

  int max_branching() const {
    int k = 0;
    for (int b : branching) k = std::max(k, b);
    return k;
  }

  void validate() const {
    for (int b : branching) {
      if (b < 2) throw ConfigError("tree: every split must have at least 2 children");
    }
    if (node_count() != expected_node_count()) {
      throw ConfigError("tree: node count " + std::to_string(node_count()) +
                        " does not match branching (" + std::to_string(expected_node_count()) +
                        " expected)");
    }
    if (class_count < 2) throw ConfigError("tree: class_count must be at least 2");
    if (input_shape.size() != 3) throw ConfigError("tree: input_shape must be H,W,C");
    // Leaf F stacks must end in a class_count-way classifier; split H stacks
    // in a child_count-way router head. Shapes are checked by dry inference.
    std::vector<int> batch_shape = {1, input_shape[0], input_shape[1], input_shape[2]};
    std::vector<std::vector<int>> node_in(nodes.size());
    node_in[0] = batch_shape;
    for (int id = 0; id < node_count(); ++id) {
      const NodeSpec& n = nodes[static_cast<std::size_t>(id)];
      for (const LayerSpec& l : n.f_stack) l.validate();
      for (const LayerSpec& l : n.h_stack) l.validate();
      const auto f_out = stack_output_shape(n.f_stack, node_in[static_cast<std::size_t>(id)]);
      if (is_leaf(id)) {
        if (!n.h_stack.empty()) throw ConfigError("tree: leaf nodes cannot carry an H stack");
        if (n.f_stack.empty() || n.f_stack.back().kind != LayerKind::fully_connected ||
            n.f_stack.back().width != class_count) {
          throw ConfigError("tree: every leaf F stack must end in a " +
                            std::to_string(class_count) + "-way linear classifier");
        }
      } else {
        if (n.h_stack.empty() || n.h_stack.back().kind != LayerKind::fully_connected ||
            n.h_stack.back().width != child_count(id)) {
          throw ConfigError("tree: split node " + std::to_string(id) + " H stack must end in a " +
                            std::to_string(child_count(id)) + "-way router head");
        }
        if (router_source == RouterSource::fed_from_f) {
          const int tap = f_tap_index < 0 ? static_cast<int>(n.f_stack.size()) - 1 : f_tap_index;
          if (tap < 0 || tap >= static_cast<int>(n.f_stack.size())) {
            throw ConfigError("tree: f_tap_index outside the F stack");
          }
        }
        for (int j = 0; j < child_count(id); ++j) {
          node_in[static_cast<std::size_t>(child(id, j))] = f_out;
        }
      }
    }
  }
};

// Threshold/argmax routing policy. In train mode a sample enters every child
// whose branch probability is at least rho; rho <= 1/K guarantees at least
// one child. Eval mode ignores the threshold and routes to the argmax child
// only.
struct RoutingPolicy {
  Mode mode = Mode::eval;
  double rho = 0.0;

  void validate(int max_branching) const {
    if (rho < 0.0) throw ConfigError("routing: rho must be non-negative");
    if (max_branching > 0 && rho > 1.0 / max_branching + 1e-12) {
      throw ConfigError("routing: rho " + std::to_string(rho) + " exceeds the 1/K bound (K=" +
                        std::to_string(max_branching) + ")");
    }
  }
};

// The one-hot functional: indicator on the largest entry, ties broken by
// lowest index.
template <typename T>
std::vector<T> one_hot_psi(std::span<const T> p) {
  std::vector<T> out(p.size(), T(0));
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  out[best] = T(1);
  return out;
}

template <typename T>
int argmax_row(const T* p, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j) {
    if (p[j] > p[best]) best = j;
  }
  return best;
}

// Child membership for the masked samples of one split node. `probs` holds
// one row per masked sample; the result has one list of local row indices
// per child.
template <typename T>
std::vector<std::vector<int>> route(const Tensor<T>& probs, const RoutingPolicy& policy) {
  const int rows = probs.dim(0), k = probs.dim(1);
  policy.validate(k);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
  for (int r = 0; r < rows; ++r) {
    const T* p = probs.data() + static_cast<std::size_t>(r) * k;
    if (policy.mode == Mode::eval) {
      members[static_cast<std::size_t>(argmax_row(p, k))].push_back(r);
    } else {
      for (int j = 0; j < k; ++j) {
        if (p[j] >= static_cast<T>(policy.rho)) members[static_cast<std::size_t>(j)].push_back(r);
      }
    }
  }
  return members;
}

}  // namespace cign
