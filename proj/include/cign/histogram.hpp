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

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cign/data.hpp"
#include "cign/igmath.hpp"
#include "cign/network.hpp"

// Tree-shaped routing analysis: per-node class frequencies under eval-mode
// routing of a dataset split, per-node label entropy, and the expected
// leaf-conditional entropy.
namespace cign {

struct LeafHistogram {
  struct NodeStats {
    int node = 0;
    int depth = 0;
    int parent = -1;
    bool leaf = false;
    long total = 0;
    std::vector<long> class_counts;  // one per class
    double label_entropy = 0.0;      // nats
  };
  int class_count = 10;
  long dataset_size = 0;
  std::vector<NodeStats> nodes;  // tree (breadth-first) node order
  double root_entropy = 0.0;
  double expected_leaf_entropy = 0.0;  // sum over leaves of (n_leaf/N) * H(y|leaf)

  // depth-first node order for tree-shaped rendering
  std::vector<int> dfs_order() const {
    std::vector<std::vector<int>> children(nodes.size());
    for (const auto& n : nodes) {
      if (n.parent >= 0) children[static_cast<std::size_t>(n.parent)].push_back(n.node);
    }
    std::vector<int> order;
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      order.push_back(id);
      const auto& c = children[static_cast<std::size_t>(id)];
      for (auto it = c.rbegin(); it != c.rend(); ++it) stack.push_back(*it);
    }
    return order;
  }
};

template <typename T>
LeafHistogram leaf_histogram(const CignNetwork<T>& net, const data::LabeledDataset& dataset,
                             int eval_batch = 500) {
  const TreeSpec& tree = net.spec();
  LeafHistogram h;
  h.class_count = tree.class_count;
  h.dataset_size = dataset.count;
  h.nodes.resize(static_cast<std::size_t>(tree.node_count()));
  for (int id = 0; id < tree.node_count(); ++id) {
    auto& n = h.nodes[static_cast<std::size_t>(id)];
    n.node = id;
    n.depth = tree.level_of(id);
    n.parent = tree.parent(id);
    n.leaf = tree.is_leaf(id);
    n.class_counts.assign(static_cast<std::size_t>(tree.class_count), 0);
  }

  std::vector<int> order(static_cast<std::size_t>(dataset.count));
  std::iota(order.begin(), order.end(), 0);
  RoutingPolicy policy{Mode::eval, 0.0};
  for (int begin = 0; begin < dataset.count; begin += eval_batch) {
    const int end = std::min(dataset.count, begin + eval_batch);
    auto batch = data::make_batch<T>(dataset, std::span<const int>(order.data() + begin,
                                                                   static_cast<std::size_t>(end - begin)));
    auto fwd = net.forward(batch.images, {}, policy, T(1), nullptr);
    for (int id = 0; id < tree.node_count(); ++id) {
      for (int row : fwd.routing.nodes[static_cast<std::size_t>(id)].sample_rows) {
        ++h.nodes[static_cast<std::size_t>(id)].class_counts[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(row)])];
        ++h.nodes[static_cast<std::size_t>(id)].total;
      }
    }
  }

  for (auto& n : h.nodes) {
    if (n.total == 0) continue;
    std::vector<double> p(n.class_counts.size());
    for (std::size_t c = 0; c < p.size(); ++c) {
      p[c] = static_cast<double>(n.class_counts[c]) / static_cast<double>(n.total);
    }
    n.label_entropy = ig::entropy_unchecked(std::span<const double>(p));
  }
  h.root_entropy = h.nodes[0].label_entropy;
  for (const auto& n : h.nodes) {
    if (n.leaf && n.total > 0) {
      h.expected_leaf_entropy +=
          (static_cast<double>(n.total) / static_cast<double>(h.dataset_size)) * n.label_entropy;
    }
  }
  return h;
}

// Rendered tree histogram. Classes below `elide_below` of a node's samples
// are omitted from the text rendering (the CSV keeps everything).
inline std::string render_histogram(const LeafHistogram& h,
                                    const std::vector<std::string>& class_names,
                                    double elide_below = 0.01) {
  std::ostringstream os;
  os << std::fixed;
  for (const int id : h.dfs_order()) {
    const auto& n = h.nodes[static_cast<std::size_t>(id)];
    os << std::string(static_cast<std::size_t>(n.depth) * 2, ' ');
    os << (n.leaf ? "leaf " : "node ") << n.node << ": " << n.total << " samples";
    if (n.total > 0) {
      os << ", H=" << std::setprecision(3) << n.label_entropy << " [";
      bool first = true;
      for (std::size_t c = 0; c < n.class_counts.size(); ++c) {
        const double frac = static_cast<double>(n.class_counts[c]) / static_cast<double>(n.total);
        if (frac < elide_below) continue;  // low-frequency classes elided
        if (!first) os << ", ";
        first = false;
        os << (c < class_names.size() ? class_names[c] : std::to_string(c)) << " "
           << std::setprecision(1) << frac * 100.0 << "%";
      }
      os << "]";
    }
    os << "\n";
  }
  os << std::setprecision(4) << "root label entropy: " << h.root_entropy
     << "\nexpected leaf-conditional entropy: " << h.expected_leaf_entropy << "\n";
  return os.str();
}

inline std::string histogram_csv(const LeafHistogram& h,
                                 const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "node,depth,is_leaf,total,class,class_name,count\n";
  for (const auto& n : h.nodes) {
    for (std::size_t c = 0; c < n.class_counts.size(); ++c) {
      os << n.node << "," << n.depth << "," << (n.leaf ? 1 : 0) << "," << n.total << "," << c
         << "," << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ","
         << n.class_counts[c] << "\n";
    }
  }
  return os.str();
}

}  // namespace cign
