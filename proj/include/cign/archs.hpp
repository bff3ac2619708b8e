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

#include <string>

#include "cign/common.hpp"
#include "cign/tree.hpp"

// Built-in model definitions for the MNIST and Fashion-MNIST experiments.
//
// MNIST family (28x28x1, 10 classes, 5x5 same-padding convolutions, 2x2/2
// pooling):
//   baseline:     conv20 - pool - conv50 - pool - fc500 - fc10   = 1,256,080
//   thin expert:  conv20 - pool - conv15 - pool - fc25  - fc10   =    26,695
//   cign [2,2]:   root F = conv20+pool, depth-1 F = conv15+pool,
//                 leaf F = fc25+fc10; expert path equals the thin net.
//     independent routers: pool2(x)-fc32-fc2 (root), pool4(x)-fc32-fc2
//     fed routers:         pool2(F tap)-fc24-fc2
//
// Fashion family: baseline conv32 - pool - conv64 - pool - conv128 - pool -
// fc2048 - fc10; thin/expert conv16 - pool - conv32 - pool - conv80 - pool -
// fc160 - fc10; cign root F = [conv16, conv32], depth-1 F = [conv80],
// leaf F = [fc160, fc10]; dropout after each hidden fully connected layer
// and before each router head.
namespace cign::archs {

struct ArchOptions {
  double cls_dropout = 0.0;  // dropout after hidden fully connected layers (Fashion)
  double ig_dropout = 0.0;   // dropout before each router head (Fashion)
};

namespace detail {

inline std::vector<LayerSpec> conv_block(int filters) {
  return {LayerSpec::conv(5, filters), LayerSpec::relu(), LayerSpec::pool(2, 2)};
}

inline void append(std::vector<LayerSpec>& dst, const std::vector<LayerSpec>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

inline std::vector<LayerSpec> classifier(int hidden, int classes, double dropout_p) {
  std::vector<LayerSpec> s{LayerSpec::flatten(), LayerSpec::fc(hidden), LayerSpec::relu()};
  if (dropout_p > 0.0) s.push_back(LayerSpec::dropout(dropout_p));
  s.push_back(LayerSpec::fc(classes));
  return s;
}

// Router head: optional pooling on the router input, then a small
// fully connected bottleneck and the K-way hyperplane layer.
inline std::vector<LayerSpec> router(int pool, int hidden, int fanout, double dropout_p) {
  std::vector<LayerSpec> s;
  if (pool > 1) s.push_back(LayerSpec::pool(pool, pool));
  s.push_back(LayerSpec::flatten());
  s.push_back(LayerSpec::fc(hidden));
  s.push_back(LayerSpec::relu());
  if (dropout_p > 0.0) s.push_back(LayerSpec::dropout(dropout_p));
  s.push_back(LayerSpec::fc(fanout));
  return s;
}

}  // namespace detail

inline TreeSpec mnist_baseline() {
  TreeSpec t;
  t.name = "mnist_baseline";
  NodeSpec root;
  detail::append(root.f_stack, detail::conv_block(20));
  detail::append(root.f_stack, detail::conv_block(50));
  detail::append(root.f_stack, detail::classifier(500, 10, 0.0));
  t.nodes.push_back(std::move(root));
  t.validate();
  return t;
}

inline TreeSpec mnist_thin() {
  TreeSpec t;
  t.name = "mnist_thin";
  NodeSpec root;
  detail::append(root.f_stack, detail::conv_block(20));
  detail::append(root.f_stack, detail::conv_block(15));
  detail::append(root.f_stack, detail::classifier(25, 10, 0.0));
  t.nodes.push_back(std::move(root));
  t.validate();
  return t;
}

inline TreeSpec mnist_cign(RouterSource source) {
  TreeSpec t;
  t.name = source == RouterSource::independent ? "mnist_cign_ind" : "mnist_cign_fed";
  t.branching = {2, 2};
  t.router_source = source;
  NodeSpec root;
  root.f_stack = detail::conv_block(20);
  root.h_stack = source == RouterSource::independent ? detail::router(2, 32, 2, 0.0)
                                                     : detail::router(2, 24, 2, 0.0);
  t.nodes.push_back(root);
  for (int i = 0; i < 2; ++i) {
    NodeSpec mid;
    mid.f_stack = detail::conv_block(15);
    mid.h_stack = source == RouterSource::independent ? detail::router(4, 32, 2, 0.0)
                                                      : detail::router(2, 24, 2, 0.0);
    t.nodes.push_back(mid);
  }
  for (int i = 0; i < 4; ++i) {
    NodeSpec leaf;
    leaf.f_stack = detail::classifier(25, 10, 0.0);
    t.nodes.push_back(leaf);
  }
  t.validate();
  return t;
}

inline TreeSpec fashion_baseline(const ArchOptions& opt = {.cls_dropout = 0.35}) {
  TreeSpec t;
  t.name = "fashion_baseline";
  NodeSpec root;
  detail::append(root.f_stack, detail::conv_block(32));
  detail::append(root.f_stack, detail::conv_block(64));
  detail::append(root.f_stack, detail::conv_block(128));
  detail::append(root.f_stack, detail::classifier(2048, 10, opt.cls_dropout));
  t.nodes.push_back(std::move(root));
  t.validate();
  return t;
}

inline TreeSpec fashion_thin(const ArchOptions& opt = {.cls_dropout = 0.35}) {
  TreeSpec t;
  t.name = "fashion_thin";
  NodeSpec root;
  detail::append(root.f_stack, detail::conv_block(16));
  detail::append(root.f_stack, detail::conv_block(32));
  detail::append(root.f_stack, detail::conv_block(80));
  detail::append(root.f_stack, detail::classifier(160, 10, opt.cls_dropout));
  t.nodes.push_back(std::move(root));
  t.validate();
  return t;
}

inline TreeSpec fashion_cign(RouterSource source, const ArchOptions& opt) {
  TreeSpec t;
  t.name = source == RouterSource::independent ? "fashion_cign_ind" : "fashion_cign_fed";
  t.branching = {2, 2};
  t.router_source = source;
  NodeSpec root;
  detail::append(root.f_stack, detail::conv_block(16));
  detail::append(root.f_stack, detail::conv_block(32));
  root.h_stack = source == RouterSource::independent
                     ? detail::router(2, 100, 2, opt.ig_dropout)
                     : detail::router(1, 32, 2, opt.ig_dropout);
  t.nodes.push_back(std::move(root));
  for (int i = 0; i < 2; ++i) {
    NodeSpec mid;
    mid.f_stack = detail::conv_block(80);
    mid.h_stack = source == RouterSource::independent
                      ? detail::router(4, 100, 2, opt.ig_dropout)
                      : detail::router(1, 32, 2, opt.ig_dropout);
    t.nodes.push_back(std::move(mid));
  }
  for (int i = 0; i < 4; ++i) {
    NodeSpec leaf;
    leaf.f_stack = detail::classifier(160, 10, opt.cls_dropout);
    t.nodes.push_back(std::move(leaf));
  }
  t.validate();
  return t;
}

// Name-based lookup used by configs and the CLI.
inline TreeSpec by_name(const std::string& name, const ArchOptions& opt = {}) {
  if (name == "mnist_baseline") return mnist_baseline();
  if (name == "mnist_thin") return mnist_thin();
  if (name == "mnist_cign_ind") return mnist_cign(RouterSource::independent);
  if (name == "mnist_cign_fed") return mnist_cign(RouterSource::fed_from_f);
  if (name == "fashion_baseline") return fashion_baseline({.cls_dropout = opt.cls_dropout});
  if (name == "fashion_thin") return fashion_thin({.cls_dropout = opt.cls_dropout});
  if (name == "fashion_cign_ind") return fashion_cign(RouterSource::independent, opt);
  if (name == "fashion_cign_fed") return fashion_cign(RouterSource::fed_from_f, opt);
  throw ConfigError("unknown architecture: " + name);
}

}  // namespace cign::archs
