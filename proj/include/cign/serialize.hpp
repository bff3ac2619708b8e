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

#include <json.hpp>

#include <string>

#include "cign/common.hpp"
#include "cign/tree.hpp"

// JSON encoding of layer stacks and tree topologies, shared by the config
// schema and the checkpoint header.
namespace cign {

using json = nlohmann::json;

inline json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = layer_kind_name(l.kind);
  switch (l.kind) {
    case LayerKind::conv2d:
      j["kernel"] = l.kernel;
      j["filters"] = l.filters;
      j["stride"] = l.stride;
      j["padding"] = kernels::padding_name(l.padding);
      break;
    case LayerKind::maxpool:
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::fully_connected:
      j["width"] = l.width;
      break;
    case LayerKind::dropout:
      j["drop_p"] = l.drop_p;
      break;
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
  }
  return j;
}

// Strict: unknown keys in a layer object are rejected.
inline LayerSpec layer_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("layer: expected {kind: ...}");
  const std::string kind = j.at("kind").get<std::string>();
  LayerSpec l;
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (const auto& [key, _] : j.items()) {
      if (key == "kind") continue;
      bool ok = false;
      for (const char* k : keys) {
        if (key == k) ok = true;
      }
      if (!ok) throw ConfigError("layer " + kind + ": unknown key '" + key + "'");
    }
  };
  if (kind == "conv2d") {
    allow({"kernel", "filters", "stride", "padding"});
    l = LayerSpec::conv(j.at("kernel").get<int>(), j.at("filters").get<int>());
    if (j.contains("stride")) l.stride = j.at("stride").get<int>();
    if (j.contains("padding")) {
      const std::string p = j.at("padding").get<std::string>();
      if (p == "same") l.padding = kernels::Padding::same;
      else if (p == "valid") l.padding = kernels::Padding::valid;
      else throw ConfigError("layer conv2d: padding must be same|valid");
    }
  } else if (kind == "maxpool") {
    allow({"kernel", "stride"});
    l = LayerSpec::pool(j.at("kernel").get<int>(), j.at("stride").get<int>());
  } else if (kind == "relu") {
    allow({});
    l = LayerSpec::relu();
  } else if (kind == "fully_connected") {
    allow({"width"});
    l = LayerSpec::fc(j.at("width").get<int>());
  } else if (kind == "dropout") {
    allow({"drop_p"});
    l = LayerSpec::dropout(j.at("drop_p").get<double>());
  } else if (kind == "flatten") {
    allow({});
    l = LayerSpec::flatten();
  } else {
    throw ConfigError("layer: unknown kind '" + kind + "'");
  }
  l.validate();
  return l;
}

inline json stack_to_json(const std::vector<LayerSpec>& stack) {
  json arr = json::array();
  for (const auto& l : stack) arr.push_back(layer_to_json(l));
  return arr;
}

inline std::vector<LayerSpec> stack_from_json(const json& arr) {
  if (!arr.is_array()) throw ConfigError("layer stack: expected an array");
  std::vector<LayerSpec> out;
  for (const auto& j : arr) out.push_back(layer_from_json(j));
  return out;
}

inline json tree_to_json(const TreeSpec& t) {
  json j;
  j["name"] = t.name;
  j["branching"] = t.branching;
  j["router_source"] = router_source_name(t.router_source);
  j["f_tap_index"] = t.f_tap_index;
  j["class_count"] = t.class_count;
  j["input_shape"] = t.input_shape;
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json node;
    node["f"] = stack_to_json(n.f_stack);
    node["h"] = stack_to_json(n.h_stack);
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

inline TreeSpec tree_from_json(const json& j) {
  TreeSpec t;
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "branching" && key != "router_source" && key != "f_tap_index" &&
        key != "class_count" && key != "input_shape" && key != "nodes") {
      throw ConfigError("tree: unknown key '" + key + "'");
    }
  }
  if (j.contains("name")) t.name = j.at("name").get<std::string>();
  t.branching = j.at("branching").get<std::vector<int>>();
  if (j.contains("router_source")) {
    const std::string s = j.at("router_source").get<std::string>();
    if (s == "independent") t.router_source = RouterSource::independent;
    else if (s == "fed_from_f") t.router_source = RouterSource::fed_from_f;
    else throw ConfigError("tree: router_source must be independent|fed_from_f");
  }
  if (j.contains("f_tap_index")) t.f_tap_index = j.at("f_tap_index").get<int>();
  if (j.contains("class_count")) t.class_count = j.at("class_count").get<int>();
  if (j.contains("input_shape")) t.input_shape = j.at("input_shape").get<std::vector<int>>();
  for (const auto& node : j.at("nodes")) {
    for (const auto& [key, _] : node.items()) {
      if (key != "f" && key != "h") throw ConfigError("tree node: unknown key '" + key + "'");
    }
    NodeSpec n;
    n.f_stack = stack_from_json(node.at("f"));
    if (node.contains("h")) n.h_stack = stack_from_json(node.at("h"));
    t.nodes.push_back(std::move(n));
  }
  t.validate();
  return t;
}

}  // namespace cign
