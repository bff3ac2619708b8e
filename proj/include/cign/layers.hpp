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
#include <vector>

#include "cign/common.hpp"
#include "cign/kernels.hpp"

namespace cign {

enum class LayerKind { conv2d, maxpool, relu, fully_connected, dropout, flatten };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

// One layer of an F or H stack. Only the attributes matching `kind` may be
// set; validate() enforces consistency.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int kernel = 0;
  int filters = 0;
  int stride = 1;
  kernels::Padding padding = kernels::Padding::same;
  int width = 0;       // fully_connected output width
  double drop_p = 0.0; // dropout probability

  static LayerSpec conv(int kernel, int filters, kernels::Padding padding = kernels::Padding::same,
                        int stride = 1) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.kernel = kernel;
    l.filters = filters;
    l.padding = padding;
    l.stride = stride;
    return l;
  }
  static LayerSpec pool(int kernel, int stride) {
    LayerSpec l;
    l.kind = LayerKind::maxpool;
    l.kernel = kernel;
    l.stride = stride;
    return l;
  }
  static LayerSpec relu() {
    LayerSpec l;
    l.kind = LayerKind::relu;
    return l;
  }
  static LayerSpec fc(int width) {
    LayerSpec l;
    l.kind = LayerKind::fully_connected;
    l.width = width;
    return l;
  }
  static LayerSpec dropout(double p) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.drop_p = p;
    return l;
  }
  static LayerSpec flatten() {
    LayerSpec l;
    l.kind = LayerKind::flatten;
    return l;
  }

  void validate() const {
    switch (kind) {
      case LayerKind::conv2d:
        if (kernel <= 0 || filters <= 0 || stride <= 0) {
          throw ConfigError("conv2d layer needs positive kernel, filters and stride");
        }
        break;
      case LayerKind::maxpool:
        if (kernel <= 0 || stride <= 0) {
          throw ConfigError("maxpool layer needs positive kernel and stride");
        }
        break;
      case LayerKind::fully_connected:
        if (width <= 0) throw ConfigError("fully_connected layer needs positive width");
        break;
      case LayerKind::dropout:
        if (drop_p < 0.0 || drop_p >= 1.0) {
          throw ConfigError("dropout probability must be in [0, 1)");
        }
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
    }
  }
};

// Output shape of a layer applied to `in` (shapes exclude nothing; batch is
// dim 0). Throws ConfigError when the input is incompatible.
inline std::vector<int> layer_output_shape(const LayerSpec& l, const std::vector<int>& in) {
  l.validate();
  switch (l.kind) {
    case LayerKind::conv2d: {
      if (in.size() != 4) throw ConfigError("conv2d expects NHWC input");
      auto g = kernels::ConvGeom::make(in[1], in[2], in[3], l.kernel, l.stride, l.padding);
      return {in[0], g.out_h, g.out_w, l.filters};
    }
    case LayerKind::maxpool: {
      if (in.size() != 4) throw ConfigError("maxpool expects NHWC input");
      auto g = kernels::ConvGeom::make(in[1], in[2], in[3], l.kernel, l.stride,
                                       kernels::Padding::valid);
      return {in[0], g.out_h, g.out_w, in[3]};
    }
    case LayerKind::relu:
    case LayerKind::dropout:
      return in;
    case LayerKind::flatten: {
      if (in.size() < 2) throw ConfigError("flatten expects a batch dimension");
      int cols = 1;
      for (std::size_t i = 1; i < in.size(); ++i) cols *= in[i];
      return {in[0], cols};
    }
    case LayerKind::fully_connected: {
      if (in.size() != 2) throw ConfigError("fully_connected expects flattened [rows, features]");
      return {in[0], l.width};
    }
  }
  throw ConfigError("unknown layer kind");
}

// Learnable parameter count of a layer given its input shape.
inline std::size_t layer_param_count(const LayerSpec& l, const std::vector<int>& in) {
  switch (l.kind) {
    case LayerKind::conv2d:
      return static_cast<std::size_t>(l.kernel) * l.kernel * in[3] * l.filters + l.filters;
    case LayerKind::fully_connected:
      return static_cast<std::size_t>(in[1]) * l.width + l.width;
    default:
      return 0;
  }
}

// Shape after running a whole stack.
inline std::vector<int> stack_output_shape(const std::vector<LayerSpec>& stack,
                                           std::vector<int> shape) {
  for (const LayerSpec& l : stack) shape = layer_output_shape(l, shape);
  return shape;
}

inline std::size_t stack_param_count(const std::vector<LayerSpec>& stack, std::vector<int> shape) {
  std::size_t n = 0;
  for (const LayerSpec& l : stack) {
    n += layer_param_count(l, shape);
    shape = layer_output_shape(l, shape);
  }
  return n;
}

}  // namespace cign
