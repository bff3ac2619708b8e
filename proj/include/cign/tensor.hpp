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

#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "cign/common.hpp"

namespace cign {

// Dense row-major tensor. Image batches use NHWC layout; matrices are
// [rows, cols]; scalars have shape {1}.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      if (d <= 0) throw ConfigError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, fill);
  }

  static Tensor scalar(T v) {
    Tensor t(std::vector<int>{1});
    t.data_[0] = v;
    return t;
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  // [rows, cols] access
  T& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  T at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }

  // NHWC access
  T& at4(int n, int h, int w, int c) {
    return data_[((static_cast<std::size_t>(n) * dim(1) + h) * dim(2) + w) * dim(3) + c];
  }
  T at4(int n, int h, int w, int c) const {
    return data_[((static_cast<std::size_t>(n) * dim(1) + h) * dim(2) + w) * dim(3) + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

inline std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace cign
