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
#include <string>
#include <unordered_map>
#include <vector>

#include "cign/common.hpp"
#include "cign/tensor.hpp"

namespace cign {

// Every parameter belongs to either the classification pipeline (W_F) or a
// router network (W_H); the split drives per-group weight decay and the
// parameter accounting reports.
enum class ParamTag { weights_f, weights_h };

inline const char* param_tag_name(ParamTag t) {
  return t == ParamTag::weights_f ? "W_F" : "W_H";
}

template <typename T>
struct Parameter {
  std::string name;
  ParamTag tag = ParamTag::weights_f;
  bool decay = true;  // biases are excluded from weight decay
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;
};

template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, ParamTag tag, std::vector<int> shape, bool decay) {
    if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->tag = tag;
    p->decay = decay;
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(shape);
    p->momentum = Tensor<T>(std::move(shape));
    index_[p->name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t count() const { return params_.size(); }
  Parameter<T>& at(std::size_t i) { return *params_[i]; }
  const Parameter<T>& at(std::size_t i) const { return *params_[i]; }

  std::size_t value_count(ParamTag tag) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p->tag == tag) n += p->value.size();
    }
    return n;
  }
  std::size_t value_count() const {
    return value_count(ParamTag::weights_f) + value_count(ParamTag::weights_h);
  }

  void zero_grads() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  bool grads_finite() const {
    for (const auto& p : params_) {
      if (!p->grad.all_finite()) return false;
    }
    return true;
  }

  bool values_finite() const {
    for (const auto& p : params_) {
      if (!p->value.all_finite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SgdConfig {
  double lr = 0.0;
  double momentum = 0.0;
  double lambda_f = 0.0;  // weight decay for W_F
  double lambda_h = 0.0;  // weight decay for W_H
};

// One SGD-with-momentum update. Weight decay enters as 2*lambda*w added to
// the gradient (the L2 regularizer terms differentiated by hand), so the
// loss graph itself carries no regularizer nodes:
//   v <- momentum*v + (g + 2*lambda_tag*w);  w <- w - lr*v
// Gradient slots are cleared afterwards.
template <typename T>
void sgd_step(ParameterSet<T>& params, const SgdConfig& cfg) {
  if (cfg.lr <= 0.0) throw ConfigError("sgd_step: learning rate must be positive");
  const T lr = static_cast<T>(cfg.lr);
  const T mu = static_cast<T>(cfg.momentum);
  for (std::size_t i = 0; i < params.count(); ++i) {
    Parameter<T>& p = params.at(i);
    const double lambda = p.tag == ParamTag::weights_f ? cfg.lambda_f : cfg.lambda_h;
    const T two_lambda = p.decay ? static_cast<T>(2.0 * lambda) : T(0);
    T* w = p.value.data();
    T* g = p.grad.data();
    T* v = p.momentum.data();
    const std::size_t n = p.value.size();
    for (std::size_t k = 0; k < n; ++k) {
      v[k] = mu * v[k] + (g[k] + two_lambda * w[k]);
      w[k] -= lr * v[k];
      g[k] = T(0);
    }
  }
}

}  // namespace cign
