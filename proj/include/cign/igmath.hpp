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
#include <cmath>
#include <iostream>
#include <span>
#include <vector>

#include "cign/common.hpp"
#include "cign/tensor.hpp"

// Information-gain mathematics for the routing objectives: tempered softmax
// branch distributions, minibatch joint estimation, entropies in nats, the
// information gain and its load-balanced variant, and the analytic gradient
// of the IG loss with respect to the branch probabilities.
namespace cign::ig {

// Probabilities below this are clamped before taking logs; keeps entropy
// terms finite at exact zeros while perturbing results far below test
// tolerances.
inline constexpr double kLogClamp = 1e-30;

// Row-sum tolerance for validating distributions.
inline constexpr double kDistTolerance = 1e-6;

// -sum p*log(p) with 0*log(0) := 0, natural log. Unchecked; callers on
// external input go through entropy().
template <typename T>
T entropy_unchecked(std::span<const T> p) {
  T h = 0;
  for (T v : p) {
    if (v > 0) h -= v * std::log(std::max(v, static_cast<T>(kLogClamp)));
  }
  return h;
}

template <typename T>
T entropy(std::span<const T> p) {
  T sum = 0;
  for (T v : p) {
    if (v < -static_cast<T>(kDistTolerance)) {
      throw std::domain_error("entropy: negative probability entry");
    }
    sum += v;
  }
  if (std::abs(sum - T(1)) > static_cast<T>(kDistTolerance)) {
    throw std::domain_error("entropy: probabilities sum to " + std::to_string(double(sum)) +
                            ", expected 1");
  }
  return entropy_unchecked(p);
}

template <typename T>
T entropy(const std::vector<T>& p) {
  return entropy(std::span<const T>(p.data(), p.size()));
}

// Per-row softmax of logits/tau with max subtraction. As tau -> inf the rows
// approach uniform, as tau -> 0+ they approach one-hot on the argmax; the
// row argmax is invariant in tau.
template <typename T>
Tensor<T> tempered_softmax(const Tensor<T>& logits, T tau) {
  if (!(tau > T(0))) throw std::domain_error("tempered_softmax: tau must be positive");
  if (logits.rank() != 2) throw UsageError("tempered_softmax: expected [rows, K] logits");
  if (!logits.all_finite()) throw std::domain_error("tempered_softmax: non-finite logits");
  const int rows = logits.dim(0), k = logits.dim(1);
  Tensor<T> out({rows, k});
  for (int r = 0; r < rows; ++r) {
    const T* z = logits.data() + static_cast<std::size_t>(r) * k;
    T* p = out.data() + static_cast<std::size_t>(r) * k;
    T zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    T sum = 0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp((z[j] - zmax) / tau);
      sum += p[j];
    }
    for (int j = 0; j < k; ++j) p[j] /= sum;
  }
  return out;
}

// Empirical joint p(y=c, n=k) over a node's minibatch, with marginals.
template <typename T>
struct JointEstimate {
  int class_count = 0;
  int branch_count = 0;
  int sample_count = 0;
  std::vector<T> joint;            // C x K row-major
  std::vector<T> class_marginal;   // C
  std::vector<T> branch_marginal;  // K

  T at(int c, int k) const { return joint[static_cast<std::size_t>(c) * branch_count + k]; }

  bool valid(double tol = kDistTolerance) const {
    T total = 0;
    for (T v : joint) {
      if (v < -static_cast<T>(tol)) return false;
      total += v;
    }
    return std::abs(total - T(1)) <= static_cast<T>(tol);
  }
};

// p_hat(c, k) = (1/N) * sum_x I[label(x)=c] * p(n=k | x). The class
// marginal reduces to empirical class frequencies; the branch marginal is
// the mean branch distribution.
template <typename T>
JointEstimate<T> estimate_joint(std::span<const int> labels, const Tensor<T>& branch_probs,
                                int class_count) {
  if (branch_probs.rank() != 2) throw UsageError("estimate_joint: expected [rows, K] probs");
  const int n = branch_probs.dim(0), k = branch_probs.dim(1);
  if (n < 1) throw UsageError("estimate_joint: empty minibatch (starved node)");
  if (static_cast<int>(labels.size()) != n) {
    throw UsageError("estimate_joint: label count does not match probability rows");
  }
  JointEstimate<T> j;
  j.class_count = class_count;
  j.branch_count = k;
  j.sample_count = n;
  j.joint.assign(static_cast<std::size_t>(class_count) * k, T(0));
  j.class_marginal.assign(class_count, T(0));
  j.branch_marginal.assign(k, T(0));
  const T inv_n = T(1) / static_cast<T>(n);
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    if (c < 0 || c >= class_count) throw UsageError("estimate_joint: label out of range");
    const T* p = branch_probs.data() + static_cast<std::size_t>(i) * k;
    T* row = j.joint.data() + static_cast<std::size_t>(c) * k;
    for (int b = 0; b < k; ++b) row[b] += p[b] * inv_n;
  }
  for (int c = 0; c < class_count; ++c) {
    for (int b = 0; b < k; ++b) {
      const T v = j.at(c, b);
      j.class_marginal[c] += v;
      j.branch_marginal[b] += v;
    }
  }
  return j;
}

// IG = H[p(y)] - E_{p(n)} H[p(y|n)], the mutual information between the
// class label and the branch variable. Zero-probability branches contribute
// nothing to the expectation.
template <typename T>
T information_gain(const JointEstimate<T>& j) {
  const T h_y = entropy_unchecked(std::span<const T>(j.class_marginal));
  T expected_cond = 0;
  std::vector<T> cond(j.class_count);
  for (int b = 0; b < j.branch_count; ++b) {
    const T q = j.branch_marginal[b];
    if (q <= 0) continue;
    for (int c = 0; c < j.class_count; ++c) cond[c] = j.at(c, b) / q;
    expected_cond += q * entropy_unchecked(std::span<const T>(cond));
  }
  return h_y - expected_cond;
}

// IG_balanced = H[p(y)] + lambda_balance * H[p(n)] - H[p(y,n)].
// Identity: information_gain(j) + (lambda_balance - 1) * H[p(n)].
template <typename T>
T balanced_information_gain(const JointEstimate<T>& j, T lambda_balance) {
  if (lambda_balance < T(1)) {
    static bool warned = false;
    if (!warned) {
      std::cerr << "cign: warning: lambda_balance < 1 removes the load-balancing pressure\n";
      warned = true;
    }
  }
  const T h_y = entropy_unchecked(std::span<const T>(j.class_marginal));
  const T h_n = entropy_unchecked(std::span<const T>(j.branch_marginal));
  const T h_yn = entropy_unchecked(std::span<const T>(j.joint));
  return h_y + lambda_balance * h_n - h_yn;
}

// Scalar value of the routing loss at one split node: -lambda_ig * IG_balanced.
template <typename T>
T ig_loss_value(const JointEstimate<T>& j, T lambda_ig, T lambda_balance) {
  return -lambda_ig * balanced_information_gain(j, lambda_balance);
}

// Analytic gradient of the routing loss with respect to the branch
// probabilities P[i,k] it was estimated from. With q = branch marginal and
// J = joint,
//   d(-lambda_ig*IG_bal)/dP[i,k]
//     = (lambda_ig/N) * (lambda_balance*(log q_k + 1) - (log J[y_i,k] + 1)).
// H[p(y)] is constant in P. As a per-minibatch estimator of the population
// IG derivative this is biased, which is accepted for SGD use. `upstream`
// scales the result and the gradient is accumulated into probs_grad (same
// [N, K] layout as the probs).
template <typename T>
void ig_loss_grad(const JointEstimate<T>& j, std::span<const int> labels, T lambda_ig,
                  T lambda_balance, T upstream, Tensor<T>& probs_grad) {
  const int n = j.sample_count, k = j.branch_count;
  const T scale = upstream * lambda_ig / static_cast<T>(n);
  std::vector<T> log_q(k);
  for (int b = 0; b < k; ++b) {
    log_q[b] = std::log(std::max(j.branch_marginal[b], static_cast<T>(kLogClamp)));
  }
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    T* g = probs_grad.data() + static_cast<std::size_t>(i) * k;
    for (int b = 0; b < k; ++b) {
      const T log_j = std::log(std::max(j.at(c, b), static_cast<T>(kLogClamp)));
      g[b] += scale * (lambda_balance * (log_q[b] + T(1)) - (log_j + T(1)));
    }
  }
}

}  // namespace cign::ig
