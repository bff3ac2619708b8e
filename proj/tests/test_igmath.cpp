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
#include <doctest.h>

#include <cmath>
#include <random>

#include "cign/autodiff.hpp"
#include "cign/igmath.hpp"
#include "cign/tree.hpp"
#include "oracles.hpp"

using cign::Tensor;
namespace ig = cign::ig;

namespace {

Tensor<double> rows2(std::vector<std::vector<double>> rows) {
  Tensor<double> t({static_cast<int>(rows.size()), static_cast<int>(rows[0].size())});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.at2(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return t;
}

ig::JointEstimate<double> from_oracle(const oracle::Joint& j) {
  ig::JointEstimate<double> e;
  e.class_count = j.classes;
  e.branch_count = j.branches;
  e.sample_count = 1;
  e.joint.assign(j.p.begin(), j.p.end());
  e.class_marginal = j.class_marginal();
  e.branch_marginal = j.branch_marginal();
  return e;
}

}  // namespace

TEST_CASE("tempered softmax: closed-form rows") {
  auto sm = ig::tempered_softmax(rows2({{1.0, 0.0}}), 1.0);
  CHECK(sm.at2(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(sm.at2(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));

  // the paper's initial smoothing temperature
  auto smooth = ig::tempered_softmax(rows2({{1.0, 0.0}}), 25.0);
  CHECK(smooth.at2(0, 0) == doctest::Approx(0.5099986668799655).epsilon(1e-12));
  CHECK(smooth.at2(0, 1) == doctest::Approx(0.4900013331200345).epsilon(1e-12));

  for (double tau : {0.3, 1.0, 7.0}) {
    auto equal = ig::tempered_softmax(rows2({{2.5, 2.5, 2.5}}), tau);
    for (int j = 0; j < 3; ++j) CHECK(equal.at2(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("tempered softmax: domain and limits") {
  CHECK_THROWS_AS(ig::tempered_softmax(rows2({{1.0, 0.0}}), 0.0), std::domain_error);
  CHECK_THROWS_AS(ig::tempered_softmax(rows2({{1.0, 0.0}}), -3.0), std::domain_error);

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    // distinct logits with gap >= 0.1 between the two largest
    std::vector<double> z{u(gen), u(gen), u(gen), u(gen)};
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[3] - sorted[2] < 0.1) continue;
    auto logits = rows2({z});

    auto hot = ig::tempered_softmax(logits, 1e-2);
    auto uniform = ig::tempered_softmax(logits, 1e6);
    int best = 0;
    for (int j = 1; j < 4; ++j) {
      if (z[static_cast<std::size_t>(j)] > z[static_cast<std::size_t>(best)]) best = j;
    }
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(uniform.at2(0, j) - 0.25) < 1e-3);
      CHECK(std::abs(hot.at2(0, j) - (j == best ? 1.0 : 0.0)) < 1e-3);
    }
    // argmax invariance across temperatures
    for (double tau : {1e-2, 0.5, 1.0, 25.0, 1e6}) {
      auto p = ig::tempered_softmax(logits, tau);
      CHECK(cign::argmax_row(p.data(), 4) == best);
    }
  }
}

TEST_CASE("entropy: anchors and validation") {
  std::vector<double> onehot{0.0, 1.0, 0.0};
  CHECK(ig::entropy(onehot) == doctest::Approx(0.0).epsilon(1e-15));
  std::vector<double> uniform(8, 1.0 / 8);
  CHECK(ig::entropy(uniform) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  std::vector<double> mixed{0.5, 0.25, 0.25};
  CHECK(ig::entropy(mixed) == doctest::Approx(1.0397207708399179).epsilon(1e-12));

  std::vector<double> negative{0.6, -0.1, 0.5};
  CHECK_THROWS_AS(ig::entropy(negative), std::domain_error);
  std::vector<double> short_sum{0.4, 0.4};
  CHECK_THROWS_AS(ig::entropy(short_sum), std::domain_error);
}

TEST_CASE("estimate_joint: hand examples") {
  {
    auto j = ig::estimate_joint(std::vector<int>{0, 1}, rows2({{1.0, 0.0}, {1.0, 0.0}}), 2);
    CHECK(j.at(0, 0) == doctest::Approx(0.5));
    CHECK(j.at(0, 1) == doctest::Approx(0.0));
    CHECK(j.at(1, 0) == doctest::Approx(0.5));
    CHECK(j.at(1, 1) == doctest::Approx(0.0));
  }
  {
    auto j = ig::estimate_joint(std::vector<int>{0, 0}, rows2({{0.5, 0.5}, {0.5, 0.5}}), 3);
    CHECK(j.at(0, 0) == doctest::Approx(0.5));
    CHECK(j.at(0, 1) == doctest::Approx(0.5));
    CHECK(j.at(1, 0) == doctest::Approx(0.0));
    CHECK(j.at(2, 1) == doctest::Approx(0.0));
  }
  {
    auto j = ig::estimate_joint(std::vector<int>{0, 0, 1, 1},
                                rows2({{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.2, 0.8}}), 2);
    CHECK(j.at(0, 0) == doctest::Approx(0.425).epsilon(1e-12));
    CHECK(j.at(0, 1) == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(j.at(1, 0) == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(j.at(1, 1) == doctest::Approx(0.425).epsilon(1e-12));
    CHECK(j.valid());
    // marginals equal row/column sums
    CHECK(j.class_marginal[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(j.branch_marginal[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK_THROWS(ig::estimate_joint(std::vector<int>{}, Tensor<double>({1, 2}), 2));
  CHECK_THROWS(ig::estimate_joint(std::vector<int>{5}, rows2({{1.0, 0.0}}), 2));
}

TEST_CASE("information gain: anchors") {
  // independent joint -> 0
  oracle::Joint indep;
  indep.classes = 2;
  indep.branches = 3;
  indep.p = {0.7 * 0.2, 0.7 * 0.5, 0.7 * 0.3, 0.3 * 0.2, 0.3 * 0.5, 0.3 * 0.3};
  CHECK(ig::information_gain(from_oracle(indep)) == doctest::Approx(0.0).epsilon(1e-12));

  // perfect balanced split
  oracle::Joint diag;
  diag.classes = 2;
  diag.branches = 2;
  diag.p = {0.5, 0.0, 0.0, 0.5};
  CHECK(ig::information_gain(from_oracle(diag)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ig::balanced_information_gain(from_oracle(diag), 2.0) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // the four-sample joint above; value frozen from the brute-force oracle
  // (conditional, decomposition and KL routes agree)
  oracle::Joint hand;
  hand.classes = 2;
  hand.branches = 2;
  hand.p = {0.425, 0.075, 0.075, 0.425};
  const double expected = 0.2704380927539545;
  CHECK(oracle::information_gain_conditional(hand) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(oracle::information_gain_decomposition(hand) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(oracle::information_gain_kl(hand) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ig::information_gain(from_oracle(hand)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ig::balanced_information_gain(from_oracle(hand), 2.0) ==
        doctest::Approx(0.9635852733138996).epsilon(1e-12));
  // balanced identity at lambda = 1
  CHECK(ig::balanced_information_gain(from_oracle(hand), 1.0) ==
        doctest::Approx(expected).epsilon(1e-15));
  // lambda_balance below 1 is allowed (flagged on stderr, not an error)
  CHECK(ig::balanced_information_gain(from_oracle(hand), 0.5) ==
        doctest::Approx(expected - 0.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("load balancing: lambda_balance flips the preferred split") {
  // Unbalanced class priors (0.8, 0.1, 0.1). A pure split sends class 0
  // alone down branch 0 (branch loads 0.8/0.2); the balanced alternative
  // halves class 0 across both branches (loads 0.4/0.6) at a purity cost.
  oracle::Joint pure_unbalanced{3, 2, {0.8, 0.0, 0.0, 0.1, 0.0, 0.1}};
  oracle::Joint balanced{3, 2, {0.4, 0.4, 0.0, 0.1, 0.0, 0.1}};
  auto unbal = from_oracle(pure_unbalanced);
  auto bal = from_oracle(balanced);
  // plain information gain prefers the pure, load-skewed split...
  CHECK(ig::balanced_information_gain(unbal, 1.0) > ig::balanced_information_gain(bal, 1.0));
  // ...while a large enough balance weight prefers the even loads
  CHECK(ig::balanced_information_gain(unbal, 4.0) < ig::balanced_information_gain(bal, 4.0));
  // frozen oracle values for both objectives
  CHECK(ig::balanced_information_gain(unbal, 1.0) ==
        doctest::Approx(0.5004024235381879).epsilon(1e-12));
  CHECK(ig::balanced_information_gain(bal, 1.0) ==
        doctest::Approx(0.11849392256130042).epsilon(1e-10));
}

TEST_CASE("information gain: identities + bounds on random joints") {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<int> classes(2, 10), branches(2, 4);
  std::uniform_real_distribution<double> lam(1.0, 6.0);
  for (int trial = 0; trial < 1200; ++trial) {
    const double zero_frac = trial % 3 == 0 ? 0.2 : 0.0;
    auto j = oracle::random_joint(gen, classes(gen), branches(gen), zero_frac);
    auto e = from_oracle(j);
    const double gain = ig::information_gain(e);
    CHECK(std::abs(gain - oracle::information_gain_decomposition(j)) < 1e-9);
    CHECK(std::abs(gain - oracle::information_gain_kl(j)) < 1e-9);
    CHECK(gain >= -1e-9);
    CHECK(gain <= std::min(oracle::entropy(j.class_marginal()), oracle::entropy(j.branch_marginal())) + 1e-9);
    const double lb = lam(gen);
    CHECK(std::abs(ig::balanced_information_gain(e, lb) - gain -
                   (lb - 1.0) * oracle::entropy(j.branch_marginal())) < 1e-9);
  }
}

TEST_CASE("ig loss: value, zero lambda, gradient vs finite differences") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 8, k = 2, classes = 3;
  std::vector<double> logits(static_cast<std::size_t>(n * k));
  for (auto& v : logits) v = u(gen);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& y : labels) y = static_cast<int>(gen() % classes);

  auto loss_at = [&](const std::vector<double>& z, double lambda_ig, double lambda_balance) {
    Tensor<double> t({n, k});
    std::copy(z.begin(), z.end(), t.data());
    auto probs = ig::tempered_softmax(t, 1.7);
    auto joint = ig::estimate_joint(labels, probs, classes);
    return ig::ig_loss_value(joint, lambda_ig, lambda_balance);
  };

  CHECK(loss_at(logits, 0.0, 2.0) == 0.0);

  for (double lambda_balance : {1.0, 2.0}) {
    // analytic gradient through the tape (softmax + ig loss)
    cign::Tape<double> tape;
    Tensor<double> t({n, k});
    std::copy(logits.begin(), logits.end(), t.data());
    const int zid = tape.input(t);
    const int probs = tape.tempered_softmax(zid, 1.7);
    const int loss = tape.ig_loss(probs, labels, classes, 1.0, lambda_balance);
    tape.backward(loss);
    std::vector<double> analytic(tape.grad(zid).data(), tape.grad(zid).data() + n * k);

    auto numeric = oracle::finite_difference(
        [&](const std::vector<double>& z) { return loss_at(z, 1.0, lambda_balance); }, logits);
    CHECK(oracle::gradient_rel_error(analytic, numeric) < 1e-4);

    // lambda_ig scales the gradient linearly
    CHECK(loss_at(logits, 3.0, lambda_balance) ==
          doctest::Approx(3.0 * loss_at(logits, 1.0, lambda_balance)).epsilon(1e-12));
  }
}

TEST_CASE("ig loss: stationary at a perfect split") {
  // Two classes routed hard to opposite branches by widely separated
  // logits; the gradient w.r.t. the logits must vanish through the
  // saturated softmax.
  const int n = 6;
  Tensor<double> logits({n, 2});
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    labels[static_cast<std::size_t>(i)] = y;
    logits.at2(i, 0) = y == 0 ? 40.0 : -40.0;
    logits.at2(i, 1) = y == 0 ? -40.0 : 40.0;
  }
  cign::Tape<double> tape;
  const int zid = tape.input(logits);
  const int probs = tape.tempered_softmax(zid, 1.0);
  const int loss = tape.ig_loss(probs, labels, 2, 1.0, 2.0);
  tape.backward(loss);
  double norm = 0.0;
  for (std::size_t i = 0; i < tape.grad(zid).size(); ++i) {
    norm += tape.grad(zid)[i] * tape.grad(zid)[i];
  }
  CHECK(std::sqrt(norm) < 1e-6);
  // and the loss sits at the balanced optimum -(ln2 + 2*ln2 - ln2)
  CHECK(tape.value(loss)[0] == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-9));
}
