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

#include "cign/network.hpp"
#include "oracles.hpp"

using namespace cign;

namespace {

// Small [2,2] tree on 8x8 inputs, 3 classes.
TreeSpec tiny_cign(RouterSource source, double cls_dropout = 0.0, double ig_dropout = 0.0) {
  TreeSpec t;
  t.name = "tiny_cign";
  t.branching = {2, 2};
  t.router_source = source;
  t.class_count = 3;
  t.input_shape = {8, 8, 1};
  NodeSpec root;
  root.f_stack = {LayerSpec::conv(3, 4), LayerSpec::relu(), LayerSpec::pool(2, 2)};
  root.h_stack = {LayerSpec::pool(2, 2), LayerSpec::flatten(), LayerSpec::fc(6),
                  LayerSpec::relu(), LayerSpec::fc(2)};
  if (ig_dropout > 0.0) {
    root.h_stack.insert(root.h_stack.end() - 1, LayerSpec::dropout(ig_dropout));
  }
  t.nodes.push_back(root);
  for (int i = 0; i < 2; ++i) {
    NodeSpec mid;
    mid.f_stack = {LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::pool(2, 2)};
    mid.h_stack = root.h_stack;
    if (source == RouterSource::fed_from_f) {
      // depth-1 tap is 4x4x... pool(2,2) inside H still works
    }
    t.nodes.push_back(mid);
  }
  for (int i = 0; i < 4; ++i) {
    NodeSpec leaf;
    leaf.f_stack = {LayerSpec::flatten(), LayerSpec::fc(5), LayerSpec::relu()};
    if (cls_dropout > 0.0) leaf.f_stack.push_back(LayerSpec::dropout(cls_dropout));
    leaf.f_stack.push_back(LayerSpec::fc(3));
    t.nodes.push_back(leaf);
  }
  t.validate();
  return t;
}

template <typename T>
Tensor<T> random_images(int n, int hw, std::uint64_t seed) {
  Tensor<T> t({n, hw, hw, 1});
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(gen));
  return t;
}

std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = static_cast<int>(gen() % static_cast<std::uint64_t>(classes));
  return y;
}

// Standalone network made of the F stacks along a root-leaf path, with
// parameter values copied from the tree.
template <typename T>
CignNetwork<T> standalone_path(const CignNetwork<T>& net, int leaf) {
  const TreeSpec& tree = net.spec();
  TreeSpec chain;
  chain.name = "path_network";
  chain.class_count = tree.class_count;
  chain.input_shape = tree.input_shape;
  NodeSpec root;
  std::vector<std::pair<std::string, std::string>> renames;  // (tree name, chain name)
  int li = 0;
  for (int id : tree.path_to(leaf)) {
    const auto& stack = tree.nodes[static_cast<std::size_t>(id)].f_stack;
    for (std::size_t k = 0; k < stack.size(); ++k) {
      root.f_stack.push_back(stack[k]);
      for (const char* suffix : {"w", "b"}) {
        renames.push_back({"n" + std::to_string(id) + ".F." + std::to_string(k) + "." + suffix,
                           "n0.F." + std::to_string(li) + "." + suffix});
      }
      ++li;
    }
  }
  chain.nodes.push_back(std::move(root));
  chain.validate();
  CignNetwork<T> standalone(chain, 999);
  for (const auto& [from, to] : renames) {
    const auto* src = net.params().find(from);
    auto* dst = standalone.params().find(to);
    if (src == nullptr || dst == nullptr) continue;  // layer without params
    REQUIRE(src->value.shape() == dst->value.shape());
    dst->value = src->value;
  }
  return standalone;
}

}  // namespace

TEST_CASE("eval routing is a partition; train rho=0 is dense") {
  for (RouterSource source : {RouterSource::independent, RouterSource::fed_from_f}) {
    CignNetwork<double> net(tiny_cign(source), 42);
    auto images = random_images<double>(64, 8, 5);
    auto labels = random_labels(64, 3, 6);

    auto eval = net.forward(images, labels, RoutingPolicy{Mode::eval, 0.0}, 1.0, nullptr);
    CHECK_FALSE(eval.routing.verify(net.spec(), Mode::eval).has_value());

    auto dense = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 25.0, nullptr);
    CHECK_FALSE(dense.routing.verify(net.spec(), Mode::train).has_value());
    for (int id : net.spec().split_ids()) {
      CHECK(dense.routing.nodes[static_cast<std::size_t>(id)].sample_rows.size() == 64);
    }
    for (int id : net.spec().leaf_ids()) {
      CHECK(dense.routing.nodes[static_cast<std::size_t>(id)].sample_rows.size() == 64);
    }

    // multi-path training phase keeps the cover invariant
    auto cover = net.forward(images, labels, RoutingPolicy{Mode::train, 0.3}, 25.0, nullptr);
    CHECK_FALSE(cover.routing.verify(net.spec(), Mode::train).has_value());
  }
}

TEST_CASE("eval routing decisions are invariant in tau") {
  CignNetwork<double> net(tiny_cign(RouterSource::independent), 11);
  auto images = random_images<double>(32, 8, 7);
  RoutingPolicy eval{Mode::eval, 0.0};
  auto base = net.forward(images, {}, eval, 1.0, nullptr);
  for (double tau : {0.05, 0.7, 25.0, 4000.0}) {
    auto other = net.forward(images, {}, eval, tau, nullptr);
    for (int id = 0; id < net.spec().node_count(); ++id) {
      CHECK(other.routing.nodes[static_cast<std::size_t>(id)].sample_rows ==
            base.routing.nodes[static_cast<std::size_t>(id)].sample_rows);
    }
  }
}

TEST_CASE("single-sample eval equals the standalone path network") {
  for (RouterSource source : {RouterSource::independent, RouterSource::fed_from_f}) {
    CignNetwork<double> net(tiny_cign(source), 77);
    for (int s = 0; s < 8; ++s) {
      auto image = random_images<double>(1, 8, 100 + static_cast<std::uint64_t>(s));
      auto fwd = net.forward(image, {}, RoutingPolicy{Mode::eval, 0.0}, 1.0, nullptr);
      int leaf = -1;
      for (int id : net.spec().leaf_ids()) {
        if (!fwd.routing.nodes[static_cast<std::size_t>(id)].sample_rows.empty()) leaf = id;
      }
      REQUIRE(leaf >= 0);
      auto standalone = standalone_path(net, leaf);
      auto alone = standalone.forward(image, {}, RoutingPolicy{Mode::eval, 0.0}, 1.0, nullptr);
      const auto& a = fwd.tape.value(fwd.leaf_logits[static_cast<std::size_t>(leaf)]);
      const auto& b = alone.tape.value(alone.leaf_logits[0]);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
    }
  }
}

TEST_CASE("single-path gradients match the standalone network; off-path grads are zero") {
  CignNetwork<double> net(tiny_cign(RouterSource::independent), 123);
  auto image = random_images<double>(1, 8, 321);
  std::vector<int> label{1};

  // rho = 1/K makes train-mode routing single-path almost surely
  auto fwd = net.forward(image, label, RoutingPolicy{Mode::train, 0.5}, 1.0, nullptr,
                         LossWeights{1.0, 2.0});
  int leaf = -1;
  for (int id : net.spec().leaf_ids()) {
    if (!fwd.routing.nodes[static_cast<std::size_t>(id)].sample_rows.empty()) leaf = id;
  }
  REQUIRE(leaf >= 0);
  net.params().zero_grads();
  fwd.tape.backward(fwd.total_loss);

  auto standalone = standalone_path(net, leaf);
  auto alone = standalone.forward(image, label, RoutingPolicy{Mode::train, 0.0}, 1.0, nullptr,
                                  LossWeights{0.0, 1.0});
  standalone.params().zero_grads();
  alone.tape.backward(alone.total_loss);

  // map tree params onto chain params again to compare gradients
  const auto path = net.spec().path_to(leaf);
  int li = 0;
  for (int id : path) {
    const auto& stack = net.spec().nodes[static_cast<std::size_t>(id)].f_stack;
    for (std::size_t k = 0; k < stack.size(); ++k) {
      for (const char* suffix : {"w", "b"}) {
        const auto* tree_p =
            net.params().find("n" + std::to_string(id) + ".F." + std::to_string(k) + "." + suffix);
        const auto* chain_p =
            standalone.params().find("n0.F." + std::to_string(li) + "." + suffix);
        if (tree_p == nullptr) continue;
        REQUIRE(chain_p != nullptr);
        for (std::size_t i = 0; i < tree_p->grad.size(); ++i) {
          CHECK(std::abs(tree_p->grad[i] - chain_p->grad[i]) < 1e-6);
        }
      }
      ++li;
    }
  }

  // F parameters on unvisited paths receive exactly zero gradient
  for (int id = 0; id < net.spec().node_count(); ++id) {
    const bool on_path = std::find(path.begin(), path.end(), id) != path.end();
    if (on_path) continue;
    const auto& stack = net.spec().nodes[static_cast<std::size_t>(id)].f_stack;
    for (std::size_t k = 0; k < stack.size(); ++k) {
      for (const char* suffix : {"w", "b"}) {
        const auto* p =
            net.params().find("n" + std::to_string(id) + ".F." + std::to_string(k) + "." + suffix);
        if (p == nullptr) continue;
        bool visited = !fwd.routing.nodes[static_cast<std::size_t>(id)].sample_rows.empty();
        if (visited) continue;  // siblings along the trail can still be visited multi-path
        for (std::size_t i = 0; i < p->grad.size(); ++i) CHECK(p->grad[i] == 0.0);
      }
    }
  }
}

TEST_CASE("gradient flow: IG reaches H only (independent) or H+F taps (fed)") {
  auto images = random_images<double>(12, 8, 9);
  auto labels = random_labels(12, 3, 10);
  for (RouterSource source : {RouterSource::independent, RouterSource::fed_from_f}) {
    CignNetwork<double> net(tiny_cign(source), 5);
    auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 2.0, nullptr,
                           LossWeights{1.0, 2.0});
    // backward through the IG losses alone
    std::vector<int> ig_nodes;
    for (int id : net.spec().split_ids()) {
      if (fwd.ig_loss_nodes[static_cast<std::size_t>(id)] >= 0) {
        ig_nodes.push_back(fwd.ig_loss_nodes[static_cast<std::size_t>(id)]);
      }
    }
    REQUIRE(ig_nodes.size() == 3);
    const int ig_sum = fwd.tape.sum_scalars(ig_nodes);
    net.params().zero_grads();
    fwd.tape.backward(ig_sum);

    double h_norm = 0.0, split_f_norm = 0.0, leaf_f_norm = 0.0;
    for (std::size_t i = 0; i < net.params().count(); ++i) {
      const auto& p = net.params().at(i);
      double n = 0.0;
      for (std::size_t k = 0; k < p.grad.size(); ++k) n += p.grad[k] * p.grad[k];
      if (p.tag == ParamTag::weights_h) h_norm += n;
      else if (p.name.rfind("n3.", 0) == 0 || p.name.rfind("n4.", 0) == 0 ||
               p.name.rfind("n5.", 0) == 0 || p.name.rfind("n6.", 0) == 0) {
        leaf_f_norm += n;
      } else {
        split_f_norm += n;
      }
    }
    CHECK(h_norm > 0.0);
    CHECK(leaf_f_norm == 0.0);
    if (source == RouterSource::independent) {
      CHECK(split_f_norm == 0.0);
    } else {
      CHECK(split_f_norm > 0.0);
    }
  }
}

TEST_CASE("classification loss anchors") {
  // leaf softmax prob 1 for the true class -> loss 0 (up to clamp)
  {
    Tape<double> tape;
    Tensor<double> z({1, 3});
    z[0] = 60.0;  // saturates softmax to ~1
    const int loss = tape.softmax_xent(tape.input(z), {0}, {1.0});
    CHECK(tape.value(loss)[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  // uniform softmax over 10 classes -> ln 10
  {
    Tape<double> tape;
    Tensor<double> z({1, 10});
    const int loss = tape.softmax_xent(tape.input(z), {7}, {1.0});
    CHECK(tape.value(loss)[0] == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  // a sample visiting two leaves with true-class probs 0.5 and 0.25
  // contributes (-ln 0.5 - ln 0.25)/2
  {
    Tape<double> tape;
    Tensor<double> za({1, 2});                    // softmax -> (0.5, 0.5)
    Tensor<double> zb({1, 2});
    zb.at2(0, 1) = std::log(3.0);                 // softmax -> (0.25, 0.75)
    const int la = tape.softmax_xent(tape.input(za), {0}, {0.5});
    const int lb = tape.softmax_xent(tape.input(zb), {0}, {0.5});
    const int total = tape.sum_scalars({la, lb});
    CHECK(tape.value(total)[0] == doctest::Approx(1.0397207708399179).epsilon(1e-12));
  }
}

TEST_CASE("multi-path classification loss at the network level") {
  // Force dual routing everywhere: rho=0 sends every sample to all leaves;
  // each sample then spreads weight 1/4 over the four leaf losses.
  CignNetwork<double> net(tiny_cign(RouterSource::independent), 31);
  auto images = random_images<double>(6, 8, 77);
  auto labels = random_labels(6, 3, 78);
  auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 5.0, nullptr,
                         LossWeights{0.0, 1.0});
  // lambda_ig = 0: total equals classification loss
  CHECK(fwd.total_loss_value() == doctest::Approx(fwd.class_loss_value()).epsilon(1e-15));

  // recompute by hand from the leaf logits
  double expect = 0.0;
  for (int leaf : net.spec().leaf_ids()) {
    const auto& z = fwd.tape.value(fwd.leaf_logits[static_cast<std::size_t>(leaf)]);
    for (int r = 0; r < 6; ++r) {
      double mx = z.at2(r, 0);
      for (int c = 1; c < 3; ++c) mx = std::max(mx, z.at2(r, c));
      double lse = 0.0;
      for (int c = 0; c < 3; ++c) lse += std::exp(z.at2(r, c) - mx);
      const double log_p = z.at2(r, labels[static_cast<std::size_t>(r)]) - mx - std::log(lse);
      expect += -log_p / (6.0 * 4.0);
    }
  }
  CHECK(fwd.class_loss_value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("full CIGN loss matches finite differences (both router modes)") {
  auto images = random_images<double>(6, 8, 13);
  auto labels = random_labels(6, 3, 14);
  for (RouterSource source : {RouterSource::independent, RouterSource::fed_from_f}) {
    CignNetwork<double> net(tiny_cign(source), 55);
    LossWeights lw{1.0, 2.0};
    // rho=0 keeps the routing masks constant under parameter perturbation,
    // so the loss is differentiable at the evaluation point
    auto loss_of = [&]() {
      auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 3.0, nullptr, lw);
      return fwd.total_loss_value();
    };
    net.params().zero_grads();
    {
      auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 3.0, nullptr, lw);
      fwd.tape.backward(fwd.total_loss);
    }
    const double h = 1e-5;
    for (std::size_t pi = 0; pi < net.params().count(); ++pi) {
      auto& p = net.params().at(pi);
      std::vector<double> analytic(p.grad.data(), p.grad.data() + p.grad.size());
      std::vector<double> numeric(p.value.size());
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double keep = p.value[i];
        p.value[i] = keep + h;
        const double up = loss_of();
        p.value[i] = keep - h;
        const double down = loss_of();
        p.value[i] = keep;
        numeric[i] = (up - down) / (2.0 * h);
      }
      INFO("router mode ", std::string(router_source_name(source)), ", parameter ", p.name);
      CHECK(oracle::gradient_rel_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("starved split node: IG skipped, forward completes") {
  TreeSpec spec = tiny_cign(RouterSource::independent);
  CignNetwork<double> net(spec, 3);
  // rig the root router to send everything down child 0
  auto* b = net.params().find("n0.H.4.b");
  REQUIRE(b != nullptr);
  b->value[0] = 50.0;
  b->value[1] = -50.0;

  auto images = random_images<double>(10, 8, 1);
  auto labels = random_labels(10, 3, 2);
  auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.5}, 1.0, nullptr,
                         LossWeights{1.0, 2.0});
  // node 2 (the right split) starves: no IG term, subtree skipped
  bool node2_starved = false;
  for (const auto& s : fwd.starved) {
    if (s.node == 2 && s.split) node2_starved = true;
  }
  CHECK(node2_starved);
  CHECK(fwd.ig_loss_nodes[2] == -1);
  CHECK(fwd.ig_loss_nodes[0] >= 0);
  CHECK(fwd.ig_loss_nodes[1] >= 0);
  CHECK_FALSE(fwd.routing.verify(net.spec(), Mode::train).has_value());
  CHECK(std::isfinite(fwd.total_loss_value()));
  // backward still works
  net.params().zero_grads();
  fwd.tape.backward(fwd.total_loss);
  CHECK(net.params().grads_finite());
}

TEST_CASE("forward determinism within a precision mode") {
  auto run = [](std::uint64_t seed) {
    CignNetwork<float> net(tiny_cign(RouterSource::fed_from_f, 0.2, 0.1), seed);
    auto images = random_images<float>(16, 8, 4);
    auto labels = random_labels(16, 3, 5);
    Rng rng(99);
    auto fwd = net.forward(images, labels, RoutingPolicy{Mode::train, 0.0}, 8.0, &rng,
                           LossWeights{1.0, 2.0});
    return fwd.total_loss_value();
  };
  CHECK(run(21) == run(21));
  CHECK(run(21) != run(22));
}
