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

#include "cign/archs.hpp"
#include "cign/layers.hpp"
#include "cign/network.hpp"

using namespace cign;

namespace {

bool within(double value, double target, double tolerance) {
  return std::abs(value - target) <= tolerance * target;
}

std::size_t grand_total(const CignNetwork<float>& net) {
  return net.total_params(ParamTag::weights_f) + net.total_params(ParamTag::weights_h);
}

}  // namespace

TEST_CASE("layer spec validation") {
  CHECK_THROWS_AS(LayerSpec::conv(0, 8).validate(), ConfigError);
  CHECK_THROWS_AS(LayerSpec::fc(-1).validate(), ConfigError);
  CHECK_THROWS_AS(LayerSpec::dropout(1.0).validate(), ConfigError);
  CHECK_NOTHROW(LayerSpec::dropout(0.0).validate());
  CHECK_NOTHROW(LayerSpec::pool(2, 2).validate());

  // shape inference
  std::vector<int> img{1, 28, 28, 1};
  auto conv_out = layer_output_shape(LayerSpec::conv(5, 20), img);
  CHECK(conv_out == std::vector<int>{1, 28, 28, 20});
  CHECK(layer_param_count(LayerSpec::conv(5, 20), img) == 520);
  auto pool_out = layer_output_shape(LayerSpec::pool(2, 2), conv_out);
  CHECK(pool_out == std::vector<int>{1, 14, 14, 20});
  CHECK_THROWS_AS(layer_output_shape(LayerSpec::fc(10), img), ConfigError);  // needs flatten
}

TEST_CASE("mnist parameter accounting is exact") {
  CignNetwork<float> baseline(archs::mnist_baseline());
  CHECK(grand_total(baseline) == 1256080);
  CHECK(baseline.total_params(ParamTag::weights_h) == 0);

  CignNetwork<float> thin(archs::mnist_thin());
  CHECK(grand_total(thin) == 26695);

  CignNetwork<float> ind(archs::mnist_cign(RouterSource::independent));
  CHECK(ind.total_params(ParamTag::weights_f) == 90190);
  CHECK(ind.total_params(ParamTag::weights_h) == 9702);
  CHECK(grand_total(ind) == 99892);
  CHECK(within(double(grand_total(ind)), 99856.0, 0.05));

  CignNetwork<float> fed(archs::mnist_cign(RouterSource::fed_from_f));
  CHECK(fed.total_params(ParamTag::weights_f) == 90190);
  CHECK(fed.total_params(ParamTag::weights_h) == 30222);
  CHECK(grand_total(fed) == 120412);
  CHECK(within(double(grand_total(fed)), 120366.0, 0.05));

  // per-node decomposition sums to the totals
  std::size_t f_sum = 0, h_sum = 0;
  for (const auto& c : ind.parameter_counts()) {
    f_sum += c.f_params;
    h_sum += c.h_params;
  }
  CHECK(f_sum == ind.total_params(ParamTag::weights_f));
  CHECK(h_sum == ind.total_params(ParamTag::weights_h));
}

TEST_CASE("per-sample eval budget equals expert plus routers on the path") {
  CignNetwork<float> ind(archs::mnist_cign(RouterSource::independent));
  for (const auto& b : ind.path_budgets()) {
    CHECK(b.expert_f == 26695);        // the thin network, exactly
    CHECK(b.routers_h == 6370 + 1666); // root + depth-1 routers
  }
  CignNetwork<float> fed(archs::mnist_cign(RouterSource::fed_from_f));
  for (const auto& b : fed.path_budgets()) {
    CHECK(b.expert_f == 26695);
    CHECK(b.routers_h == 23594 + 3314);
  }
}

TEST_CASE("fashion parameter accounting within 5% of published counts") {
  CignNetwork<float> baseline(archs::fashion_baseline());
  CHECK(grand_total(baseline) == 2638858);
  CHECK(within(double(grand_total(baseline)), 2688522.0, 0.05));

  CignNetwork<float> thin(archs::fashion_thin());
  CHECK(grand_total(thin) == 194298);
  CHECK(within(double(grand_total(thin)), 196362.0, 0.05));

  archs::ArchOptions opt{.cls_dropout = 0.2, .ig_dropout = 0.35};
  CignNetwork<float> ind(archs::fashion_cign(RouterSource::independent, opt));
  CHECK(grand_total(ind) == 639594);
  CHECK(within(double(grand_total(ind)), 643016.0, 0.05));

  opt.cls_dropout = 0.15;
  CignNetwork<float> fed(archs::fashion_cign(RouterSource::fed_from_f, opt));
  CHECK(grand_total(fed) == 705838);
  CHECK(within(double(grand_total(fed)), 713736.0, 0.05));

  // every expert path of the cign equals the thin network's F budget
  for (const auto& b : ind.path_budgets()) CHECK(b.expert_f == 194298);
}

TEST_CASE("tree topology helpers") {
  auto t = archs::mnist_cign(RouterSource::independent);
  CHECK(t.node_count() == 7);
  CHECK(t.split_ids() == std::vector<int>{0, 1, 2});
  CHECK(t.leaf_ids() == std::vector<int>{3, 4, 5, 6});
  CHECK(t.child(0, 0) == 1);
  CHECK(t.child(1, 1) == 4);
  CHECK(t.child(2, 0) == 5);
  CHECK(t.parent(5) == 2);
  CHECK(t.parent(0) == -1);
  CHECK(t.path_to(4) == std::vector<int>{0, 1, 4});
  CHECK(t.max_branching() == 2);

  // invalid trees are rejected
  TreeSpec bad = t;
  bad.nodes.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  TreeSpec no_cls = archs::mnist_baseline();
  no_cls.nodes[0].f_stack.pop_back();
  CHECK_THROWS_AS(no_cls.validate(), ConfigError);
}
