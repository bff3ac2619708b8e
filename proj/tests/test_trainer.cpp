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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cign/trainer.hpp"

using namespace cign;
namespace fs = std::filesystem;

namespace {

TreeSpec smoke_tree() {
  TreeSpec t;
  t.name = "smoke_cign";
  t.branching = {2};
  t.router_source = RouterSource::independent;
  t.class_count = 10;
  NodeSpec root;
  root.f_stack = {LayerSpec::conv(5, 6), LayerSpec::relu(), LayerSpec::pool(2, 2)};
  root.h_stack = {LayerSpec::pool(4, 4), LayerSpec::flatten(), LayerSpec::fc(12),
                  LayerSpec::relu(), LayerSpec::fc(2)};
  t.nodes.push_back(root);
  for (int i = 0; i < 2; ++i) {
    NodeSpec leaf;
    leaf.f_stack = {LayerSpec::conv(3, 4), LayerSpec::relu(), LayerSpec::pool(2, 2),
                    LayerSpec::flatten(), LayerSpec::fc(24), LayerSpec::relu(),
                    LayerSpec::fc(10)};
    t.nodes.push_back(leaf);
  }
  t.validate();
  return t;
}

ScheduleSet smoke_schedule() {
  ScheduleSet s = schedules::mnist(false);
  s.epochs = 8;
  s.batch_size = 50;
  s.rho.steps = {{0, 0.0}, {4, 0.4}};  // exercise both routing phases
  return s;
}

}  // namespace

TEST_CASE("training smoke run: invariants hold, learning happens, artifacts persist") {
  auto train_set = data::synthetic_dataset(600, 21, "train");
  auto test_set = data::synthetic_dataset(200, 21, "test");

  const auto out = fs::temp_directory_path() / "cign_smoke_run";
  fs::remove_all(out);

  CignNetwork<float> net(smoke_tree(), 3);
  TrainOptions opt;
  opt.schedule = smoke_schedule();
  opt.seed = 3;
  opt.out_dir = out;
  opt.model_label = "smoke_cign";
  opt.verify_routing = true;  // mask invariants checked after every step
  opt.train_eval_subsample = 300;
  opt.quiet = true;

  auto result = train(net, train_set, test_set, opt);
  CHECK(result.iterations == 8 * 12);
  CHECK_FALSE(result.diverged);
  CHECK(result.final_test_acc > 0.3);  // far above the 10% chance floor

  // artifacts: metrics stream + checkpoint
  REQUIRE(fs::exists(out / "run.jsonl"));
  REQUIRE(fs::exists(out / "checkpoint.cign"));
  auto records = metrics::read_records(out / "run.jsonl");
  CHECK(records.size() >= 4);
  auto summary = metrics::summarize(records);
  CHECK(summary.model == "smoke_cign");
  CHECK(summary.test_accuracy == doctest::Approx(result.final_test_acc));

  // the checkpoint reproduces eval accuracy exactly
  auto loaded = ckpt::load<float>(out / "checkpoint.cign");
  CHECK(evaluate_accuracy(loaded.network, test_set) == doctest::Approx(result.final_test_acc));
}

TEST_CASE("training is deterministic given (seed, config)") {
  auto train_set = data::synthetic_dataset(300, 4, "train");
  auto test_set = data::synthetic_dataset(100, 4, "test");
  auto run = [&](std::uint64_t seed, const char* tag) {
    const auto out = fs::temp_directory_path() / (std::string("cign_det_") + tag);
    fs::remove_all(out);
    CignNetwork<float> net(smoke_tree(), seed);
    TrainOptions opt;
    opt.schedule = smoke_schedule();
    opt.schedule.epochs = 1;
    opt.schedule.rho.steps = {{0, 0.0}};
    opt.seed = seed;
    opt.out_dir = out;
    opt.log_every = 3;
    opt.train_eval_subsample = 0;
    opt.quiet = true;
    auto r = train(net, train_set, test_set, opt);
    // fingerprint a few parameters bitwise
    std::vector<float> fp;
    const auto* p = net.params().find("n0.F.0.w");
    REQUIRE(p != nullptr);
    fp.assign(p->value.data(), p->value.data() + p->value.size());
    fp.push_back(static_cast<float>(r.final_test_acc));
    std::ifstream records(out / "run.jsonl");
    std::stringstream ss;
    ss << records.rdbuf();
    return std::pair<std::vector<float>, std::string>{fp, ss.str()};
  };
  const auto a = run(11, "a"), b = run(11, "b"), c = run(12, "c");
  CHECK(a.first == b.first);
  // the record streams of two same-seed runs are byte-identical
  CHECK(a.second == b.second);
  CHECK(a.second.size() > 100);
  CHECK(a.first != c.first);
}

TEST_CASE("divergent runs abort with a diagnostic record") {
  auto train_set = data::synthetic_dataset(200, 5, "train");
  auto test_set = data::synthetic_dataset(50, 5, "test");
  CignNetwork<float> net(smoke_tree(), 9);
  // a absurd learning rate forces NaN within the first epoch
  TrainOptions opt;
  opt.schedule = smoke_schedule();
  opt.schedule.lr.base = 1e9;
  opt.schedule.epochs = 1;
  opt.seed = 9;
  opt.out_dir = fs::temp_directory_path() / "cign_diverge_run";
  fs::remove_all(opt.out_dir);
  opt.quiet = true;
  CHECK_THROWS_AS(train(net, train_set, test_set, opt), DivergenceError);
  bool divergence_recorded = false;
  for (const auto& r : metrics::read_records(opt.out_dir / "run.jsonl")) {
    if (r.value("type", "") == "event" && r.value("kind", "") == "divergence") {
      divergence_recorded = true;
    }
  }
  CHECK(divergence_recorded);
}
