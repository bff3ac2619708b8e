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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cign/archs.hpp"
#include "cign/data.hpp"
#include "cign/schedule.hpp"
#include "cign/serialize.hpp"

// Experiment configuration: JSON with a documented schema, validated
// strictly (unknown keys are rejected). Schedule values default to the
// published settings for the chosen dataset/model and can be overridden
// key by key.
namespace cign {

struct DatasetConfig {
  std::string name;                 // mnist | fashion_mnist | synthetic
  std::filesystem::path root;       // IDX directory; CIGN_DATA_DIR fallback
  int synthetic_train = 4000;       // synthetic split sizes
  int synthetic_test = 1000;
  int train_limit = 0;              // 0 = all
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::string arch;                  // named architecture, or empty when...
  std::optional<json> tree_json;     // ...an explicit tree is given
  double cls_dropout = -1.0;         // <0 = architecture default
  double ig_dropout = -1.0;
  ScheduleSet schedule;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out_dir = "runs";
  int eval_batch = 500;
  int train_eval_subsample = 10000;
  bool verify_routing = false;

  TreeSpec build_tree() const {
    if (tree_json) return tree_from_json(*tree_json);
    archs::ArchOptions opt;
    const bool fashion = dataset.name == "fashion_mnist";
    if (fashion) {
      opt.cls_dropout = 0.35;
      if (arch == "fashion_cign_fed") opt.cls_dropout = 0.15;
      if (arch == "fashion_cign_ind") opt.cls_dropout = 0.2;
      opt.ig_dropout = arch.find("cign") != std::string::npos ? 0.35 : 0.0;
    }
    if (cls_dropout >= 0.0) opt.cls_dropout = cls_dropout;
    if (ig_dropout >= 0.0) opt.ig_dropout = ig_dropout;
    return archs::by_name(arch, opt);
  }

  std::filesystem::path dataset_root() const {
    if (!dataset.root.empty()) return dataset.root;
    if (const char* env = std::getenv("CIGN_DATA_DIR")) return env;
    return "data";
  }
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : keys) {
      if (key == k) ok = true;
    }
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline ScheduleSet default_schedule(const std::string& dataset, const std::string& arch) {
  if (dataset == "fashion_mnist") return schedules::fashion();
  const bool baseline = arch.find("cign") == std::string::npos;
  ScheduleSet s = schedules::mnist(baseline);
  if (dataset == "synthetic") s.epochs = 2;
  return s;
}

inline void apply_schedule_json(ScheduleSet& s, const json& j) {
  reject_unknown(j,
                 {"base_lr", "lr_period", "lr_period_factor", "lr_events", "momentum", "tau0",
                  "tau_decay", "tau_period", "tau_min", "rho_steps", "lambda_ig",
                  "lambda_balance", "lambda_f", "lambda_h", "batch_size", "epochs"},
                 "schedule");
  if (j.contains("base_lr")) s.lr.base = j.at("base_lr").get<double>();
  if (j.contains("lr_period")) s.lr.period = j.at("lr_period").get<long>();
  if (j.contains("lr_period_factor")) s.lr.period_factor = j.at("lr_period_factor").get<double>();
  if (j.contains("lr_events")) {
    s.lr.events.clear();
    for (const auto& e : j.at("lr_events")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("schedule: lr_events entries are [iteration, factor]");
      s.lr.events.push_back({e.at(0).get<long>(), e.at(1).get<double>()});
    }
  }
  if (j.contains("momentum")) s.momentum = j.at("momentum").get<double>();
  if (j.contains("tau0")) s.tau.tau0 = j.at("tau0").get<double>();
  if (j.contains("tau_decay")) s.tau.decay = j.at("tau_decay").get<double>();
  if (j.contains("tau_period")) s.tau.period = j.at("tau_period").get<long>();
  if (j.contains("tau_min")) s.tau.tau_min = j.at("tau_min").get<double>();
  if (j.contains("rho_steps")) {
    s.rho.steps.clear();
    for (const auto& e : j.at("rho_steps")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("schedule: rho_steps entries are [epoch, value]");
      s.rho.steps.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
    }
  }
  if (j.contains("lambda_ig")) s.lambda_ig = j.at("lambda_ig").get<double>();
  if (j.contains("lambda_balance")) s.lambda_balance = j.at("lambda_balance").get<double>();
  if (j.contains("lambda_f")) s.lambda_f = j.at("lambda_f").get<double>();
  if (j.contains("lambda_h")) s.lambda_h = j.at("lambda_h").get<double>();
  if (j.contains("batch_size")) s.batch_size = j.at("batch_size").get<int>();
  if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"dataset", "model", "schedule", "seeds", "out_dir", "eval_batch",
                          "train_eval_subsample", "verify_routing"},
                         "config");
  ExperimentConfig cfg;

  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  const json& ds = j.at("dataset");
  detail::reject_unknown(ds, {"name", "root", "synthetic_train", "synthetic_test", "train_limit"},
                         "dataset");
  cfg.dataset.name = ds.at("name").get<std::string>();
  if (cfg.dataset.name != "mnist" && cfg.dataset.name != "fashion_mnist" &&
      cfg.dataset.name != "synthetic") {
    throw ConfigError("dataset: name must be mnist|fashion_mnist|synthetic");
  }
  if (ds.contains("root")) cfg.dataset.root = ds.at("root").get<std::string>();
  if (ds.contains("synthetic_train")) cfg.dataset.synthetic_train = ds.at("synthetic_train").get<int>();
  if (ds.contains("synthetic_test")) cfg.dataset.synthetic_test = ds.at("synthetic_test").get<int>();
  if (ds.contains("train_limit")) cfg.dataset.train_limit = ds.at("train_limit").get<int>();

  if (!j.contains("model")) throw ConfigError("config: missing 'model'");
  const json& m = j.at("model");
  detail::reject_unknown(m, {"arch", "tree", "cls_dropout", "ig_dropout"}, "model");
  if (m.contains("tree")) {
    cfg.tree_json = m.at("tree");
  } else if (m.contains("arch")) {
    cfg.arch = m.at("arch").get<std::string>();
  } else {
    throw ConfigError("model: needs 'arch' or 'tree'");
  }
  if (m.contains("cls_dropout")) cfg.cls_dropout = m.at("cls_dropout").get<double>();
  if (m.contains("ig_dropout")) cfg.ig_dropout = m.at("ig_dropout").get<double>();

  cfg.schedule = detail::default_schedule(cfg.dataset.name, cfg.arch);
  if (j.contains("schedule")) detail::apply_schedule_json(cfg.schedule, j.at("schedule"));

  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must not be empty");
  }
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("eval_batch")) cfg.eval_batch = j.at("eval_batch").get<int>();
  if (j.contains("train_eval_subsample")) {
    cfg.train_eval_subsample = j.at("train_eval_subsample").get<int>();
  }
  if (j.contains("verify_routing")) cfg.verify_routing = j.at("verify_routing").get<bool>();

  // full validation happens here: the tree must build and the schedule must
  // satisfy the routing bound
  const TreeSpec tree = cfg.build_tree();
  cfg.schedule.validate(tree.max_branching());
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return config_from_json(j);
}

// Loads the dataset splits named by the config.
inline std::pair<data::LabeledDataset, data::LabeledDataset> load_dataset(
    const ExperimentConfig& cfg) {
  if (cfg.dataset.name == "synthetic") {
    return {data::synthetic_dataset(cfg.dataset.synthetic_train, 7, "train"),
            data::synthetic_dataset(cfg.dataset.synthetic_test, 7, "test")};
  }
  const auto root = cfg.dataset_root() / (cfg.dataset.name == "mnist" ? "mnist" : "fashion_mnist");
  return {data::load_named(root, "train"), data::load_named(root, "test")};
}

}  // namespace cign
