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

// Command-line entry points for training and analyzing conditional
// information gain networks.
//
//   cign train        --config cfg.json [--seed N] [--out DIR]
//   cign evaluate     --checkpoint ckpt --config cfg.json
//   cign histogram    --checkpoint ckpt --config cfg.json [--out DIR]
//   cign count-params --config cfg.json [--csv]
//   cign grid         --config cfg.json --axis name=lo:hi:step ... [--epochs N]
//   cign report       --runs DIR [--csv] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 diverged run.

#include <CLI11.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cign/cign.hpp"

namespace fs = std::filesystem;
using namespace cign;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::string data_root;
  std::vector<std::uint64_t> seeds;
};

ExperimentConfig load_cfg(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.data_root.empty()) cfg.dataset.root = args.data_root;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  return cfg;
}

std::string run_dir_name(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::string model = cfg.arch.empty() ? "tree" : cfg.arch;
  return model + "_seed" + std::to_string(seed);
}

// One directory lock per output dir; stale locks from crashed runs must be
// removed by hand.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    if (fs::exists(path_)) {
      throw ConfigError("output directory " + dir.string() +
                        " is locked by another run (remove " + path_.string() + " if stale)");
    }
    std::ofstream(path_) << "pid " << ::getpid() << "\n";
  }
  ~DirLock() { std::error_code ec; fs::remove(path_, ec); }

 private:
  fs::path path_;
};

int cmd_train(const CommonArgs& args) {
  ExperimentConfig cfg = load_cfg(args);
  auto [train_set, test_set] = load_dataset(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path out = cfg.out_dir / run_dir_name(cfg, seed);
    DirLock lock(out);
    CignNetwork<float> net(cfg.build_tree(), seed);
    TrainOptions opt;
    opt.schedule = cfg.schedule;
    opt.seed = seed;
    opt.out_dir = out;
    opt.model_label = net.spec().name;
    opt.train_limit = cfg.dataset.train_limit;
    opt.eval_batch = cfg.eval_batch;
    opt.train_eval_subsample = cfg.train_eval_subsample;
    opt.verify_routing = cfg.verify_routing;
    auto result = train(net, train_set, test_set, opt);
    std::cout << "seed " << seed << ": test accuracy " << metrics::format_percent(result.final_test_acc)
              << " after " << result.iterations << " iterations -> " << out.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const CommonArgs& args) {
  ExperimentConfig cfg = load_cfg(args);
  if (args.checkpoint_path.empty()) throw ConfigError("evaluate: --checkpoint is required");
  auto loaded = ckpt::load<float>(args.checkpoint_path);
  auto [train_set, test_set] = load_dataset(cfg);
  const double acc = evaluate_accuracy(loaded.network, test_set, cfg.eval_batch);
  std::cout << "model " << loaded.network.spec().name << "  test accuracy "
            << metrics::format_percent(acc) << " (" << test_set.count << " samples)\n";
  return 0;
}

int cmd_histogram(const CommonArgs& args) {
  ExperimentConfig cfg = load_cfg(args);
  if (args.checkpoint_path.empty()) throw ConfigError("histogram: --checkpoint is required");
  auto loaded = ckpt::load<float>(args.checkpoint_path);
  auto [train_set, test_set] = load_dataset(cfg);
  auto hist = leaf_histogram(loaded.network, test_set, cfg.eval_batch);

  std::vector<std::string> names;
  if (cfg.dataset.name == "fashion_mnist") {
    for (const char* n : data::fashion_class_names()) names.push_back(n);
  } else {
    for (int c = 0; c < 10; ++c) names.push_back(std::to_string(c));
  }
  const std::string text = render_histogram(hist, names);
  std::cout << text;
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream(fs::path(args.out_dir) / "histogram.txt") << text;
    std::ofstream(fs::path(args.out_dir) / "histogram.csv") << histogram_csv(hist, names);
    std::cout << "written to " << args.out_dir << "/histogram.{txt,csv}\n";
  }
  return 0;
}

int cmd_count_params(const CommonArgs& args, bool csv) {
  ExperimentConfig cfg = load_cfg(args);
  CignNetwork<float> net(cfg.build_tree(), 1);
  const auto counts = net.parameter_counts();
  const auto budgets = net.path_budgets();
  if (csv) {
    std::cout << "node,f_params,h_params\n";
    for (const auto& c : counts) std::cout << c.node << "," << c.f_params << "," << c.h_params << "\n";
    std::cout << "leaf,expert_f,routers_h,per_sample_total\n";
    for (const auto& b : budgets) {
      std::cout << b.leaf << "," << b.expert_f << "," << b.routers_h << ","
                << b.expert_f + b.routers_h << "\n";
    }
  } else {
    std::cout << "model: " << net.spec().name << "\n";
    std::cout << "per-node parameters (W_F | W_H):\n";
    for (const auto& c : counts) {
      std::cout << "  node " << c.node << (net.spec().is_leaf(c.node) ? " (leaf)" : "")
                << ": " << c.f_params << " | " << c.h_params << "\n";
    }
    std::cout << "per-sample eval budget (expert path + routers on path):\n";
    for (const auto& b : budgets) {
      std::cout << "  leaf " << b.leaf << ": " << b.expert_f << " + " << b.routers_h << " = "
                << b.expert_f + b.routers_h << "\n";
    }
  }
  std::cout << "W_F total: " << net.total_params(ParamTag::weights_f) << "\n";
  std::cout << "W_H total: " << net.total_params(ParamTag::weights_h) << "\n";
  std::cout << "total: " << net.total_params() << "\n";
  return 0;
}

std::vector<double> parse_axis_values(const std::string& spec) {
  // "lo:hi:step" or comma list "a,b,c"
  if (spec.find(':') != std::string::npos) {
    double lo, hi, step;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3) {
      throw ConfigError("grid axis range must be lo:hi:step");
    }
    return grid_points(lo, hi, step);
  }
  std::vector<double> values;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  if (values.empty()) throw ConfigError("grid axis has no values");
  return values;
}

int cmd_grid(const CommonArgs& args, const std::vector<std::string>& axis_specs, int epochs) {
  ExperimentConfig cfg = load_cfg(args);
  if (axis_specs.empty()) throw ConfigError("grid: at least one --axis name=values is required");
  std::vector<GridAxis> axes;
  for (const auto& spec : axis_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("grid: --axis takes name=lo:hi:step or name=a,b,c");
    axes.push_back({spec.substr(0, eq), parse_axis_values(spec.substr(eq + 1))});
  }
  auto [train_set, test_set] = load_dataset(cfg);
  if (epochs > 0) cfg.schedule.epochs = epochs;

  fs::create_directories(cfg.out_dir);
  metrics::Writer log(cfg.out_dir / "grid.jsonl");
  int run_index = 0;
  auto objective = [&](const ScheduleSet& s, const std::map<std::string, double>& extra) {
    ExperimentConfig point = cfg;
    point.schedule = s;
    if (extra.count("cls_dropout")) point.cls_dropout = extra.at("cls_dropout");
    if (extra.count("ig_dropout")) point.ig_dropout = extra.at("ig_dropout");
    CignNetwork<float> net(point.build_tree(), cfg.seeds.front());
    TrainOptions opt;
    opt.schedule = point.schedule;
    opt.seed = cfg.seeds.front();
    opt.train_limit = cfg.dataset.train_limit;
    opt.eval_batch = cfg.eval_batch;
    opt.train_eval_subsample = 0;
    opt.quiet = true;
    double acc = 0.0;
    try {
      acc = train(net, train_set, test_set, opt).final_test_acc;
    } catch (const DivergenceError&) {
      acc = 0.0;  // a diverged grid point scores zero
    }
    json rec;
    rec["type"] = "grid_point";
    rec["index"] = run_index++;
    rec["lambda_f"] = s.lambda_f;
    rec["lambda_h"] = s.lambda_h;
    rec["lambda_balance"] = s.lambda_balance;
    for (const auto& [k, v] : extra) rec[k] = v;
    rec["test_acc"] = acc;
    log.record(rec);
    std::cout << "  grid point " << run_index << ": acc " << metrics::format_percent(acc) << "\n";
    return acc;
  };
  auto outcome = grid_search(cfg.schedule, axes, objective);
  std::cout << "best values:\n";
  for (const auto& [name, value] : outcome.best) std::cout << "  " << name << " = " << value << "\n";
  return 0;
}

int cmd_report(const std::string& runs_dir, bool csv, const std::string& out_dir) {
  std::vector<metrics::RunSummary> runs;
  if (!fs::exists(runs_dir)) throw DataError("report: no such directory " + runs_dir);
  for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "run.jsonl") {
      runs.push_back(metrics::summarize(metrics::read_records(entry.path())));
    }
  }
  if (runs.empty()) throw DataError("report: no run.jsonl files under " + runs_dir);
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return a.model == b.model ? a.seed < b.seed : a.model < b.model;
  });
  auto rows = metrics::aggregate(runs);
  const std::string table = metrics::render_table(rows);
  std::cout << table;
  if (csv) std::cout << metrics::render_csv(rows);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "report.txt") << table;
    std::ofstream(fs::path(out_dir) / "report.csv") << metrics::render_csv(rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional information gain networks: training, evaluation and analysis"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<std::string> axis_specs;
  int grid_epochs = 0;
  bool csv = false;
  std::string runs_dir;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* c = cmd->add_option("--config", args.config_path, "experiment config (json)");
    if (need_config) c->required();
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--data-root", args.data_root, "dataset root (else $CIGN_DATA_DIR, else ./data)");
    cmd->add_option("--seed", args.seeds, "seed override (repeatable)");
  };

  auto* t = app.add_subcommand("train", "train per the config, one run per seed");
  add_common(t, true);

  auto* e = app.add_subcommand("evaluate", "test accuracy of a checkpoint");
  add_common(e, true);
  e->add_option("--checkpoint", args.checkpoint_path, "checkpoint file")->required();

  auto* h = app.add_subcommand("histogram", "tree-shaped class histogram under eval routing");
  add_common(h, true);
  h->add_option("--checkpoint", args.checkpoint_path, "checkpoint file")->required();

  auto* c = app.add_subcommand("count-params", "per-node / per-path / total parameter counts");
  add_common(c, true);
  c->add_flag("--csv", csv, "machine-readable output");

  auto* g = app.add_subcommand("grid", "grid search over schedule axes (sequential protocol)");
  add_common(g, true);
  g->add_option("--axis", axis_specs, "axis as name=lo:hi:step or name=a,b,c (order = fixing order)")
      ->required();
  g->add_option("--epochs", grid_epochs, "override epochs per grid point");

  auto* r = app.add_subcommand("report", "aggregate run records into a Max/Min/Avg table");
  r->add_option("--runs", runs_dir, "directory scanned recursively for run.jsonl")->required();
  r->add_flag("--csv", csv, "also print csv");
  r->add_option("--out", args.out_dir, "write report files here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) return cmd_train(args);
    if (e->parsed()) return cmd_evaluate(args);
    if (h->parsed()) return cmd_histogram(args);
    if (c->parsed()) return cmd_count_params(args, csv);
    if (g->parsed()) return cmd_grid(args, axis_specs, grid_epochs);
    if (r->parsed()) return cmd_report(runs_dir, csv, args.out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::config_error);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data_error);
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return static_cast<int>(ExitCode::diverged);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
