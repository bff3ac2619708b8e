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

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cign/checkpoint.hpp"
#include "cign/data.hpp"
#include "cign/metrics.hpp"
#include "cign/network.hpp"
#include "cign/schedule.hpp"

namespace cign {

struct TrainOptions {
  ScheduleSet schedule;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty = no persistence
  std::string model_label;
  int train_limit = 0;            // 0 = whole training split
  int eval_batch = 500;
  int train_eval_subsample = 10000;  // samples for train accuracy; 0 = skip, -1 = full
  int eval_every_epochs = 1;
  int log_every = 50;
  bool verify_routing = false;    // check mask invariants after every step
  bool quiet = false;
};

struct TrainResult {
  double final_test_acc = 0.0;
  double final_train_acc = 0.0;
  long iterations = 0;
  bool diverged = false;
  long starved_events = 0;
  std::filesystem::path checkpoint;
};

// Eval-mode accuracy (argmax routing, single leaf per sample).
template <typename T>
double evaluate_accuracy(const CignNetwork<T>& net, const data::LabeledDataset& d,
                         int eval_batch = 500, int limit = 0) {
  const int n = limit > 0 ? std::min(limit, d.count) : d.count;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  long correct = 0;
  for (int begin = 0; begin < n; begin += eval_batch) {
    const int end = std::min(n, begin + eval_batch);
    auto batch = data::make_batch<T>(
        d, std::span<const int>(order.data() + begin, static_cast<std::size_t>(end - begin)));
    const auto pred = net.predict(batch.images);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == batch.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

// Full training loop: epoch shuffling, the lr/tau/rho schedules, sparse
// forward/backward, SGD steps, metrics records and a final checkpoint.
// Deterministic given (seed, schedule, data).
template <typename T>
TrainResult train(CignNetwork<T>& net, const data::LabeledDataset& train_set,
                  const data::LabeledDataset& test_set, const TrainOptions& opt) {
  const ScheduleSet& sched = opt.schedule;
  sched.validate(net.spec().max_branching());
  const int train_n = opt.train_limit > 0 ? std::min(opt.train_limit, train_set.count)
                                          : train_set.count;

  std::unique_ptr<metrics::Writer> log;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    log = std::make_unique<metrics::Writer>(opt.out_dir / "run.jsonl");
    json cfg;
    cfg["type"] = "config";
    cfg["model"] = opt.model_label.empty() ? net.spec().name : opt.model_label;
    cfg["seed"] = opt.seed;
    cfg["param_count"] = net.total_params();
    cfg["batch_size"] = sched.batch_size;
    cfg["epochs"] = sched.epochs;
    cfg["train_samples"] = train_n;
    cfg["base_lr"] = sched.lr.base;
    cfg["lambda_ig"] = sched.lambda_ig;
    cfg["lambda_balance"] = sched.lambda_balance;
    cfg["lambda_f"] = sched.lambda_f;
    cfg["lambda_h"] = sched.lambda_h;
    cfg["init"] = "truncated_normal(0.1)";
    log->record(cfg);
  }

  Rng dropout_rng = Rng(opt.seed).fork(0xd0);
  TrainResult result;
  long it = 0;

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const double rho = sched.rho.at(epoch);
    RoutingPolicy policy{Mode::train, rho};
    data::BatchPlan plan(train_n, sched.batch_size, opt.seed, epoch);
    for (int bi = 0; bi < plan.count(); ++bi, ++it) {
      auto batch = data::make_batch<T>(train_set, plan.indices(bi));
      const double tau = sched.tau.at(it);
      const double lr = sched.lr.at(it);
      LossWeights lw{sched.lambda_ig, sched.lambda_balance};
      std::optional<typename CignNetwork<T>::Forward> fwd_slot;
      try {
        fwd_slot = net.forward(batch.images, batch.labels, policy, static_cast<T>(tau),
                               &dropout_rng, lw);
      } catch (const std::domain_error& e) {
        // non-finite activations surfaced inside the forward pass
        result.diverged = true;
        if (log) {
          log->record({{"type", "event"}, {"kind", "divergence"}, {"iteration", it},
                       {"epoch", epoch}, {"detail", e.what()}});
        }
        throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": " +
                              e.what());
      }
      auto& fwd = *fwd_slot;
      result.starved_events += static_cast<long>(fwd.starved.size());
      for (const auto& s : fwd.starved) {
        if (log) {
          log->record({{"type", "event"}, {"kind", "starved_node"}, {"node", s.node},
                       {"iteration", it}, {"split", s.split}});
        }
      }

      const double loss = fwd.total_loss_value();
      if (!std::isfinite(loss)) {
        result.diverged = true;
        if (log) {
          log->record({{"type", "event"}, {"kind", "divergence"}, {"iteration", it},
                       {"epoch", epoch}});
        }
        throw DivergenceError("training diverged at iteration " + std::to_string(it));
      }

      if (opt.verify_routing) {
        if (auto why = fwd.routing.verify(net.spec(), Mode::train)) {
          throw UsageError("routing invariant violated: " + *why);
        }
        if (rho == 0.0) {
          // dense warm-up: every reached split sees the entire minibatch
          for (int id : net.spec().split_ids()) {
            const auto& nr = fwd.routing.nodes[static_cast<std::size_t>(id)];
            if (nr.reached &&
                static_cast<int>(nr.sample_rows.size()) != batch.images.dim(0)) {
              throw UsageError("rho=0 phase is not dense at node " + std::to_string(id));
            }
          }
        }
      }

      fwd.tape.backward(fwd.total_loss);
      sgd_step(net.params(), SgdConfig{lr, sched.momentum, sched.lambda_f, sched.lambda_h});

      if (log && (it % opt.log_every == 0)) {
        json rec;
        rec["type"] = "iter";
        rec["iteration"] = it;
        rec["epoch"] = epoch;
        rec["loss"] = loss;
        rec["class_loss"] = fwd.class_loss_value();
        rec["lr"] = lr;
        rec["tau"] = tau;
        rec["rho"] = rho;
        json igs = json::object();
        for (int id : net.spec().split_ids()) {
          if (fwd.joints[static_cast<std::size_t>(id)]) {
            igs["n" + std::to_string(id)] =
                double(ig::information_gain(*fwd.joints[static_cast<std::size_t>(id)]));
          }
        }
        rec["ig"] = std::move(igs);
        log->record(rec);
      }
    }

    if (opt.eval_every_epochs > 0 &&
        ((epoch + 1) % opt.eval_every_epochs == 0 || epoch + 1 == sched.epochs)) {
      result.final_test_acc = evaluate_accuracy(net, test_set, opt.eval_batch);
      if (opt.train_eval_subsample != 0) {
        const int limit = opt.train_eval_subsample < 0 ? 0 : opt.train_eval_subsample;
        result.final_train_acc = evaluate_accuracy(net, train_set, opt.eval_batch, limit);
      }
      if (log) {
        log->record({{"type", "epoch"}, {"epoch", epoch}, {"iteration", it},
                     {"test_acc", result.final_test_acc},
                     {"train_acc", result.final_train_acc}});
      }
      if (!opt.quiet) {
        std::fprintf(stderr, "[%s] epoch %d/%d  test_acc %.4f  train_acc %.4f\n",
                     net.spec().name.c_str(), epoch + 1, sched.epochs, result.final_test_acc,
                     result.final_train_acc);
      }
    }
  }

  result.iterations = it;
  if (!opt.out_dir.empty()) {
    result.checkpoint = opt.out_dir / "checkpoint.cign";
    ckpt::save(result.checkpoint, net,
               ckpt::Meta{opt.seed, it, sched.epochs});
    if (log) {
      log->record({{"type", "final"}, {"iterations", it},
                   {"test_acc", result.final_test_acc},
                   {"train_acc", result.final_train_acc},
                   {"starved_events", result.starved_events}});
    }
  }
  return result;
}

// ---- grid search ------------------------------------------------------

// [lo, lo+step, ..., hi] inclusive of both ends (hi included when it lands
// within half a step of the sequence).
inline std::vector<double> grid_points(double lo, double hi, double step) {
  if (step <= 0.0 || hi < lo) throw UsageError("grid: need step > 0 and hi >= lo");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = lo + step * i;
    if (v > hi + step * 0.5) break;
    out.push_back(std::min(v, hi));
  }
  return out;
}

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

struct GridPoint {
  std::string axis;
  double value = 0.0;
  double accuracy = 0.0;
};

struct GridOutcome {
  std::vector<GridPoint> points;
  std::map<std::string, double> best;  // fixed axis values, in search order
};

// Applies a named override to a schedule; axes the schedule does not own
// (dropout probabilities) are left to the objective via the overrides map.
inline bool apply_schedule_axis(ScheduleSet& s, const std::string& name, double value) {
  if (name == "lambda_f" || name == "lambda_baseline") s.lambda_f = value;
  else if (name == "lambda_h") s.lambda_h = value;
  else if (name == "lambda_ig") s.lambda_ig = value;
  else if (name == "lambda_balance") s.lambda_balance = value;
  else if (name == "base_lr") s.lr.base = value;
  else if (name == "momentum") s.momentum = value;
  else if (name == "cls_dropout" || name == "ig_dropout") return false;
  else throw UsageError("grid: unknown axis '" + name + "'");
  return true;
}

// Sequential protocol: axes are optimized in order, each with all earlier
// axes fixed at their best values. The objective receives the adjusted
// schedule plus any non-schedule overrides and returns test accuracy.
using GridObjective =
    std::function<double(const ScheduleSet&, const std::map<std::string, double>&)>;

inline GridOutcome grid_search(const ScheduleSet& base, const std::vector<GridAxis>& axes,
                               const GridObjective& objective) {
  if (axes.empty()) throw UsageError("grid: no axes given");
  for (const auto& a : axes) {
    if (a.values.empty()) throw UsageError("grid: axis '" + a.name + "' has an empty grid");
  }
  GridOutcome out;
  for (const auto& axis : axes) {
    double best_acc = -1.0, best_value = axis.values.front();
    for (double v : axis.values) {
      ScheduleSet s = base;
      std::map<std::string, double> overrides = out.best;
      overrides[axis.name] = v;
      std::map<std::string, double> extra;
      for (const auto& [name, value] : overrides) {
        if (!apply_schedule_axis(s, name, value)) extra[name] = value;
      }
      const double acc = objective(s, extra);
      out.points.push_back({axis.name, v, acc});
      if (acc > best_acc) {
        best_acc = acc;
        best_value = v;
      }
    }
    out.best[axis.name] = best_value;
  }
  return out;
}

}  // namespace cign
