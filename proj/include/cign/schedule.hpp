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

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "cign/common.hpp"

namespace cign {

// Piecewise-constant learning rate: base times a periodic factor (factor
// applied once per `period` iterations, unbounded) and/or one-off event
// factors applied from their iteration onwards. Pure in (config, iteration).
struct LrSchedule {
  double base = 0.0;
  long period = 0;             // 0 disables the periodic rule
  double period_factor = 1.0;  // e.g. 0.5 halves every `period` iterations
  struct Event {
    long iteration;
    double factor;
  };
  std::vector<Event> events;

  double at(long iteration) const {
    double lr = base;
    if (period > 0) {
      const long k = iteration / period;
      for (long i = 0; i < k; ++i) lr *= period_factor;
    }
    for (const Event& e : events) {
      if (iteration >= e.iteration) lr *= e.factor;
    }
    return lr;
  }
};

// tau(iter) = max(tau_min, tau0 * decay^floor(iter/period)).
struct TauSchedule {
  double tau0 = 1.0;
  double decay = 1.0;
  long period = 1;
  double tau_min = 1.0;

  double at(long iteration) const {
    const double steps = static_cast<double>(iteration / period);
    return std::max(tau_min, tau0 * std::pow(decay, steps));
  }
};

// Epoch-indexed step function for the routing threshold.
struct RhoSchedule {
  // (from_epoch, value) pairs, ascending; value holds from from_epoch on.
  std::vector<std::pair<int, double>> steps{{0, 0.0}};

  double at(int epoch) const {
    double v = 0.0;
    for (const auto& [from, value] : steps) {
      if (epoch >= from) v = value;
    }
    return v;
  }
};

// Every schedule and coefficient of a training run.
struct ScheduleSet {
  LrSchedule lr;
  double momentum = 0.9;
  TauSchedule tau;
  RhoSchedule rho;
  double lambda_ig = 1.0;
  double lambda_balance = 1.0;
  double lambda_f = 0.0;
  double lambda_h = 0.0;
  int batch_size = 125;
  int epochs = 100;

  void validate(int max_branching) const {
    if (lr.base <= 0.0) throw ConfigError("schedule: base learning rate must be positive");
    if (batch_size < 1) throw ConfigError("schedule: batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("schedule: epochs must be at least 1");
    if (tau.tau0 <= 0.0 || tau.tau_min <= 0.0) {
      throw ConfigError("schedule: temperatures must be positive");
    }
    if (tau.period < 1) throw ConfigError("schedule: tau decay period must be at least 1");
    for (const auto& [from, value] : rho.steps) {
      if (from < 0) throw ConfigError("schedule: rho epochs must be non-negative");
      if (value < 0.0) throw ConfigError("schedule: rho must be non-negative");
      if (max_branching > 0 && value > 1.0 / max_branching + 1e-12) {
        throw ConfigError("schedule: rho exceeds the 1/K routing bound");
      }
    }
  }
};

// The published experiment schedules.
namespace schedules {

inline ScheduleSet mnist(bool baseline) {
  ScheduleSet s;
  s.lr.base = 0.025;
  s.lr.period = 15000;
  s.lr.period_factor = 0.5;
  s.momentum = 0.9;
  s.tau = {25.0, 0.9999, 2, 1.0};
  s.rho.steps = {{0, 0.0}, {25, 0.4}};
  s.lambda_ig = 1.0;
  s.lambda_balance = 2.0;
  if (baseline) {
    s.lambda_f = 9e-4;  // lambda_baseline
    s.lambda_h = 0.0;
  } else {
    s.lambda_f = 5e-5;
    s.lambda_h = 9e-4;
  }
  s.batch_size = 125;
  s.epochs = 100;
  return s;
}

inline ScheduleSet fashion() {
  ScheduleSet s;
  s.lr.base = 0.01;
  s.lr.events = {{15000, 0.5}, {30000, 0.5}, {40000, 0.1}};
  s.momentum = 0.9;
  s.tau = {25.0, 0.9999, 2, 1.0};
  s.rho.steps = {{0, 0.0}, {25, 0.4}};
  s.lambda_ig = 1.0;
  s.lambda_balance = 5.0;
  s.lambda_f = 0.0;  // dropout regularizes instead
  s.lambda_h = 0.0;
  s.batch_size = 125;
  s.epochs = 100;
  return s;
}

}  // namespace schedules
}  // namespace cign
