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

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cign/common.hpp"

// Append-only, line-delimited JSON run records, and the Max/Min/Avg report
// table assembled from them. Records are written with nlohmann's
// deterministic key ordering, so regenerating a report from persisted
// records is byte-stable.
namespace cign::metrics {

using json = nlohmann::json;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::app) {
    if (!out_) throw DataError("metrics: cannot open " + path.string());
  }

  void record(const json& j) {
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline std::vector<json> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("metrics: cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("metrics: corrupt record in " + path.string());
    out.push_back(std::move(j));
  }
  return out;
}

// Final result of one training run, as extracted from its record stream.
struct RunSummary {
  std::string model;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::size_t param_count = 0;
  bool diverged = false;
};

inline RunSummary summarize(const std::vector<json>& records) {
  RunSummary s;
  for (const auto& r : records) {
    const std::string type = r.value("type", "");
    if (type == "config") {
      s.model = r.value("model", "");
      s.seed = r.value("seed", std::uint64_t(0));
      s.param_count = r.value("param_count", std::size_t(0));
    } else if (type == "epoch") {
      s.test_accuracy = r.value("test_acc", s.test_accuracy);
    } else if (type == "final") {
      s.test_accuracy = r.value("test_acc", s.test_accuracy);
    } else if (type == "event" && r.value("kind", "") == "divergence") {
      s.diverged = true;
    }
  }
  return s;
}

struct ModelRow {
  std::string model;
  double max_acc = 0.0, min_acc = 0.0, avg_acc = 0.0;
  std::size_t param_count = 0;
  int runs = 0;
};

inline std::vector<ModelRow> aggregate(const std::vector<RunSummary>& runs) {
  std::vector<ModelRow> rows;
  for (const auto& r : runs) {
    if (r.diverged) continue;
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const ModelRow& m) { return m.model == r.model; });
    if (it == rows.end()) {
      rows.push_back({r.model, r.test_accuracy, r.test_accuracy, 0.0, r.param_count, 0});
      it = rows.end() - 1;
    }
    it->max_acc = std::max(it->max_acc, r.test_accuracy);
    it->min_acc = std::min(it->min_acc, r.test_accuracy);
    it->avg_acc += r.test_accuracy;
    ++it->runs;
  }
  for (auto& m : rows) {
    if (m.runs > 0) m.avg_acc /= m.runs;
  }
  return rows;
}

inline std::string format_percent(double fraction) {
  std::ostringstream os;
  os << "%" << std::fixed << std::setprecision(2) << fraction * 100.0;
  return os.str();
}

// Plain-text table in the published layout: Model | Max | Min | Avg | #params.
inline std::string render_table(const std::vector<ModelRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "Model" << std::right << std::setw(10) << "Max Ac."
     << std::setw(10) << "Min Ac." << std::setw(10) << "Avg Ac." << std::setw(14) << "# of Params"
     << std::setw(7) << "Runs" << "\n";
  for (const auto& m : rows) {
    os << std::left << std::setw(22) << m.model << std::right << std::setw(10)
       << format_percent(m.max_acc) << std::setw(10) << format_percent(m.min_acc) << std::setw(10)
       << format_percent(m.avg_acc) << std::setw(14) << m.param_count << std::setw(7) << m.runs
       << "\n";
  }
  return os.str();
}

inline std::string render_csv(const std::vector<ModelRow>& rows) {
  std::ostringstream os;
  os << "model,max_acc,min_acc,avg_acc,param_count,runs\n";
  for (const auto& m : rows) {
    os << m.model << "," << std::setprecision(10) << m.max_acc << "," << m.min_acc << ","
       << m.avg_acc << "," << m.param_count << "," << m.runs << "\n";
  }
  return os.str();
}

}  // namespace cign::metrics
