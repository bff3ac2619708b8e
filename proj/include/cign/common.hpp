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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cign {

// CLI exit codes, documented in the README.
enum class ExitCode : int {
  ok = 0,
  config_error = 2,
  data_error = 3,
  diverged = 4,
};

// Invalid configuration: bad schema, inconsistent layer attributes, shape
// mismatches, out-of-range schedule values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or missing input data (IDX files, checkpoints).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse by calling code (e.g. backward on a non-scalar).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// A training run produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { train, eval };

inline const char* mode_name(Mode m) { return m == Mode::train ? "train" : "eval"; }

}  // namespace cign
