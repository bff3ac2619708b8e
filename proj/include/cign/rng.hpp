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
#include <random>

namespace cign {

// splitmix64; used to derive independent streams from a base seed.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

// Deterministic RNG stream. All draws are made in double precision so the
// f32 and f64 instantiations of a model see identical random decisions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(mix_seed(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    return std::generate_canonical<double, 53>(gen_);
  }

  double normal() { return normal_(gen_); }

  // Normal(0, stddev) with samples beyond two standard deviations redrawn.
  double truncated_normal(double stddev) {
    for (;;) {
      double x = normal();
      if (x >= -2.0 && x <= 2.0) return x * stddev;
    }
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(gen_);
  }

  // Derives an independent stream; pure in (seed, stream), does not consume
  // state from this generator.
  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cign
