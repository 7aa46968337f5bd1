// Copyright 2026 The LASER Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef LASER_RNG_H_
#define LASER_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace laser {

// Deterministic RNG. The distribution transforms are spelled out here instead
// of using <random> distributions, whose output is implementation-defined;
// same seed therefore means the same stream on every platform and compiler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Modulo bias is negligible for the
  // range sizes used here (n far below 2^32).
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one value per call, the pair's twin is discarded so the
  // stream position depends only on call count.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stddev * z;
  }

  // Derives an independent child stream from the construction seed; hands
  // each track / epoch its own generator so results do not depend on the
  // order in which consumers draw.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t s = seed_ ^ (salt * 0x9E3779B97F4A7C15ull);
    s ^= s >> 30;
    s *= 0xBF58476D1CE4E5B9ull;
    s ^= s >> 27;
    s *= 0x94D049BB133111EBull;
    s ^= s >> 31;
    return Rng(s);
  }

  // Fisher-Yates with this engine.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace laser

#endif  // LASER_RNG_H_
