/*
 * Copyright 2026 The upada authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
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
#include <string>

namespace upada {

// Deterministic random stream. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard); all value transforms are done here
// so results do not depend on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  std::size_t uniform_index(std::size_t n);

  // Standard normal via Box-Muller. Two engine draws per value; no cached
  // spare, so the stream position is a pure function of the call count.
  double normal() ;
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Fisher-Yates over [0, n) index vector.
  std::vector<std::size_t> permutation(std::size_t n);

  // Engine state as text (standard-defined formatting); used by resumable
  // training state files.
  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::mt19937_64 eng_;
};

// Order-sensitive seed combiner (splitmix64 finalizer over a running hash).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

std::uint64_t hash_string(const std::string& s);

}  // namespace upada
