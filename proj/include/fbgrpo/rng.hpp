#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace fbgrpo {

std::uint64_t splitmix64(std::uint64_t x);

// FNV-1a, used to fold string identifiers into seed material.
std::uint64_t hash_string(std::string_view s);

// Derives an independent stream seed from a base seed and a path of integers.
// Streams for (seed, scenario, sample) never depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// Thin wrapper over mt19937_64 with distribution code written out so that draws
// are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fbgrpo
