// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vct {

// Deterministic random source. All distribution transforms are implemented
// by hand on top of std::mt19937_64 so that sequences depend only on the
// seed, not on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi).
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller; pairs are cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Knuth's product method; adequate for the rates used here.
  int poisson(double lambda);

  // Fisher-Yates.
  void shuffle(std::vector<int>& v);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over bytes; used to label RNG streams and to key per-image noise.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t basis = 14695981039346656037ull);
std::uint64_t fnv1a(std::string_view s);

// One independent stream per concern: the master seed is mixed with a fixed
// label (and optional index) so concerns never share state.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

}  // namespace vct
