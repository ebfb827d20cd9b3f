#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace hialign {

// xoshiro256** (Blackman & Vigna) seeded through splitmix64.
//
// Every draw used by the library goes through this class, including
// floating-point conversions, shuffles and Gaussian sampling, so results do
// not depend on the standard library's unspecified distribution algorithms.
// Changing any of these routines invalidates committed golden values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n);
  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // Child generator for parallel stream `index` (seed XOR mixed index).
  Rng split(std::uint64_t index) const;
  // Child generator keyed by a component name, so adding a new component
  // never shifts the stream of an existing one.
  Rng derive(std::string_view label) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view bytes);
// Seed for a named child of `master`; identical to Rng(master).derive(label).seed().
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

}  // namespace hialign
