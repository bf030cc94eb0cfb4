#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace sot {

/// Seed for a named sub-purpose of a session ("greedy", round 2, ...).
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

/// Seeded generator whose outputs are bit-identical on every host.
///
/// Only the raw mt19937_64 stream is used; range reduction, coin flips and
/// shuffles are implemented here because the standard distributions are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(below(items.size()))];
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sot
