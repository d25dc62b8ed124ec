#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace relex {

// Seeded generator whose draws do not depend on the standard library's
// distribution implementations, so artifacts are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  // Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Splits [0, n) into (kept, held_out) with round(n * fraction) held out.
// Both halves are returned in ascending order. The same (n, fraction, seed)
// always yields the same split.
struct Split {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> held_out;
};
Split split_holdout(std::size_t n, double fraction, std::uint64_t seed);

}  // namespace relex
