#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace discap {

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard, so sequences are identical across platforms; the distribution
// helpers below are hand-rolled because std::uniform_*_distribution is
// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). n must be positive.
  size_t below(size_t n) { return static_cast<size_t>(engine_() % n); }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace discap
