#pragma once

#include <cstdint>
#include <random>

namespace convreuse {

// Seeded generator whose derived draws are bit-identical across standard
// libraries. std::mt19937_64 output is fixed by the standard; the
// distributions in <random> are not, so they are avoided here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // [0, n). Modulo bias is irrelevant for the small n used here.
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace convreuse
