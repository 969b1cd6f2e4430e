#ifndef RANGESEG_RNG_HPP
#define RANGESEG_RNG_HPP

#include <cstdint>

namespace rangeseg {

// splitmix64: tiny deterministic generator used for all seeded
// initialization. std::mt19937 distributions are not bit-stable across
// standard libraries; this is, so weight tensors and synthetic fixtures
// reproduce exactly on every platform.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
  std::uint64_t state_;
};

} // namespace rangeseg

#endif // RANGESEG_RNG_HPP
