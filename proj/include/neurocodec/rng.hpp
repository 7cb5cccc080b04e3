#ifndef NEUROCODEC_RNG_HPP
#define NEUROCODEC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace neurocodec {

// Counter-based deterministic generator (splitmix64 finalizer over a keyed
// counter). Identical output on every platform; no hidden state beyond the
// running counter, so draws can be replayed or skipped by index.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(mix_(seed ^ 0x9E3779B97F4A7C15ULL)) {}

  uint64_t next_u64() { return at(counter_++); }

  // Value of draw `i` independent of the running counter.
  uint64_t at(uint64_t i) const { return mix_(seed_ + i * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Standard normal, Box-Muller (both uniforms drawn, one value returned).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Normal truncated to [-2s, 2s], std s, by rejection.
  double next_trunc_normal(double s) {
    for (;;) {
      const double z = next_normal();
      if (z >= -2.0 && z <= 2.0) return z * s;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), via partial Fisher-Yates.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  static uint64_t mix_(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t counter_ = 0;
};

// Stable seed derivation: children are independent streams keyed by a tag
// string and up to two integer qualifiers.
uint64_t derive_seed(uint64_t parent, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

}  // namespace neurocodec

#endif
