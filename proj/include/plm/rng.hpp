#pragma once

#include <cstdint>
#include <limits>

namespace plm {

/// Counter-based, splittable generator. Every draw is a pure function of
/// (key, counter), so independent streams can be derived with split() and
/// results do not depend on the order in which streams are consumed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 123) : key_(mix(seed ^ 0x9E3779B97F4A7C15ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + mix(counter_++)); }

  /// Child stream identified by `stream`; does not advance this generator.
  [[nodiscard]] Rng split(std::uint64_t stream) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(stream + 0xD1B54A32D192ED03ULL));
    child.counter_ = 0;
    return child;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result exactly uniform.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = (*this)();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace plm
