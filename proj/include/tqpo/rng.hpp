#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace tqpo {

/// Counter-based pseudo random generator.
///
/// Draw i of a generator with key K is mix64(K + (i + 1) * 0x9E3779B97F4A7C15),
/// where mix64 is the SplitMix64 finalizer. The whole state is the pair
/// (key, counter), so streams are reproducible bit-for-bit on any platform
/// with 64-bit unsigned wraparound.
///
/// Splitting: split(i) returns a generator keyed by
/// mix64(key ^ mix64(i + 0xD1B54A32D192ED03)), counter 0. It does not advance
/// the parent.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;

  CounterRng() : CounterRng(0) {}
  explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)), counter_(0) {}

  static CounterRng from_state(std::uint64_t key, std::uint64_t counter) {
    CounterRng rng;
    rng.key_ = key;
    rng.counter_ = counter;
    return rng;
  }

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  CounterRng split(std::uint64_t index) const {
    return from_state(mix64(key_ ^ mix64(index + kSplitSalt)), 0);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace tqpo
