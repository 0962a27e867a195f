#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace aimm {

// Counter-based splittable generator.
//
// A stream is identified by a 64-bit key; the n-th draw is the SplitMix64
// finalizer applied to key + (n + 1) * 0x9E3779B97F4A7C15. Keys for child
// streams are derived by hashing (parent key, child id), so any (seed, id...)
// path yields the same sequence on every platform. The complete state is
// (key, counter).
class Rng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  explicit Rng(std::uint64_t seed) noexcept : key_(mix64(seed + kGolden)) {}

  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) noexcept : Rng(seed) {
    for (auto id : stream) key_ = derive(key_, id);
  }

  static Rng from_state(std::uint64_t key, std::uint64_t counter) noexcept {
    Rng r(0);
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  Rng split(std::uint64_t id) const noexcept { return from_state(derive(key_, id), 0); }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] (inclusive). Modulo bias is below 2^-40 for
  // the small ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Box-Muller; consumes exactly two draws.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t id) noexcept {
    return mix64(key ^ mix64(id + 0x632BE59BD9B4E019ULL));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace aimm
