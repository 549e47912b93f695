#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "mmimo/common.hpp"

namespace mmimo {

// Purposes that get their own random substream inside one trial.
enum class Stream : std::uint64_t {
  LargeScale = 1,
  SmallScale = 2,
  InfoBits = 3,
  Frame = 4,
  Noise = 5,
  MeanGamma = 6,
  Evaluation = 7,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent seed from a master seed and a key path such as
// (trial, purpose, user). The result depends on the order of the keys.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial, Stream purpose,
                                 std::uint64_t index = 0) {
  return derive_seed(master, {trial, static_cast<std::uint64_t>(purpose), index});
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }

  // Circularly-symmetric complex Gaussian with E|x|^2 = variance.
  cdouble complex_normal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::uint8_t bit() { return static_cast<std::uint8_t>(engine_() >> 63); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mmimo
