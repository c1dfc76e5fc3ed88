#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lmpanel {

// Deterministic random stream. std::mt19937_64 is bit-exact across platforms
// by the standard; uniforms are derived from raw 64-bit draws because the
// std::*_distribution classes are implementation-defined. Same seed, same
// stream, everywhere.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0,1); safe under log.
  double uniform_pos() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  // Standard normal, Box-Muller on the stream's own uniforms.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    constexpr double two_pi = 6.28318530717958647692;
    double radius = std::sqrt(-2.0 * std::log(uniform_pos()));
    double angle = two_pi * uniform();
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Index drawn from the discrete distribution {probs[0..n-1]}; weights are
  // assumed nonnegative with sum ~1, the last index absorbs rounding slack.
  int categorical(const double* probs, int n) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n - 1; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  // Independent stream for work item `index`. The derivation (splitmix64 of
  // seed and index) is part of the reproducibility contract: parallel code
  // must split streams this way instead of sharing one.
  RngStream substream(std::uint64_t index) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(0x9E3779B97F4A7C15ULL + index)));
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lmpanel
