#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace simdim {

// Counter-based splitmix64 stream. Each (seed, stream, substream) triple
// yields an independent deterministic sequence, so Monte-Carlo trials can be
// distributed over threads without the output depending on the thread count.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
    state_ = mix(seed ^ 0x9e3779b97f4a7c15ULL);
    state_ = mix(state_ + mix(stream + 0xbf58476d1ce4e5b9ULL));
    state_ = mix(state_ + mix(substream + 0x94d049bb133111ebULL));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one value cached.
  double next_gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    cached_ = rad * std::sin(ang);
    have_cached_ = true;
    return rad * std::cos(ang);
  }

  // Index into [0, n); n must be > 0.
  std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next_double() * static_cast<double>(n)) % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace simdim
