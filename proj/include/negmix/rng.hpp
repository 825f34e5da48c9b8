#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "negmix/common.hpp"

namespace negmix {

// PCG32 (O'Neill's pcg32_random_r, XSH-RR output). Chosen over std engines
// because every draw here must be bit-identical across platforms and standard
// library versions; the std distributions are implementation defined. All
// randomness in the project flows through this type.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted =
        static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // 53-bit mantissa double in [0, 1).
  double next_double() {
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    std::uint64_t bits53 = ((hi << 21) ^ lo) & ((1ULL << 53) - 1);
    return static_cast<double>(bits53) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, n) via rejection.
  int uniform_int(int n) {
    check(n > 0, "uniform_int: n must be positive");
    std::uint32_t un = static_cast<std::uint32_t>(n);
    std::uint32_t threshold = (-un) % un;  // 2^32 mod n
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return static_cast<int>(r % un);
    }
  }

  // Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Marsaglia-Tsang; alpha < 1 handled by the boost gamma(a+1)*u^(1/a).
  double gamma(double alpha) {
    check(alpha > 0.0, "gamma: alpha must be positive");
    if (alpha < 1.0) {
      double u = next_double();
      while (u <= 0.0) u = next_double();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  // Beta(a, b) as X/(X+Y) with independent gammas; result lies in [0, 1].
  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    double s = x + y;
    if (s <= 0.0) return 0.5;
    return x / s;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named sub-stream derivation: FNV-1a over the tag, mixed with the master
// seed through splitmix64. Every independent consumer (parameter init, each
// epoch's draws, ...) gets its own tag so adding draws to one consumer never
// shifts another's stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : tag) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = master ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Glorot/Xavier uniform: U(-g, g), g = sqrt(6 / (fan_in + fan_out)).
inline Mat glorot_uniform(int rows, int cols, int fan_in, int fan_out, Pcg32& rng) {
  double g = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-g, g);
  return m;
}

}  // namespace negmix
