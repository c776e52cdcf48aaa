#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace eqq {

// x^p for x >= 0. Small integer exponents avoid exp/log.
inline double pow_nonneg(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  if (p == 3.0) return x * x * x;
  if (p == 4.0) {
    const double x2 = x * x;
    return x2 * x2;
  }
  if (x == 0.0) return 0.0;
  return std::exp(p * std::log(x));
}

// ‖v‖^p given ‖v‖².
inline double pow_from_sq(double sq, double p) {
  if (p == 2.0) return sq;
  if (p == 1.0) return std::sqrt(sq);
  if (p == 4.0) return sq * sq;
  if (p == 3.0) return sq * std::sqrt(sq);
  if (sq == 0.0) return 0.0;
  return std::exp(0.5 * p * std::log(sq));
}

inline double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

inline double dist_pow(const double* a, const double* b, int d, double p) {
  return pow_from_sq(sq_dist(a, b, d), p);
}

inline double dist_pow(std::span<const double> a, std::span<const double> b, double p) {
  return dist_pow(a.data(), b.data(), static_cast<int>(a.size()), p);
}

// Integral of |x - y|^p over [x0, x1].
inline double power_integral(double x0, double x1, double y, double p) {
  auto F = [p](double t) {
    const double a = std::abs(t);
    const double v = pow_nonneg(a, p) * a / (p + 1.0);
    return t < 0.0 ? -v : v;
  };
  return F(x1 - y) - F(x0 - y);
}

// Uniform double in [0, 1) from a 64-bit engine; independent of the
// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Mixes a base seed with a stream index (splitmix64 finalizer).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace eqq
