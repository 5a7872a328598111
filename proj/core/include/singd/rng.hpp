#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "singd/linalg.hpp"

namespace singd {

/// Seeded generator with hand-rolled distribution transforms, so that the
/// same seed produces the same stream on every platform and standard
/// library (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t integer(std::uint64_t bound) { return engine_() % bound; }

  /// Standard normal via Box-Muller (one value per draw, no caching).
  double gaussian() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = stddev * gaussian();
    return m;
  }

  /// Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace singd
