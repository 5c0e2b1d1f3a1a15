#pragma once

#include <cstdint>
#include <cmath>

#include "drfd/types.hpp"

namespace drfd {

/// Deterministic 64-bit generator (xorshift-multiply mixing on top of a
/// splittable seed). All sampling in the library goes through this class so
/// that runs are reproducible across platforms and standard libraries;
/// std::<distribution> types are deliberately avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

  /// Child stream for parallel work; streams derived from distinct indices
  /// are independent for practical purposes.
  Rng derive(std::uint64_t index) const {
    return Rng(mix(state_ ^ mix(index + 1)));
  }

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per pair; the partner is cached).
  double gaussian() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    have_cache_ = true;
    return r * std::cos(a);
  }

  /// Laplace(0, b) by inverse CDF; variance is 2 b^2.
  double laplace(double b) {
    const double u = uniform() - 0.5;
    return u < 0 ? b * std::log1p(2.0 * u) : -b * std::log1p(-2.0 * u);
  }

  Vector gaussian_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  bool have_cache_ = false;
  double cache_ = 0.0;
};

}  // namespace drfd
