#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "softbart/random.hpp"

namespace softbart {

/// Standard normal restricted to (a, inf). Inverse-CDF on the upper tail for
/// a < 5; beyond that, exponential rejection with the optimal rate.
inline double truncnorm_above(Rng& rng, double a) {
  if (a < 5.0) {
    // Q(z) = erfc(z / sqrt2) / 2 is evaluated directly so that the upper tail
    // keeps full relative precision.
    const double q_a = 0.5 * std::erfc(a / std::numbers::sqrt2);
    const double u = rng.uniform_open() * q_a;
    const double z = std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    return z > a ? z : a;
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + rng.exponential(rate);
    const double d = z - rate;
    if (std::log(rng.uniform_open()) < -0.5 * d * d) return z;
  }
}

/// Normal(mean, 1) restricted to (0, inf) when positive is true, else to
/// (-inf, 0).
inline double truncnorm_sign(Rng& rng, double mean, bool positive) {
  if (positive) return mean + truncnorm_above(rng, -mean);
  return mean - truncnorm_above(rng, mean);
}

}  // namespace softbart
