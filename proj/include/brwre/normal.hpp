#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace brwre {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log P(Z >= z) for standard normal Z, accurate far into both tails.
inline double log_normal_sf(double z) {
  if (z == std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  const double inv2 = 1.0 / (z * z);
  const double series = 1.0 - inv2 + 3.0 * inv2 * inv2 - 15.0 * inv2 * inv2 * inv2;
  return -0.5 * z * z - std::log(z * std::sqrt(2.0 * std::numbers::pi)) + std::log(series);
}

/// log P(Z <= z).
inline double log_normal_cdf(double z) { return log_normal_sf(-z); }

}  // namespace brwre
