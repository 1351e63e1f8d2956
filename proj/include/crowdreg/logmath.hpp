#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace crowdreg {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Floor applied to normalized log-probabilities of BI messages.
inline constexpr double kLogFloor = -745.0;

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf || !std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// Normalizes in place so that log_sum_exp(xs) == 0; returns the old
// normalizer.
inline double log_normalize(std::span<double> xs) {
  const double z = log_sum_exp(xs);
  if (!std::isfinite(z)) return z;
  for (double& x : xs) x -= z;
  return z;
}

// Normalize, then clamp at kLogFloor so no state is ever exactly impossible.
inline void log_normalize_floored(std::span<double> xs) {
  log_normalize(xs);
  for (double& x : xs) x = std::max(x, kLogFloor);
}

}  // namespace crowdreg
