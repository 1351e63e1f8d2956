#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

// (1/n) sum_i ||estimate_i - mu_i||^2 for one realization.
inline double mse(std::span<const double> estimates, const GroundTruth& truth) {
  if (estimates.size() != truth.positions.size())
    throw ArgumentError("mse: estimate and truth sizes differ");
  if (truth.n_tasks() == 0) throw ArgumentError("mse: no tasks");
  double acc = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const double diff = estimates[k] - truth.positions[k];
    acc += diff * diff;
  }
  return acc / static_cast<double>(truth.n_tasks());
}

struct SampleSummary {
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::size_t count = 0;
};

// Mean and standard error from the unbiased sample variance.
inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stderr_mean = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return s;
}

}  // namespace crowdreg
