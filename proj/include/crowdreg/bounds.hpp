#pragma once

// Closed-form reference quantities for BI's error: the oracle term
// d E[posterior variance], the gap term of the BI error bound, and the MSE of
// plain averaging on an (ell, r)-regular assignment.

#include <cmath>
#include <limits>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

struct BoundReport {
  double oracle_term = 0.0;
  double gap_term = 0.0;
  double avg_mse_formula = 0.0;
  double epsilon = 0.0;           // smallest gap between support values
  double e_constant = 0.0;        // E_{ell,S}
  double misclassification = 0.0; // 4 exp(-eps^2 r / (8 (8 eps + 1) sigma2_max)), 0 for |S| = 1

  double rhs() const { return oracle_term + gap_term; }
};

// E[(1/tau^2 + sum_u 1/sigma2_u)^-1] over ell i.i.d. uniform draws from the
// support, summed exactly over occupation counts.
inline double expected_posterior_variance(std::size_t ell, const VarianceSupport& support,
                                          const PriorVariance& tau2) {
  if (ell == 0 && tau2.is_flat())
    throw UndefinedPosteriorError("expected_posterior_variance: FLAT prior with no workers");
  const std::size_t S = support.size();
  std::vector<std::size_t> count(S, 0);
  const double log_s = std::log(static_cast<double>(S));
  double total = 0.0;
  // Enumerate compositions of ell into S parts.
  auto visit = [&](auto&& self, std::size_t part, std::size_t left) -> void {
    if (part + 1 == S) {
      count[part] = left;
      double prec = tau2.precision();
      double log_w = std::lgamma(static_cast<double>(ell) + 1.0) - static_cast<double>(ell) * log_s;
      for (std::size_t s = 0; s < S; ++s) {
        prec += static_cast<double>(count[s]) / support[s];
        log_w -= std::lgamma(static_cast<double>(count[s]) + 1.0);
      }
      total += std::exp(log_w) / prec;
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      count[part] = c;
      self(self, part + 1, left - c);
    }
  };
  visit(visit, 0, ell);
  return total;
}

inline double lemma_misclassification_bound(const VarianceSupport& support, std::size_t r) {
  if (support.size() < 2) return 0.0;
  const double eps = support.min_gap();
  return 4.0 * std::exp(-eps * eps * static_cast<double>(r) /
                        (8.0 * (8.0 * eps + 1.0) * support.sigma2_max()));
}

// `k` may be +infinity.
inline BoundReport compute_bounds(std::size_t ell, std::size_t r, std::size_t dim,
                                  const VarianceSupport& support, const PriorVariance& tau2,
                                  double k) {
  if (ell == 0 || r == 0 || dim == 0) throw ConfigError("compute_bounds: ell, r, dim must be >= 1");
  BoundReport b;
  const double dd = static_cast<double>(dim);
  const double l = static_cast<double>(ell);
  const double w0 = tau2.precision();
  b.oracle_term = dd * expected_posterior_variance(ell, support, tau2);
  b.avg_mse_formula = dd * support.mean() / l;
  b.epsilon = support.min_gap();
  const double smin = support.sigma2_min();
  const double smax = support.sigma2_max();
  b.e_constant = 2.0 * dd * (w0 + l * smax / (smin * smin)) / std::pow(w0 + l / smin, 2.0);
  b.misclassification = lemma_misclassification_bound(support, r);
  const double iter_term = std::isinf(k) ? 0.0 : std::exp2(-k);
  b.gap_term = b.e_constant * std::pow(l, 0.25) * std::pow(b.misclassification + iter_term, 0.25);
  return b;
}

}  // namespace crowdreg
