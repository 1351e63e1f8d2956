#pragma once

// Per-task message computations shared by BI and the Weak-Oracle.
//
// For task i with workers v = 1..k, incoming log-messages m_v(s) and factor
// C_i, the outgoing message to worker u is
//
//   m_{i->u}(s) ∝ sum over configurations c with c_u = s of C_i(c) prod_{v != u} m_v(c_v)
//
// and the fused estimate is the belief-weighted mixture of posterior means.
// Two backends compute these quantities:
//
//  * enumeration over configurations (exact), either from a cached
//    LocalFactorTable or over the active states of each worker;
//  * trapezoid quadrature of the equivalent position integral
//      sum_c C_i(c) prod_v m_v(c_v) ∝ ∫ prior(x) prod_v sum_s m_v(s) phi(A_v | x, s) dx,
//    whose cost is linear in k instead of exponential. On a uniform grid the
//    trapezoid rule converges geometrically for Gaussian integrands; the step
//    is tied to the narrowest possible mixture component and the box is
//    truncated where a per-coordinate upper bound of the integrand falls more
//    than `truncation_nats` below its peak.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/factors.hpp"
#include "crowdreg/logmath.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

enum class KernelMode { automatic, enumerate, quadrature };

struct KernelOptions {
  KernelMode mode = KernelMode::automatic;
  // Largest configuration count handled by enumeration in automatic mode.
  std::size_t enumeration_limit = 4096;
  // Grid step as a multiple of the narrowest component standard deviation.
  double step_factor = 1.0;
  double truncation_nats = 30.0;
  // Incoming states this far below a worker's most likely state are dropped
  // from the quadrature integrand.
  double prune_nats = 40.0;
  std::size_t max_grid_points = 2'000'000;
};

// Inputs for one task. `incoming` is k x S, row v holding worker v's
// normalized log-message (entries may be -inf for clamped workers).
struct TaskView {
  std::span<const double> answers;
  std::size_t dim = 1;
  const VarianceSupport* support = nullptr;
  std::span<const double> prior_mean;
  PriorVariance tau2 = PriorVariance::flat();
  std::span<const double> incoming;

  std::size_t arity() const { return answers.size() / dim; }
  std::size_t n_states() const { return support->size(); }
};

struct TaskPassResult {
  // k x S normalized log-messages; rows for non-target workers are left -inf.
  std::vector<double> messages;
  std::vector<double> estimate;
  // log of sum_c C_i(c) prod_v m_v(c_v).
  double log_evidence = kNegInf;
};

namespace detail {

// Running log-sum-exp with one exp per element.
struct LogAccumulator {
  double hi = kNegInf;
  double acc = 0.0;
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= hi) {
      acc += std::exp(x - hi);
    } else {
      acc = acc * std::exp(hi - x) + 1.0;
      hi = x;
    }
  }
  double value() const { return hi == kNegInf ? kNegInf : hi + std::log(acc); }
};

inline void check_view(const TaskView& t) {
  if (t.support == nullptr) throw ArgumentError("task kernel: missing support");
  if (t.answers.size() % t.dim != 0 || t.prior_mean.size() != t.dim)
    throw ArgumentError("task kernel: answer block does not match the dimension");
  if (t.incoming.size() != t.arity() * t.n_states())
    throw ArgumentError("task kernel: incoming messages do not match the task");
  if (t.arity() == 0 && t.tau2.is_flat())
    throw UndefinedPosteriorError("task kernel: FLAT prior with no answers");
}

}  // namespace detail

// Number of configurations with every worker in a state of finite probability.
inline double active_configurations(const TaskView& t) {
  const std::size_t S = t.n_states();
  double n = 1.0;
  for (std::size_t v = 0; v < t.arity(); ++v) {
    std::size_t a = 0;
    for (std::size_t s = 0; s < S; ++s) a += t.incoming[v * S + s] != kNegInf;
    n *= static_cast<double>(a);
  }
  return n;
}

// Outgoing messages from a cached table. Incoming entries must be finite.
// Writes k x S normalized log-messages into `out` and returns the log evidence.
inline double table_messages(const LocalFactorTable& table, std::span<const double> incoming,
                             std::span<double> out) {
  const std::size_t k = table.arity();
  const std::size_t S = table.n_states();
  const std::size_t n = table.size();
  std::vector<double> lw(n);
  std::vector<std::size_t> digit(k, 0);
  double hi = kNegInf;
  for (std::size_t c = 0; c < n; ++c) {
    double acc = table.log_factor(c);
    for (std::size_t v = 0; v < k; ++v) acc += incoming[v * S + digit[v]];
    lw[c] = acc;
    hi = std::max(hi, acc);
    for (std::size_t v = k; v-- > 0;) {
      if (++digit[v] < S) break;
      digit[v] = 0;
    }
  }
  std::vector<double> part(k * S, 0.0);
  double total = 0.0;
  std::fill(digit.begin(), digit.end(), 0);
  for (std::size_t c = 0; c < n; ++c) {
    const double e = std::exp(lw[c] - hi);
    total += e;
    for (std::size_t v = 0; v < k; ++v) part[v * S + digit[v]] += e;
    for (std::size_t v = k; v-- > 0;) {
      if (++digit[v] < S) break;
      digit[v] = 0;
    }
  }
  for (std::size_t v = 0; v < k; ++v) {
    for (std::size_t s = 0; s < S; ++s) {
      const double p = part[v * S + s];
      if (p > 1e-280) {
        out[v * S + s] = hi - incoming[v * S + s] + std::log(p);
        continue;
      }
      // The partial sum underflowed; redo it without the shared shift.
      detail::LogAccumulator acc;
      std::fill(digit.begin(), digit.end(), 0);
      for (std::size_t c = 0; c < n; ++c) {
        if (digit[v] == s) acc.add(lw[c] - incoming[v * S + s]);
        for (std::size_t w = k; w-- > 0;) {
          if (++digit[w] < S) break;
          digit[w] = 0;
        }
      }
      out[v * S + s] = acc.value();
    }
    log_normalize(out.subspan(v * S, S));
  }
  return hi + std::log(total);
}

// Normalized log belief over the task's configurations.
inline std::vector<double> table_log_belief(const LocalFactorTable& table,
                                            std::span<const double> incoming) {
  const std::size_t k = table.arity();
  const std::size_t S = table.n_states();
  std::vector<double> lb(table.size());
  std::vector<std::size_t> digit(k, 0);
  for (std::size_t c = 0; c < table.size(); ++c) {
    double acc = table.log_factor(c);
    for (std::size_t v = 0; v < k; ++v) acc += incoming[v * S + digit[v]];
    lb[c] = acc;
    for (std::size_t v = k; v-- > 0;) {
      if (++digit[v] < S) break;
      digit[v] = 0;
    }
  }
  log_normalize(lb);
  return lb;
}

// Exact pass enumerating only states with finite incoming probability;
// posterior factors are evaluated on the fly. `targets[v]` selects the
// workers that receive a message.
inline TaskPassResult enumerate_pass(const TaskView& t, const std::vector<bool>& targets,
                                     bool want_estimate) {
  detail::check_view(t);
  const std::size_t k = t.arity();
  const std::size_t S = t.n_states();
  const std::size_t d = t.dim;
  std::vector<std::vector<std::size_t>> active(k);
  std::size_t n = 1;
  for (std::size_t v = 0; v < k; ++v) {
    for (std::size_t s = 0; s < S; ++s)
      if (t.incoming[v * S + s] != kNegInf) active[v].push_back(s);
    if (active[v].empty()) throw NumericalError("task kernel: worker with no feasible state");
    n *= active[v].size();
  }
  const detail::CenteredTask ct(t.answers, d, t.prior_mean, t.tau2);
  std::vector<double> lw(n), mean(want_estimate ? n * d : 0);
  std::vector<std::size_t> states(n * k);
  std::vector<std::size_t> pos(k, 0);
  std::vector<double> var_of(k), swa(d);
  double hi = kNegInf;
  for (std::size_t c = 0; c < n; ++c) {
    double inc = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
      const std::size_t s = active[v][pos[v]];
      states[c * k + v] = s;
      var_of[v] = (*t.support)[s];
      inc += t.incoming[v * S + s];
    }
    double var = 0.0;
    lw[c] = detail::log_factor_from_stats(ct, var_of, swa, &var) + inc;
    hi = std::max(hi, lw[c]);
    if (want_estimate)
      for (std::size_t j = 0; j < d; ++j) mean[c * d + j] = ct.centroid[j] + var * swa[j];
    for (std::size_t v = k; v-- > 0;) {
      if (++pos[v] < active[v].size()) break;
      pos[v] = 0;
    }
  }
  TaskPassResult r;
  r.messages.assign(k * S, kNegInf);
  double total = 0.0;
  if (want_estimate) r.estimate.assign(d, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    const double e = std::exp(lw[c] - hi);
    total += e;
    if (want_estimate)
      for (std::size_t j = 0; j < d; ++j) r.estimate[j] += e * mean[c * d + j];
  }
  if (want_estimate)
    for (double& x : r.estimate) x /= total;
  r.log_evidence = hi + std::log(total);
  for (std::size_t v = 0; v < k; ++v) {
    if (!targets[v]) continue;
    std::vector<detail::LogAccumulator> acc(S);
    if (active[v].size() == S) {
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t s = states[c * k + v];
        acc[s].add(lw[c] - t.incoming[v * S + s]);
      }
    } else {
      // Some of v's own states were pruned: sweep them all with the other
      // workers' active states, leaving out v's incoming message.
      const std::size_t rest = n / active[v].size();
      std::fill(pos.begin(), pos.end(), 0);
      for (std::size_t c = 0; c < rest; ++c) {
        double inc = 0.0;
        for (std::size_t w = 0; w < k; ++w) {
          if (w == v) continue;
          const std::size_t s = active[w][pos[w]];
          var_of[w] = (*t.support)[s];
          inc += t.incoming[w * S + s];
        }
        for (std::size_t s = 0; s < S; ++s) {
          var_of[v] = (*t.support)[s];
          acc[s].add(detail::log_factor_from_stats(ct, var_of, swa, nullptr) + inc);
        }
        for (std::size_t w = k; w-- > 0;) {
          if (w == v) continue;
          if (++pos[w] < active[w].size()) break;
          pos[w] = 0;
        }
      }
    }
    for (std::size_t s = 0; s < S; ++s) r.messages[v * S + s] = acc[s].value();
    log_normalize(std::span<double>(r.messages).subspan(v * S, S));
  }
  return r;
}

namespace detail {

// Mixture components within this many nats of a worker's best component at
// some candidate point count towards the grid resolution.
inline constexpr double kResolutionNats = 25.0;

// Targets whose incoming weights span more than this get their own box.
inline constexpr double kEnvelopeNats = 10.0;

// Grid and integrand setup shared by the two quadrature evaluators. Mixture
// weights are stored relative to each worker's best incoming state.
struct QuadPlan {
  std::size_t k = 0, S = 0, d = 0;
  double w0 = 0.0;
  double prior_const = 0.0;
  std::vector<double> log_norm, inv2;
  std::vector<double> top;
  std::vector<std::vector<std::pair<std::size_t, double>>> mix;
  std::vector<double> xstar;
  double peak = kNegInf;
  double h = 1.0;
  std::vector<double> lo;
  std::vector<std::size_t> npts;
  std::size_t points = 0;

  double answer(const TaskView& t, std::size_t v, std::size_t j) const {
    return t.answers[v * d + j];
  }
  using Mixture = std::vector<std::pair<std::size_t, double>>;
  double log_mix(const Mixture& m, double dist2) const {
    double hi = kNegInf;
    for (const auto& [s, lw] : m) hi = std::max(hi, lw - dist2 * inv2[s]);
    double acc = 0.0;
    for (const auto& [s, lw] : m) acc += std::exp(lw - dist2 * inv2[s] - hi);
    return hi + std::log(acc);
  }
  double log_mix(std::size_t v, double dist2) const { return log_mix(mix[v], dist2); }
  double dist2(const TaskView& t, std::size_t v, std::span<const double> x) const {
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) q += (answer(t, v, j) - x[j]) * (answer(t, v, j) - x[j]);
    return q;
  }
  double log_prior(const TaskView& t, std::span<const double> x) const {
    if (w0 == 0.0) return 0.0;
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) q += (x[j] - t.prior_mean[j]) * (x[j] - t.prior_mean[j]);
    return prior_const - 0.5 * w0 * q;
  }
  double log_integrand(const TaskView& t, std::span<const double> x) const {
    double acc = log_prior(t, x);
    for (std::size_t v = 0; v < k; ++v) acc += log_mix(mix[v], dist2(t, v, x));
    return acc;
  }
  // Constant restoring the absolute scale of the integral.
  double log_scale() const {
    double c = static_cast<double>(d) * std::log(h);
    for (double x : top) c += x;
    if (w0 == 0.0) c -= 0.5 * static_cast<double>(d) * kLog2Pi;
    return c;
  }
};

inline QuadPlan plan_quadrature(const TaskView& t, const std::vector<bool>& targets,
                                const KernelOptions& opts) {
  QuadPlan p;
  p.k = t.arity();
  p.S = t.n_states();
  p.d = t.dim;
  p.w0 = t.tau2.precision();
  const double dd = static_cast<double>(p.d);
  const VarianceSupport& sup = *t.support;
  p.prior_const = t.tau2.is_flat() ? 0.0 : -0.5 * dd * (kLog2Pi + std::log(t.tau2.tau2()));
  p.log_norm.resize(p.S);
  p.inv2.resize(p.S);
  for (std::size_t s = 0; s < p.S; ++s) {
    p.log_norm[s] = -0.5 * dd * (kLog2Pi + std::log(sup[s]));
    p.inv2[s] = 0.5 / sup[s];
  }
  p.mix.resize(p.k);
  p.top.assign(p.k, kNegInf);
  for (std::size_t v = 0; v < p.k; ++v) {
    for (std::size_t s = 0; s < p.S; ++s) p.top[v] = std::max(p.top[v], t.incoming[v * p.S + s]);
    if (p.top[v] == kNegInf) throw NumericalError("task kernel: worker with no feasible state");
    for (std::size_t s = 0; s < p.S; ++s) {
      const double lm = t.incoming[v * p.S + s];
      if (lm == kNegInf || lm < p.top[v] - opts.prune_nats) continue;
      p.mix[v].emplace_back(s, lm - p.top[v] + p.log_norm[s]);
    }
  }

  // Candidate points: every answer, the centroid and the prior mean.
  std::vector<std::vector<double>> cand;
  for (std::size_t v = 0; v < p.k; ++v)
    cand.emplace_back(t.answers.begin() + v * p.d, t.answers.begin() + (v + 1) * p.d);
  if (p.k > 0) {
    std::vector<double> c(p.d, 0.0);
    for (std::size_t v = 0; v < p.k; ++v)
      for (std::size_t j = 0; j < p.d; ++j) c[j] += p.answer(t, v, j) / static_cast<double>(p.k);
    cand.push_back(std::move(c));
  }
  if (p.w0 > 0.0) cand.emplace_back(t.prior_mean.begin(), t.prior_mean.end());
  std::vector<double> cand_l(cand.size());
  for (std::size_t c = 0; c < cand.size(); ++c) {
    cand_l[c] = p.log_integrand(t, cand[c]);
    if (cand_l[c] > p.peak) {
      p.peak = cand_l[c];
      p.xstar = cand[c];
    }
  }
  const double threshold = p.peak - opts.truncation_nats;

  // Resolution: the narrowest component that carries weight near some
  // candidate. Targets are judged without their own incoming weights since
  // their outgoing message covers every state.
  double precision = p.w0;
  for (std::size_t v = 0; v < p.k; ++v) {
    double best = 0.0;
    for (std::size_t c = 0; c < cand.size(); ++c) {
      if (cand_l[c] < threshold) continue;
      const double q = p.dist2(t, v, cand[c]);
      double hi = kNegInf;
      if (targets[v])
        for (std::size_t s = 0; s < p.S; ++s) hi = std::max(hi, p.log_norm[s] - q * p.inv2[s]);
      else
        for (const auto& [s, lw] : p.mix[v]) hi = std::max(hi, lw - q * p.inv2[s]);
      auto consider = [&](std::size_t s, double val) {
        if (val >= hi - kResolutionNats) best = std::max(best, 2.0 * p.inv2[s]);
      };
      if (targets[v])
        for (std::size_t s = 0; s < p.S; ++s) consider(s, p.log_norm[s] - q * p.inv2[s]);
      else
        for (const auto& [s, lw] : p.mix[v]) consider(s, lw - q * p.inv2[s]);
    }
    precision += best;
  }
  p.h = opts.step_factor / std::sqrt(precision);

  // Per-coordinate box: |A_v - x| >= |A_vj - x_j| bounds every factor by a
  // function of x_j alone. The box must also cover each target's outgoing
  // integrands, one per state of the target. Targets whose incoming weights
  // span more than kEnvelopeNats have them clipped at that span, all at once,
  // and a second box is computed; the clipped mixtures dominate the originals
  // pointwise, so the union covers every single-target integrand and every
  // outgoing probability loses at most about exp(kEnvelopeNats - truncation_nats).
  const double h = p.h;
  std::vector<double> log_size(p.S + 1, 0.0);
  for (std::size_t n = 1; n <= p.S; ++n) log_size[n] = std::log(static_cast<double>(n));
  auto box = [&](std::size_t j, double thr,
                 const std::vector<QuadPlan::Mixture>& mixes) -> std::pair<double, double> {
    auto mix_of = [&](std::size_t v) -> const QuadPlan::Mixture& { return mixes[v]; };
    auto bound = [&](double tj) {
      double acc = 0.0;
      if (p.w0 > 0.0)
        acc += p.prior_const - 0.5 * p.w0 * (tj - t.prior_mean[j]) * (tj - t.prior_mean[j]);
      for (std::size_t v = 0; v < p.k; ++v)
        acc += p.log_mix(mix_of(v), (p.answer(t, v, j) - tj) * (p.answer(t, v, j) - tj));
      return acc;
    };
    // Cheaper bound: log-mixture <= best component + log(#components).
    auto quick = [&](double tj) {
      double acc = 0.0;
      if (p.w0 > 0.0)
        acc += p.prior_const - 0.5 * p.w0 * (tj - t.prior_mean[j]) * (tj - t.prior_mean[j]);
      for (std::size_t v = 0; v < p.k; ++v) {
        const double q = (p.answer(t, v, j) - tj) * (p.answer(t, v, j) - tj);
        double hi = kNegInf;
        for (const auto& [s, lw] : mix_of(v)) hi = std::max(hi, lw - q * p.inv2[s]);
        acc += hi + log_size[mix_of(v).size()];
      }
      return acc;
    };
    auto passes = [&](double tj) { return quick(tj) >= thr && bound(tj) >= thr; };
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (const auto& c : cand) {
      a = std::min(a, c[j]);
      b = std::max(b, c[j]);
    }
    // Outside the hull the bound decreases monotonically: find the first
    // failing grid step on each side by doubling then bisection.
    auto first_fail = [&](double from, double dir) {
      auto fails = [&](std::size_t n) { return !passes(from + dir * h * static_cast<double>(n)); };
      if (fails(0)) return std::size_t{0};
      std::size_t lo = 0, hi = 1;
      while (!fails(hi)) {
        lo = hi;
        hi *= 2;
      }
      while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        (fails(mid) ? hi : lo) = mid;
      }
      return hi;
    };
    const double left = a - h * static_cast<double>(first_fail(a, -1.0));
    const double right = b + h * static_cast<double>(first_fail(b, 1.0));
    const auto steps = static_cast<std::size_t>(std::ceil((right - left) / h - 1e-9));
    double first = right, last = left;
    for (std::size_t n = 0; n <= steps; ++n) {
      const double tj = left + h * static_cast<double>(n);
      if (passes(tj)) {
        first = tj;
        break;
      }
    }
    for (std::size_t n = 0; n <= steps; ++n) {
      const double tj = right - h * static_cast<double>(n);
      if (tj < first) break;
      if (passes(tj)) {
        last = tj;
        break;
      }
    }
    if (first > last) return {a, b};
    return {first, last};
  };

  std::vector<double> first(p.d), last(p.d);
  for (std::size_t j = 0; j < p.d; ++j) std::tie(first[j], last[j]) = box(j, threshold, p.mix);
  std::vector<QuadPlan::Mixture> clipped = p.mix;
  bool any_clipped = false;
  for (std::size_t v = 0; v < p.k; ++v) {
    if (!targets[v]) continue;
    double spread = 0.0;
    QuadPlan::Mixture envelope(p.S);
    for (std::size_t s = 0; s < p.S; ++s) {
      const double rel = t.incoming[v * p.S + s] - p.top[v];
      spread = std::max(spread, -rel);
      envelope[s] = {s, std::max(rel, -kEnvelopeNats) + p.log_norm[s]};
    }
    if (spread <= kEnvelopeNats) continue;
    clipped[v] = std::move(envelope);
    any_clipped = true;
  }
  // Each single-target peak is at least `peak`, so `threshold` is conservative.
  if (any_clipped)
    for (std::size_t j = 0; j < p.d; ++j) {
      const auto [f, l] = box(j, threshold, clipped);
      first[j] = std::min(first[j], f);
      last[j] = std::max(last[j], l);
    }
  p.lo.resize(p.d);
  p.npts.resize(p.d);
  double total = 1.0;
  for (std::size_t j = 0; j < p.d; ++j) {
    p.lo[j] = first[j] - h;
    p.npts[j] = static_cast<std::size_t>(std::ceil((last[j] - first[j]) / h)) + 3;
    total *= static_cast<double>(p.npts[j]);
  }
  if (total > static_cast<double>(opts.max_grid_points))
    throw IntractableError("quadrature grid of " + std::to_string(total) +
                           " points exceeds the configured maximum");
  p.points = static_cast<std::size_t>(total);
  return p;
}

// out[n] = exp(logc - (center - lo - n h)^2 inv2) for n < count, by a
// multiplicative recurrence run outward from the grid point nearest the
// center so that values only decrease. Returns false if the peak overflows.
inline bool gauss_row(double* out, std::size_t count, double lo, double h, double center,
                      double inv2, double logc) {
  const double pos = std::round((center - lo) / h);
  const auto c = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(count - 1)));
  const double xc = lo + h * static_cast<double>(c);
  const double e0 = logc - (center - xc) * (center - xc) * inv2;
  if (e0 > 700.0) return false;
  out[c] = std::exp(e0);
  const double q = std::exp(-2.0 * inv2 * h * h);
  double ratio = std::exp(inv2 * (2.0 * (center - xc) * h - h * h));
  for (std::size_t n = c + 1; n < count; ++n) {
    out[n] = out[n - 1] * ratio;
    ratio *= q;
  }
  ratio = std::exp(-inv2 * (2.0 * (center - xc) * h + h * h));
  for (std::size_t n = c; n-- > 0;) {
    out[n] = out[n + 1] * ratio;
    ratio *= q;
  }
  return true;
}

// Row kernels for the separable evaluator.
inline void row_axpy(double c, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}
inline void row_mul(const double* __restrict a, const double* __restrict b, double* __restrict out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
inline void row_scale(double* __restrict a, const double* __restrict b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
}
// g = sum_m c[m] rows[m]; next = prev * g. Small mixtures get fused loops.
inline void row_mix(const double* const* rows, const double* c, std::size_t m,
                    const double* __restrict prev, double* __restrict g, double* __restrict next,
                    std::size_t n) {
  if (m == 1) {
    const double* __restrict r0 = rows[0];
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = c[0] * r0[i];
      next[i] = prev[i] * g[i];
    }
  } else if (m == 2) {
    const double* __restrict r0 = rows[0];
    const double* __restrict r1 = rows[1];
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = c[0] * r0[i] + c[1] * r1[i];
      next[i] = prev[i] * g[i];
    }
  } else if (m == 3) {
    const double* __restrict r0 = rows[0];
    const double* __restrict r1 = rows[1];
    const double* __restrict r2 = rows[2];
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = c[0] * r0[i] + c[1] * r1[i] + c[2] * r2[i];
      next[i] = prev[i] * g[i];
    }
  } else {
    std::fill(g, g + n, 0.0);
    for (std::size_t q = 0; q < m; ++q) row_axpy(c[q], rows[q], g, n);
    row_mul(prev, g, next, n);
  }
}
inline double row_dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}
// out[s] = sum_i a[i] b[i] rows[s][i] for every state s.
inline void row_dot3(const double* __restrict a, const double* __restrict b, const double* const* rows,
                     std::size_t S, double* out, double* __restrict scratch, std::size_t n) {
  if (S == 2 || S == 3) {
    const double* __restrict r0 = rows[0];
    const double* __restrict r1 = rows[1];
    const double* __restrict r2 = S == 3 ? rows[2] : rows[1];
    double t0 = 0.0, t1 = 0.0, t2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = a[i] * b[i];
      t0 += w * r0[i];
      t1 += w * r1[i];
      t2 += w * r2[i];
    }
    out[0] = t0;
    out[1] = t1;
    if (S == 3) out[2] = t2;
    return;
  }
  row_mul(a, b, scratch, n);
  for (std::size_t s = 0; s < S; ++s) out[s] = row_dot(scratch, rows[s], n);
}

// Separable evaluator: every Gaussian factorizes over coordinates, so on the
// tensor grid each component is a product of precomputed 1-D tables. Values
// are scaled so the integrand is O(1) at the best candidate. Returns false
// when the scaled values leave the floating-point range.
inline bool quadrature_linear(const QuadPlan& p, const TaskView& t, const std::vector<bool>& targets,
                              bool want_estimate, TaskPassResult& r) {
  const std::size_t k = p.k, S = p.S, d = p.d;
  const double dd = static_cast<double>(d);
  std::size_t stride = 0;
  std::vector<std::size_t> offset(d);
  for (std::size_t j = 0; j < d; ++j) {
    offset[j] = stride;
    stride += p.npts[j];
  }
  auto coord = [&](std::size_t j, std::size_t n) { return p.lo[j] + p.h * static_cast<double>(n); };

  // Prior tables, relative to the best candidate.
  std::vector<double> prior_tab;
  double prior_shift = 0.0;
  if (p.w0 > 0.0) {
    prior_tab.resize(stride);
    for (std::size_t j = 0; j < d; ++j) {
      const double ref = (p.xstar[j] - t.prior_mean[j]) * (p.xstar[j] - t.prior_mean[j]);
      prior_shift += ref;
      if (!gauss_row(prior_tab.data() + offset[j], p.npts[j], p.lo[j], p.h, t.prior_mean[j],
                     0.5 * p.w0, 0.5 * p.w0 * ref))
        return false;
    }
    prior_shift = p.prior_const - 0.5 * p.w0 * prior_shift;
  }
  // Worker mixture component tables, each worker scaled to 1 at x*.
  std::vector<double> scale(k);
  std::vector<std::size_t> comp_begin(k + 1, 0);
  for (std::size_t v = 0; v < k; ++v) comp_begin[v + 1] = comp_begin[v] + p.mix[v].size();
  std::vector<double> comp(comp_begin[k] * stride);
  for (std::size_t v = 0; v < k; ++v) {
    scale[v] = p.log_mix(v, p.dist2(t, v, p.xstar));
    for (std::size_t m = 0; m < p.mix[v].size(); ++m) {
      const auto [s, lw] = p.mix[v][m];
      double* row = comp.data() + (comp_begin[v] + m) * stride;
      for (std::size_t j = 0; j < d; ++j)
        if (!gauss_row(row + offset[j], p.npts[j], p.lo[j], p.h, p.answer(t, v, j), p.inv2[s],
                       (lw - scale[v]) / dd))
          return false;
    }
  }
  // Unweighted per-state tables for target workers.
  std::vector<std::size_t> target_ids;
  for (std::size_t v = 0; v < k; ++v)
    if (targets[v]) target_ids.push_back(v);
  std::vector<double> state_tab(target_ids.size() * S * stride);
  for (std::size_t x = 0; x < target_ids.size(); ++x) {
    const std::size_t u = target_ids[x];
    const double q = p.dist2(t, u, p.xstar);
    double ref = kNegInf;
    for (std::size_t s = 0; s < S; ++s) ref = std::max(ref, p.log_norm[s] - q * p.inv2[s]);
    for (std::size_t s = 0; s < S; ++s) {
      double* row = state_tab.data() + (x * S + s) * stride;
      for (std::size_t j = 0; j < d; ++j)
        if (!gauss_row(row + offset[j], p.npts[j], p.lo[j], p.h, p.answer(t, u, j), p.inv2[s],
                       (p.log_norm[s] - ref) / dd))
          return false;
    }
  }

  // Sweep the grid one row of the last coordinate at a time; every factor is
  // an outer scalar times a contiguous row.
  const std::size_t last = d - 1;
  const std::size_t nl = p.npts[last];
  std::size_t n_outer = 1;
  for (std::size_t j = 0; j < last; ++j) n_outer *= p.npts[j];
  std::vector<std::size_t> idx(d, 0);
  auto outer = [&](const double* row) {
    double v = 1.0;
    for (std::size_t j = 0; j < last; ++j) v *= row[offset[j] + idx[j]];
    return v;
  };
  std::vector<double> pre((k + 1) * nl), suf((k + 1) * nl), g(nl), rest(nl);
  std::vector<double> acc(target_ids.size() * S, 0.0), est(d, 0.0);
  std::vector<double> last_coord(nl), ones(nl, 1.0);
  std::size_t widest = S;
  for (std::size_t v = 0; v < k; ++v) widest = std::max(widest, comp_begin[v + 1] - comp_begin[v]);
  std::vector<const double*> rows(widest);
  std::vector<double> coef(widest), dots(S);
  for (std::size_t n = 0; n < nl; ++n) last_coord[n] = coord(last, n);
  double wsum = 0.0;
  for (std::size_t o = 0; o < n_outer; ++o) {
    double* row0 = pre.data();
    if (p.w0 > 0.0) {
      std::fill(row0, row0 + nl, 0.0);
      row_axpy(outer(prior_tab.data()), prior_tab.data() + offset[last], row0, nl);
    } else {
      std::fill(row0, row0 + nl, 1.0);
    }
    for (std::size_t v = 0; v < k; ++v) {
      double* gv = target_ids.empty() ? g.data() : suf.data() + v * nl;
      const std::size_t m = comp_begin[v + 1] - comp_begin[v];
      for (std::size_t q = 0; q < m; ++q) {
        const double* row = comp.data() + (comp_begin[v] + q) * stride;
        coef[q] = outer(row);
        rows[q] = row + offset[last];
      }
      row_mix(rows.data(), coef.data(), m, pre.data() + v * nl, gv, pre.data() + (v + 1) * nl, nl);
    }
    const double* f = pre.data() + k * nl;
    const double rs = row_dot(f, ones.data(), nl);
    wsum += rs;
    if (want_estimate) {
      for (std::size_t j = 0; j < last; ++j) est[j] += rs * coord(j, idx[j]);
      est[last] += row_dot(f, last_coord.data(), nl);
    }
    if (!target_ids.empty()) {
      // suf holds the g_v rows; turn it into suffix products in place.
      std::fill(suf.begin() + k * nl, suf.end(), 1.0);
      for (std::size_t v = k; v-- > 0;)
        row_scale(suf.data() + v * nl, suf.data() + (v + 1) * nl, nl);
      for (std::size_t x = 0; x < target_ids.size(); ++x) {
        const std::size_t u = target_ids[x];
        for (std::size_t s = 0; s < S; ++s) rows[s] = state_tab.data() + (x * S + s) * stride + offset[last];
        row_dot3(pre.data() + u * nl, suf.data() + (u + 1) * nl, rows.data(), S, dots.data(), rest.data(), nl);
        for (std::size_t s = 0; s < S; ++s)
          acc[x * S + s] += outer(state_tab.data() + (x * S + s) * stride) * dots[s];
      }
    }
    for (std::size_t j = last; j-- > 0;) {
      if (++idx[j] < p.npts[j]) break;
      idx[j] = 0;
    }
  }
  if (!(wsum > 0.0) || !std::isfinite(wsum)) return false;
  r.messages.assign(k * S, kNegInf);
  for (std::size_t x = 0; x < target_ids.size(); ++x) {
    const std::size_t u = target_ids[x];
    auto row = std::span<double>(r.messages).subspan(u * S, S);
    bool any = false;
    for (std::size_t s = 0; s < S; ++s) {
      const double a = acc[x * S + s];
      if (!std::isfinite(a)) return false;
      row[s] = a > 0.0 ? std::log(a) : kNegInf;
      any = any || a > 0.0;
    }
    if (!any) return false;
    log_normalize(row);
  }
  if (want_estimate) {
    r.estimate = est;
    for (double& v : r.estimate) v /= wsum;
  }
  double c = p.log_scale() + prior_shift;
  for (double s : scale) c += s;
  r.log_evidence = std::log(wsum) + c;
  return true;
}

// Log-domain evaluator; slower but immune to range problems.
inline TaskPassResult quadrature_log(const QuadPlan& p, const TaskView& t,
                                     const std::vector<bool>& targets, bool want_estimate) {
  const std::size_t k = p.k, S = p.S, d = p.d;
  const std::size_t G = p.points;
  std::vector<double> L(G), lg(k * G), grid(G * d), x(d);
  std::vector<std::size_t> idx(d, 0);
  double Lmax = kNegInf;
  for (std::size_t pt = 0; pt < G; ++pt) {
    for (std::size_t j = 0; j < d; ++j)
      grid[pt * d + j] = x[j] = p.lo[j] + p.h * static_cast<double>(idx[j]);
    double acc = p.log_prior(t, x);
    for (std::size_t v = 0; v < k; ++v) {
      const double l = p.log_mix(v, p.dist2(t, v, x));
      lg[v * G + pt] = l;
      acc += l;
    }
    L[pt] = acc;
    Lmax = std::max(Lmax, acc);
    for (std::size_t j = d; j-- > 0;) {
      if (++idx[j] < p.npts[j]) break;
      idx[j] = 0;
    }
  }
  TaskPassResult r;
  double wsum = 0.0;
  if (want_estimate) r.estimate.assign(d, 0.0);
  for (std::size_t pt = 0; pt < G; ++pt) {
    const double e = std::exp(L[pt] - Lmax);
    wsum += e;
    if (want_estimate)
      for (std::size_t j = 0; j < d; ++j) r.estimate[j] += e * grid[pt * d + j];
  }
  if (want_estimate)
    for (double& v : r.estimate) v /= wsum;
  r.log_evidence = Lmax + std::log(wsum) + p.log_scale();
  r.messages.assign(k * S, kNegInf);
  for (std::size_t u = 0; u < k; ++u) {
    if (!targets[u]) continue;
    std::vector<LogAccumulator> acc(S);
    for (std::size_t pt = 0; pt < G; ++pt) {
      const double q = p.dist2(t, u, std::span<const double>(grid).subspan(pt * d, d));
      const double rest = L[pt] - lg[u * G + pt];
      for (std::size_t s = 0; s < S; ++s) acc[s].add(rest + p.log_norm[s] - q * p.inv2[s]);
    }
    for (std::size_t s = 0; s < S; ++s) r.messages[u * S + s] = acc[s].value();
    log_normalize(std::span<double>(r.messages).subspan(u * S, S));
  }
  return r;
}

}  // namespace detail

// Quadrature pass; same contract as enumerate_pass.
inline TaskPassResult quadrature_pass(const TaskView& t, const std::vector<bool>& targets,
                                      bool want_estimate, const KernelOptions& opts = {}) {
  detail::check_view(t);
  const detail::QuadPlan plan = detail::plan_quadrature(t, targets, opts);
  TaskPassResult r;
  if (detail::quadrature_linear(plan, t, targets, want_estimate, r)) return r;
  return detail::quadrature_log(plan, t, targets, want_estimate);
}

// Dispatches to enumeration or quadrature.
inline TaskPassResult task_pass(const TaskView& t, const std::vector<bool>& targets,
                                bool want_estimate, const KernelOptions& opts = {}) {
  bool enumerate = opts.mode == KernelMode::enumerate;
  if (opts.mode == KernelMode::automatic)
    enumerate = active_configurations(t) <= static_cast<double>(opts.enumeration_limit);
  return enumerate ? enumerate_pass(t, targets, want_estimate)
                   : quadrature_pass(t, targets, want_estimate, opts);
}

}  // namespace crowdreg
