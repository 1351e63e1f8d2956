#pragma once

// Gaussian fusion math for one task: posterior moments of the position given a
// variance configuration, the marginal likelihood factor C_i in log domain,
// and brute-force marginals over all worker configurations (test oracle).

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/logmath.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

struct PosteriorMoments {
  std::vector<double> mean;
  double variance = 0.0;
};

// Precision-weighted fusion of `answers` (row-major k x d, d = prior_mean.size())
// with the task prior.
inline PosteriorMoments posterior_moments(std::span<const double> answers,
                                          std::span<const double> variances,
                                          std::span<const double> prior_mean,
                                          const PriorVariance& tau2) {
  const std::size_t d = prior_mean.size();
  if (d == 0 || answers.size() != variances.size() * d)
    throw ArgumentError("posterior_moments: answers and variances differ in length");
  if (variances.empty() && tau2.is_flat())
    throw UndefinedPosteriorError("posterior_moments: FLAT prior with no answers");
  const double w0 = tau2.precision();
  double precision = w0;
  std::vector<double> acc(d);
  for (std::size_t k = 0; k < d; ++k) acc[k] = w0 * prior_mean[k];
  for (std::size_t v = 0; v < variances.size(); ++v) {
    if (!(variances[v] > 0.0))
      throw ArgumentError("posterior_moments: variances must be positive");
    const double w = 1.0 / variances[v];
    precision += w;
    for (std::size_t k = 0; k < d; ++k) acc[k] += w * answers[v * d + k];
  }
  PosteriorMoments m;
  m.variance = 1.0 / precision;
  m.mean.resize(d);
  for (std::size_t k = 0; k < d; ++k) m.mean[k] = acc[k] * m.variance;
  return m;
}

struct LogFactor {
  double log_weight = 0.0;
};

// log C_i evaluated literally: the prior-distance term plus the sum over
// unordered worker pairs. With finite tau^2 this is exactly the log marginal
// density of the answers; under FLAT the tau-dependent pieces are dropped.
inline LogFactor log_local_factor(std::span<const double> answers,
                                  std::span<const double> variances,
                                  std::span<const double> prior_mean,
                                  const PriorVariance& tau2) {
  const std::size_t d = prior_mean.size();
  const std::size_t k = variances.size();
  if (k == 0) throw ArgumentError("log_local_factor: needs at least one worker");
  const auto moments = posterior_moments(answers, variances, prior_mean, tau2);
  const double w0 = tau2.precision();
  auto sq = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
  };
  double inner = 0.0;
  double log_norm = 0.0;
  for (std::size_t u = 0; u < k; ++u) {
    const auto au = answers.subspan(u * d, d);
    log_norm += kLog2Pi + std::log(variances[u]);
    if (w0 > 0.0) inner += sq(au, prior_mean) * w0 / variances[u];
    for (std::size_t v = u + 1; v < k; ++v)
      inner += sq(au, answers.subspan(v * d, d)) / (variances[u] * variances[v]);
  }
  const double dd = static_cast<double>(d);
  const double distance = 0.5 * moments.variance * inner;
  double lw = 0.5 * dd * (std::log(moments.variance) - log_norm) - distance;
  if (!tau2.is_flat()) lw -= 0.5 * dd * std::log(tau2.tau2());
  return {lw};
}

namespace detail {

// Per-task sufficient statistics, answers centered on their centroid so that
// the quadratic form is evaluated without cancellation.
struct CenteredTask {
  std::size_t dim = 1;
  std::size_t k = 0;
  std::vector<double> centered;     // k x d
  std::vector<double> centroid;     // d
  std::vector<double> prior_c;      // prior mean minus centroid
  std::vector<double> sq_norm;      // |centered_v|^2
  double prior_sq = 0.0;
  double w0 = 0.0;
  bool flat = true;

  CenteredTask(std::span<const double> answers, std::size_t d,
               std::span<const double> prior_mean, const PriorVariance& tau2)
      : dim(d), k(answers.size() / d), centered(answers.begin(), answers.end()),
        centroid(d, 0.0), prior_c(d, 0.0), sq_norm(k, 0.0),
        w0(tau2.precision()), flat(tau2.is_flat()) {
    for (std::size_t v = 0; v < k; ++v)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += answers[v * d + j];
    if (k > 0)
      for (double& c : centroid) c /= static_cast<double>(k);
    else if (!flat)
      for (std::size_t j = 0; j < d; ++j) centroid[j] = prior_mean[j];
    for (std::size_t v = 0; v < k; ++v)
      for (std::size_t j = 0; j < d; ++j) {
        centered[v * d + j] -= centroid[j];
        sq_norm[v] += centered[v * d + j] * centered[v * d + j];
      }
    if (!flat)
      for (std::size_t j = 0; j < d; ++j) {
        prior_c[j] = prior_mean[j] - centroid[j];
        prior_sq += prior_c[j] * prior_c[j];
      }
  }
};

// Accumulates log C and the posterior mean for one configuration given the
// per-worker variance choice. `sum_wa` is scratch of size d.
inline double log_factor_from_stats(const CenteredTask& t, std::span<const double> var_of,
                                    std::span<double> sum_wa, double* out_var = nullptr) {
  const std::size_t d = t.dim;
  double precision = t.w0;
  double swsq = t.w0 * t.prior_sq;
  double log_norm = 0.0;
  for (std::size_t j = 0; j < d; ++j) sum_wa[j] = t.w0 * t.prior_c[j];
  for (std::size_t v = 0; v < t.k; ++v) {
    const double w = 1.0 / var_of[v];
    precision += w;
    swsq += w * t.sq_norm[v];
    log_norm += kLog2Pi + std::log(var_of[v]);
    for (std::size_t j = 0; j < d; ++j) sum_wa[j] += w * t.centered[v * d + j];
  }
  double b2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) b2 += sum_wa[j] * sum_wa[j];
  const double var = 1.0 / precision;
  const double distance = 0.5 * std::max(0.0, swsq - b2 * var);
  const double dd = static_cast<double>(d);
  double lw = 0.5 * dd * (std::log(var) - log_norm) - distance;
  if (!t.flat) lw -= 0.5 * dd * std::log(1.0 / t.w0);
  if (out_var) *out_var = var;
  return lw;
}

}  // namespace detail

// log C_i and posterior means for every configuration of one task's workers,
// indexed lexicographically with the first worker most significant.
class LocalFactorTable {
 public:
  LocalFactorTable(std::span<const double> answers, std::size_t dim,
                   const VarianceSupport& support, std::span<const double> prior_mean,
                   const PriorVariance& tau2, std::size_t cap = std::size_t{1} << 22)
      : dim_(dim), k_(answers.size() / dim), n_states_(support.size()) {
    if (k_ == 0 && tau2.is_flat())
      throw UndefinedPosteriorError("LocalFactorTable: FLAT prior with no answers");
    std::size_t n = 1;
    for (std::size_t v = 0; v < k_; ++v) {
      if (n > cap / n_states_)
        throw IntractableError("LocalFactorTable: S^k exceeds " + std::to_string(cap));
      n *= n_states_;
    }
    size_ = n;
    const detail::CenteredTask t(answers, dim, prior_mean, tau2);
    log_factor_.resize(n);
    mean_.resize(n * dim);
    variance_.resize(n);
    std::vector<std::size_t> digit(k_, 0);
    std::vector<double> var_of(k_, support[0]);
    std::vector<double> swa(dim);
    for (std::size_t c = 0; c < n; ++c) {
      double var = 0.0;
      log_factor_[c] = detail::log_factor_from_stats(t, var_of, swa, &var);
      variance_[c] = var;
      for (std::size_t j = 0; j < dim; ++j) mean_[c * dim + j] = t.centroid[j] + var * swa[j];
      for (std::size_t v = k_; v-- > 0;) {
        if (++digit[v] < n_states_) {
          var_of[v] = support[digit[v]];
          break;
        }
        digit[v] = 0;
        var_of[v] = support[0];
      }
    }
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t arity() const noexcept { return k_; }
  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t dim() const noexcept { return dim_; }
  double log_factor(std::size_t c) const { return log_factor_[c]; }
  std::span<const double> log_factors() const { return log_factor_; }
  std::span<const double> posterior_mean(std::size_t c) const {
    return {mean_.data() + c * dim_, dim_};
  }
  double posterior_variance(std::size_t c) const { return variance_[c]; }

 private:
  std::size_t dim_;
  std::size_t k_;
  std::size_t n_states_;
  std::size_t size_ = 1;
  std::vector<double> log_factor_;
  std::vector<double> mean_;
  std::vector<double> variance_;
};

// Distribution over the joint variance configuration of an ordered worker tuple.
struct ConfigDistribution {
  std::vector<WorkerId> over;
  std::size_t n_states = 0;
  std::vector<double> log_probs;

  std::size_t index(std::span<const std::size_t> digits) const {
    std::size_t c = 0;
    for (std::size_t d : digits) c = c * n_states + d;
    return c;
  }
  std::vector<std::size_t> digits(std::size_t c) const {
    std::vector<std::size_t> out(over.size());
    for (std::size_t v = over.size(); v-- > 0;) {
      out[v] = c % n_states;
      c /= n_states;
    }
    return out;
  }
  double prob(std::size_t c) const { return std::exp(log_probs[c]); }
};

struct ExactOptions {
  // Cap on S^(number of workers) for full enumeration.
  std::size_t max_configs = std::size_t{1} << 20;
};

// Normalized log posterior over every joint configuration of all workers,
// index lexicographic over worker ids (worker 0 most significant).
inline std::vector<double> exact_joint_posterior(const AssignmentGraph& g, const AnswerSet& answers,
                                                 const VarianceSupport& support,
                                                 const TaskPrior& prior,
                                                 const ExactOptions& opts = {}) {
  const std::size_t S = support.size();
  const std::size_t m = g.n_workers();
  std::size_t total = 1;
  for (std::size_t u = 0; u < m; ++u) {
    if (total > opts.max_configs / S)
      throw IntractableError("exact enumeration: S^n_workers exceeds " +
                             std::to_string(opts.max_configs));
    total *= S;
  }
  if (answers.n_edges() != g.n_edges())
    throw ArgumentError("exact enumeration: answers do not match the graph");
  // Tasks without answers contribute a constant factor and are skipped.
  std::vector<std::optional<LocalFactorTable>> tables(g.n_tasks());
  for (TaskId i = 0; i < g.n_tasks(); ++i)
    if (g.task_degree(i) > 0)
      tables[i].emplace(answers.task_block(g, i), answers.dim(), support, prior.mean(i),
                        prior.tau2);
  std::vector<double> lp(total);
  std::vector<std::size_t> digit(m, 0);
  for (std::size_t c = 0; c < total; ++c) {
    double acc = 0.0;
    for (TaskId i = 0; i < g.n_tasks(); ++i) {
      if (!tables[i]) continue;
      std::size_t idx = 0;
      for (WorkerId u : g.workers_of_task(i)) idx = idx * S + digit[u];
      acc += tables[i]->log_factor(idx);
    }
    lp[c] = acc;
    for (std::size_t u = m; u-- > 0;) {
      if (++digit[u] < S) break;
      digit[u] = 0;
    }
  }
  log_normalize(lp);
  return lp;
}

namespace detail {

inline ConfigDistribution marginalize_joint(std::span<const double> joint, std::size_t m,
                                            std::size_t S, std::span<const WorkerId> keep) {
  ConfigDistribution out;
  out.over.assign(keep.begin(), keep.end());
  out.n_states = S;
  std::size_t size = 1;
  for (std::size_t v = 0; v < keep.size(); ++v) size *= S;
  out.log_probs.assign(size, kNegInf);
  std::vector<std::size_t> digit(m, 0);
  for (std::size_t c = 0; c < joint.size(); ++c) {
    std::size_t idx = 0;
    for (WorkerId u : keep) idx = idx * S + digit[u];
    out.log_probs[idx] = log_add_exp(out.log_probs[idx], joint[c]);
    for (std::size_t u = m; u-- > 0;) {
      if (++digit[u] < S) break;
      digit[u] = 0;
    }
  }
  log_normalize(out.log_probs);
  return out;
}

}  // namespace detail

// Pr[sigma^2_{M_i} | A] by brute force over S^n_workers.
inline ConfigDistribution exact_config_marginal(const AssignmentGraph& g, const AnswerSet& answers,
                                                const VarianceSupport& support,
                                                const TaskPrior& prior, TaskId task,
                                                const ExactOptions& opts = {}) {
  if (task >= g.n_tasks()) throw ArgumentError("exact_config_marginal: invalid task");
  const auto joint = exact_joint_posterior(g, answers, support, prior, opts);
  return detail::marginalize_joint(joint, g.n_workers(), support.size(), g.workers_of_task(task));
}

// Pr[sigma^2_u | A] by brute force.
inline std::vector<double> exact_worker_marginal(const AssignmentGraph& g, const AnswerSet& answers,
                                                 const VarianceSupport& support,
                                                 const TaskPrior& prior, WorkerId worker,
                                                 const ExactOptions& opts = {}) {
  if (worker >= g.n_workers()) throw ArgumentError("exact_worker_marginal: invalid worker");
  const auto joint = exact_joint_posterior(g, answers, support, prior, opts);
  const WorkerId keep[] = {worker};
  return detail::marginalize_joint(joint, g.n_workers(), support.size(), keep).log_probs;
}

// Mixture of posterior means under a distribution over the task's workers'
// configurations.
inline std::vector<double> mix_posterior_means(const LocalFactorTable& table,
                                               std::span<const double> log_probs) {
  std::vector<double> est(table.dim(), 0.0);
  for (std::size_t c = 0; c < table.size(); ++c) {
    const double p = std::exp(log_probs[c]);
    if (p == 0.0) continue;
    const auto mu = table.posterior_mean(c);
    for (std::size_t j = 0; j < est.size(); ++j) est[j] += p * mu[j];
  }
  return est;
}

// E[mu_i | A], the Bayes-optimal estimate, by brute force.
inline std::vector<double> exact_optimal_estimate(const AssignmentGraph& g, const AnswerSet& answers,
                                                  const VarianceSupport& support,
                                                  const TaskPrior& prior, TaskId task,
                                                  const ExactOptions& opts = {}) {
  const auto marg = exact_config_marginal(g, answers, support, prior, task, opts);
  if (g.task_degree(task) == 0) {
    if (prior.tau2.is_flat())
      throw UndefinedPosteriorError("exact_optimal_estimate: FLAT prior with no answers");
    const auto nu = prior.mean(task);
    return {nu.begin(), nu.end()};
  }
  const LocalFactorTable table(answers.task_block(g, task), answers.dim(), support,
                               prior.mean(task), prior.tau2);
  return mix_posterior_means(table, marg.log_probs);
}

}  // namespace crowdreg
