#pragma once

// Reference estimators: plain averaging, the two oracles, the non-Bayesian
// iterative reweighting (NBI), the second-moment worker classifier and
// NBI-based binary support estimation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/factors.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/kernel.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

inline std::vector<double> average_estimate(const AssignmentGraph& g, const AnswerSet& answers) {
  const std::size_t d = answers.dim();
  std::vector<double> est(g.n_tasks() * d, 0.0);
  for (TaskId i = 0; i < g.n_tasks(); ++i) {
    const std::size_t k = g.task_degree(i);
    if (k == 0) throw ArgumentError("average_estimate: task " + std::to_string(i) + " has no answers");
    const auto block = answers.task_block(g, i);
    for (std::size_t v = 0; v < k; ++v)
      for (std::size_t j = 0; j < d; ++j) est[i * d + j] += block[v * d + j];
    for (std::size_t j = 0; j < d; ++j) est[i * d + j] /= static_cast<double>(k);
  }
  return est;
}

inline std::vector<double> strong_oracle_estimate(const AssignmentGraph& g, const AnswerSet& answers,
                                                  std::span<const double> truth_variances,
                                                  const TaskPrior& prior) {
  if (truth_variances.size() != g.n_workers())
    throw ArgumentError("strong_oracle_estimate: need one true variance per worker");
  const std::size_t d = answers.dim();
  std::vector<double> est(g.n_tasks() * d);
  std::vector<double> var;
  for (TaskId i = 0; i < g.n_tasks(); ++i) {
    var.clear();
    for (WorkerId u : g.workers_of_task(i)) var.push_back(truth_variances[u]);
    const auto m = posterior_moments(answers.task_block(g, i), var, prior.mean(i), prior.tau2);
    std::copy(m.mean.begin(), m.mean.end(), est.begin() + i * d);
  }
  return est;
}

// E[mu_root | answers, true variances of the BFS tree's leaf workers],
// computed by an exact upward pass over the BFS tree of `task` truncated at
// `depth`. A tree task uses the answers of its tree parent and children plus
// those of any clamped leaf worker, whose known variance cannot couple
// branches; answers of interior workers on non-tree edges are dropped. When
// the depth ball is a tree nothing is dropped and the clamped boundary
// separates the root from everything outside it.
inline std::vector<double> weak_oracle_estimate(const AssignmentGraph& g, const AnswerSet& answers,
                                                std::span<const double> truth_variances,
                                                const VarianceSupport& support,
                                                const TaskPrior& prior, TaskId task,
                                                std::uint32_t depth = 3,
                                                const KernelOptions& kernel = {}) {
  if (truth_variances.size() != g.n_workers())
    throw ArgumentError("weak_oracle_estimate: need one true variance per worker");
  if (depth % 2 == 0) throw ArgumentError("weak_oracle_estimate: depth must be odd");
  const BfsTree tree = bfs_tree(g, task, depth);
  const std::size_t S = support.size();
  const std::size_t d = answers.dim();
  if (g.task_degree(task) == 0) {
    if (prior.tau2.is_flat())
      throw UndefinedPosteriorError("weak_oracle_estimate: FLAT prior with no answers");
    const auto nu = prior.mean(task);
    return {nu.begin(), nu.end()};
  }
  auto is_leaf = [&](WorkerId u) { return tree.has_worker(u) && tree.worker_children[u].empty(); };
  // Upward messages: worker -> parent task, and task -> parent worker.
  std::vector<std::vector<double>> up_worker(g.n_workers()), up_task(g.n_tasks());
  for (WorkerId u : tree.leaf_workers) {
    const std::size_t s = support.index_of(truth_variances[u]);
    if (s == S)
      throw ArgumentError("weak_oracle_estimate: true variance of worker " + std::to_string(u) +
                          " is not in the support");
    up_worker[u].assign(S, kNegInf);
    up_worker[u][s] = 0.0;
  }
  const double log_uniform = -std::log(static_cast<double>(S));
  std::vector<double> block, incoming;
  // Task view with the parent worker (if any) first.
  auto build = [&](TaskId j) {
    block.clear();
    incoming.clear();
    const WorkerId parent = tree.task_parent[j];
    if (parent != kNoNode) {
      const auto a = answers.at(g, j, parent);
      block.insert(block.end(), a.begin(), a.end());
      incoming.insert(incoming.end(), S, log_uniform);
    }
    for (EdgeId e = g.task_begin(j); e < g.task_end(j); ++e) {
      const WorkerId u = g.edge_worker(e);
      if (u == parent) continue;
      const bool child = tree.worker_parent[u] == j;
      if (!child && !is_leaf(u)) continue;
      const auto a = answers.answer(e);
      block.insert(block.end(), a.begin(), a.end());
      incoming.insert(incoming.end(), up_worker[u].begin(), up_worker[u].end());
    }
    TaskView t;
    t.answers = block;
    t.dim = d;
    t.support = &support;
    t.prior_mean = prior.mean(j);
    t.tau2 = prior.tau2;
    t.incoming = incoming;
    return t;
  };
  for (std::size_t n = tree.order.size(); n-- > 0;) {
    const Node node = tree.order[n];
    if (node.kind == Node::Kind::worker) {
      if (is_leaf(node.id)) continue;
      auto& m = up_worker[node.id];
      m.assign(S, 0.0);
      for (TaskId c : tree.worker_children[node.id])
        for (std::size_t s = 0; s < S; ++s) m[s] += up_task[c][s];
      log_normalize(m);
    } else if (node.id != task) {
      const TaskView t = build(node.id);
      std::vector<bool> targets(t.arity(), false);
      targets[0] = true;
      const auto r = task_pass(t, targets, false, kernel);
      up_task[node.id].assign(r.messages.begin(), r.messages.begin() + static_cast<std::ptrdiff_t>(S));
    }
  }
  const TaskView root = build(task);
  return task_pass(root, std::vector<bool>(root.arity(), false), true, kernel).estimate;
}

inline std::vector<double> weak_oracle_estimates(const AssignmentGraph& g, const AnswerSet& answers,
                                                 std::span<const double> truth_variances,
                                                 const VarianceSupport& support,
                                                 const TaskPrior& prior, std::uint32_t depth = 3,
                                                 const KernelOptions& kernel = {}) {
  const std::size_t d = answers.dim();
  std::vector<double> est(g.n_tasks() * d);
  for (TaskId i = 0; i < g.n_tasks(); ++i) {
    const auto e = weak_oracle_estimate(g, answers, truth_variances, support, prior, i, depth, kernel);
    std::copy(e.begin(), e.end(), est.begin() + i * d);
  }
  return est;
}

struct NbiOptions {
  std::size_t k_max = 100;
  double tolerance = 1e-8;
  double variance_floor = 1e-9;
};

struct NbiState {
  std::vector<double> worker_variance_estimates;
  std::vector<double> task_estimates;  // n_tasks x d
  std::size_t iteration = 0;
  bool converged = false;
};

// Precision-weighted task means under a FLAT prior.
inline std::vector<double> nbi_task_step(const AssignmentGraph& g, const AnswerSet& answers,
                                         std::span<const double> sigma2) {
  const std::size_t d = answers.dim();
  std::vector<double> est(g.n_tasks() * d, 0.0);
  for (TaskId i = 0; i < g.n_tasks(); ++i) {
    const auto block = answers.task_block(g, i);
    const auto ws = g.workers_of_task(i);
    double wsum = 0.0;
    for (std::size_t v = 0; v < ws.size(); ++v) {
      const double w = 1.0 / sigma2[ws[v]];
      wsum += w;
      for (std::size_t j = 0; j < d; ++j) est[i * d + j] += w * block[v * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) est[i * d + j] /= wsum;
  }
  return est;
}

// Mean squared residual of each worker's answers against the task estimates.
inline std::vector<double> nbi_variance_step(const AssignmentGraph& g, const AnswerSet& answers,
                                             std::span<const double> estimates, double floor) {
  const std::size_t d = answers.dim();
  std::vector<double> out(g.n_workers());
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    double acc = 0.0;
    for (EdgeId e : g.edges_of_worker(u)) {
      const auto a = answers.answer(e);
      const TaskId i = g.edge_task(e);
      for (std::size_t j = 0; j < d; ++j) {
        const double r = a[j] - estimates[i * d + j];
        acc += r * r;
      }
    }
    out[u] = std::max(floor, acc / static_cast<double>(g.worker_degree(u)));
  }
  return out;
}

inline NbiState run_nbi(const AssignmentGraph& g, const AnswerSet& answers,
                        const NbiOptions& opts = {}) {
  if (answers.n_edges() != g.n_edges()) throw ArgumentError("run_nbi: answers do not match the graph");
  if (!(opts.variance_floor > 0.0)) throw ArgumentError("run_nbi: variance floor must be positive");
  for (TaskId i = 0; i < g.n_tasks(); ++i)
    if (g.task_degree(i) == 0)
      throw ArgumentError("run_nbi: task " + std::to_string(i) + " has no answers");
  for (WorkerId u = 0; u < g.n_workers(); ++u)
    if (g.worker_degree(u) == 0)
      throw ArgumentError("run_nbi: worker " + std::to_string(u) + " has no answers");
  NbiState st;
  st.worker_variance_estimates.assign(g.n_workers(), 1.0);
  for (std::size_t t = 1; t <= opts.k_max; ++t) {
    const auto mu = nbi_task_step(g, answers, st.worker_variance_estimates);
    auto next = nbi_variance_step(g, answers, mu, opts.variance_floor);
    double change = 0.0;
    for (WorkerId u = 0; u < g.n_workers(); ++u)
      change = std::max(change, std::abs(next[u] - st.worker_variance_estimates[u]) /
                                    st.worker_variance_estimates[u]);
    st.worker_variance_estimates = std::move(next);
    st.iteration = t;
    if (change <= opts.tolerance) {
      st.converged = true;
      break;
    }
  }
  st.task_estimates = nbi_task_step(g, answers, st.worker_variance_estimates);
  return st;
}

struct ClassifierConfig {
  VarianceSupport support;
  std::size_t ell = 2;

  // Sum of support values over S(ell - 1).
  double sigma2_avg() const {
    double acc = 0.0;
    for (double v : support.values()) acc += v;
    return acc / (static_cast<double>(support.size()) * static_cast<double>(ell - 1));
  }
};

// Per-coordinate second-moment statistic: squared distance between the
// worker's answer and the mean of the other answers on the same task,
// averaged over the worker's tasks and divided by d.
inline double worker_moment_statistic(const AssignmentGraph& g, const AnswerSet& answers,
                                      WorkerId worker) {
  if (worker >= g.n_workers()) throw ArgumentError("classify_worker: invalid worker");
  if (g.worker_degree(worker) == 0) throw ArgumentError("classify_worker: worker has no answers");
  const std::size_t d = answers.dim();
  std::vector<double> others(d);
  double acc = 0.0;
  for (EdgeId e : g.edges_of_worker(worker)) {
    const TaskId i = g.edge_task(e);
    const std::size_t k = g.task_degree(i);
    if (k < 2)
      throw ConfigError("classify_worker: task " + std::to_string(i) + " has fewer than 2 answers");
    std::fill(others.begin(), others.end(), 0.0);
    for (EdgeId f = g.task_begin(i); f < g.task_end(i); ++f) {
      if (f == e) continue;
      const auto a = answers.answer(f);
      for (std::size_t j = 0; j < d; ++j) others[j] += a[j];
    }
    const auto mine = answers.answer(e);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = others[j] / static_cast<double>(k - 1) - mine[j];
      acc += diff * diff;
    }
  }
  return acc / (static_cast<double>(g.worker_degree(worker)) * static_cast<double>(d));
}

// Support index whose shifted value sigma2_s + sigma2_avg is closest to the
// statistic; ties go to the smaller variance.
inline std::size_t classify_statistic(double sigma2_hat, const ClassifierConfig& cfg) {
  if (cfg.ell < 2) throw ConfigError("classify_worker: ell must be >= 2");
  const double off = cfg.sigma2_avg();
  std::size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < cfg.support.size(); ++s) {
    const double gap = std::abs(cfg.support[s] + off - sigma2_hat);
    if (gap < best_gap) {
      best_gap = gap;
      best = s;
    }
  }
  return best;
}

inline std::size_t classify_worker(const AssignmentGraph& g, const AnswerSet& answers,
                                   WorkerId worker, const ClassifierConfig& cfg) {
  if (cfg.ell < 2) throw ConfigError("classify_worker: ell must be >= 2");
  return classify_statistic(worker_moment_statistic(g, answers, worker), cfg);
}

struct SupportEstimate {
  double low = 0.0;   // mean of the bottom block of NBI variances
  double high = 0.0;  // mean of the top block
  bool degenerate = false;
  VarianceSupport support;  // {low, high}, separated by the floor when equal
};

inline SupportEstimate estimate_support(const AssignmentGraph& g, const AnswerSet& answers,
                                        double quantile, const NbiOptions& opts = {}) {
  if (!(quantile > 0.0 && quantile <= 0.5))
    throw ConfigError("estimate_support: quantile must be in (0, 0.5]");
  const std::size_t m = g.n_workers();
  if (static_cast<double>(m) < std::ceil(1.0 / quantile))
    throw ConfigError("estimate_support: too few workers for quantile");
  auto sigma2 = run_nbi(g, answers, opts).worker_variance_estimates;
  std::sort(sigma2.begin(), sigma2.end());
  const auto block = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(quantile * static_cast<double>(m) + 1e-9)));
  SupportEstimate out;
  for (std::size_t x = 0; x < block; ++x) {
    out.low += sigma2[x];
    out.high += sigma2[m - 1 - x];
  }
  // NBI residuals are squared norms over d coordinates; the support is per coordinate.
  const double scale = static_cast<double>(block) * static_cast<double>(answers.dim());
  out.low /= scale;
  out.high /= scale;
  double hi = out.high;
  if (!(hi > out.low)) {
    out.degenerate = true;
    hi = out.low + std::max(opts.variance_floor, 1e-12 * out.low);
  }
  out.support = VarianceSupport({out.low, hi});
  return out;
}

}  // namespace crowdreg
