#pragma once

// Bayesian Iterative (BI) message passing over worker variance classes.
//
// Messages are distributions over the support indices, stored as normalized
// log-probabilities per edge. One iteration recomputes every task->worker
// message from the previous worker->task messages, then every worker->task
// message from the fresh task->worker messages.

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "crowdreg/error.hpp"
#include "crowdreg/factors.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/kernel.hpp"
#include "crowdreg/logmath.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

struct MessageState {
  std::size_t n_states = 0;
  std::vector<double> task_to_worker;  // n_edges x S
  std::vector<double> worker_to_task;  // n_edges x S
  std::size_t iteration = 0;

  static MessageState uniform(std::size_t n_edges, std::size_t n_states) {
    const double lu = -std::log(static_cast<double>(n_states));
    return {n_states, std::vector<double>(n_edges * n_states, lu),
            std::vector<double>(n_edges * n_states, lu), 0};
  }
  std::span<const double> t2w(EdgeId e) const {
    return {task_to_worker.data() + e * n_states, n_states};
  }
  std::span<const double> w2t(EdgeId e) const {
    return {worker_to_task.data() + e * n_states, n_states};
  }
};

// Per-task beliefs over S^{M_i}; absent where the configuration space was
// too large to materialize.
struct BeliefSet {
  std::vector<std::optional<ConfigDistribution>> beliefs;
};

struct BiOptions {
  std::size_t k_max = 100;
  double tolerance = 1e-10;
  KernelOptions kernel;
  // Beliefs are stored for tasks with at most this many configurations.
  std::size_t belief_limit = std::size_t{1} << 16;
  bool keep_beliefs = true;
  // Per-iteration message dump, CSV `iteration,edge,direction,prob_0..`.
  std::ostream* trace = nullptr;
};

// k = log log n, the iteration count at which the error bound is stated.
inline std::size_t k_max_log_log(std::size_t n) {
  const double v = std::log(std::log(static_cast<double>(std::max<std::size_t>(n, 3))));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v)));
}

struct BiRunReport {
  std::vector<double> estimates;  // n_tasks x d
  BeliefSet beliefs;
  std::vector<double> worker_marginals;  // n_workers x S, probabilities
  std::size_t iterations_run = 0;
  bool converged = false;
  double max_message_delta = 0.0;
  std::vector<double> delta_history;
  MessageState state;

  std::span<const double> estimate(TaskId i, std::size_t d) const {
    return {estimates.data() + i * d, d};
  }
};

// Per-worker variance posterior, proportional to the product of incoming
// task->worker messages. Returned as probabilities, n_workers x S.
inline std::vector<double> worker_variance_marginals(const AssignmentGraph& g,
                                                     const MessageState& state) {
  const std::size_t S = state.n_states;
  std::vector<double> out(g.n_workers() * S);
  std::vector<double> acc(S);
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (EdgeId e : g.edges_of_worker(u)) {
      const auto m = state.t2w(e);
      for (std::size_t s = 0; s < S; ++s) acc[s] += m[s];
    }
    log_normalize(acc);
    for (std::size_t s = 0; s < S; ++s) out[u * S + s] = std::exp(acc[s]);
  }
  return out;
}

// Belief-weighted mixture of posterior means; every task needs a belief.
inline std::vector<double> estimate_from_beliefs(const AssignmentGraph& g, const AnswerSet& answers,
                                                 const VarianceSupport& support,
                                                 const TaskPrior& prior, const BeliefSet& beliefs) {
  if (beliefs.beliefs.size() != g.n_tasks())
    throw ArgumentError("estimate_from_beliefs: belief count does not match the graph");
  const std::size_t d = answers.dim();
  std::vector<double> est(g.n_tasks() * d);
  for (TaskId i = 0; i < g.n_tasks(); ++i) {
    if (!beliefs.beliefs[i]) throw ArgumentError("estimate_from_beliefs: missing belief");
    if (g.task_degree(i) == 0) {
      if (prior.tau2.is_flat())
        throw UndefinedPosteriorError("estimate_from_beliefs: FLAT prior with no answers");
      const auto nu = prior.mean(i);
      std::copy(nu.begin(), nu.end(), est.begin() + i * d);
      continue;
    }
    const LocalFactorTable table(answers.task_block(g, i), d, support, prior.mean(i), prior.tau2);
    if (beliefs.beliefs[i]->log_probs.size() != table.size())
      throw ArgumentError("estimate_from_beliefs: belief size does not match S^|M_i|");
    const auto mu = mix_posterior_means(table, beliefs.beliefs[i]->log_probs);
    std::copy(mu.begin(), mu.end(), est.begin() + i * d);
  }
  return est;
}

namespace detail {

class BiEngine {
 public:
  BiEngine(const AssignmentGraph& g, const AnswerSet& answers, const VarianceSupport& support,
           const TaskPrior& prior, const BiOptions& opts)
      : g_(g), a_(answers), sup_(support), prior_(prior), opts_(opts), S_(support.size()) {
    if (answers.n_edges() != g.n_edges())
      throw ArgumentError("run_bi: answers do not match the graph");
    if (prior.n_tasks() != g.n_tasks() || prior.dim != answers.dim())
      throw ArgumentError("run_bi: prior does not match the graph");
    if (opts.k_max < 1) throw ArgumentError("run_bi: k_max must be >= 1");
    tables_.resize(g.n_tasks());
    for (TaskId i = 0; i < g.n_tasks(); ++i) {
      if (g.task_degree(i) == 0) {
        if (prior.tau2.is_flat())
          throw UndefinedPosteriorError("run_bi: task " + std::to_string(i) +
                                        " has no answers under a FLAT prior");
        continue;
      }
      if (use_table(g.task_degree(i)))
        tables_[i].emplace(answers.task_block(g, i), answers.dim(), support, prior.mean(i),
                           prior.tau2);
    }
  }

  BiRunReport run() {
    BiRunReport rep;
    MessageState st = MessageState::uniform(g_.n_edges(), S_);
    std::vector<double> next_t2w(st.task_to_worker.size());
    std::vector<double> next_w2t(st.worker_to_task.size());
    if (opts_.trace) write_trace_header();
    for (std::size_t it = 1; it <= opts_.k_max; ++it) {
      for (TaskId i = 0; i < g_.n_tasks(); ++i) task_update(i, st.worker_to_task, next_t2w);
      worker_update(next_t2w, next_w2t);
      double delta = 0.0;
      for (std::size_t x = 0; x < next_t2w.size(); ++x) {
        delta = std::max(delta, std::abs(std::exp(next_t2w[x]) - std::exp(st.task_to_worker[x])));
        delta = std::max(delta, std::abs(std::exp(next_w2t[x]) - std::exp(st.worker_to_task[x])));
      }
      st.task_to_worker.swap(next_t2w);
      st.worker_to_task.swap(next_w2t);
      st.iteration = it;
      rep.delta_history.push_back(delta);
      rep.max_message_delta = delta;
      rep.iterations_run = it;
      if (opts_.trace) write_trace(st);
      if (delta <= opts_.tolerance) {
        rep.converged = true;
        break;
      }
    }
    finish(st, rep);
    rep.state = std::move(st);
    return rep;
  }

 private:
  bool use_table(std::size_t k) const {
    if (opts_.kernel.mode == KernelMode::quadrature) return false;
    double n = 1.0;
    for (std::size_t v = 0; v < k; ++v) n *= static_cast<double>(S_);
    return opts_.kernel.mode == KernelMode::enumerate || n <= static_cast<double>(opts_.kernel.enumeration_limit);
  }

  TaskView view(TaskId i, std::span<const double> w2t) const {
    TaskView t;
    t.answers = a_.task_block(g_, i);
    t.dim = a_.dim();
    t.support = &sup_;
    t.prior_mean = prior_.mean(i);
    t.tau2 = prior_.tau2;
    t.incoming = w2t.subspan(g_.task_begin(i) * S_, g_.task_degree(i) * S_);
    return t;
  }

  void task_update(TaskId i, std::span<const double> w2t, std::vector<double>& out) {
    const std::size_t k = g_.task_degree(i);
    if (k == 0) return;
    std::span<double> dst(out.data() + g_.task_begin(i) * S_, k * S_);
    if (tables_[i]) {
      table_messages(*tables_[i], w2t.subspan(g_.task_begin(i) * S_, k * S_), dst);
    } else {
      const auto r = task_pass(view(i, w2t), std::vector<bool>(k, true), false, opts_.kernel);
      std::copy(r.messages.begin(), r.messages.end(), dst.begin());
    }
    for (std::size_t v = 0; v < k; ++v) {
      auto m = dst.subspan(v * S_, S_);
      for (double& x : m) {
        if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
          throw NumericalError(edge_message("non-finite task->worker message", g_.task_begin(i) + v));
        x = std::max(x, kLogFloor);
      }
    }
  }

  void worker_update(std::span<const double> t2w, std::vector<double>& out) {
    for (WorkerId u = 0; u < g_.n_workers(); ++u) {
      const auto edges = g_.edges_of_worker(u);
      for (EdgeId e : edges) {
        std::span<double> dst(out.data() + e * S_, S_);
        std::fill(dst.begin(), dst.end(), 0.0);
        for (EdgeId f : edges) {
          if (f == e) continue;
          for (std::size_t s = 0; s < S_; ++s) dst[s] += t2w[f * S_ + s];
        }
        log_normalize_floored(dst);
        for (double x : dst)
          if (!std::isfinite(x))
            throw NumericalError(edge_message("non-finite worker->task message", e));
      }
    }
  }

  void finish(const MessageState& st, BiRunReport& rep) {
    const std::size_t d = a_.dim();
    rep.estimates.assign(g_.n_tasks() * d, 0.0);
    rep.beliefs.beliefs.resize(g_.n_tasks());
    for (TaskId i = 0; i < g_.n_tasks(); ++i) {
      const std::size_t k = g_.task_degree(i);
      std::span<double> est(rep.estimates.data() + i * d, d);
      if (k == 0) {
        const auto nu = prior_.mean(i);
        std::copy(nu.begin(), nu.end(), est.begin());
        if (opts_.keep_beliefs) rep.beliefs.beliefs[i] = ConfigDistribution{{}, S_, {0.0}};
        continue;
      }
      const auto incoming =
          std::span<const double>(st.worker_to_task).subspan(g_.task_begin(i) * S_, k * S_);
      if (tables_[i]) {
        const auto lb = table_log_belief(*tables_[i], incoming);
        const auto mu = mix_posterior_means(*tables_[i], lb);
        std::copy(mu.begin(), mu.end(), est.begin());
        if (opts_.keep_beliefs && lb.size() <= opts_.belief_limit) {
          const auto ws = g_.workers_of_task(i);
          rep.beliefs.beliefs[i] = ConfigDistribution{{ws.begin(), ws.end()}, S_, lb};
        }
      } else {
        const auto r = task_pass(view(i, st.worker_to_task), std::vector<bool>(k, false), true,
                                 opts_.kernel);
        std::copy(r.estimate.begin(), r.estimate.end(), est.begin());
        if (opts_.keep_beliefs && std::pow(static_cast<double>(S_), static_cast<double>(k)) <=
                                      static_cast<double>(opts_.belief_limit)) {
          const LocalFactorTable table(a_.task_block(g_, i), d, sup_, prior_.mean(i), prior_.tau2,
                                       opts_.belief_limit);
          const auto ws = g_.workers_of_task(i);
          rep.beliefs.beliefs[i] = ConfigDistribution{{ws.begin(), ws.end()}, S_, table_log_belief(table, incoming)};
        }
      }
      for (double x : est)
        if (!std::isfinite(x))
          throw NumericalError("run_bi: non-finite estimate for task " + std::to_string(i));
    }
    rep.worker_marginals = worker_variance_marginals(g_, st);
  }

  std::string edge_message(const std::string& what, EdgeId e) const {
    return "run_bi: " + what + " on edge " + std::to_string(e) + " (task " +
           std::to_string(g_.edge_task(e)) + ", worker " + std::to_string(g_.edge_worker(e)) + ")";
  }

  void write_trace_header() {
    *opts_.trace << "iteration,edge,direction";
    for (std::size_t s = 0; s < S_; ++s) *opts_.trace << ",prob_" << s;
    *opts_.trace << '\n';
  }

  void write_trace(const MessageState& st) {
    for (int dir = 0; dir < 2; ++dir)
      for (EdgeId e = 0; e < g_.n_edges(); ++e) {
        *opts_.trace << st.iteration << ',' << e << ',' << (dir == 0 ? "t2w" : "w2t");
        const auto m = dir == 0 ? st.t2w(e) : st.w2t(e);
        for (double x : m) *opts_.trace << ',' << csv::format_double(std::exp(x));
        *opts_.trace << '\n';
      }
  }

  const AssignmentGraph& g_;
  const AnswerSet& a_;
  const VarianceSupport& sup_;
  const TaskPrior& prior_;
  BiOptions opts_;
  std::size_t S_;
  std::vector<std::optional<LocalFactorTable>> tables_;
};

}  // namespace detail

inline BiRunReport run_bi(const AssignmentGraph& g, const AnswerSet& answers,
                          const VarianceSupport& support, const TaskPrior& prior,
                          const BiOptions& opts = {}) {
  return detail::BiEngine(g, answers, support, prior, opts).run();
}

inline BiRunReport run_bi(const AssignmentGraph& g, const AnswerSet& answers,
                          const VarianceSupport& support, const TaskPrior& prior,
                          std::size_t k_max, double tolerance) {
  BiOptions opts;
  opts.k_max = k_max;
  opts.tolerance = tolerance;
  return run_bi(g, answers, support, prior, opts);
}

}  // namespace crowdreg
