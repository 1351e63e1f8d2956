#pragma once

// Monte-Carlo experiment runner: per sweep point and trial, draw a graph, a
// world and answers from split seeds, run the selected estimators and reduce
// MSE and wall time in (sweep point, trial) order.

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "crowdreg/baselines.hpp"
#include "crowdreg/bounds.hpp"
#include "crowdreg/config.hpp"
#include "crowdreg/csv.hpp"
#include "crowdreg/inference.hpp"
#include "crowdreg/metrics.hpp"
#include "crowdreg/rng.hpp"

namespace crowdreg {

struct SweepPoint {
  std::size_t ell = 0;
  std::size_t r = 0;
  std::size_t n = 0;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
  std::vector<SweepPoint> out;
  for (std::size_t ell : c.ell_values)
    for (std::size_t r : c.r_values) out.push_back({ell, r, c.n_for(ell, r)});
  return out;
}

struct TrialWorld {
  AssignmentGraph graph;
  TaskPrior prior;
  GroundTruth truth;
  AnswerSet answers;
};

// Seeds depend on (ell, r, trial) only, so adding sweep points or algorithms
// leaves every other trial's data unchanged.
inline TrialWorld make_trial_world(const ExperimentConfig& c, const SweepPoint& p,
                                   std::size_t trial) {
  auto seed_for = [&](Stream s) {
    return derive_seed(c.seed, {p.ell, p.r, trial, static_cast<std::uint64_t>(s)});
  };
  TrialWorld w;
  w.graph = generate_lr_regular(p.n, p.ell, p.r, seed_for(Stream::graph));
  w.prior = c.task_prior(p.n);
  w.truth = sample_world(w.graph, c.support, w.prior, c.dim, c.positions, seed_for(Stream::world));
  w.answers = sample_answers(w.graph, w.truth, seed_for(Stream::answers));
  return w;
}

inline BiOptions bi_options(const ExperimentConfig& c, std::size_t n_tasks) {
  BiOptions o;
  o.k_max = c.bi_k_log_log ? k_max_log_log(n_tasks) : c.bi_k_max;
  o.tolerance = c.bi_tolerance;
  o.kernel = c.kernel;
  o.keep_beliefs = false;
  return o;
}

inline NbiOptions nbi_options(const ExperimentConfig& c) {
  return {c.nbi_k_max, c.nbi_tolerance, c.nbi_floor};
}

inline std::vector<double> run_algorithm(Algorithm a, const ExperimentConfig& c, const TrialWorld& w) {
  switch (a) {
    case Algorithm::average: return average_estimate(w.graph, w.answers);
    case Algorithm::nbi: return run_nbi(w.graph, w.answers, nbi_options(c)).task_estimates;
    case Algorithm::bi: return run_bi(w.graph, w.answers, c.support, w.prior, bi_options(c, w.graph.n_tasks())).estimates;
    case Algorithm::strong_oracle:
      return strong_oracle_estimate(w.graph, w.answers, w.truth.worker_variances, w.prior);
    case Algorithm::weak_oracle:
      return weak_oracle_estimates(w.graph, w.answers, w.truth.worker_variances, c.support, w.prior,
                                   c.weak_depth, c.kernel);
  }
  throw ArgumentError("run_algorithm: unknown algorithm");
}

struct MetricsRow {
  std::size_t ell = 0;
  std::size_t r = 0;
  std::size_t n = 0;
  std::string support;
  Algorithm algorithm = Algorithm::average;
  double mean_mse = 0.0;
  double stderr_mse = 0.0;
  double mean_wall_ms = 0.0;
  std::size_t trials = 0;
  std::vector<double> trial_mse;  // in trial order
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << "ell,r,n,support,algorithm,mean_mse,stderr_mse,mean_wall_ms,trials\n";
  for (const auto& m : rows)
    out << m.ell << ',' << m.r << ',' << m.n << ',' << m.support << ',' << to_string(m.algorithm)
        << ',' << csv::format_double(m.mean_mse) << ',' << csv::format_double(m.stderr_mse) << ','
        << csv::format_double(m.mean_wall_ms) << ',' << m.trials << '\n';
}

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  auto out = csv::open_out(path);
  write_metrics_csv(rows, out);
}

namespace detail {

// Rethrows `p` as the same error category with `context` prefixed.
[[noreturn]] inline void rethrow_with_context(std::exception_ptr p, const std::string& context) {
  try {
    std::rethrow_exception(p);
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(context + ": " + e.what());
  } catch (const UndefinedPosteriorError& e) {
    throw UndefinedPosteriorError(context + ": " + e.what());
  } catch (const GenerationError& e) {
    throw GenerationError(context + ": " + e.what());
  } catch (const IntractableError& e) {
    throw IntractableError(context + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const Error& e) {
    throw Error(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(context + ": " + e.what());
  }
}

// Runs job(0..count-1) on `threads` workers; the lowest-index failure is
// rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& job,
                         const std::function<std::string(std::size_t)>& context) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        job(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(threads, count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < count; ++k)
    if (errors[k]) rethrow_with_context(errors[k], context(k));
}

}  // namespace detail

struct RunHooks {
  // Called once per finished trial with (done, total), under a lock.
  std::function<void(std::size_t, std::size_t)> progress;
};

inline std::vector<MetricsRow> run_experiment(const ExperimentConfig& c, const RunHooks& hooks = {}) {
  c.validate();
  const auto points = sweep_points(c);
  const std::size_t A = c.algorithms.size();
  const std::size_t jobs = points.size() * c.trials;
  std::vector<double> mse_out(jobs * A), ms_out(jobs * A);
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  detail::parallel_for(
      jobs, c.threads,
      [&](std::size_t job) {
        const auto& p = points[job / c.trials];
        const TrialWorld w = make_trial_world(c, p, job % c.trials);
        for (std::size_t a = 0; a < A; ++a) {
          const auto t0 = std::chrono::steady_clock::now();
          const auto est = run_algorithm(c.algorithms[a], c, w);
          const auto t1 = std::chrono::steady_clock::now();
          mse_out[job * A + a] = mse(est, w.truth);
          ms_out[job * A + a] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        const std::size_t finished = ++done;
        if (hooks.progress) {
          std::lock_guard lock(progress_mutex);
          hooks.progress(finished, jobs);
        }
      },
      [&](std::size_t job) {
        const auto& p = points[job / c.trials];
        return "ell=" + std::to_string(p.ell) + " r=" + std::to_string(p.r) +
               " trial=" + std::to_string(job % c.trials);
      });

  std::vector<MetricsRow> rows;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    for (std::size_t a = 0; a < A; ++a) {
      MetricsRow m;
      m.ell = points[pi].ell;
      m.r = points[pi].r;
      m.n = points[pi].n;
      m.support = c.support.to_string();
      m.algorithm = c.algorithms[a];
      m.trials = c.trials;
      double ms = 0.0;
      for (std::size_t t = 0; t < c.trials; ++t) {
        const std::size_t job = pi * c.trials + t;
        m.trial_mse.push_back(mse_out[job * A + a]);
        ms += ms_out[job * A + a];
      }
      const auto s = summarize(m.trial_mse);
      m.mean_mse = s.mean;
      m.stderr_mse = s.stderr_mean;
      m.mean_wall_ms = ms / static_cast<double>(c.trials);
      rows.push_back(std::move(m));
    }
  }
  return rows;
}

struct BoundRow {
  SweepPoint point;
  double k = 0.0;
  BoundReport report;
};

inline std::vector<BoundRow> compute_bounds(const ExperimentConfig& c, double k) {
  std::vector<BoundRow> out;
  for (const auto& p : sweep_points(c))
    out.push_back({p, k, compute_bounds(p.ell, p.r, c.dim, c.support, c.tau2, k)});
  return out;
}

inline void write_bounds_csv(const std::vector<BoundRow>& rows, const std::string& support,
                             std::ostream& out) {
  out << "ell,r,n,support,k,oracle_term,gap_term,avg_mse_formula\n";
  for (const auto& b : rows)
    out << b.point.ell << ',' << b.point.r << ',' << b.point.n << ',' << support << ','
        << csv::format_double(b.k) << ',' << csv::format_double(b.report.oracle_term) << ','
        << csv::format_double(b.report.gap_term) << ','
        << csv::format_double(b.report.avg_mse_formula) << '\n';
}

struct Theorem1Point {
  SweepPoint point;
  double empirical_mse = 0.0;
  double stderr_mse = 0.0;
  double rhs = 0.0;
  // rhs + 3 stderr - empirical; non-negative when the inequality holds.
  double margin = 0.0;
};

struct Theorem1Check {
  bool holds = true;
  std::vector<Theorem1Point> points;
};

// Runs BI with k_max = k at every sweep point of `c` and compares the
// Monte-Carlo MSE with the bound.
inline Theorem1Check check_theorem1(ExperimentConfig c, std::size_t k) {
  c.algorithms = {Algorithm::bi};
  c.bi_k_max = k;
  c.bi_k_log_log = false;
  const auto rows = run_experiment(c);
  Theorem1Check out;
  for (const auto& row : rows) {
    Theorem1Point p;
    p.point = {row.ell, row.r, row.n};
    p.empirical_mse = row.mean_mse;
    p.stderr_mse = row.stderr_mse;
    p.rhs = compute_bounds(row.ell, row.r, c.dim, c.support, c.tau2, static_cast<double>(k)).rhs();
    p.margin = p.rhs + 3.0 * p.stderr_mse - p.empirical_mse;
    out.holds = out.holds && p.margin >= 0.0;
    out.points.push_back(p);
  }
  return out;
}

}  // namespace crowdreg
