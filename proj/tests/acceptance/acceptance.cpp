// Acceptance checks. `acceptance <id>` runs one criterion, `acceptance all`
// runs every one; each prints a single PASS or FAIL line.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../oracles.hpp"
#include "crowdreg/crowdreg.hpp"

using namespace crowdreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failure messages and keeps a running verdict.
class Verdict {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass_ = false;
    if (++failures_ <= 5) failed_ << (failures_ > 1 ? "; " : "") << what;
  }
  Outcome done(const std::string& summary) const {
    std::string d = summary;
    if (!pass_) d += " | " + std::to_string(failures_) + " failure(s): " + failed_.str();
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::size_t failures_ = 0;
  std::ostringstream failed_;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::size_t hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

AnswerSet random_answers(const AssignmentGraph& g, std::size_t d, std::mt19937_64& rng,
                         const VarianceSupport& sup) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, sup.size() - 1);
  std::vector<double> mu(g.n_tasks() * d), var(g.n_workers());
  for (double& x : mu) x = 30.0 * z(rng);
  for (double& v : var) v = sup[pick(rng)];
  AnswerSet a(g.n_edges(), d);
  for (EdgeId e = 0; e < g.n_edges(); ++e)
    for (std::size_t j = 0; j < d; ++j)
      a.answer(e)[j] = mu[g.edge_task(e) * d + j] + std::sqrt(var[g.edge_worker(e)]) * z(rng);
  return a;
}

Outcome tree_exactness() {
  const Stopwatch clock;
  Verdict v;
  std::mt19937_64 rng(2024);
  double worst_belief = 0.0, worst_est = 0.0;
  const VarianceSupport supports[] = {VarianceSupport({4.0, 60.0}), VarianceSupport({2.0, 30.0, 400.0}),
                                      VarianceSupport({1.0, 9.0}), VarianceSupport({10.0, 100.0, 1000.0})};
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t workers = 2 + rng() % 7;
    const std::size_t tasks = 1 + rng() % 5;
    const auto g = oracle::random_tree(workers, tasks, rng);
    const auto& sup = supports[rep % 4];
    const std::size_t d = 1 + rep % 2;
    const bool flat = (rep / 2) % 2 == 0;
    const auto a = random_answers(g, d, rng, sup);
    const auto prior = flat ? TaskPrior::flat(g.n_tasks(), d)
                            : TaskPrior::gaussian(std::vector<double>(g.n_tasks() * d, 5.0), d, 900.0);
    const std::size_t k = std::max<std::size_t>(1, oracle::task_diameter(g));
    const auto bi = run_bi(g, a, sup, prior, k, 0.0);
    const auto want = oracle::brute_force(g, a, {sup.values().begin(), sup.values().end()}, prior.means,
                                          flat ? std::nullopt : std::optional(900.0));
    for (TaskId i = 0; i < g.n_tasks(); ++i) {
      if (!bi.beliefs.beliefs[i]) {
        v.require(false, "rep " + std::to_string(rep) + ": no belief for task " + std::to_string(i));
        continue;
      }
      const auto& b = *bi.beliefs.beliefs[i];
      for (std::size_t c = 0; c < b.log_probs.size(); ++c)
        worst_belief = std::max(worst_belief, std::abs(b.prob(c) - want.task_belief[i][c]));
      const auto exact = exact_optimal_estimate(g, a, sup, prior, i);
      for (std::size_t j = 0; j < d; ++j)
        worst_est = std::max(worst_est, std::abs(bi.estimate(i, d)[j] - exact[j]));
    }
  }
  const double secs = clock.seconds();
  v.require(worst_belief <= 1e-9, "belief Linf " + fmt(worst_belief));
  v.require(worst_est <= 1e-9, "estimate error " + fmt(worst_est));
  v.require(secs < 10.0, "runtime " + fmt(secs) + " s");
  return v.done("100 trees, belief Linf " + fmt(worst_belief, 3) + ", estimate error " +
                fmt(worst_est, 3) + ", " + fmt(secs, 3) + " s");
}

Outcome factor_density() {
  const Stopwatch clock;
  Verdict v;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-50, 50), lv(std::log(0.5), std::log(2000.0));
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t ell = 1 + rep % 3, d = 1 + (rep / 3) % 3;
    const double tau2 = std::exp(lv(rng));
    std::vector<double> nu, mu, vars, answers;
    for (std::size_t j = 0; j < d; ++j) {
      nu.push_back(pos(rng));
      mu.push_back(nu[j] + std::sqrt(tau2) * z(rng));
    }
    for (std::size_t u = 0; u < ell; ++u) {
      vars.push_back(std::exp(lv(rng)));
      for (std::size_t j = 0; j < d; ++j) answers.push_back(mu[j] + std::sqrt(vars[u]) * z(rng));
    }
    const double got = log_local_factor(answers, vars, nu, PriorVariance::finite(tau2)).log_weight;
    const double want = oracle::marginal_log_likelihood(answers, d, vars, nu, tau2);
    worst = std::max(worst, std::abs(std::expm1(got - want)));
  }
  const double secs = clock.seconds();
  v.require(worst <= 1e-9, "relative error " + fmt(worst));
  v.require(secs < 1.0, "runtime " + fmt(secs) + " s");
  return v.done("300 inputs, worst relative error " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s");
}

Outcome closed_form_mse() {
  const Stopwatch clock;
  Verdict v;
  auto c = parse_config_string("n = 200\nell = 5\nr = 5\nd = 2\nsupport = 10;100;1000\n"
                               "trials = 500\nalgo = average,strong_oracle\n");
  c.threads = hardware_threads();
  const auto rows = run_experiment(c);
  const auto b = compute_bounds(5, 5, 2, c.support, c.tau2, INFINITY);
  const double want[] = {b.avg_mse_formula, b.oracle_term};
  std::ostringstream s;
  for (std::size_t q = 0; q < 2; ++q) {
    const auto& row = rows[q];
    const double z = (row.mean_mse - want[q]) / row.stderr_mse;
    v.require(std::abs(z) <= 3.0, std::string(to_string(row.algorithm)) + " off by " + fmt(z, 3) + " SE");
    s << to_string(row.algorithm) << ' ' << fmt(row.mean_mse, 5) << " vs " << fmt(want[q], 5) << " ("
      << fmt(z, 2) << " SE), ";
  }
  const double secs = clock.seconds();
  v.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  return v.done(s.str() + fmt(secs, 3) + " s");
}

// Golden values are written on the first run and compared afterwards.
struct GoldenRow {
  double mean = 0.0, se = 0.0;
};

std::map<std::string, GoldenRow> read_golden(const fs::path& p) {
  std::map<std::string, GoldenRow> out;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = csv::split(line);
    if (f.size() != 5) continue;
    out[std::string(f[0]) + "," + std::string(f[1]) + "," + std::string(f[2])] = {
        csv::parse_double(f[3], "mean_mse"), csv::parse_double(f[4], "stderr_mse")};
  }
  return out;
}

Outcome figure1_ordering() {
  const Stopwatch clock;
  Verdict v;
  const fs::path golden_dir(CROWDREG_GOLDEN_DIR);
  const Algorithm order[] = {Algorithm::strong_oracle, Algorithm::weak_oracle, Algorithm::bi, Algorithm::nbi,
                             Algorithm::average};
  std::size_t points = 0, regressions = 0, created = 0;
  double worst_rel_bi = 0.0;
  std::map<std::string, std::map<Algorithm, MetricsRow>> at_55;  // support -> algorithm -> row
  std::ostringstream times;
  for (const char* preset : {"fig1a", "fig1b", "fig1c", "fig1d"}) {
    const Stopwatch watch;
    auto c = parse_config_string(std::string("preset = ") + preset + "\n");
    c.threads = hardware_threads();
    const auto rows = run_experiment(c);
    times << preset << ' ' << fmt(watch.seconds(), 4) << " s ";
    std::map<std::pair<std::size_t, std::size_t>, std::map<Algorithm, const MetricsRow*>> by_point;
    for (const auto& row : rows) by_point[{row.ell, row.r}][row.algorithm] = &row;
    for (const auto& [pt, algs] : by_point) {
      ++points;
      const std::string where = std::string(preset) + " ell=" + std::to_string(pt.first) + " r=" +
                                std::to_string(pt.second);
      for (std::size_t q = 0; q + 1 < 5; ++q) {
        const auto* lo = algs.at(order[q]);
        const auto* hi = algs.at(order[q + 1]);
        const double slack = 2.0 * combined_se(lo->stderr_mse, hi->stderr_mse);
        v.require(lo->mean_mse <= hi->mean_mse + slack,
                  where + ": " + std::string(to_string(order[q])) + " " + fmt(lo->mean_mse) + " > " +
                      std::string(to_string(order[q + 1])) + " " + fmt(hi->mean_mse));
      }
      if (pt.second >= 5) {
        const double weak = algs.at(Algorithm::weak_oracle)->mean_mse;
        const double rel = std::abs(algs.at(Algorithm::bi)->mean_mse - weak) / weak;
        worst_rel_bi = std::max(worst_rel_bi, rel);
        v.require(rel <= 0.10, where + ": BI/Weak relative gap " + fmt(rel, 3));
      }
      if (pt.first == 5 && pt.second == 5)
        for (const auto& [alg, row] : algs) at_55[c.support.to_string()][alg] = *row;
    }

    const fs::path golden = golden_dir / (std::string(preset) + ".csv");
    if (!fs::exists(golden)) {
      fs::create_directories(golden_dir);
      std::ofstream out(golden);
      out << "ell,r,algorithm,mean_mse,stderr_mse\n";
      for (const auto& row : rows)
        out << row.ell << ',' << row.r << ',' << to_string(row.algorithm) << ','
            << csv::format_double(row.mean_mse) << ',' << csv::format_double(row.stderr_mse) << '\n';
      ++created;
    } else {
      const auto want = read_golden(golden);
      for (const auto& row : rows) {
        const std::string key = std::to_string(row.ell) + "," + std::to_string(row.r) + "," +
                                std::string(to_string(row.algorithm));
        const auto it = want.find(key);
        const bool ok = it != want.end() &&
                        std::abs(it->second.mean - row.mean_mse) <= 1e-6 * std::abs(it->second.mean);
        if (!ok) ++regressions;
        v.require(ok, std::string(preset) + " " + key + " differs from golden");
      }
    }
  }

  // Raising the support mean degrades Average by the mean ratio; BI stays
  // within a factor of two of its small-support error.
  const auto& small = at_55.at(VarianceSupport::small().to_string());
  const auto& large = at_55.at(VarianceSupport::large().to_string());
  const double ratio = VarianceSupport::large().mean() / VarianceSupport::small().mean();
  const auto& as = small.at(Algorithm::average);
  const auto& al = large.at(Algorithm::average);
  // Delta-method SE of the ratio of two independent means.
  const double got_ratio = al.mean_mse / as.mean_mse;
  const double ratio_se = got_ratio * combined_se(al.stderr_mse / al.mean_mse, as.stderr_mse / as.mean_mse);
  v.require(std::abs(got_ratio - ratio) <= 3.0 * ratio_se,
            "Average large/small ratio " + fmt(got_ratio) + " vs " + fmt(ratio));
  const double bi_ratio = large.at(Algorithm::bi).mean_mse / small.at(Algorithm::bi).mean_mse;
  v.require(bi_ratio <= 2.0, "BI large/small ratio " + fmt(bi_ratio));

  const double secs = clock.seconds();
  v.require(secs < 900.0, "runtime " + fmt(secs) + " s on " + std::to_string(hardware_threads()) + " thread(s)");
  return v.done(std::to_string(points) + " sweep points, worst BI/Weak gap " + fmt(worst_rel_bi, 3) +
                ", Average ratio " + fmt(got_ratio, 4) + " (expected " + fmt(ratio, 4) + "), BI ratio " +
                fmt(bi_ratio, 3) + ", golden " + (created ? "created" : std::to_string(regressions) + " diffs") +
                ", " + times.str() + "total " + fmt(secs, 4) + " s");
}

Outcome theorem1_bound() {
  const Stopwatch clock;
  Verdict v;
  auto c = parse_config_string("n = 200\nell = 5\nr = 2,5,10,20\nd = 2\nsupport = 10;100;1000\n"
                               "trials = 30\nseed = 5\nn_rounding = up\n");
  c.threads = hardware_threads();
  double worst = INFINITY;
  std::size_t configs = 0;
  for (std::size_t k : {5u, 20u, 100u}) {
    const auto check = check_theorem1(c, k);
    for (const auto& p : check.points) {
      ++configs;
      worst = std::min(worst, p.margin);
      v.require(p.margin >= 0.0, "r=" + std::to_string(p.point.r) + " k=" + std::to_string(k) + ": " +
                                     fmt(p.empirical_mse) + " > " + fmt(p.rhs));
    }
  }
  const double secs = clock.seconds();
  v.require(configs == 12, "expected 12 configs, got " + std::to_string(configs));
  v.require(secs < 600.0, "runtime " + fmt(secs) + " s");
  return v.done(std::to_string(configs) + " configs, smallest margin " + fmt(worst, 4) + ", " +
                fmt(secs, 3) + " s");
}

Outcome classifier_decay() {
  const Stopwatch clock;
  Verdict v;
  auto c = parse_config_string("n = 200\nell = 5\nr = 5,10,20,50\nd = 2\nsupport = 10;1000\nseed = 9\n");
  const ClassifierConfig cfg{c.support, 5};
  const std::size_t worlds = 200;
  std::vector<SampleSummary> rate;
  for (const auto& p : sweep_points(c)) {
    std::vector<double> per_world(worlds);
    detail::parallel_for(
        worlds, hardware_threads(),
        [&](std::size_t t) {
          const auto w = make_trial_world(c, p, t);
          std::size_t wrong = 0;
          for (WorkerId u = 0; u < w.graph.n_workers(); ++u)
            wrong += c.support[classify_worker(w.graph, w.answers, u, cfg)] != w.truth.worker_variances[u];
          per_world[t] = static_cast<double>(wrong) / static_cast<double>(w.graph.n_workers());
        },
        [](std::size_t t) { return "world " + std::to_string(t); });
    rate.push_back(summarize(per_world));
  }
  std::ostringstream s;
  for (std::size_t q = 0; q < rate.size(); ++q) {
    s << "r=" << c.r_values[q] << ' ' << fmt(rate[q].mean, 3) << ", ";
    if (q > 0)
      v.require(rate[q].mean <= rate[q - 1].mean + 2.0 * combined_se(rate[q].stderr_mean, rate[q - 1].stderr_mean),
                "rate rises at r=" + std::to_string(c.r_values[q]));
  }
  const double bound = lemma_misclassification_bound(c.support, 50);
  v.require(rate.back().mean <= bound + 3.0 * rate.back().stderr_mean,
            "r=50 rate " + fmt(rate.back().mean) + " above bound " + fmt(bound));
  const double secs = clock.seconds();
  v.require(secs < 120.0, "runtime " + fmt(secs) + " s");
  return v.done(s.str() + "bound at r=50 " + fmt(bound, 3) + ", " + fmt(secs, 3) + " s");
}

Outcome property_suite() {
  const Stopwatch clock;
  Verdict v;
  const auto sup = VarianceSupport::small();
  const std::size_t n = 60, d = 2;
  const auto g = generate_lr_regular(n, 4, 4, 31);
  const auto prior = TaskPrior::flat(n, d);
  const auto truth = sample_world(g, sup, prior, d, UniformBoxPositions{0, 100}, 32);
  const auto a = sample_answers(g, truth, 33);
  const auto base = run_bi(g, a, sup, prior);

  // Normalization.
  double worst_norm = 0.0;
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    double z1 = 0.0, z2 = 0.0;
    for (double x : base.state.t2w(e)) z1 += std::exp(x);
    for (double x : base.state.w2t(e)) z2 += std::exp(x);
    worst_norm = std::max({worst_norm, std::abs(z1 - 1.0), std::abs(z2 - 1.0)});
  }
  for (const auto& b : base.beliefs.beliefs) {
    if (!b) continue;
    double z = 0.0;
    for (double x : b->log_probs) z += std::exp(x);
    worst_norm = std::max(worst_norm, std::abs(z - 1.0));
  }
  v.require(worst_norm <= 1e-12, "normalization " + fmt(worst_norm));

  // Translation and scale.
  AnswerSet shifted = a, scaled = a;
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    shifted.answer(e)[0] += 1234.5;
    shifted.answer(e)[1] -= 77.0;
  }
  for (double& x : scaled.raw()) x *= 4.0;
  const auto t = run_bi(g, shifted, sup, prior);
  const auto s = run_bi(g, scaled, VarianceSupport({160.0, 1600.0, 16000.0}), prior);
  double worst_eq = 0.0;
  for (TaskId i = 0; i < n; ++i) {
    worst_eq = std::max(worst_eq, std::abs(t.estimate(i, d)[0] - base.estimate(i, d)[0] - 1234.5));
    worst_eq = std::max(worst_eq, std::abs(t.estimate(i, d)[1] - base.estimate(i, d)[1] + 77.0));
    for (std::size_t j = 0; j < d; ++j)
      worst_eq = std::max(worst_eq, std::abs(s.estimate(i, d)[j] - 4.0 * base.estimate(i, d)[j]) /
                                        std::max(1.0, std::abs(s.estimate(i, d)[j])));
  }

  // Permutation of task and worker labels.
  std::mt19937_64 rng(34);
  std::vector<TaskId> tp(n);
  std::vector<WorkerId> wp(g.n_workers());
  std::iota(tp.begin(), tp.end(), 0);
  std::iota(wp.begin(), wp.end(), 0);
  std::shuffle(tp.begin(), tp.end(), rng);
  std::shuffle(wp.begin(), wp.end(), rng);
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) edges.push_back({tp[e.task], wp[e.worker]});
  const AssignmentGraph g2(n, g.n_workers(), edges);
  AnswerSet a2(g2.n_edges(), d);
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    const EdgeId f = g2.find_edge(tp[g.edge_task(e)], wp[g.edge_worker(e)]);
    std::copy(a.answer(e).begin(), a.answer(e).end(), a2.answer(f).begin());
  }
  const auto p = run_bi(g2, a2, sup, prior);
  for (TaskId i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      worst_eq = std::max(worst_eq, std::abs(p.estimate(tp[i], d)[j] - base.estimate(i, d)[j]));
  v.require(worst_eq <= 1e-8, "equivariance " + fmt(worst_eq));

  // Harmonic bound on the posterior variance.
  std::uniform_real_distribution<double> lv(std::log(0.5), std::log(2000.0));
  bool harmonic = true;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t k = 1 + rep % 6;
    std::vector<double> vars(k), answers(k, 0.0);
    for (double& x : vars) x = std::exp(lv(rng));
    const auto m = posterior_moments(answers, vars, std::vector<double>{0.0}, PriorVariance::flat());
    const double sum = std::accumulate(vars.begin(), vars.end(), 0.0);
    harmonic = harmonic && m.variance <= *std::min_element(vars.begin(), vars.end()) * (1 + 1e-15) &&
               m.variance <= sum / double(k * k) * (1 + 1e-15);
  }
  v.require(harmonic, "harmonic bound violated");

  // Determinism under a fixed seed, across thread counts.
  auto c = parse_config_string("n = 40\nell = 3\nr = 3,4\ntrials = 3\nseed = 11\nn_rounding = up\n");
  const auto one = run_experiment(c);
  c.threads = 3;
  const auto three = run_experiment(c);
  bool same = one.size() == three.size();
  for (std::size_t q = 0; same && q < one.size(); ++q) same = one[q].trial_mse == three[q].trial_mse;
  v.require(same, "runs differ under a fixed seed");

  // CSV round trip.
  std::stringstream out;
  write_answers_csv(g, a, out);
  const auto back = read_answers_csv(out);
  std::stringstream ts, ws;
  write_task_truth_csv(truth, ts);
  write_worker_truth_csv(truth, ws);
  const bool round_trip = back.graph.edges() == g.edges() && std::ranges::equal(back.answers.raw(), a.raw()) &&
                          read_truth_csv(ts).positions == truth.positions &&
                          read_truth_csv(ws).worker_variances == truth.worker_variances;
  v.require(round_trip, "CSV round trip is not bit-identical");

  const double secs = clock.seconds();
  v.require(secs < 30.0, "runtime " + fmt(secs) + " s");
  return v.done("normalization " + fmt(worst_norm, 3) + ", equivariance " + fmt(worst_eq, 3) + ", " +
                fmt(secs, 3) + " s");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CROWDREG_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// algorithm -> per-task values from an estimates CSV.
std::map<std::string, std::vector<double>> read_estimates(const fs::path& p, bool& well_formed) {
  std::map<std::string, std::vector<double>> out;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  well_formed = line == "algorithm,task_id,dim0";
  while (std::getline(in, line)) {
    const auto f = csv::split(line);
    if (f.size() != 3) {
      well_formed = false;
      continue;
    }
    auto& v = out[std::string(f[0])];
    well_formed = well_formed && csv::parse_uint(f[1], "task_id") == v.size();
    v.push_back(csv::parse_double(f[2], "dim0"));
  }
  return out;
}

Outcome crowd_csv_pipeline() {
  const Stopwatch clock;
  Verdict v;
  const fs::path dir = fs::temp_directory_path() / "crowdreg_acceptance_crowd";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "world.cfg") << "n = 1002\nd = 1\nsupport = 7;60\nseed = 17\n";
  }
  v.require(run_cli("generate --config " + (dir / "world.cfg").string() + " --workers 165 --per-task 10 --out-dir " +
                    dir.string()) == 0,
            "generate failed");
  const auto loaded = load_answers_csv((dir / "answers.csv").string());
  v.require(loaded.graph.n_tasks() == 1002 && loaded.graph.n_workers() == 165 && loaded.graph.n_edges() == 10020,
            "generated shape is wrong");

  v.require(run_cli("estimate-prior --answers " + (dir / "answers.csv").string() + " --out " +
                    (dir / "prior.csv").string()) == 0,
            "estimate-prior failed");
  std::ifstream prior_in(dir / "prior.csv");
  std::string header, row;
  std::getline(prior_in, header);
  std::getline(prior_in, row);
  const auto pf = csv::split(row);
  v.require(header == "low,high,degenerate" && pf.size() == 3, "prior CSV format");
  double low = 0.0, high = 0.0;
  if (pf.size() == 3) {
    low = csv::parse_double(pf[0], "low");
    high = csv::parse_double(pf[1], "high");
    v.require(low > 0.0 && low < high && pf[2] == "0", "prior estimate " + std::string(row));
  }

  const auto est_path = dir / "estimates.csv";
  v.require(run_cli("infer --answers " + (dir / "answers.csv").string() +
                    " --support 7,60 --algo all --truth-workers " + (dir / "truth_workers.csv").string() +
                    " --out " + est_path.string()) == 0,
            "infer failed");
  const auto est_fixed = dir / "estimates_prior.csv";
  v.require(run_cli("infer --answers " + (dir / "answers.csv").string() + " --estimate-support 0.1 --algo bi,nbi --out " +
                    est_fixed.string()) == 0,
            "infer with an estimated support failed");

  bool ok = false;
  const auto est = read_estimates(est_path, ok);
  v.require(ok && est.size() == 5, "estimates CSV format");
  bool ok2 = false;
  const auto est2 = read_estimates(est_fixed, ok2);
  v.require(ok2 && est2.size() == 2, "estimated-support CSV format");

  const auto truth = load_truth_csv((dir / "truth_tasks.csv").string());
  auto mse_of = [&](const std::vector<double>& e) { return e.size() == 1002 ? mse(e, truth) : INFINITY; };
  std::ostringstream s;
  std::map<std::string, double> m;
  for (const auto& [name, values] : est) {
    m[name] = mse_of(values);
    s << name << ' ' << fmt(m[name]) << ", ";
  }
  const char* order[] = {"strong_oracle", "bi", "nbi", "average"};
  // One world, so no standard errors. BI often matches the oracle to several
  // digits here; the 0.1% slack only absorbs that tie.
  for (std::size_t q = 0; q + 1 < 4; ++q)
    v.require(m[order[q]] <= m[order[q + 1]] * (1.0 + 1e-3),
              std::string(order[q]) + " worse than " + order[q + 1]);
  if (est2.size() == 2) {
    const double bi2 = mse_of(est2.at("bi")), nbi2 = mse_of(est2.at("nbi"));
    s << "estimated support {" << fmt(low) << ", " << fmt(high) << "}: bi " << fmt(bi2) << " nbi " << fmt(nbi2) << ", ";
    v.require(bi2 <= nbi2, "BI worse than NBI under the estimated support");
  }
  fs::remove_all(dir);
  const double secs = clock.seconds();
  return v.done(s.str() + fmt(secs, 3) + " s");
}

struct Criterion {
  const char* id;
  const char* label;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"1", "tree exactness", tree_exactness},        {"2", "factor density", factor_density},
    {"3", "closed-form MSE", closed_form_mse},      {"4", "figure-1 ordering", figure1_ordering},
    {"5", "BI error bound", theorem1_bound},        {"6", "classifier decay", classifier_decay},
    {"7", "property suite", property_suite},        {"8", "crowd CSV pipeline", crowd_csv_pipeline},
};

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  bool all_pass = true, matched = false;
  for (const auto& c : kCriteria) {
    if (which != "all" && which != c.id) continue;
    matched = true;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << c.id << " (" << c.label << "): " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << std::endl;
    all_pass = all_pass && o.pass;
  }
  if (!matched) {
    std::cerr << "unknown criterion '" << which << "' (expected 1..8 or all)\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}
