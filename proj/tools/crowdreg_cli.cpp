// Command-line front end: simulate, infer, classify, bounds, estimate-prior,
// generate.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "crowdreg/crowdreg.hpp"

namespace {

using namespace crowdreg;

// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) file_ = csv::open_out(path);
  }
  std::ostream& stream() { return file_ ? static_cast<std::ostream&>(*file_) : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) throw FormatError("write failed");
  }

 private:
  std::optional<std::ofstream> file_;
};

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string algo;
  std::string out;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> threads;
};

ExperimentConfig base_config(const CommonArgs& a) {
  ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.algo.empty()) c.algorithms = parse_algorithm_list(a.algo);
  if (a.trials) c.trials = *a.trials;
  if (a.threads) c.threads = *a.threads;
  return c;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool with_runs) {
  cmd->add_option("--config", a.config, "Config file (key = value lines)");
  cmd->add_option("--seed", a.seed, "Master seed");
  cmd->add_option("--algo", a.algo, "Comma-separated algorithms: average,nbi,bi,strong_oracle,weak_oracle,all");
  cmd->add_option("--out", a.out, "Output CSV path (default stdout)");
  if (with_runs) {
    cmd->add_option("--trials", a.trials, "Trials per sweep point");
    cmd->add_option("--threads", a.threads, "Worker threads");
  }
}

std::vector<double> worker_truth(const std::string& path, const AssignmentGraph& g) {
  if (path.empty()) throw ConfigError("oracle estimators need --truth-workers");
  auto t = load_truth_csv(path);
  if (t.worker_variances.empty()) throw FormatError(path + ": expected 'worker_id,variance' rows");
  if (t.worker_variances.size() != g.n_workers())
    throw FormatError(path + ": " + std::to_string(t.worker_variances.size()) +
                      " workers, answers have " + std::to_string(g.n_workers()));
  return t.worker_variances;
}

std::size_t default_ell(const AssignmentGraph& g) {
  const double mean = static_cast<double>(g.n_edges()) / static_cast<double>(g.n_tasks());
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(mean)));
}

int cmd_simulate(const CommonArgs& a) {
  const auto c = base_config(a);
  const auto rows = run_experiment(c, {[](std::size_t done, std::size_t total) {
    std::cerr << "\rtrials " << done << "/" << total << std::flush;
    if (done == total) std::cerr << '\n';
  }});
  Output out(a.out);
  write_metrics_csv(rows, out.stream());
  out.finish();
  return 0;
}

struct InferArgs {
  std::string answers;
  std::string support;
  std::optional<double> estimate_support;
  std::string truth_workers;
  std::optional<double> tau2;
  double prior_mean = 0.0;
  std::string trace;
};

int cmd_infer(const CommonArgs& a, const InferArgs& ia) {
  ExperimentConfig c = base_config(a);
  if (a.algo.empty()) c.algorithms = {Algorithm::bi};
  auto data = load_answers_csv(ia.answers);
  const auto& g = data.graph;
  const std::size_t d = data.answers.dim();
  if (!ia.support.empty()) c.support = detail::config_support(ia.support);
  if (ia.estimate_support) {
    const auto est = estimate_support(g, data.answers, *ia.estimate_support, nbi_options(c));
    if (est.degenerate) std::cerr << "warning: estimated support is degenerate\n";
    c.support = est.support;
    std::cerr << "support " << c.support.to_string() << '\n';
  }
  if (ia.tau2) c.tau2 = PriorVariance::finite(*ia.tau2);
  const TaskPrior prior = c.tau2.is_flat()
                              ? TaskPrior::flat(g.n_tasks(), d)
                              : TaskPrior::gaussian(std::vector<double>(g.n_tasks() * d, ia.prior_mean),
                                                    d, c.tau2.tau2());
  std::vector<NamedEstimates> blocks;
  for (Algorithm alg : c.algorithms) {
    NamedEstimates b{std::string(to_string(alg)), {}};
    switch (alg) {
      case Algorithm::average: b.values = average_estimate(g, data.answers); break;
      case Algorithm::nbi: b.values = run_nbi(g, data.answers, nbi_options(c)).task_estimates; break;
      case Algorithm::bi: {
        auto opts = bi_options(c, g.n_tasks());
        std::optional<std::ofstream> trace;
        if (!ia.trace.empty()) {
          trace = csv::open_out(ia.trace);
          opts.trace = &*trace;
        }
        const auto rep = run_bi(g, data.answers, c.support, prior, opts);
        if (!rep.converged)
          std::cerr << "warning: BI stopped after " << rep.iterations_run
                    << " iterations, max message change " << rep.max_message_delta << '\n';
        b.values = rep.estimates;
        break;
      }
      case Algorithm::strong_oracle:
        b.values = strong_oracle_estimate(g, data.answers, worker_truth(ia.truth_workers, g), prior);
        break;
      case Algorithm::weak_oracle:
        b.values = weak_oracle_estimates(g, data.answers, worker_truth(ia.truth_workers, g), c.support,
                                         prior, c.weak_depth, c.kernel);
        break;
    }
    blocks.push_back(std::move(b));
  }
  Output out(a.out);
  write_estimates_csv(blocks, d, out.stream());
  out.finish();
  return 0;
}

struct ClassifyArgs {
  std::string answers;
  std::string support;
  std::optional<std::size_t> ell;
  std::string truth_workers;
};

int cmd_classify(const CommonArgs& a, const ClassifyArgs& ca) {
  ExperimentConfig c = base_config(a);
  if (!ca.support.empty()) c.support = detail::config_support(ca.support);
  auto data = load_answers_csv(ca.answers);
  const auto& g = data.graph;
  ClassifierConfig cfg{c.support, ca.ell ? *ca.ell : default_ell(g)};
  std::vector<double> truth;
  if (!ca.truth_workers.empty()) truth = worker_truth(ca.truth_workers, g);
  std::vector<ClassificationRow> rows;
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    if (g.worker_degree(u) == 0) continue;
    ClassificationRow row;
    row.worker = u;
    row.sigma2_hat = worker_moment_statistic(g, data.answers, u);
    row.inferred_class = classify_statistic(row.sigma2_hat, cfg);
    if (!truth.empty()) {
      const std::size_t k = c.support.index_of(truth[u]);
      if (k < c.support.size()) row.true_class = k;
    }
    rows.push_back(row);
  }
  Output out(a.out);
  write_classification_csv(rows, out.stream());
  out.finish();
  return 0;
}

int cmd_bounds(const CommonArgs& a, const std::string& k_text) {
  const auto c = base_config(a);
  double k = std::numeric_limits<double>::infinity();
  if (k_text != "inf") k = static_cast<double>(detail::config_uint(k_text, "--k"));
  Output out(a.out);
  write_bounds_csv(compute_bounds(c, k), c.support.to_string(), out.stream());
  out.finish();
  return 0;
}

int cmd_estimate_prior(const CommonArgs& a, const std::string& answers, double quantile) {
  const auto c = base_config(a);
  auto data = load_answers_csv(answers);
  const auto est = estimate_support(data.graph, data.answers, quantile, nbi_options(c));
  if (est.degenerate)
    std::cerr << "warning: all workers look alike; the two support values coincide\n";
  Output out(a.out);
  out.stream() << "low,high,degenerate\n"
               << csv::format_double(est.low) << ',' << csv::format_double(est.high) << ','
               << (est.degenerate ? 1 : 0) << '\n';
  out.finish();
  return 0;
}

struct GenerateArgs {
  std::string out_dir;
  std::optional<std::size_t> workers;
  std::size_t per_task = 10;
};

// Writes answers.csv, truth_tasks.csv and truth_workers.csv for one world.
// The default is an (ell, r)-regular graph from the config's first sweep
// point; --workers switches to a non-regular random assignment.
int cmd_generate(const CommonArgs& a, const GenerateArgs& ga) {
  const auto c = base_config(a);
  if (ga.out_dir.empty()) throw ConfigError("generate needs --out-dir");
  std::filesystem::create_directories(ga.out_dir);
  const SweepPoint p{c.ell_values.front(), c.r_values.front(),
                     c.n_for(c.ell_values.front(), c.r_values.front())};
  AssignmentGraph g;
  if (ga.workers) {
    g = generate_random_assignment(c.n_tasks, *ga.workers, ga.per_task,
                                   derive_seed(c.seed, Stream::graph));
  } else {
    c.validate();
    g = generate_lr_regular(p.n, p.ell, p.r, derive_seed(c.seed, Stream::graph));
  }
  const TaskPrior prior = c.task_prior(g.n_tasks());
  const auto truth = sample_world(g, c.support, prior, c.dim, c.positions, derive_seed(c.seed, Stream::world));
  const auto answers = sample_answers(g, truth, derive_seed(c.seed, Stream::answers));
  const std::filesystem::path dir(ga.out_dir);
  write_answers_csv(g, answers, (dir / "answers.csv").string());
  write_truth_csv(truth, (dir / "truth_tasks.csv").string(), (dir / "truth_workers.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowdsourced regression: graph generation, BI message passing and baselines"};
  app.require_subcommand(1);

  CommonArgs common;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte-Carlo experiment and write metrics CSV");
  add_common(simulate, common, true);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Estimate task values from an answers CSV");
  add_common(infer, common, false);
  infer->add_option("--answers", ia.answers, "Answers CSV")->required();
  infer->add_option("--support", ia.support, "Variance support, e.g. 10,100,1000");
  infer->add_option("--estimate-support", ia.estimate_support,
                    "Estimate a two-point support from NBI variances at this quantile");
  infer->add_option("--truth-workers", ia.truth_workers, "worker_id,variance CSV for the oracles");
  infer->add_option("--tau2", ia.tau2, "Finite prior variance (default FLAT)");
  infer->add_option("--prior-mean", ia.prior_mean, "Prior mean for every coordinate");
  infer->add_option("--trace", ia.trace, "Per-iteration BI message dump CSV");

  ClassifyArgs ca;
  auto* classify = app.add_subcommand("classify", "Classify workers by their answer spread");
  add_common(classify, common, false);
  classify->add_option("--answers", ca.answers, "Answers CSV")->required();
  classify->add_option("--support", ca.support, "Variance support");
  classify->add_option("--ell", ca.ell, "Answers per task (default: rounded mean)");
  classify->add_option("--truth-workers", ca.truth_workers, "worker_id,variance CSV");

  std::string k_text = "inf";
  auto* bounds = app.add_subcommand("bounds", "Evaluate the BI error bound terms per sweep point");
  add_common(bounds, common, false);
  bounds->add_option("--k", k_text, "BI iteration count, or inf");

  std::string prior_answers;
  double quantile = 0.1;
  auto* prior = app.add_subcommand("estimate-prior", "Estimate a two-point variance support");
  add_common(prior, common, false);
  prior->add_option("--answers", prior_answers, "Answers CSV")->required();
  prior->add_option("--quantile", quantile, "Fraction of workers in each extreme block");

  GenerateArgs ga;
  auto* generate = app.add_subcommand("generate", "Write a synthetic answers CSV and its ground truth");
  add_common(generate, common, false);
  generate->add_option("--out-dir", ga.out_dir, "Output directory")->required();
  generate->add_option("--workers", ga.workers, "Use a non-regular assignment with this many workers");
  generate->add_option("--per-task", ga.per_task, "Answers per task for --workers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*infer) return cmd_infer(common, ia);
    if (*classify) return cmd_classify(common, ca);
    if (*bounds) return cmd_bounds(common, k_text);
    if (*prior) return cmd_estimate_prior(common, prior_answers, quantile);
    if (*generate) return cmd_generate(common, ga);
  } catch (const crowdreg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
