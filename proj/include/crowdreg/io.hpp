#pragma once

// CSV readers and writers for answers, ground truth, estimates, metrics and
// classification reports.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crowdreg/csv.hpp"
#include "crowdreg/error.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

struct LoadedAnswers {
  AssignmentGraph graph;
  AnswerSet answers;
};

namespace detail {

inline void expect_dim_header(const std::vector<std::string>& header, std::size_t fixed,
                              const std::string& name, const std::string& expected) {
  if (header.size() <= fixed) throw FormatError(name + ": expected header '" + expected + "'");
  for (std::size_t k = fixed; k < header.size(); ++k)
    if (header[k] != "dim" + std::to_string(k - fixed))
      throw FormatError(name + ": column " + std::to_string(k) + " should be 'dim" +
                        std::to_string(k - fixed) + "', got '" + header[k] + "'");
}

inline void write_dim_header(std::ostream& out, std::size_t dim) {
  for (std::size_t k = 0; k < dim; ++k) out << ",dim" << k;
  out << '\n';
}

inline std::string row_context(const std::string& name, std::size_t line_no) {
  return name + ":" + std::to_string(line_no);
}

}  // namespace detail

// Header `task_id,worker_id,dim0,...`. Task and worker counts are one past the
// largest id seen.
inline LoadedAnswers read_answers_csv(std::istream& in, const std::string& name = "answers") {
  const auto header = csv::read_header(in, name);
  const std::string expected = "task_id,worker_id,dim0,...";
  if (header.size() < 2 || header[0] != "task_id" || header[1] != "worker_id")
    throw FormatError(name + ": expected header '" + expected + "'");
  detail::expect_dim_header(header, 2, name, expected);
  const std::size_t dim = header.size() - 2;

  std::map<Edge, std::vector<double>> rows;
  std::size_t n = 0, m = 0, line_no = 1;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const auto where = detail::row_context(name, line_no);
    if (f.size() != dim + 2)
      throw FormatError(where + ": expected " + std::to_string(dim + 2) + " fields, got " +
                        std::to_string(f.size()));
    const Edge e{static_cast<TaskId>(csv::parse_uint(f[0], where + " task_id")),
                 static_cast<WorkerId>(csv::parse_uint(f[1], where + " worker_id"))};
    std::vector<double> v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      v[k] = csv::parse_double(f[k + 2], where + " dim" + std::to_string(k));
      if (!std::isfinite(v[k])) throw FormatError(where + ": non-finite answer");
    }
    if (!rows.emplace(e, std::move(v)).second)
      throw FormatError(where + ": duplicate (task, worker) row (" + std::to_string(e.task) +
                        "," + std::to_string(e.worker) + ")");
    n = std::max<std::size_t>(n, std::size_t{e.task} + 1);
    m = std::max<std::size_t>(m, std::size_t{e.worker} + 1);
  }
  if (rows.empty()) throw FormatError(name + ": no answer rows");

  std::vector<Edge> edges;
  edges.reserve(rows.size());
  for (const auto& [e, v] : rows) edges.push_back(e);
  LoadedAnswers out{AssignmentGraph(n, m, std::move(edges)), AnswerSet(rows.size(), dim)};
  // std::map iterates in (task, worker) order, which is the graph's edge order.
  EdgeId e = 0;
  for (const auto& [edge, v] : rows) {
    std::copy(v.begin(), v.end(), out.answers.answer(e).begin());
    ++e;
  }
  return out;
}

inline LoadedAnswers load_answers_csv(const std::string& path) {
  auto in = csv::open_in(path);
  return read_answers_csv(in, path);
}

inline void write_answers_csv(const AssignmentGraph& g, const AnswerSet& a, std::ostream& out) {
  if (a.n_edges() != g.n_edges()) throw ArgumentError("write_answers_csv: size mismatch");
  out << "task_id,worker_id";
  detail::write_dim_header(out, a.dim());
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    out << g.edge_task(e) << ',' << g.edge_worker(e);
    for (double v : a.answer(e)) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

inline void write_answers_csv(const AssignmentGraph& g, const AnswerSet& a,
                              const std::string& path) {
  auto out = csv::open_out(path);
  write_answers_csv(g, a, out);
}

// Ground truth files come in two shapes: `task_id,dim0,...` for positions and
// `worker_id,variance` for worker variances. Either reader fills the matching
// half of a GroundTruth; `worker_class` is left empty.
inline GroundTruth read_truth_csv(std::istream& in, const std::string& name = "truth") {
  const auto header = csv::read_header(in, name);
  GroundTruth t;
  std::string line;
  std::size_t line_no = 1;
  if (!header.empty() && header[0] == "worker_id") {
    if (header.size() != 2 || header[1] != "variance")
      throw FormatError(name + ": expected header 'worker_id,variance'");
    std::map<WorkerId, double> vars;
    while (std::getline(in, line)) {
      ++line_no;
      if (csv::trim(line).empty()) continue;
      const auto f = csv::split(line);
      const auto where = detail::row_context(name, line_no);
      if (f.size() != 2) throw FormatError(where + ": expected 2 fields");
      const auto u = static_cast<WorkerId>(csv::parse_uint(f[0], where + " worker_id"));
      const double v = csv::parse_double(f[1], where + " variance");
      if (!(v > 0.0) || !std::isfinite(v)) throw FormatError(where + ": variance must be > 0");
      if (!vars.emplace(u, v).second) throw FormatError(where + ": duplicate worker row");
    }
    if (vars.empty()) throw FormatError(name + ": no worker rows");
    t.worker_variances.assign(vars.rbegin()->first + 1, 0.0);
    for (const auto& [u, v] : vars) t.worker_variances[u] = v;
    if (vars.size() != t.worker_variances.size())
      throw FormatError(name + ": worker ids are not contiguous from 0");
    return t;
  }
  if (header.empty() || header[0] != "task_id")
    throw FormatError(name + ": expected header 'task_id,dim0,...' or 'worker_id,variance'");
  detail::expect_dim_header(header, 1, name, "task_id,dim0,...");
  t.dim = header.size() - 1;
  std::map<TaskId, std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const auto where = detail::row_context(name, line_no);
    if (f.size() != t.dim + 1)
      throw FormatError(where + ": expected " + std::to_string(t.dim + 1) + " fields");
    const auto i = static_cast<TaskId>(csv::parse_uint(f[0], where + " task_id"));
    std::vector<double> v(t.dim);
    for (std::size_t k = 0; k < t.dim; ++k)
      v[k] = csv::parse_double(f[k + 1], where + " dim" + std::to_string(k));
    if (!rows.emplace(i, std::move(v)).second) throw FormatError(where + ": duplicate task row");
  }
  if (rows.empty()) throw FormatError(name + ": no task rows");
  if (rows.size() != std::size_t{rows.rbegin()->first} + 1)
    throw FormatError(name + ": task ids are not contiguous from 0");
  for (const auto& [i, v] : rows) t.positions.insert(t.positions.end(), v.begin(), v.end());
  return t;
}

inline GroundTruth load_truth_csv(const std::string& path) {
  auto in = csv::open_in(path);
  return read_truth_csv(in, path);
}

inline void write_task_truth_csv(const GroundTruth& t, std::ostream& out) {
  out << "task_id";
  detail::write_dim_header(out, t.dim);
  for (TaskId i = 0; i < t.n_tasks(); ++i) {
    out << i;
    for (double v : t.position(i)) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

inline void write_worker_truth_csv(const GroundTruth& t, std::ostream& out) {
  out << "worker_id,variance\n";
  for (WorkerId u = 0; u < t.worker_variances.size(); ++u)
    out << u << ',' << csv::format_double(t.worker_variances[u]) << '\n';
}

inline void write_truth_csv(const GroundTruth& t, const std::string& tasks_path,
                            const std::string& workers_path) {
  auto tasks = csv::open_out(tasks_path);
  write_task_truth_csv(t, tasks);
  auto workers = csv::open_out(workers_path);
  write_worker_truth_csv(t, workers);
}

// One block of estimates per algorithm: `algorithm,task_id,dim0,...`.
struct NamedEstimates {
  std::string algorithm;
  std::vector<double> values;  // row-major n x d
};

inline void write_estimates_csv(const std::vector<NamedEstimates>& blocks, std::size_t dim,
                                std::ostream& out) {
  out << "algorithm,task_id";
  detail::write_dim_header(out, dim);
  for (const auto& b : blocks) {
    if (b.values.size() % dim != 0) throw ArgumentError("write_estimates_csv: size mismatch");
    for (std::size_t i = 0; i < b.values.size() / dim; ++i) {
      out << b.algorithm << ',' << i;
      for (std::size_t k = 0; k < dim; ++k) out << ',' << csv::format_double(b.values[i * dim + k]);
      out << '\n';
    }
  }
}

struct ClassificationRow {
  WorkerId worker = 0;
  std::optional<std::size_t> true_class;  // empty when no truth is known
  std::size_t inferred_class = 0;
  double sigma2_hat = 0.0;
};

inline void write_classification_csv(const std::vector<ClassificationRow>& rows,
                                     std::ostream& out) {
  out << "worker_id,true_class,inferred_class,sigma2_hat\n";
  for (const auto& r : rows) {
    out << r.worker << ',';
    if (r.true_class) out << *r.true_class;
    out << ',' << r.inferred_class << ',' << csv::format_double(r.sigma2_hat) << '\n';
  }
}

}  // namespace crowdreg
