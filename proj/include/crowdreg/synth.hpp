#pragma once

// Generative model: worker variances drawn uniformly from a finite support,
// task positions from a Gaussian prior or a uniform box, and answers with
// spherical Gaussian noise.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "crowdreg/csv.hpp"
#include "crowdreg/error.hpp"
#include "crowdreg/graph.hpp"
#include "crowdreg/rng.hpp"

namespace crowdreg {

// Finite set of candidate worker variances, strictly increasing.
class VarianceSupport {
 public:
  VarianceSupport() = default;
  explicit VarianceSupport(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ConfigError("variance support must be non-empty");
    for (std::size_t s = 0; s < values_.size(); ++s) {
      if (!(values_[s] > 0.0) || !std::isfinite(values_[s]))
        throw ConfigError("variance support values must be positive and finite");
      if (s > 0 && !(values_[s] > values_[s - 1]))
        throw ConfigError("variance support values must be strictly increasing");
    }
  }

  static VarianceSupport small() { return VarianceSupport({10.0, 100.0, 1000.0}); }
  static VarianceSupport large() { return VarianceSupport({10.0, 100.0, 5000.0}); }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t s) const { return values_[s]; }
  std::span<const double> values() const noexcept { return values_; }
  double sigma2_min() const { return values_.front(); }
  double sigma2_max() const { return values_.back(); }
  // Smallest gap between support values; +inf for a singleton.
  double min_gap() const {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t s = 1; s < values_.size(); ++s)
      gap = std::min(gap, values_[s] - values_[s - 1]);
    return gap;
  }
  double mean() const {
    double acc = 0.0;
    for (double v : values_) acc += v;
    return acc / static_cast<double>(values_.size());
  }
  // Index of `v` in the support, or size() if absent.
  std::size_t index_of(double v) const {
    const auto it = std::find(values_.begin(), values_.end(), v);
    return static_cast<std::size_t>(it - values_.begin());
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t s = 0; s < values_.size(); ++s) {
      if (s) out += ';';
      out += csv::format_double(values_[s]);
    }
    return out;
  }

  friend bool operator==(const VarianceSupport&, const VarianceSupport&) = default;

 private:
  std::vector<double> values_;
};

// Prior variance tau^2 on task positions, or FLAT for the tau -> infinity limit.
class PriorVariance {
 public:
  static PriorVariance flat() { return PriorVariance(); }
  static PriorVariance finite(double tau2) {
    if (!(tau2 > 0.0) || !std::isfinite(tau2))
      throw ConfigError("prior variance tau2 must be positive and finite");
    PriorVariance p;
    p.tau2_ = tau2;
    return p;
  }

  bool is_flat() const noexcept { return !tau2_.has_value(); }
  double tau2() const { return *tau2_; }
  // 1/tau^2, zero under FLAT.
  double precision() const noexcept { return tau2_ ? 1.0 / *tau2_ : 0.0; }

  friend bool operator==(const PriorVariance&, const PriorVariance&) = default;

 private:
  PriorVariance() = default;
  std::optional<double> tau2_;
};

// Per-task prior means nu_i (row-major n x d) and the shared prior variance.
struct TaskPrior {
  std::size_t dim = 1;
  std::vector<double> means;
  PriorVariance tau2 = PriorVariance::flat();

  static TaskPrior flat(std::size_t n_tasks, std::size_t dim) {
    return {dim, std::vector<double>(n_tasks * dim, 0.0), PriorVariance::flat()};
  }
  static TaskPrior gaussian(std::vector<double> means, std::size_t dim, double tau2) {
    return {dim, std::move(means), PriorVariance::finite(tau2)};
  }

  std::size_t n_tasks() const { return dim ? means.size() / dim : 0; }
  std::span<const double> mean(TaskId i) const { return {means.data() + i * dim, dim}; }
};

struct GroundTruth {
  std::size_t dim = 1;
  std::vector<double> positions;          // row-major n x d
  std::vector<double> worker_variances;   // one per worker
  std::vector<std::size_t> worker_class;  // support index per worker

  std::size_t n_tasks() const { return dim ? positions.size() / dim : 0; }
  std::span<const double> position(TaskId i) const {
    return {positions.data() + i * dim, dim};
  }
};

// One d-dimensional answer per edge, stored in the graph's edge order so the
// answers of task i are contiguous.
class AnswerSet {
 public:
  AnswerSet() = default;
  AnswerSet(std::size_t n_edges, std::size_t dim) : dim_(dim), values_(n_edges * dim, 0.0) {
    if (dim == 0) throw ArgumentError("answer dimension must be >= 1");
  }
  AnswerSet(std::size_t dim, std::vector<double> values)
      : dim_(dim), values_(std::move(values)) {
    if (dim == 0 || values_.size() % dim != 0)
      throw ArgumentError("answer storage size is not a multiple of the dimension");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_edges() const noexcept { return dim_ ? values_.size() / dim_ : 0; }

  std::span<const double> answer(EdgeId e) const { return {values_.data() + e * dim_, dim_}; }
  std::span<double> answer(EdgeId e) { return {values_.data() + e * dim_, dim_}; }

  // Answers of task i as a row-major |M_i| x d block.
  std::span<const double> task_block(const AssignmentGraph& g, TaskId i) const {
    return {values_.data() + g.task_begin(i) * dim_, g.task_degree(i) * dim_};
  }
  std::span<const double> at(const AssignmentGraph& g, TaskId i, WorkerId u) const {
    const EdgeId e = g.find_edge(i, u);
    if (e == kNoNode)
      throw ArgumentError("no answer for (" + std::to_string(i) + "," + std::to_string(u) + ")");
    return answer(e);
  }

  std::span<const double> raw() const noexcept { return values_; }
  std::span<double> raw() noexcept { return values_; }

  friend bool operator==(const AnswerSet&, const AnswerSet&) = default;

 private:
  std::size_t dim_ = 1;
  std::vector<double> values_;
};

struct PriorGaussianPositions {};
struct UniformBoxPositions {
  double lo = 0.0;
  double hi = 100.0;
};
using PositionMode = std::variant<PriorGaussianPositions, UniformBoxPositions>;

inline GroundTruth sample_world(const AssignmentGraph& g, const VarianceSupport& support,
                                const TaskPrior& prior, std::size_t dim,
                                const PositionMode& mode, std::uint64_t seed) {
  if (dim == 0) throw ArgumentError("sample_world: dim must be >= 1");
  const bool gaussian = std::holds_alternative<PriorGaussianPositions>(mode);
  if (gaussian && prior.tau2.is_flat())
    throw ConfigError("sample_world: cannot sample positions from a FLAT prior");
  if (gaussian && (prior.dim != dim || prior.n_tasks() != g.n_tasks()))
    throw ArgumentError("sample_world: prior size does not match the graph");
  Rng rng(seed);
  GroundTruth t;
  t.dim = dim;
  t.worker_variances.resize(g.n_workers());
  t.worker_class.resize(g.n_workers());
  std::uniform_int_distribution<std::size_t> cls(0, support.size() - 1);
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    t.worker_class[u] = cls(rng);
    t.worker_variances[u] = support[t.worker_class[u]];
  }
  t.positions.resize(g.n_tasks() * dim);
  if (gaussian) {
    std::normal_distribution<double> z(0.0, 1.0);
    const double tau = std::sqrt(prior.tau2.tau2());
    for (std::size_t k = 0; k < t.positions.size(); ++k)
      t.positions[k] = prior.means[k] + tau * z(rng);
  } else {
    const auto box = std::get<UniformBoxPositions>(mode);
    if (!(box.hi > box.lo)) throw ConfigError("sample_world: uniform box needs lo < hi");
    std::uniform_real_distribution<double> uni(box.lo, box.hi);
    for (double& x : t.positions) x = uni(rng);
  }
  return t;
}

inline AnswerSet sample_answers(const AssignmentGraph& g, const GroundTruth& truth,
                                std::uint64_t seed) {
  if (truth.n_tasks() != g.n_tasks() || truth.worker_variances.size() != g.n_workers())
    throw ArgumentError("sample_answers: ground truth does not match the graph");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  AnswerSet a(g.n_edges(), truth.dim);
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    const auto mu = truth.position(g.edge_task(e));
    const double sd = std::sqrt(truth.worker_variances[g.edge_worker(e)]);
    auto out = a.answer(e);
    for (std::size_t k = 0; k < truth.dim; ++k) out[k] = mu[k] + sd * z(rng);
  }
  return a;
}

}  // namespace crowdreg
