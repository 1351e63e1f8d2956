#pragma once

// Task-assignment graphs: the bipartite graph between tasks and workers,
// random (l, r)-regular generation, BFS trees and local-tree diagnostics.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowdreg/csv.hpp"
#include "crowdreg/error.hpp"
#include "crowdreg/rng.hpp"

namespace crowdreg {

using TaskId = std::uint32_t;
using WorkerId = std::uint32_t;
using EdgeId = std::uint32_t;

inline constexpr std::uint32_t kNoNode = static_cast<std::uint32_t>(-1);

struct Edge {
  TaskId task;
  WorkerId worker;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Immutable bipartite graph. Edges are stored sorted by (task, worker), so the
// edges of task i occupy the contiguous id range [task_begin(i), task_end(i))
// and every adjacency list is ascending.
class AssignmentGraph {
 public:
  AssignmentGraph() = default;

  // Throws ArgumentError on out-of-range ids or duplicate edges.
  AssignmentGraph(std::size_t n_tasks, std::size_t n_workers, std::vector<Edge> edges)
      : n_tasks_(n_tasks), n_workers_(n_workers) {
    std::sort(edges.begin(), edges.end());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e].task >= n_tasks || edges[e].worker >= n_workers)
        throw ArgumentError("edge (" + std::to_string(edges[e].task) + "," +
                            std::to_string(edges[e].worker) + ") out of range");
      if (e > 0 && edges[e] == edges[e - 1])
        throw ArgumentError("duplicate edge (" + std::to_string(edges[e].task) + "," +
                            std::to_string(edges[e].worker) + ")");
    }
    edge_task_.resize(edges.size());
    edge_worker_.resize(edges.size());
    task_offsets_.assign(n_tasks + 1, 0);
    worker_offsets_.assign(n_workers + 1, 0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      edge_task_[e] = edges[e].task;
      edge_worker_[e] = edges[e].worker;
      ++task_offsets_[edges[e].task + 1];
      ++worker_offsets_[edges[e].worker + 1];
    }
    std::partial_sum(task_offsets_.begin(), task_offsets_.end(), task_offsets_.begin());
    std::partial_sum(worker_offsets_.begin(), worker_offsets_.end(), worker_offsets_.begin());
    worker_tasks_.resize(edges.size());
    worker_edges_.resize(edges.size());
    std::vector<std::uint32_t> fill(worker_offsets_.begin(), worker_offsets_.end() - 1);
    // Edges are task-major, so each worker's list comes out ascending by task.
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const std::uint32_t slot = fill[edge_worker_[e]]++;
      worker_tasks_[slot] = edge_task_[e];
      worker_edges_[slot] = static_cast<EdgeId>(e);
    }
  }

  std::size_t n_tasks() const noexcept { return n_tasks_; }
  std::size_t n_workers() const noexcept { return n_workers_; }
  std::size_t n_edges() const noexcept { return edge_task_.size(); }

  Edge edge(EdgeId e) const { return {edge_task_[e], edge_worker_[e]}; }
  TaskId edge_task(EdgeId e) const { return edge_task_[e]; }
  WorkerId edge_worker(EdgeId e) const { return edge_worker_[e]; }

  // M_i, ascending.
  std::span<const WorkerId> workers_of_task(TaskId i) const {
    return {edge_worker_.data() + task_offsets_[i], task_offsets_[i + 1] - task_offsets_[i]};
  }
  // N_u, ascending.
  std::span<const TaskId> tasks_of_worker(WorkerId u) const {
    return {worker_tasks_.data() + worker_offsets_[u],
            worker_offsets_[u + 1] - worker_offsets_[u]};
  }
  // Edge ids of N_u, aligned with tasks_of_worker(u).
  std::span<const EdgeId> edges_of_worker(WorkerId u) const {
    return {worker_edges_.data() + worker_offsets_[u],
            worker_offsets_[u + 1] - worker_offsets_[u]};
  }
  EdgeId task_begin(TaskId i) const { return task_offsets_[i]; }
  EdgeId task_end(TaskId i) const { return task_offsets_[i + 1]; }

  std::size_t task_degree(TaskId i) const { return task_offsets_[i + 1] - task_offsets_[i]; }
  std::size_t worker_degree(WorkerId u) const {
    return worker_offsets_[u + 1] - worker_offsets_[u];
  }
  std::size_t max_task_degree() const {
    std::size_t d = 0;
    for (TaskId i = 0; i < n_tasks_; ++i) d = std::max(d, task_degree(i));
    return d;
  }

  // Id of edge (i, u), or kNoNode when absent.
  EdgeId find_edge(TaskId i, WorkerId u) const {
    if (i >= n_tasks_) return kNoNode;
    const auto ws = workers_of_task(i);
    const auto it = std::lower_bound(ws.begin(), ws.end(), u);
    if (it == ws.end() || *it != u) return kNoNode;
    return static_cast<EdgeId>(task_offsets_[i] + (it - ws.begin()));
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out(n_edges());
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = edge(static_cast<EdgeId>(e));
    return out;
  }

  friend bool operator==(const AssignmentGraph& a, const AssignmentGraph& b) {
    return a.n_tasks_ == b.n_tasks_ && a.n_workers_ == b.n_workers_ &&
           a.edge_task_ == b.edge_task_ && a.edge_worker_ == b.edge_worker_;
  }

 private:
  std::size_t n_tasks_ = 0;
  std::size_t n_workers_ = 0;
  std::vector<TaskId> edge_task_;
  std::vector<WorkerId> edge_worker_;
  std::vector<std::uint32_t> task_offsets_{0};
  std::vector<std::uint32_t> worker_offsets_{0};
  std::vector<TaskId> worker_tasks_;
  std::vector<EdgeId> worker_edges_;
};

struct RegularGraphOptions {
  // Whole-graph resampling attempts before giving up.
  std::size_t max_attempts = 1000;
  // Degree-preserving swap attempts per collision when repairing a pairing.
  std::size_t repair_swaps_per_edge = 200;
};

namespace detail {

// Removes multi-edges from a configuration-model pairing by swapping worker
// endpoints with random other edges. Returns false if it gives up.
inline bool repair_pairing(std::vector<Edge>& edges, Rng& rng, std::size_t swaps_per_edge) {
  std::map<Edge, std::uint32_t> count;
  std::vector<std::size_t> dup;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (++count[edges[e]] > 1) dup.push_back(e);
  if (dup.empty()) return true;
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  for (std::size_t e : dup) {
    bool fixed = count[edges[e]] == 1;
    for (std::size_t attempt = 0; attempt < swaps_per_edge && !fixed; ++attempt) {
      const std::size_t f = pick(rng);
      const Edge a = edges[e];
      const Edge b = edges[f];
      if (a.task == b.task || a.worker == b.worker) continue;
      const Edge a2{a.task, b.worker};
      const Edge b2{b.task, a.worker};
      if (count[a2] != 0 || count[b2] != 0) continue;
      --count[a];
      --count[b];
      ++count[a2];
      ++count[b2];
      edges[e] = a2;
      edges[f] = b2;
      fixed = true;
    }
    if (!fixed) return false;
  }
  return true;
}

}  // namespace detail

// Random (l, r)-regular bipartite graph via the configuration model. Task stubs
// are paired with a uniformly shuffled list of worker stubs; collisions are
// repaired with degree-preserving swaps and the whole pairing is redrawn if
// repair fails.
inline AssignmentGraph generate_lr_regular(std::size_t n_tasks, std::size_t ell, std::size_t r,
                                           std::uint64_t seed,
                                           const RegularGraphOptions& opts = {}) {
  if (n_tasks < 1 || ell < 1 || r < 1)
    throw ConfigError("generate_lr_regular: n_tasks, ell and r must be >= 1");
  if ((n_tasks * ell) % r != 0)
    throw ConfigError("generate_lr_regular: n_tasks*ell = " + std::to_string(n_tasks * ell) +
                      " is not divisible by r = " + std::to_string(r));
  const std::size_t n_workers = n_tasks * ell / r;
  if (ell > n_workers || r > n_tasks)
    throw GenerationError("generate_lr_regular: no simple graph with these degrees");
  Rng rng(seed);
  std::vector<WorkerId> stubs;
  stubs.reserve(n_tasks * ell);
  for (WorkerId u = 0; u < n_workers; ++u) stubs.insert(stubs.end(), r, u);
  std::vector<Edge> edges(stubs.size());
  for (std::size_t attempt = 0; attempt < opts.max_attempts; ++attempt) {
    std::shuffle(stubs.begin(), stubs.end(), rng);
    for (std::size_t k = 0; k < stubs.size(); ++k)
      edges[k] = {static_cast<TaskId>(k / ell), stubs[k]};
    if (detail::repair_pairing(edges, rng, opts.repair_swaps_per_edge))
      return AssignmentGraph(n_tasks, n_workers, edges);
  }
  throw GenerationError("generate_lr_regular: no simple graph after " +
                        std::to_string(opts.max_attempts) + " attempts");
}

// Non-regular assignment: every task draws `per_task` distinct workers with
// probability proportional to `activity` (uniform when empty). Redraws until
// every worker has at least one task.
inline AssignmentGraph generate_random_assignment(std::size_t n_tasks, std::size_t n_workers,
                                                  std::size_t per_task, std::uint64_t seed,
                                                  std::vector<double> activity = {},
                                                  std::size_t max_attempts = 100) {
  if (n_tasks < 1 || n_workers < 1 || per_task < 1)
    throw ConfigError("generate_random_assignment: counts must be >= 1");
  if (per_task > n_workers)
    throw ConfigError("generate_random_assignment: per_task exceeds the number of workers");
  if (activity.empty()) activity.assign(n_workers, 1.0);
  if (activity.size() != n_workers)
    throw ArgumentError("generate_random_assignment: need one activity weight per worker");
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    edges.clear();
    std::vector<bool> used(n_workers, false);
    for (TaskId i = 0; i < n_tasks; ++i) {
      std::vector<double> w = activity;
      for (std::size_t k = 0; k < per_task; ++k) {
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        const auto u = static_cast<WorkerId>(pick(rng));
        w[u] = 0.0;
        used[u] = true;
        edges.push_back({i, u});
      }
    }
    if (std::all_of(used.begin(), used.end(), [](bool b) { return b; }))
      return AssignmentGraph(n_tasks, n_workers, edges);
  }
  throw GenerationError("generate_random_assignment: some worker stayed idle after " +
                        std::to_string(max_attempts) + " attempts");
}

struct Node {
  enum class Kind : std::uint8_t { task, worker };
  Kind kind;
  std::uint32_t id;
  friend bool operator==(const Node&, const Node&) = default;
};

// Shortest-hop spanning tree of the component containing `root`, optionally
// truncated so that no node is deeper than `max_depth`. Nodes not reached
// have depth kNoNode and no parent.
struct BfsTree {
  TaskId root = 0;
  std::vector<WorkerId> task_parent;    // parent worker of each task
  std::vector<TaskId> worker_parent;    // parent task of each worker
  std::vector<std::uint32_t> task_depth;
  std::vector<std::uint32_t> worker_depth;
  std::vector<std::vector<WorkerId>> task_children;
  std::vector<std::vector<TaskId>> worker_children;
  std::vector<Node> order;               // visitation order, root first
  std::vector<WorkerId> leaf_workers;    // reached workers without children, ascending

  bool has_task(TaskId i) const { return task_depth[i] != kNoNode; }
  bool has_worker(WorkerId u) const { return worker_depth[u] != kNoNode; }
  std::uint32_t max_depth() const {
    std::uint32_t d = 0;
    for (auto x : task_depth) if (x != kNoNode) d = std::max(d, x);
    for (auto x : worker_depth) if (x != kNoNode) d = std::max(d, x);
    return d;
  }
};

inline BfsTree bfs_tree(const AssignmentGraph& g, TaskId root,
                        std::uint32_t max_depth = kNoNode) {
  if (root >= g.n_tasks())
    throw ArgumentError("bfs_tree: root " + std::to_string(root) + " is not a task");
  BfsTree t;
  t.root = root;
  t.task_parent.assign(g.n_tasks(), kNoNode);
  t.worker_parent.assign(g.n_workers(), kNoNode);
  t.task_depth.assign(g.n_tasks(), kNoNode);
  t.worker_depth.assign(g.n_workers(), kNoNode);
  t.task_children.assign(g.n_tasks(), {});
  t.worker_children.assign(g.n_workers(), {});
  std::deque<Node> queue{{Node::Kind::task, root}};
  t.task_depth[root] = 0;
  while (!queue.empty()) {
    const Node n = queue.front();
    queue.pop_front();
    t.order.push_back(n);
    const std::uint32_t depth =
        n.kind == Node::Kind::task ? t.task_depth[n.id] : t.worker_depth[n.id];
    if (depth >= max_depth) continue;
    if (n.kind == Node::Kind::task) {
      for (WorkerId u : g.workers_of_task(n.id)) {
        if (t.worker_depth[u] != kNoNode) continue;
        t.worker_depth[u] = t.task_depth[n.id] + 1;
        t.worker_parent[u] = n.id;
        t.task_children[n.id].push_back(u);
        queue.push_back({Node::Kind::worker, u});
      }
    } else {
      for (TaskId i : g.tasks_of_worker(n.id)) {
        if (t.task_depth[i] != kNoNode) continue;
        t.task_depth[i] = t.worker_depth[n.id] + 1;
        t.task_parent[i] = n.id;
        t.worker_children[n.id].push_back(i);
        queue.push_back({Node::Kind::task, i});
      }
    }
  }
  for (WorkerId u = 0; u < g.n_workers(); ++u)
    if (t.has_worker(u) && t.worker_children[u].empty()) t.leaf_workers.push_back(u);
  return t;
}

// True iff the subgraph induced by all nodes within `depth` hops of `root`
// is acyclic.
inline bool is_locally_tree(const AssignmentGraph& g, TaskId root, std::size_t depth) {
  if (root >= g.n_tasks())
    throw ArgumentError("is_locally_tree: root " + std::to_string(root) + " is not a task");
  std::vector<std::uint32_t> tdist(g.n_tasks(), kNoNode), wdist(g.n_workers(), kNoNode);
  std::deque<Node> queue{{Node::Kind::task, root}};
  tdist[root] = 0;
  std::size_t nodes = 0;
  std::vector<TaskId> ball_tasks;
  while (!queue.empty()) {
    const Node n = queue.front();
    queue.pop_front();
    ++nodes;
    if (n.kind == Node::Kind::task) {
      ball_tasks.push_back(n.id);
      if (tdist[n.id] == depth) continue;
      for (WorkerId u : g.workers_of_task(n.id))
        if (wdist[u] == kNoNode) {
          wdist[u] = tdist[n.id] + 1;
          queue.push_back({Node::Kind::worker, u});
        }
    } else {
      if (wdist[n.id] == depth) continue;
      for (TaskId i : g.tasks_of_worker(n.id))
        if (tdist[i] == kNoNode) {
          tdist[i] = wdist[n.id] + 1;
          queue.push_back({Node::Kind::task, i});
        }
    }
  }
  std::size_t edges = 0;
  for (TaskId i : ball_tasks)
    for (WorkerId u : g.workers_of_task(i))
      if (wdist[u] != kNoNode) ++edges;
  // The ball is connected, so it is a tree iff it has one edge fewer than nodes.
  return edges + 1 == nodes;
}

// Edge-list CSV: header `task_id,worker_id`, one edge per row.
inline void write_edges_csv(const AssignmentGraph& g, std::ostream& out) {
  out << "task_id,worker_id\n";
  for (EdgeId e = 0; e < g.n_edges(); ++e)
    out << g.edge_task(e) << ',' << g.edge_worker(e) << '\n';
}

inline void write_edges_csv(const AssignmentGraph& g, const std::string& path) {
  auto out = csv::open_out(path);
  write_edges_csv(g, out);
}

inline AssignmentGraph read_edges_csv(std::istream& in, const std::string& name = "edges") {
  const auto header = csv::read_header(in, name);
  if (header.size() != 2 || header[0] != "task_id" || header[1] != "worker_id")
    throw FormatError(name + ": expected header 'task_id,worker_id'");
  std::vector<Edge> edges;
  std::size_t n = 0, m = 0;
  std::string line;
  std::set<Edge> seen;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 2) throw FormatError(name + ": expected 2 fields: '" + line + "'");
    const Edge e{static_cast<TaskId>(csv::parse_uint(f[0], "task_id")),
                 static_cast<WorkerId>(csv::parse_uint(f[1], "worker_id"))};
    if (!seen.insert(e).second)
      throw FormatError(name + ": duplicate edge (" + std::to_string(e.task) + "," +
                        std::to_string(e.worker) + ")");
    n = std::max<std::size_t>(n, e.task + 1);
    m = std::max<std::size_t>(m, e.worker + 1);
    edges.push_back(e);
  }
  return AssignmentGraph(n, m, std::move(edges));
}

inline AssignmentGraph read_edges_csv(const std::string& path) {
  auto in = csv::open_in(path);
  return read_edges_csv(in, path);
}

}  // namespace crowdreg
