#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "crowdreg/graph.hpp"
#include "oracles.hpp"

using namespace crowdreg;

TEST(AssignmentGraph, AdjacencyIsSortedAndConsistent) {
  const AssignmentGraph g(3, 3, {{2, 0}, {0, 1}, {0, 0}, {1, 2}, {2, 2}});
  EXPECT_EQ(g.n_edges(), 5u);
  ASSERT_EQ(g.workers_of_task(0).size(), 2u);
  EXPECT_EQ(g.workers_of_task(0)[0], 0u);
  EXPECT_EQ(g.workers_of_task(0)[1], 1u);
  EXPECT_EQ(g.tasks_of_worker(2).size(), 2u);
  EXPECT_EQ(g.tasks_of_worker(2)[0], 1u);
  for (WorkerId u = 0; u < g.n_workers(); ++u)
    for (std::size_t k = 0; k < g.worker_degree(u); ++k) {
      const EdgeId e = g.edges_of_worker(u)[k];
      EXPECT_EQ(g.edge_worker(e), u);
      EXPECT_EQ(g.edge_task(e), g.tasks_of_worker(u)[k]);
    }
  EXPECT_EQ(g.find_edge(1, 2), 2u);
  EXPECT_EQ(g.find_edge(1, 0), kNoNode);
}

TEST(AssignmentGraph, RejectsDuplicatesAndOutOfRange) {
  EXPECT_THROW(AssignmentGraph(2, 2, {{0, 0}, {0, 0}}), ArgumentError);
  EXPECT_THROW(AssignmentGraph(2, 2, {{2, 0}}), ArgumentError);
  EXPECT_THROW(AssignmentGraph(2, 2, {{0, 5}}), ArgumentError);
}

TEST(RegularGraph, DegreesAreExact) {
  for (auto [n, ell, r] : {std::tuple{200, 5, 5}, {200, 5, 2}, {200, 15, 5}, {210, 5, 14},
                           {12, 1, 1}, {30, 2, 3}}) {
    const auto g = generate_lr_regular(n, ell, r, 42 + n + ell + r);
    ASSERT_EQ(g.n_tasks(), std::size_t(n));
    ASSERT_EQ(g.n_workers(), std::size_t(n * ell / r));
    for (TaskId i = 0; i < g.n_tasks(); ++i) EXPECT_EQ(g.task_degree(i), std::size_t(ell));
    for (WorkerId u = 0; u < g.n_workers(); ++u) EXPECT_EQ(g.worker_degree(u), std::size_t(r));
    std::set<Edge> uniq;
    for (const Edge& e : g.edges()) uniq.insert(e);
    EXPECT_EQ(uniq.size(), g.n_edges());
  }
}

TEST(RegularGraph, DivisibilityAndFeasibility) {
  EXPECT_THROW(generate_lr_regular(200, 5, 3, 1), ConfigError);
  EXPECT_THROW(generate_lr_regular(4, 4, 8, 1), GenerationError);  // r > n
  EXPECT_THROW(generate_lr_regular(0, 1, 1, 1), ConfigError);
}

TEST(RegularGraph, SingleWorkerPerTask) {
  // ell = 1, r = n: one worker answering everything.
  const auto g = generate_lr_regular(10, 1, 10, 7);
  EXPECT_EQ(g.n_workers(), 1u);
  EXPECT_EQ(g.worker_degree(0), 10u);
}

TEST(RegularGraph, SeedDeterminism) {
  EXPECT_EQ(generate_lr_regular(100, 5, 5, 9), generate_lr_regular(100, 5, 5, 9));
  EXPECT_FALSE(generate_lr_regular(100, 5, 5, 9) == generate_lr_regular(100, 5, 5, 10));
}

TEST(RandomAssignment, ShapeAndCoverage) {
  const auto g = generate_random_assignment(1002, 165, 10, 3);
  EXPECT_EQ(g.n_tasks(), 1002u);
  EXPECT_EQ(g.n_workers(), 165u);
  EXPECT_EQ(g.n_edges(), 10020u);
  std::size_t lo = SIZE_MAX, hi = 0;
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    lo = std::min(lo, g.worker_degree(u));
    hi = std::max(hi, g.worker_degree(u));
  }
  EXPECT_GE(lo, 1u);
  EXPECT_LT(lo, hi);  // non-regular
  EXPECT_THROW(generate_random_assignment(5, 3, 4, 1), ConfigError);
}

// Independent BFS over the explicit node graph.
TEST(BfsTree, MatchesIndependentBfs) {
  const auto g = generate_lr_regular(60, 3, 3, 5);
  const auto t = bfs_tree(g, 7);
  const std::size_t n = g.n_tasks();
  std::vector<std::size_t> dist(n + g.n_workers(), SIZE_MAX);
  std::vector<std::size_t> q{7};
  dist[7] = 0;
  for (std::size_t h = 0; h < q.size(); ++h) {
    const std::size_t x = q[h];
    std::vector<std::size_t> nb;
    if (x < n)
      for (auto u : g.workers_of_task(static_cast<TaskId>(x))) nb.push_back(n + u);
    else
      for (auto i : g.tasks_of_worker(static_cast<WorkerId>(x - n))) nb.push_back(i);
    for (auto y : nb)
      if (dist[y] == SIZE_MAX) dist[y] = dist[x] + 1, q.push_back(y);
  }
  for (TaskId i = 0; i < n; ++i) {
    ASSERT_TRUE(t.has_task(i));
    EXPECT_EQ(t.task_depth[i], dist[i]);
  }
  for (WorkerId u = 0; u < g.n_workers(); ++u) {
    ASSERT_TRUE(t.has_worker(u));
    EXPECT_EQ(t.worker_depth[u], dist[n + u]);
    EXPECT_EQ(t.worker_depth[u], t.task_depth[t.worker_parent[u]] + 1);
  }
  EXPECT_EQ(t.order.size(), n + g.n_workers());
}

TEST(BfsTree, DepthLimitStopsExpansion) {
  const auto g = generate_lr_regular(60, 3, 3, 5);
  const auto t = bfs_tree(g, 0, 1);
  EXPECT_EQ(t.max_depth(), 1u);
  EXPECT_EQ(t.leaf_workers.size(), 3u);
  for (WorkerId u : t.leaf_workers) EXPECT_TRUE(t.worker_children[u].empty());
}

TEST(BfsTree, LeafWorkersOfTreeAreRealLeaves) {
  std::mt19937_64 rng(11);
  const auto g = oracle::random_tree(6, 5, rng);
  const auto t = bfs_tree(g, 0);
  for (WorkerId u : t.leaf_workers) EXPECT_EQ(g.worker_degree(u), 1u);
}

TEST(LocallyTree, TreesAndCycles) {
  std::mt19937_64 rng(3);
  const auto tree = oracle::random_tree(8, 6, rng);
  for (TaskId i = 0; i < tree.n_tasks(); ++i) EXPECT_TRUE(is_locally_tree(tree, i, 10));
  // 2x2 complete bipartite graph is a 4-cycle.
  const AssignmentGraph cyc(2, 2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  EXPECT_TRUE(is_locally_tree(cyc, 0, 1));
  EXPECT_FALSE(is_locally_tree(cyc, 0, 2));
}

// Fraction of locally-tree tasks grows toward 1 as n grows at fixed degrees.
TEST(LocallyTree, SparseGraphsAreMostlyTreeLike) {
  const auto g = generate_lr_regular(2000, 3, 3, 17);
  std::size_t ok = 0;
  for (TaskId i = 0; i < g.n_tasks(); ++i) ok += is_locally_tree(g, i, 3);
  EXPECT_GT(static_cast<double>(ok) / g.n_tasks(), 0.9);
}

TEST(EdgesCsv, RoundTrip) {
  const auto g = generate_lr_regular(20, 3, 4, 2);
  std::stringstream ss;
  write_edges_csv(g, ss);
  EXPECT_EQ(read_edges_csv(ss), g);
  std::stringstream dup("task_id,worker_id\n0,1\n0,1\n");
  EXPECT_THROW(read_edges_csv(dup), FormatError);
  std::stringstream bad("task,worker\n0,1\n");
  EXPECT_THROW(read_edges_csv(bad), FormatError);
}
