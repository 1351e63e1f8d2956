#include <gtest/gtest.h>

#include <cmath>

#include "crowdreg/metrics.hpp"
#include "crowdreg/rng.hpp"
#include "crowdreg/synth.hpp"

using namespace crowdreg;

TEST(VarianceSupport, Validation) {
  EXPECT_THROW(VarianceSupport(std::vector<double>{}), ConfigError);
  EXPECT_THROW(VarianceSupport({1.0, 1.0}), ConfigError);
  EXPECT_THROW(VarianceSupport({2.0, 1.0}), ConfigError);
  EXPECT_THROW(VarianceSupport({0.0}), ConfigError);
  const auto s = VarianceSupport::small();
  EXPECT_DOUBLE_EQ(s.mean(), 370.0);
  EXPECT_DOUBLE_EQ(s.min_gap(), 90.0);
  EXPECT_TRUE(std::isinf(VarianceSupport({5.0}).min_gap()));
  EXPECT_EQ(s.index_of(100.0), 1u);
  EXPECT_EQ(s.index_of(5.0), 3u);
  EXPECT_EQ(s.to_string(), "10;100;1000");
}

TEST(PriorVariance, FlatAndFinite) {
  EXPECT_TRUE(PriorVariance::flat().is_flat());
  EXPECT_EQ(PriorVariance::flat().precision(), 0.0);
  EXPECT_DOUBLE_EQ(PriorVariance::finite(4.0).precision(), 0.25);
  EXPECT_THROW(PriorVariance::finite(0.0), ConfigError);
  EXPECT_THROW(PriorVariance::finite(INFINITY), ConfigError);
}

TEST(SampleWorld, FlatPriorNeedsBox) {
  const auto g = generate_lr_regular(10, 2, 2, 1);
  EXPECT_THROW(sample_world(g, VarianceSupport::small(), TaskPrior::flat(10, 2), 2,
                            PriorGaussianPositions{}, 1),
               ConfigError);
}

TEST(SampleWorld, VarianceClassesAreUniform) {
  const auto g = generate_lr_regular(3000, 1, 1, 1);
  const auto t = sample_world(g, VarianceSupport::small(), TaskPrior::flat(3000, 1), 1,
                              UniformBoxPositions{0, 1}, 5);
  std::vector<double> counts(3, 0.0);
  for (std::size_t u = 0; u < t.worker_variances.size(); ++u) {
    ASSERT_EQ(t.worker_variances[u], VarianceSupport::small()[t.worker_class[u]]);
    counts[t.worker_class[u]] += 1.0;
  }
  // Binomial(3000, 1/3): sd ~ 25.8.
  for (double c : counts) EXPECT_NEAR(c, 1000.0, 4 * 25.8);
}

TEST(SampleWorld, GaussianPositionMoments) {
  const std::size_t n = 20000;
  const auto g = generate_lr_regular(n, 1, 1, 1);
  const auto prior = TaskPrior::gaussian(std::vector<double>(n, 3.0), 1, 4.0);
  const auto t = sample_world(g, VarianceSupport({1.0}), prior, 1, PriorGaussianPositions{}, 8);
  const auto s = summarize(t.positions);
  EXPECT_NEAR(s.mean, 3.0, 4 * 2.0 / std::sqrt(double(n)));
  double var = 0.0;
  for (double x : t.positions) var += (x - s.mean) * (x - s.mean);
  var /= double(n - 1);
  // sd of the sample variance ~ tau2 * sqrt(2/n).
  EXPECT_NEAR(var, 4.0, 4 * 4.0 * std::sqrt(2.0 / n));
}

TEST(SampleAnswers, NoiseMoments) {
  const std::size_t n = 4000;
  const auto g = generate_lr_regular(n, 5, 5, 2);
  const auto t = sample_world(g, VarianceSupport::small(), TaskPrior::flat(n, 2), 2,
                              UniformBoxPositions{0, 100}, 3);
  const auto a = sample_answers(g, t, 4);
  // Standardized residuals should be N(0, 1) per coordinate.
  double m1 = 0.0, m2 = 0.0;
  const double count = double(g.n_edges() * 2);
  for (EdgeId e = 0; e < g.n_edges(); ++e) {
    const double sd = std::sqrt(t.worker_variances[g.edge_worker(e)]);
    for (std::size_t k = 0; k < 2; ++k) {
      const double z = (a.answer(e)[k] - t.position(g.edge_task(e))[k]) / sd;
      m1 += z;
      m2 += z * z;
    }
  }
  m1 /= count;
  m2 /= count;
  EXPECT_NEAR(m1, 0.0, 4 / std::sqrt(count));
  EXPECT_NEAR(m2, 1.0, 4 * std::sqrt(2.0 / count));
}

TEST(SampleAnswers, SeedDeterminism) {
  const auto g = generate_lr_regular(50, 3, 3, 2);
  const auto t = sample_world(g, VarianceSupport::small(), TaskPrior::flat(50, 2), 2,
                              UniformBoxPositions{}, 3);
  EXPECT_EQ(sample_answers(g, t, 9), sample_answers(g, t, 9));
  EXPECT_FALSE(sample_answers(g, t, 9) == sample_answers(g, t, 10));
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, {1, 2}), derive_seed(1, {2, 1}));
  EXPECT_NE(derive_seed(1, {1}), derive_seed(2, {1}));
  EXPECT_EQ(derive_seed(7, Stream::world, 3), derive_seed(7, Stream::world, 3));
}

TEST(Metrics, MseAndSummary) {
  GroundTruth t;
  t.dim = 1;
  t.positions = {1.0};
  const std::vector<double> est{3.0};
  EXPECT_DOUBLE_EQ(mse(est, t), 4.0);
  EXPECT_DOUBLE_EQ(mse(t.positions, t), 0.0);
  EXPECT_THROW(mse(std::vector<double>{1.0, 2.0}, t), ArgumentError);
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stderr_mean, std::sqrt(5.0 / 3.0 / 4.0));
}
