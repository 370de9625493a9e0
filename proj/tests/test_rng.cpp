#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "conn/parallel.hpp"
#include "conn/rng.hpp"

using conn::Rng;

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.bits(), b.bits());
}

TEST(Rng, DerivedStreamsDiffer) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 1000; ++s) seeds.insert(Rng::derive(7, s));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_NE(Rng::derive(7, 0), Rng::derive(8, 0));
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, IndexCoversRangeUniformly) {
  Rng r(3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[r.index(7)]++;
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 500.0);
}

TEST(Rng, GammaMoments) {
  for (double shape : {0.3, 1.0, 4.5}) {
    Rng r(11);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double g = r.gamma(shape);
      ASSERT_GT(g, 0.0);
      sum += g;
      sq += g * g;
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    EXPECT_NEAR(mean, shape, 0.02 * std::max(1.0, shape)) << shape;
    EXPECT_NEAR(var, shape, 0.05 * std::max(1.0, shape)) << shape;
  }
}

TEST(Rng, DirichletOnSimplex) {
  Rng r(5);
  const std::vector<double> alpha = {0.5, 2.0, 3.0};
  std::vector<double> mean(3, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto x = r.dirichlet(alpha);
    EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-12);
    for (int k = 0; k < 3; ++k) mean[k] += x[k] / n;
  }
  EXPECT_NEAR(mean[0], 0.5 / 5.5, 0.005);
  EXPECT_NEAR(mean[1], 2.0 / 5.5, 0.005);
  EXPECT_NEAR(mean[2], 3.0 / 5.5, 0.005);
}

TEST(Rng, CategoricalNeverPicksZeroWeight) {
  Rng r(9);
  const std::vector<double> w = {0.0, 3.0, 0.0, 1.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) counts[r.categorical(w)]++;
  EXPECT_EQ(counts[0], 0);
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[1] / 40000.0, 0.75, 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(2);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (std::size_t threads : {1u, 3u, 8u}) {
    std::vector<int> hits(101, 0);
    conn::parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(conn::parallel_for(10, 4,
                                  [](std::size_t i) {
                                    if (i == 6) throw std::runtime_error("boom");
                                  }),
               std::runtime_error);
}
