#include <gtest/gtest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numeric>

#include "conn/oracle.hpp"
#include "conn/rng.hpp"

using namespace conn;
using namespace conn::oracle;

namespace {

Table random_beta(Rng& rng, std::size_t K, std::size_t V) {
  const std::vector<double> ones(V, 1.0);
  Table beta;
  for (std::size_t k = 0; k < K; ++k) beta.push_back(rng.dirichlet(ones));
  return beta;
}

std::vector<std::uint32_t> random_doc(Rng& rng, std::size_t N, std::size_t V) {
  std::vector<std::uint32_t> doc(N);
  for (auto& w : doc) w = static_cast<std::uint32_t>(rng.index(V));
  return doc;
}

}  // namespace

TEST(Digamma, MatchesReference) {
  for (double x : {1e-6, 1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 9.99, 10.0, 42.0, 1e4, 1e8}) {
    const double ref = boost::math::digamma(x);
    EXPECT_NEAR(digamma(x), ref, 1e-12 * std::max(1.0, std::abs(ref))) << x;
  }
  EXPECT_NEAR(digamma(1.0), -0.57721566490153286, 1e-12);
  EXPECT_THROW(digamma(0.0), OracleError);
  EXPECT_THROW(digamma(-1.0), OracleError);
}

TEST(UpdateTheta, Examples) {
  EXPECT_EQ(update_q_theta({1, 1}, {{0.5, 0.5}}), (Row{1.5, 1.5}));
  EXPECT_EQ(update_q_theta({0.3, 2.0}, {}), (Row{0.3, 2.0}));
  EXPECT_EQ(update_q_theta({1, 1}, {{1, 0}, {1, 0}, {1, 0}}), (Row{4, 1}));
}

TEST(UpdateZ, Examples) {
  const Table uniform = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  for (double q : update_q_z(uniform, 1, {2, 2, 2})) EXPECT_NEAR(q, 1.0 / 3.0, 1e-15);

  const Table certain = {{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_EQ(update_q_z(certain, 0, {0.1, 50.0}), (Row{1.0, 0.0}));

  // column (0.2, 0.6) under gamma = (2, 1); frozen from a direct evaluation
  const Table beta = {{0.2, 0.8}, {0.6, 0.4}};
  const Row q = update_q_z(beta, 0, {2, 1});
  EXPECT_NEAR(q[0], 0.47536688641867175, 1e-14);
  EXPECT_NEAR(q[1], 0.5246331135813282, 1e-14);
}

TEST(UpdateZ, ImpossibleWordNamed) {
  const Table beta = {{1.0, 0.0}, {1.0, 0.0}};
  try {
    update_q_z(beta, 1, {1, 1});
    FAIL() << "expected an error";
  } catch (const OracleError& e) {
    EXPECT_NE(std::string(e.what()).find("word 1"), std::string::npos);
  }
  EXPECT_THROW(update_q_z(beta, 7, {1, 1}), OracleError);
}

TEST(FreeEnergy, SingleTopicCollapses) {
  const Table beta = {{0.1, 0.3, 0.6}};
  const std::vector<std::uint32_t> doc = {0, 2, 2, 1};
  const Row alpha = {0.8};
  MeanFieldState s{{alpha[0] + 4.0}, Table(4, Row{1.0})};
  const double expected = -(std::log(0.1) + 2 * std::log(0.6) + std::log(0.3));
  EXPECT_NEAR(free_energy(s, alpha, beta, doc), expected, 1e-12);

  const auto r = run_meanfield(alpha, beta, doc);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.sweeps, 1u);
  EXPECT_NEAR(r.state.gamma[0], 4.8, 1e-15);
}

TEST(FreeEnergy, PositiveMassOnImpossibleWordIsInfinite) {
  const Table beta = {{1.0, 0.0}, {0.5, 0.5}};
  MeanFieldState s{{1.5, 1.5}, {{0.5, 0.5}}};
  EXPECT_EQ(free_energy(s, {1, 1}, beta, {1}), std::numeric_limits<double>::infinity());
  s.q_z = {{0.0, 1.0}};
  EXPECT_TRUE(std::isfinite(free_energy(s, {1, 1}, beta, {1})));
}

TEST(FreeEnergy, EveryCoordinateUpdateDescends) {
  Rng rng(21);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t K = 2 + rng.index(4), V = 2 + rng.index(8), N = 1 + rng.index(8);
    Row alpha(K);
    for (auto& a : alpha) a = rng.uniform(0.1, 3.0);
    const auto beta = random_beta(rng, K, V);
    const auto doc = random_doc(rng, N, V);
    MeanFieldState s;
    s.gamma = alpha;
    for (auto& g : s.gamma) g += static_cast<double>(N) / static_cast<double>(K);
    s.q_z.assign(N, Row(K, 1.0 / static_cast<double>(K)));
    double f = free_energy(s, alpha, beta, doc);
    for (int sweep = 0; sweep < 5; ++sweep) {
      for (std::size_t i = 0; i < N; ++i) {
        s.q_z[i] = update_q_z(beta, doc[i], s.gamma);
        const double next = free_energy(s, alpha, beta, doc);
        EXPECT_LE(next, f + 1e-10);
        f = next;
      }
      s.gamma = update_q_theta(alpha, s.q_z);
      const double next = free_energy(s, alpha, beta, doc);
      EXPECT_LE(next, f + 1e-10);
      f = next;
    }
  }
}

TEST(MeanField, TraceNonIncreasingAndFixedPoint) {
  Rng rng(5);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t K = 1 + rng.index(5), V = 1 + rng.index(10), N = rng.index(9);
    Row alpha(K);
    for (auto& a : alpha) a = rng.uniform(0.1, 3.0);
    const auto beta = random_beta(rng, K, V);
    const auto doc = random_doc(rng, N, V);
    const auto r = run_meanfield(alpha, beta, doc, 10000, 1e-12);
    ASSERT_TRUE(r.converged);
    double prev = r.initial_free_energy;
    for (double f : r.trace) {
      EXPECT_LE(f - prev, 1e-10);
      prev = f;
    }
    const auto fp = fixed_point_residuals(r.state, alpha, beta, doc);
    EXPECT_LE(fp.theta, 1e-8);
    EXPECT_LE(fp.z, 1e-8);
    auto again = r.state;
    for (std::size_t i = 0; i < doc.size(); ++i) again.q_z[i] = update_q_z(beta, doc[i], again.gamma);
    again.gamma = update_q_theta(alpha, again.q_z);
    EXPECT_LT(std::abs(free_energy(again, alpha, beta, doc) - r.trace.back()), 1e-10);
  }
}

TEST(MeanField, Deterministic) {
  const Table beta = {{0.2, 0.3, 0.5}, {0.6, 0.3, 0.1}};
  const std::vector<std::uint32_t> doc = {0, 1, 2, 2, 0};
  const auto a = run_meanfield({0.5, 1.5}, beta, doc);
  const auto b = run_meanfield({0.5, 1.5}, beta, doc);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.state.gamma, b.state.gamma);
}

TEST(BruteForce, EmptyDocumentIsPrior) {
  const Table beta = {{0.5, 0.5}, {0.1, 0.9}};
  const auto p = brute_force_posterior({2.0, 3.0}, beta, {}, 2000);
  EXPECT_NEAR(p.evidence, 1.0, 1e-6);
  EXPECT_NEAR(p.evidence_closed, 1.0, 1e-14);
  EXPECT_NEAR(p.mean_theta0, 0.4, 1e-6);
  EXPECT_TRUE(p.z_marginals.empty());
}

TEST(BruteForce, ResolutionsAgreeAndMarginalsNormalize) {
  Rng rng(8);
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t V = 2 + rng.index(6), N = 1 + rng.index(6);
    const Row alpha = {static_cast<double>(1 + rng.index(3)), static_cast<double>(1 + rng.index(3))};
    const auto beta = random_beta(rng, 2, V);
    const auto doc = random_doc(rng, N, V);
    const auto coarse = brute_force_posterior(alpha, beta, doc, 4000);
    const auto fine = brute_force_posterior(alpha, beta, doc, 8000);
    EXPECT_LT(std::abs(coarse.evidence - fine.evidence) / fine.evidence, 1e-6);
    EXPECT_LT(std::abs(fine.evidence - fine.evidence_closed) / fine.evidence_closed, 1e-6);
    for (const auto& m : fine.z_marginals) EXPECT_NEAR(m[0] + m[1], 1.0, 1e-12);
  }
}

TEST(BruteForce, BoundHoldsAndGapIsKl) {
  Rng rng(13);
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t V = 2 + rng.index(8), N = 1 + rng.index(8);
    const Row alpha = {rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0)};
    const auto beta = random_beta(rng, 2, V);
    const auto doc = random_doc(rng, N, V);
    const auto r = run_meanfield(alpha, beta, doc, 10000, 1e-12);
    const auto exact = brute_force_posterior(alpha, beta, doc, 5000);
    const double bound = free_energy(r.state, alpha, beta, doc) + std::log(exact.evidence_closed);
    EXPECT_GE(bound, -1e-4);
    EXPECT_LE(std::abs(bound - direct_kl(r.state, alpha, beta, doc, exact)), 1e-3);
    const double mean_q = r.state.gamma[0] / (r.state.gamma[0] + r.state.gamma[1]);
    EXPECT_LE(std::abs(mean_q - exact.mean_theta0), 0.1);
  }
}

TEST(BruteForce, RejectsUnsupportedInputs) {
  const Table two = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_THROW(brute_force_posterior({1, 1, 1}, {{1.0}, {1.0}, {1.0}}, {0}, 2000), OracleError);
  EXPECT_THROW(brute_force_posterior({0.5, 1}, two, {0}, 2000), OracleError);
  EXPECT_THROW(brute_force_posterior({1, 1}, two, std::vector<std::uint32_t>(11, 0), 2000), OracleError);
  EXPECT_THROW(brute_force_posterior({1, 1}, two, {0}, 10), OracleError);
}
