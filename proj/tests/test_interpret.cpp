#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "conn/interpret.hpp"

using namespace conn;
using namespace conn::interpret;
using model::HyperParams;

namespace {

std::vector<std::uint32_t> all_words(std::size_t V) {
  std::vector<std::uint32_t> s(V);
  std::iota(s.begin(), s.end(), 0u);
  return s;
}

Document doc_of(std::vector<std::uint32_t> ids) {
  Document d;
  d.word_ids = std::move(ids);
  return d;
}

HyperParams hp_of(std::size_t dim, std::size_t depth_z = 1, std::size_t depth_theta = 1) {
  HyperParams hp;
  hp.dim = dim;
  hp.depth_z = depth_z;
  hp.depth_theta = depth_theta;
  return hp;
}

}  // namespace

TEST(Residual, ZeroWeightsGiveNegativeTarget) {
  const auto hp = hp_of(4);
  const auto p = model::init_params(hp, 6, 1);
  const Vec mu = model::embed(doc_of({1, 2}), p, hp);
  const Vec r = residual(Vec::Zero(6), mu, p, all_words(6));
  EXPECT_EQ(r, -mu);
}

TEST(Residual, CountsReproduceSingleUnrollEmbeddingWithoutFeedback) {
  for (std::size_t depth : {1u, 2u}) {
    const auto hp = hp_of(5, depth, depth);
    auto p = model::init_params(hp, 12, 3);
    p.feedback.setZero();
    const auto d = doc_of({0, 4, 4, 9, 11, 4});
    const Vec mu = model::embed(d, p, hp);
    const auto S = all_words(12);
    EXPECT_LT(residual(count_init(d, S), mu, p, S).norm(), 1e-14) << depth;
  }
}

TEST(Residual, CountsWithFeedbackGolden) {
  // the single-unroll forward injects no feedback while the residual injects
  // feedback * mu, so counts are not a fixed point once feedback is non-zero
  const auto hp = hp_of(5);
  const auto p = model::init_params(hp, 12, 3);
  const auto d = doc_of({0, 4, 4, 9, 11, 4});
  const Vec mu = model::embed(d, p, hp);
  const auto S = all_words(12);
  EXPECT_NEAR(residual(count_init(d, S), mu, p, S).norm(), 1.0574614958880275, 1e-12);
}

TEST(Residual, DeterministicAndConsistentWithProblem) {
  const auto hp = hp_of(4, 2, 2);
  const auto p = model::init_params(hp, 8, 5);
  const Vec mu = model::embed(doc_of({3, 7}), p, hp);
  const RelevanceProblem prob(p, mu, {1, 3, 7});
  Vec f(3);
  f << 0.2, -1.0, 2.5;
  EXPECT_EQ(prob.residual(f), prob.residual(f));
  EXPECT_EQ(prob.residual(f), residual(f, mu, p, {1, 3, 7}));
  EXPECT_DOUBLE_EQ(prob.objective(f), prob.residual(f).squaredNorm());
  Vec g;
  EXPECT_DOUBLE_EQ(prob.objective_and_gradient(f, g), prob.objective(f));
  EXPECT_THROW(RelevanceProblem(p, mu, {}), InterpretError);
}

TEST(Relevance, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int inst = 0; inst < 10; ++inst) {
    const auto hp = hp_of(2 + rng.index(6), 1 + rng.index(2), 1 + rng.index(3));
    const std::size_t V = 3 + rng.index(15);
    const auto p = model::init_params(hp, V, rng.bits());
    const Vec mu = model::embed(doc_of({static_cast<std::uint32_t>(rng.index(V))}), p, hp);
    const RelevanceProblem prob(p, mu, all_words(V));
    Vec f(static_cast<Eigen::Index>(V));
    for (auto& x : f) x = rng.uniform(-1.0, 2.0);
    EXPECT_LE(gradient_check(prob, f), 1e-6) << inst;
  }
}

TEST(Relevance, ZeroTargetAndZeroModelIsSolvedByZero) {
  const auto hp = hp_of(3);
  const auto p = model::ModelParams::zeros(hp, 4);
  const RelevanceProblem prob(p, Vec::Zero(3), all_words(4));
  EXPECT_EQ(prob.objective(Vec::Zero(4)), 0.0);
  SolveOptions opt;
  opt.steps = 10;
  const auto r = solve_relevance(prob, opt);
  EXPECT_EQ(r.objective, 0.0);
}

TEST(Relevance, SolveNeverWorsensAndIsDeterministic) {
  const auto hp = hp_of(6);
  const auto p = model::init_params(hp, 15, 8);
  const Vec mu = model::embed(doc_of({1, 1, 5, 14}), p, hp);
  const RelevanceProblem prob(p, mu, all_words(15));
  const auto a = solve_relevance(prob);
  const auto b = solve_relevance(prob);
  EXPECT_EQ(a.f, b.f);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_LE(a.objective, a.initial_objective);
  EXPECT_EQ(a.initial_objective, prob.objective(Vec::Constant(15, 1.0 / 15.0)));
  EXPECT_EQ(*std::min_element(a.trace.begin(), a.trace.end()), a.objective);
  EXPECT_LT(a.objective, 0.1 * a.initial_objective);
}

TEST(Relevance, CustomInitAndTolerance) {
  const auto hp = hp_of(4);
  const auto p = model::init_params(hp, 6, 2);
  const Vec mu = model::embed(doc_of({2, 3}), p, hp);
  const RelevanceProblem prob(p, mu, all_words(6));
  SolveOptions opt;
  opt.init = count_init(doc_of({2, 3}), all_words(6));
  opt.tol = 1e300;
  const auto r = solve_relevance(prob, opt);
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.f, opt.init);
  opt.init = Vec::Zero(2);
  EXPECT_THROW(solve_relevance(prob, opt), InterpretError);
}

TEST(Helpers, CountInitAndNearest) {
  const Vec f = count_init(doc_of({3, 1, 3, 9}), {1, 3, 5});
  EXPECT_EQ(f, (Vec(3) << 1, 2, 0).finished());
  std::vector<Vec> e = {Vec::Constant(2, 1.0), Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
  EXPECT_EQ(nearest(Vec::Constant(2, 0.9), e), 0u);
  EXPECT_EQ(nearest(Vec::Constant(2, -0.2), e), 1u);
  EXPECT_THROW(nearest(Vec::Zero(2), {}), InterpretError);
}

TEST(TopWords, Examples) {
  const Vocabulary vocab({"a", "b", "c", "d"});
  Vec f(3);
  f << 0.1, 0.9, 0.5;
  const auto top = top_words(f, {0, 1, 2}, vocab, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].index, 1u);
  EXPECT_EQ(top[1].index, 2u);
  EXPECT_EQ(top[0].token, "b");
  EXPECT_EQ(top[0].weight, 0.9);

  const auto ties = top_words(Vec::Constant(4, 0.25), {3, 0, 2, 1}, vocab, 4);
  for (std::uint32_t i = 0; i < 4; ++i) EXPECT_EQ(ties[i].word_id, i);

  Vec g(4);
  g << -1.0, 3.0, 0.0, 3.0;
  const auto all = top_words(g, {0, 1, 2, 3}, vocab, 4);
  std::vector<std::uint32_t> ids;
  for (const auto& w : all) ids.push_back(w.word_id);
  EXPECT_EQ(ids, (std::vector<std::uint32_t>{1, 3, 2, 0}));
  EXPECT_THROW(top_words(g, {0, 1, 2, 3}, vocab, 5), InterpretError);
}
