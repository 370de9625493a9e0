#include <gtest/gtest.h>

#include <cmath>

#include "conn/diff.hpp"

using namespace conn;
using namespace conn::diff;
using model::HyperParams;
using model::Mode;
using model::ModelParams;

namespace {

Document doc_of(std::vector<std::uint32_t> ids, int label) {
  Document d;
  d.word_ids = std::move(ids);
  d.label = label;
  return d;
}

double fd_theta_weight(ModelParams p, const HyperParams& hp, const Document& d, const LossConfig& cfg,
                       Eigen::Index i, double eps) {
  const auto masks = model::identity_masks(hp, d.size());
  double& x = p.theta_layers[0].data()[i];
  const double x0 = x;
  x = x0 + eps;
  const double up = document_loss(d, p, hp, masks, cfg);
  x = x0 - eps;
  const double down = document_loss(d, p, hp, masks, cfg);
  return (up - down) / (2.0 * eps);
}

}  // namespace

TEST(Loss, BinaryAtZeroLogitIsLnTwo) {
  const auto cfg = LossConfig::for_classes(2);
  const Vec zero = Vec::Zero(1);
  EXPECT_NEAR(loss(zero, 0, cfg), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(zero, 1, cfg), 0.693147, 1e-6);
}

TEST(Loss, ThreeClassUniformIsLnThree) {
  EXPECT_NEAR(loss(Vec::Zero(3), 0, LossConfig::for_classes(3)), 1.098612, 1e-6);
}

TEST(Loss, ClassWeightScalesLinearly) {
  auto plain = LossConfig::for_classes(2);
  auto weighted = plain;
  weighted.class_weights = {1.0, 1.4};
  Vec x(1);
  x << -0.37;
  EXPECT_DOUBLE_EQ(loss(x, 1, weighted), 1.4 * loss(x, 1, plain));
  EXPECT_DOUBLE_EQ(loss(x, 0, weighted), loss(x, 0, plain));
  EXPECT_TRUE(loss_gradient(x, 1, weighted).isApprox(1.4 * loss_gradient(x, 1, plain)));
}

TEST(Loss, NonNegativeAndStableForExtremeLogits) {
  const auto bin = LossConfig::for_classes(2);
  for (double x : {-800.0, -5.0, 0.0, 5.0, 800.0}) {
    Vec v(1);
    v << x;
    for (int y : {0, 1}) {
      const double l = loss(v, y, bin);
      EXPECT_TRUE(std::isfinite(l));
      EXPECT_GE(l, 0.0);
    }
  }
  Vec v(1);
  v << 800.0;
  EXPECT_NEAR(loss(v, 0, bin), 800.0, 1e-9);
  Vec c(3);
  c << 900.0, -900.0, 0.0;
  EXPECT_NEAR(loss(c, 1, LossConfig::for_classes(3)), 1800.0, 1e-9);
}

TEST(Loss, GradientMatchesFiniteDifference) {
  const auto cfg = LossConfig::for_classes(4);
  Vec x(4);
  x << 0.3, -1.2, 2.0, 0.1;
  const Vec g = loss_gradient(x, 2, cfg);
  for (int k = 0; k < 4; ++k) {
    Vec up = x, down = x;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    EXPECT_NEAR(g[k], (loss(up, 2, cfg) - loss(down, 2, cfg)) / 2e-6, 1e-8);
  }
}

TEST(Loss, ConfigValidation) {
  LossConfig cfg = LossConfig::for_classes(2);
  EXPECT_NO_THROW(cfg.validate(2));
  EXPECT_THROW(cfg.validate(3), model::ModelError);
  cfg.class_weights = {1.0, 0.0};
  EXPECT_THROW(cfg.validate(2), model::ModelError);
  cfg.class_weights = {1.0};
  EXPECT_THROW(cfg.validate(2), model::ModelError);
}

TEST(Backward, ZeroHeadGivesZeroEmbeddingGradient) {
  HyperParams hp;
  hp.dim = 4;
  hp.unroll = 2;
  auto p = model::init_params(hp, 6, 1);
  p.head_weight.setZero();
  const auto d = doc_of({0, 3, 3}, 1);
  const auto cfg = LossConfig::for_classes(2);
  const auto r = backward(model::forward(d, p, hp, Mode::Eval), p, hp, d.label, cfg);
  EXPECT_EQ(r.grads.embedding.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.grads.feedback.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NE(r.grads.head_bias.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, AbsentWordHasZeroGradient) {
  HyperParams hp;
  hp.dim = 3;
  const auto p = model::init_params(hp, 5, 2);
  const auto d = doc_of({1, 4}, 0);
  const auto r = backward(model::forward(d, p, hp, Mode::Eval), p, hp, 0, LossConfig::for_classes(2));
  for (int w : {0, 2, 3}) EXPECT_EQ(r.grads.embedding.row(w).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(r.grads.embedding.row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, SingleWordThetaWeightMatchesFiniteDifference) {
  HyperParams hp;
  hp.dim = 1;
  auto p = model::ModelParams::zeros(hp, 1);
  p.embedding(0, 0) = 1.0;
  p.z_layers[0](0, 0) = 1.0;
  p.feedback(0, 0) = 0.5;
  p.theta_layers[0](0, 0) = 2.0;
  p.head_weight(0, 0) = 0.8;
  const auto d = doc_of({0}, 1);
  const auto cfg = LossConfig::for_classes(2);
  const auto r = backward(model::forward(d, p, hp, Mode::Eval), p, hp, 1, cfg);
  const double fd = fd_theta_weight(p, hp, d, cfg, 0, 1e-6);
  EXPECT_LE(relative_error(r.grads.theta_layers[0](0, 0), fd), 1e-8);
  EXPECT_NE(r.grads.head_weight(0, 0), 0.0);
}

TEST(Backward, LossMatchesForward) {
  HyperParams hp;
  hp.dim = 4;
  hp.num_classes = 3;
  const auto p = model::init_params(hp, 9, 5);
  const auto d = doc_of({2, 8, 8, 1}, 2);
  const auto cfg = LossConfig::for_classes(3);
  const auto s = model::forward(d, p, hp, Mode::Eval);
  EXPECT_DOUBLE_EQ(backward(s, p, hp, 2, cfg).loss, loss(model::classify(s.head_input(), p), 2, cfg));
}

TEST(Backward, LeavesParamsUntouched) {
  HyperParams hp;
  hp.dim = 4;
  hp.unroll = 3;
  hp.dropout_z = 0.3;
  const auto p = model::init_params(hp, 10, 6);
  const auto copy = p;
  Rng rng(1);
  const auto d = doc_of({1, 2, 3}, 0);
  backward(model::forward(d, p, hp, Mode::Train, &rng), p, hp, 0, LossConfig::for_classes(2));
  EXPECT_TRUE(p == copy);
}

TEST(Backward, SparseAndDenseAgree) {
  HyperParams hp;
  hp.dim = 4;
  hp.unroll = 2;
  hp.depth_z = 2;
  const auto p = model::init_params(hp, 12, 8);
  const auto d = doc_of({7, 3, 7, 11}, 1);
  const auto s = model::forward(d, p, hp, Mode::Eval);
  const auto cfg = LossConfig::for_classes(2);
  const auto dense = backward(s, p, hp, 1, cfg);
  const auto sparse = backward_sparse(s, p, hp, 1, cfg);
  ASSERT_EQ(sparse.embedding_rows.size(), 3u);
  EXPECT_EQ(sparse.embedding_rows[0].first, 3u);
  auto total = Gradients::zeros_like(p);
  sparse.add_to(total, 1.0);
  EXPECT_LT((total.embedding - dense.grads.embedding).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((total.feedback - dense.grads.feedback).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NormalizeBackward, DirectionalDerivative) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Vec v(5), g(5), dir(5);
    for (int i = 0; i < 5; ++i) {
      v[i] = rng.normal();
      g[i] = rng.normal();
      dir[i] = rng.normal();
    }
    const double h = 1e-6;
    const Vec fd = (model::normalize(v + h * dir) - model::normalize(v - h * dir)) / (2 * h);
    // <g, J dir> = <J^T g, dir>, J symmetric
    const double analytic = normalize_backward(v, g).dot(dir);
    EXPECT_LE(relative_error(analytic, g.dot(fd)), 1e-7);
  }
  EXPECT_EQ(normalize_backward(Vec::Zero(3), Vec::Ones(3)), Vec::Zero(3));
}

TEST(GradCheck, SmallDeepConfig) {
  HyperParams hp;
  hp.dim = 4;
  hp.unroll = 3;
  hp.depth_z = 2;
  hp.depth_theta = 1;
  const auto p = model::init_params(hp, 20, 12);
  const auto d = doc_of({0, 5, 5, 19, 7, 2}, 1);
  const auto r = grad_check(p, hp, d, LossConfig::for_classes(2));
  EXPECT_LT(r.max_rel_error, 1e-5);
  EXPECT_GT(r.coordinates, 0u);
}

TEST(GradCheck, OneAndThreeUnrollsBothPass) {
  for (std::size_t T : {1u, 3u}) {
    HyperParams hp;
    hp.dim = 3;
    hp.unroll = T;
    hp.depth_theta = 3;
    hp.num_classes = 3;
    const auto p = model::init_params(hp, 8, 2);
    const auto d = doc_of({1, 6, 6}, 2);
    EXPECT_LT(grad_check(p, hp, d, LossConfig::for_classes(3)).max_rel_error, 1e-5) << T;
  }
}

TEST(GradCheck, WithFixedDropoutMasks) {
  HyperParams hp;
  hp.dim = 4;
  hp.unroll = 2;
  hp.dropout_word = hp.dropout_z = hp.dropout_theta = 0.3;
  const auto p = model::init_params(hp, 10, 3);
  const auto d = doc_of({1, 2, 9}, 0);
  Rng rng(4);
  GradCheckOptions opt;
  opt.masks = model::sample_masks(hp, d.size(), rng);
  EXPECT_LT(grad_check(p, hp, d, LossConfig::for_classes(2), opt).max_rel_error, 1e-5);
}

TEST(GradCheck, ZeroModelHasNoError) {
  HyperParams hp;
  hp.dim = 3;
  hp.unroll = 2;
  const auto p = ModelParams::zeros(hp, 4);
  const auto r = grad_check(p, hp, doc_of({0, 3}, 1), LossConfig::for_classes(2));
  // only rounding noise of the reference differences remains
  EXPECT_LT(r.max_rel_error, 1e-12);
}
