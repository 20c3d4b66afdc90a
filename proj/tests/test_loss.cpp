#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace softneg;

namespace {

SoftTargetMatrix identity_targets(std::size_t b, std::size_t h = 0) {
  SoftTargetMatrix t{Matrix(b, b + h), h};
  for (std::size_t i = 0; i < b; ++i) t.t(i, i) = 1.0;
  return t;
}

Matrix random_logits(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& x : m.flat()) x = 10.0 * (2.0 * uniform01(rng) - 1.0);
  return m;
}

}  // namespace

TEST(SoftCrossEntropy, UniformPairIsLogTwo) {
  Matrix logits(2, 2, 0.0);
  Matrix targets(2, 2, 0.0);
  targets(0, 0) = targets(1, 1) = 1.0;
  const auto l = soft_cross_entropy(logits, targets);
  EXPECT_NEAR(l.value, std::log(2.0), 1e-12);
  EXPECT_NEAR(l.value, 0.69315, 1e-5);
}

TEST(SoftCrossEntropy, SingletonIsZero) {
  Matrix logits(1, 1, 3.7);
  Matrix targets(1, 1, 1.0);
  const auto l = soft_cross_entropy(logits, targets);
  EXPECT_EQ(l.value, 0.0);
  EXPECT_EQ(l.grad(0, 0), 0.0);
}

TEST(SoftCrossEntropy, OneHotMatchesInfoNce) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + uniform_index(rng, 10);
    const Matrix l = random_logits(rng, b, b);
    double expected = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < b; ++j) z += std::exp(l(i, j));
      expected += -(l(i, i) - std::log(z));
    }
    expected /= static_cast<double>(b);
    EXPECT_NEAR(soft_cross_entropy(l, identity_targets(b).t).value, expected, 1e-10);
  }
}

TEST(SoftCrossEntropy, NonStochasticTargetsRejected) {
  Matrix l(2, 2);
  Matrix t(2, 2, 0.6);
  EXPECT_THROW(soft_cross_entropy(l, t), ContractError);
  EXPECT_THROW(soft_cross_entropy(l, Matrix(2, 3)), ShapeError);
}

TEST(SoftCrossEntropy, NonNegativeAndMonotoneInDiagonal) {
  Rng rng(8);
  const Matrix t = identity_targets(4).t;
  Matrix l = random_logits(rng, 4, 4);
  double prev = soft_cross_entropy(l, t).value;
  EXPECT_GE(prev, 0.0);
  for (int k = 0; k < 10; ++k) {
    l(2, 2) += 0.5;
    const double now = soft_cross_entropy(l, t).value;
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(SoftCrossEntropy, GradientMatchesFiniteDifference) {
  Rng rng(3);
  Matrix l = random_logits(rng, 3, 5);
  Matrix t(3, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += (t(i, j) = uniform01(rng));
    for (std::size_t j = 0; j < 5; ++j) t(i, j) /= s;
  }
  const auto g = soft_cross_entropy(l, t).grad;
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      Matrix up = l, down = l;
      up(i, j) += eps;
      down(i, j) -= eps;
      const double num = (soft_cross_entropy(up, t).value - soft_cross_entropy(down, t).value) / (2 * eps);
      EXPECT_NEAR(num, g(i, j), 1e-8);
    }
}

TEST(ContrastiveLoss, SwappingModalitiesSwapsDirections) {
  Rng rng(21);
  const Matrix a = random_logits(rng, 5, 5);
  const Matrix at = a.transposed();
  const auto t = identity_targets(5);
  const auto l1 = soft_contrastive_loss(a, at, t, t.t);
  const auto l2 = soft_contrastive_loss(at, a, t, t.t);
  EXPECT_DOUBLE_EQ(l1.i2t, l2.t2i);
  EXPECT_DOUBLE_EQ(l1.t2i, l2.i2t);
  EXPECT_DOUBLE_EQ(l1.total, 0.5 * (l1.i2t + l1.t2i));
}

TEST(ContrastiveLoss, HardNegativeColumnMustBeZero) {
  auto t = identity_targets(2, 1);
  t.t(0, 0) = 0.5;
  t.t(0, 2) = 0.5;
  EXPECT_THROW(soft_contrastive_loss(Matrix(2, 3), Matrix(2, 2), t, identity_targets(2).t), ContractError);
  EXPECT_THROW(soft_contrastive_loss(Matrix(2, 2), Matrix(2, 2), t, identity_targets(2).t), ShapeError);
}

TEST(GradientCheck, PassesOnDeskModel) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = ModelParams::init(ModelShape{}, seed);
    const auto batch = testing_util::batch_from(p, testing_util::small_corpus(12, seed), 0.5, seed);
    ASSERT_GT(batch.hard_negatives(), 0u);
    const auto r = gradient_check(p, batch, 1e-5, 300, seed);
    EXPECT_EQ(r.checked, 300u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(GradientCheck, CorruptedGradientIsCaught) {
  const auto p = ModelParams::init(ModelShape{}, 4);
  const auto batch = testing_util::batch_from(p, testing_util::small_corpus(8, 4), 0.5, 4);
  const auto targets = make_targets(p, batch);
  auto grad = contrastive_loss(p, batch, targets).grad;
  grad[5] += 1.0;
  const auto r = compare_gradients(p, batch, targets, grad, 1e-5, {3, 4, 5, 6});
  EXPECT_GT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.worst_coordinate, 5u);
}

TEST(GradientCheck, NoCoordinatesPassesVacuously) {
  const auto p = ModelParams::init(ModelShape{}, 4);
  const auto batch = testing_util::batch_from(p, testing_util::small_corpus(4, 4), 0.0, 4);
  const auto targets = make_targets(p, batch);
  const auto r = compare_gradients(p, batch, targets, contrastive_loss(p, batch, targets).grad, 1e-5, {});
  EXPECT_EQ(r.checked, 0u);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradientCheck, RejectsBadEpsilonAndNaN) {
  const auto p = ModelParams::init(ModelShape{}, 4);
  const auto batch = testing_util::batch_from(p, testing_util::small_corpus(4, 4), 0.0, 4);
  const auto targets = make_targets(p, batch);
  auto grad = contrastive_loss(p, batch, targets).grad;
  EXPECT_THROW(compare_gradients(p, batch, targets, grad, 1e-2, {0}), std::invalid_argument);
  EXPECT_THROW(compare_gradients(p, batch, targets, grad, 1e-9, {0}), std::invalid_argument);
  grad[7] = std::nan("");
  try {
    compare_gradients(p, batch, targets, grad, 1e-5, {7});
    FAIL() << "expected GradientCheckError";
  } catch (const GradientCheckError& e) {
    EXPECT_EQ(e.coordinate(), 7u);
  }
}

TEST(GradientCheck, SoftTargetsInTheLoop) {
  auto p = ModelParams::init(ModelShape{}, 6);
  p.hyper.tau_t = p.hyper.tau_c = p.hyper.tau_g = 0.0;  // every gate open
  const auto batch = testing_util::batch_from(p, testing_util::small_corpus(10, 6), 0.5, 6);
  const auto t = make_targets(p, batch);
  bool off_diagonal = false;
  for (std::size_t i = 0; i < t.i2t.batch(); ++i)
    for (std::size_t j = 0; j < t.i2t.batch(); ++j) off_diagonal = off_diagonal || (i != j && t.i2t.t(i, j) > 0.0);
  ASSERT_TRUE(off_diagonal);
  EXPECT_LT(gradient_check(p, batch, 1e-5, 0, 6).max_rel_error, 1e-4);
}
