#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"

using namespace softneg;

namespace {

TrainConfig quick(std::size_t epochs, std::size_t pretrain = 0) {
  TrainConfig c;
  c.seed = 3;
  c.epochs = epochs;
  c.pretrain_epochs = pretrain;
  return c;
}

}  // namespace

TEST(Trainer, ZeroEpochsKeepsInit) {
  const auto corpus = testing_util::small_corpus(64, 3);
  const auto r = train(quick(0), corpus);
  EXPECT_EQ(flatten(r.params.weights), flatten(ModelParams::init(ModelShape{}, 3).weights));
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_TRUE(r.pretrain_metrics.empty());
}

TEST(Trainer, ZeroEpochsAfterPretrainKeepsPretrained) {
  const auto corpus = testing_util::small_corpus(64, 3);
  const auto with = train(quick(0, 2), corpus);
  TrainConfig pre = quick(2);
  pre.soft_labels = false;
  pre.hardneg_rate = 0.0;
  EXPECT_EQ(flatten(with.params.weights), flatten(train(pre, corpus).params.weights));
  EXPECT_EQ(with.pretrain_metrics.size(), 3u);
}

TEST(Trainer, Deterministic) {
  const auto corpus = testing_util::small_corpus(128, 4);
  const auto a = train(quick(2, 1), corpus);
  const auto b = train(quick(2, 1), corpus);
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
  EXPECT_EQ(checkpoint_text(a.params), checkpoint_text(b.params));
}

TEST(Trainer, LossDescends) {
  const auto corpus = testing_util::small_corpus(500, 5);
  const auto r = train(quick(10), corpus);
  EXPECT_LT(r.metrics.back().loss, r.metrics.front().loss);
}

TEST(Trainer, PretrainPhaseIgnoresTargetSettings) {
  const auto corpus = testing_util::small_corpus(64, 6);
  TrainConfig a = quick(1, 2);
  TrainConfig b = a;
  b.soft_labels = false;
  b.hardneg_rate = 0.0;
  EXPECT_EQ(metrics_csv(train(a, corpus).pretrain_metrics), metrics_csv(train(b, corpus).pretrain_metrics));
}

TEST(Trainer, HardNegativeCountReported) {
  const auto corpus = testing_util::small_corpus(128, 7);
  TrainConfig c = quick(0);
  c.hardneg_rate = 0.0;
  EXPECT_EQ(train(c, corpus).metrics[0].h_mean, 0.0);
  c.hardneg_rate = 1.0;
  EXPECT_GT(train(c, corpus).metrics[0].h_mean, 0.0);
}

TEST(Trainer, HardLabelTargetsAreIdentity) {
  const auto p = ModelParams::init(ModelShape{}, 1);
  const auto corpus = testing_util::small_corpus(16, 1);
  const auto batch = testing_util::batch_from(p, corpus, 0.5, 1);
  TrainConfig c = quick(0);
  c.soft_labels = false;
  const auto t = step_targets(p, batch, c);
  for (std::size_t i = 0; i < t.i2t.t.rows(); ++i)
    for (std::size_t j = 0; j < t.i2t.t.cols(); ++j) EXPECT_EQ(t.i2t.t(i, j), i == j ? 1.0 : 0.0);
}

TEST(Trainer, NonFiniteLossReportsLastGood) {
  const auto corpus = testing_util::small_corpus(32, 2);
  TrainConfig c = quick(1);
  c.tau = 1e-310;  // 1/tau overflows, logits become inf
  try {
    train(c, corpus);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(flatten(e.last_good().weights), flatten(ModelParams::init(ModelShape{}, 3).weights));
  }
}

TEST(Trainer, RejectsBadInput) {
  EXPECT_THROW(train(quick(1), Corpus{}), EmptyCorpusError);
  TrainConfig c = quick(1);
  c.batch_size = 0;
  EXPECT_THROW(train(c, testing_util::small_corpus(4)), std::invalid_argument);
  c = quick(1);
  c.hardneg_rate = 2.0;
  EXPECT_THROW(train(c, testing_util::small_corpus(4)), std::invalid_argument);
  const auto other = ModelParams::init(ModelShape::full(), 1);
  EXPECT_THROW(train(quick(1), testing_util::small_corpus(4), &other), ShapeError);
}

TEST(Optimizer, ZeroGradientIsANoOp) {
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::AdamW}) {
    TrainConfig c;
    c.optimizer = kind;
    c.momentum = kind == OptimizerKind::Sgd ? 0.9 : 0.0;
    c.weight_decay = 0.0;
    std::vector<double> theta{1.0, -2.0, 3.5};
    const auto before = theta;
    Optimizer opt(c, theta.size());
    const std::vector<double> zero(3, 0.0);
    for (int k = 0; k < 5; ++k) opt.step(theta, zero);
    EXPECT_EQ(theta, before);
  }
}

TEST(Optimizer, SgdStepIsLrTimesGradient) {
  TrainConfig c;
  c.lr = 0.25;
  std::vector<double> theta{1.0, 1.0};
  Optimizer opt(c, 2);
  opt.step(theta, std::vector<double>{2.0, -4.0});
  EXPECT_DOUBLE_EQ(theta[0], 0.5);
  EXPECT_DOUBLE_EQ(theta[1], 2.0);
}

TEST(Optimizer, SmallStepsAlongNegativeGradientReduceLoss) {
  const auto p = ModelParams::init(ModelShape{}, 2);
  const auto batch = testing_util::batch_from(p, testing_util::small_corpus(32, 2), 0.5, 2);
  const auto targets = make_targets(p, batch);
  const auto base = contrastive_loss(p, batch, targets);
  for (double lr : {1e-2 / 2, 1e-2 / 4}) {
    TrainConfig c;
    c.lr = lr;
    auto theta = flatten(p.weights);
    Optimizer(c, theta.size()).step(theta, base.grad);
    ModelParams q = p;
    unflatten(q.weights, theta);
    EXPECT_LT(contrastive_loss_value(q, batch, targets), base.total);
  }
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c = TrainConfig::full();
  c.seed = 99;
  c.hardneg_rate = 0.25;
  c.negation.lexicon = {"no", "without"};
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(back.shape, ModelShape::full());
}

TEST(Metrics, HeaderAndRows) {
  std::vector<EpochMetrics> rows(2);
  rows[1].epoch = 1;
  rows[1].loss = 0.5;
  const auto csv = metrics_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,i2t,t2i,H_mean,wall_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto p = ModelParams::init(ModelShape{}, 12);
  p.tau = 0.07;
  auto flat = flatten(p.weights);
  flat[0] = 0.1 + 0.2;  // not representable in short decimal form
  flat[1] = std::numeric_limits<double>::denorm_min();
  unflatten(p.weights, flat);
  const auto back = checkpoint_from_json(nlohmann::json::parse(checkpoint_text(p)));
  EXPECT_EQ(flatten(back.weights), flat);
  EXPECT_EQ(back.tau, 0.07);
  EXPECT_EQ(back.hyper, p.hyper);
  EXPECT_EQ(back.shape, p.shape);
  EXPECT_EQ(checkpoint_text(back), checkpoint_text(p));
}

TEST(Checkpoint, RejectsForeignJson) {
  EXPECT_THROW(checkpoint_from_json(nlohmann::json::parse(R"({"format":"other"})")), std::runtime_error);
}
