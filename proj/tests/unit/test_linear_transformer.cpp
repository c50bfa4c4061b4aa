#include "iclab/checkpoint.hpp"
#include "iclab/gd_engine.hpp"
#include "iclab/linear_transformer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace iclab::tf {
namespace {

using data::LabeledPrompt;
using data::PriorConfig;

TransformerParams random_params(int d, int L, Rng& rng, double scale) {
  TransformerParams p = TransformerParams::zeros(d, L);
  p.w_e = Mat::Identity(d + 1, d + 1);
  for (Eigen::Index i = 0; i < p.w_e.size(); ++i) p.w_e.data()[i] += scale * rng.normal();
  for (auto& layer : p.layers)
    for (Mat* m : {&layer.p, &layer.q})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = scale * rng.normal();
  return p;
}

std::vector<LabeledPrompt> random_batch(int d, int n, int count, Rng& rng) {
  const PriorConfig prior = PriorConfig::e1(d, 0.5);
  std::vector<LabeledPrompt> batch;
  for (int i = 0; i < count; ++i) {
    const auto task = data::sample_task(prior, rng);
    batch.push_back(data::sample_train_prompt(task, n, rng));
  }
  return batch;
}

TEST(MaskMatrix, IsIdempotentAndKillsQuery) {
  const Mat m = MaskMatrix{5}.dense();
  EXPECT_EQ(m * m, m);
  EXPECT_EQ((m * Vec::Unit(6, 5)).norm(), 0.0);
}

TEST(Forward, ZeroAttentionReturnsEmbeddedPrompt) {
  Rng rng(1);
  TransformerParams p = random_params(3, 2, rng, 0.3);
  for (auto& layer : p.layers) layer.p.setZero();
  const auto batch = random_batch(3, 5, 1, rng);
  const ForwardTrace tr = forward(p, batch[0].prompt);
  const Mat expect = p.w_e * batch[0].prompt.matrix();
  EXPECT_EQ(tr.z_layers.back(), expect);
  EXPECT_EQ(tr.output(), -expect(3, 5));
}

TEST(Forward, EmptyContextLeavesQueryUntouched) {
  Rng rng(2);
  const TransformerParams p = random_params(4, 3, rng, 0.5);
  const auto batch = random_batch(4, 0, 1, rng);
  const ForwardTrace tr = forward(p, batch[0].prompt);
  EXPECT_EQ(tr.output(), -(p.w_e * batch[0].prompt.matrix())(4, 0));
}

TEST(Forward, TraceOutputsAreNegatedCorner) {
  Rng rng(3);
  const TransformerParams p = random_params(3, 3, rng, 0.3);
  const auto batch = random_batch(3, 4, 1, rng);
  const ForwardTrace tr = forward(p, batch[0].prompt);
  ASSERT_EQ(tr.z_layers.size(), 4u);
  for (std::size_t l = 0; l < tr.z_layers.size(); ++l) EXPECT_EQ(tr.y_hat[l], -tr.z_layers[l](3, 4));
  EXPECT_EQ(predict(p, batch[0].prompt.matrix()), tr.output());
}

TEST(Forward, RejectsDimensionMismatch) {
  Rng rng(4);
  const TransformerParams p = random_params(3, 1, rng, 0.1);
  const auto batch = random_batch(4, 2, 1, rng);
  try {
    forward(p, batch[0].prompt);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Forward, QueryLabelSlotNeverReachesContextColumns) {
  Rng rng(5);
  const TransformerParams p = random_params(3, 3, rng, 0.4);
  const auto batch = random_batch(3, 6, 1, rng);
  Mat z = batch[0].prompt.matrix();
  const ForwardTrace a = forward(p, z);
  z(3, 6) = 0.75;
  const ForwardTrace b = forward(p, z);
  for (std::size_t l = 0; l < a.z_layers.size(); ++l)
    EXPECT_EQ(a.z_layers[l].leftCols(6), b.z_layers[l].leftCols(6));
}

TEST(Forward, GdConstructedOutputIsLinearInQuery) {
  Rng rng(6);
  const auto cfg = gd::GdConfig::scalar(rng.normal_vector(3), {0.05, 0.02, 0.04});
  const TransformerParams p = gd::construct_gd_transformer(cfg, 3, 5);
  const auto batch = random_batch(3, 5, 1, rng);
  Mat za = batch[0].prompt.matrix(), zb = za, zab = za;
  const Vec xa = rng.normal_vector(3), xb = rng.normal_vector(3);
  za.col(5).head(3) = xa;
  zb.col(5).head(3) = xb;
  zab.col(5).head(3) = xa + xb;
  const auto ta = forward(p, za), tb = forward(p, zb), tab = forward(p, zab);
  for (std::size_t l = 0; l < ta.y_hat.size(); ++l)
    EXPECT_NEAR(tab.y_hat[l], ta.y_hat[l] + tb.y_hat[l], 1e-12);
}

TEST(Forward, ImplicitRecurrenceDiffersFromPreviousState) {
  Rng rng(7);
  const TransformerParams p = random_params(3, 2, rng, 0.3);
  const auto batch = random_batch(3, 4, 1, rng);
  const double a = forward(p, batch[0].prompt).output();
  const double b = forward(p, batch[0].prompt, Recurrence::implicit_current_state).output();
  EXPECT_GT(std::abs(a - b), 1e-6);
}

TEST(LossAndGrads, MatchCentralFiniteDifferences) {
  struct Case { int d, n, L; };
  const Case cases[] = {{3, 4, 2}, {2, 3, 1}, {4, 6, 3}, {1, 2, 2}, {3, 5, 3}, {4, 1, 1}};
  Rng rng(8);
  for (const Case& cs : cases) {
    const TransformerParams p = random_params(cs.d, cs.L, rng, 0.3);
    const auto batch = random_batch(cs.d, cs.n, 2, rng);
    const LossGrad lg = loss_and_grads(p, batch);
    const Vec g = lg.grads.flatten();
    Vec theta = p.flatten();
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      TransformerParams q = p;
      const double orig = theta[i];
      theta[i] = orig + h;
      q.assign_flat(theta);
      const double up = loss_and_grads(q, batch).loss;
      theta[i] = orig - h;
      q.assign_flat(theta);
      const double down = loss_and_grads(q, batch).loss;
      theta[i] = orig;
      const double fd = (up - down) / (2 * h);
      ASSERT_NEAR(g[i], fd, std::max(1e-5, 1e-3 * std::abs(g[i])))
          << "d=" << cs.d << " n=" << cs.n << " L=" << cs.L << " entry " << i;
    }
  }
}

TEST(LossAndGrads, ZeroAtExactFit) {
  Rng rng(9);
  const auto base = random_batch(3, 4, 1, rng);
  std::vector<LabeledPrompt> batch{base[0], base[0]};
  TransformerParams p = TransformerParams::zeros(3, 2);
  p.w_e.setIdentity();
  const Vec xq = base[0].prompt.query();
  p.w_e.block(3, 0, 1, 3) = (-base[0].y_query * xq / xq.squaredNorm()).transpose();
  const LossGrad lg = loss_and_grads(p, batch);
  EXPECT_NEAR(lg.loss, 0.0, 1e-28);
  EXPECT_NEAR(lg.grads.flatten().cwiseAbs().maxCoeff(), 0.0, 1e-14);
}

TEST(LossAndGrads, DuplicatingTheBatchChangesNothing) {
  Rng rng(10);
  const TransformerParams p = random_params(3, 2, rng, 0.3);
  const auto batch = random_batch(3, 4, 3, rng);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const LossGrad a = loss_and_grads(p, batch);
  const LossGrad b = loss_and_grads(p, doubled);
  EXPECT_NEAR(a.loss, b.loss, 1e-14 * (1 + a.loss));
  EXPECT_LE((a.grads.flatten() - b.grads.flatten()).norm(), 1e-13 * (1 + a.grads.flatten().norm()));
}

TEST(LossAndGrads, NonFiniteLossNamesBatchIndex) {
  Rng rng(11);
  TransformerParams p = random_params(2, 1, rng, 0.1);
  auto batch = random_batch(2, 3, 3, rng);
  Mat z = batch[2].prompt.matrix();
  z(0, 0) = std::numeric_limits<double>::infinity();
  batch[2].prompt = data::PromptMatrix(z);
  try {
    loss_and_grads(p, batch);
    FAIL() << "expected a numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("batch index 2"), std::string::npos);
  }
}

TEST(Train, ZeroStepsReturnsInit) {
  const TransformerParams init = TransformerParams::random_init(3, 2, 1);
  TrainConfig cfg;
  cfg.steps = 0;
  const TrainResult r = train(init, cfg, PriorConfig::e1(3, 0.1));
  EXPECT_EQ(r.params.flatten(), init.flatten());
  EXPECT_TRUE(r.history.empty());
}

TEST(Train, DeterministicAndIndependentOfWorkers) {
  const TransformerParams init = TransformerParams::random_init(4, 2, 5);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.batch_size = 70;
  cfg.n = 8;
  cfg.seed = 3;
  const PriorConfig prior = PriorConfig::e1(4, 0.1);
  const TrainResult a = train(init, cfg, prior);
  const TrainResult b = train(init, cfg, prior);
  cfg.workers = 3;
  const TrainResult c = train(init, cfg, prior);
  ASSERT_EQ(a.history.size(), 30u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss, b.history[i].loss);
    EXPECT_EQ(a.history[i].loss, c.history[i].loss);
  }
  EXPECT_EQ(a.params.flatten(), c.params.flatten());
}

TEST(Train, LossDecreasesOnSmallProblem) {
  const TransformerParams init = TransformerParams::random_init(5, 1, 2);
  TrainConfig cfg;
  cfg.steps = 600;
  cfg.batch_size = 64;
  cfg.n = 10;
  cfg.base_lr = 3e-3;
  cfg.lr_halving_period = 0;
  const TrainResult r = train(init, cfg, PriorConfig::e1(5, 0.1));
  double head = 0, tail = 0;
  for (int i = 0; i < 100; ++i) {
    head += r.history[static_cast<std::size_t>(i)].loss;
    tail += r.history[r.history.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(tail, 0.9 * head);
}

TEST(Train, LearningRateHalves) {
  TrainConfig cfg;
  cfg.base_lr = 1e-3;
  cfg.lr_halving_period = 10;
  EXPECT_EQ(cfg.lr_at(9), 1e-3);
  EXPECT_EQ(cfg.lr_at(10), 5e-4);
  EXPECT_EQ(cfg.lr_at(25), 2.5e-4);
}

TEST(Train, FrozenEmbeddingStaysPut) {
  const TransformerParams init = TransformerParams::random_init(3, 1, 4);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 8;
  cfg.n = 4;
  cfg.train_embedding = false;
  const TrainResult r = train(init, cfg, PriorConfig::e1(3, 0.1));
  EXPECT_EQ(r.params.w_e, init.w_e);
  EXPECT_NE(r.params.layers[0].p, init.layers[0].p);
}

TEST(Train, BlowUpIsReported) {
  TransformerParams init = TransformerParams::random_init(3, 2, 4, 1.0);
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.batch_size = 8;
  cfg.n = 30;
  cfg.optimizer = Optimizer::sgd;
  cfg.base_lr = 1e3;
  cfg.grad_clip_norm = 0;
  try {
    train(init, cfg, PriorConfig::e1(3, 0.1));
    FAIL() << "expected training to fail";
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::diverged || e.kind() == ErrorKind::numeric) << e.what();
  }
}

TEST(Evaluate, PerfectAndFlippedModels) {
  const PriorConfig prior = PriorConfig::e1(3, 0.0);
  Rng rng(12);
  std::vector<LabeledPrompt> prompts;
  for (int i = 0; i < 200; ++i) {
    const auto task = data::sample_task(prior, rng);
    prompts.push_back(data::sample_train_prompt(task, 2, rng));
  }
  TransformerParams p = TransformerParams::zeros(3, 1);
  p.w_e.setIdentity();
  p.w_e(3, 0) = -1.0;
  EXPECT_EQ(evaluate(p, prompts).accuracy, 1.0);
  p.w_e(3, 0) = 1.0;
  EXPECT_EQ(evaluate(p, prompts).accuracy, 0.0);
  p.w_e(3, 0) = 0.0;
  EXPECT_EQ(evaluate(p, prompts).accuracy, 0.0);
}

TEST(Evaluate, UninformativeOutputsScoreOneHalf) {
  const PriorConfig prior = PriorConfig::e1(3, 0.0);
  Rng rng(13);
  std::vector<LabeledPrompt> prompts;
  for (int i = 0; i < 100000; ++i) {
    const auto task = data::sample_task(prior, rng);
    prompts.push_back(data::sample_train_prompt(task, 0, rng));
  }
  TransformerParams p = TransformerParams::zeros(3, 1);
  p.w_e.setIdentity();
  p.w_e(3, 1) = -1.0;
  const double acc = evaluate(p, prompts).accuracy;
  EXPECT_GE(acc, 0.497);
  EXPECT_LE(acc, 0.503);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(14);
  const TransformerParams p = random_params(5, 3, rng, 1.0 / 3.0);
  const auto path = std::filesystem::temp_directory_path() / "iclab_roundtrip.ckpt";
  save_checkpoint(path, p);
  const TransformerParams q = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(p.flatten(), q.flatten());
  EXPECT_EQ(q.dim(), 5);
  EXPECT_EQ(q.depth(), 3);
}

TEST(Checkpoint, MalformedFileIsAnIoError) {
  const auto path = std::filesystem::temp_directory_path() / "iclab_bad.ckpt";
  std::ofstream(path) << "iclab-checkpoint\nformat_version 1\nd 2\nL 1\nw_e\n0x1p+0 oops\n";
  try {
    load_checkpoint(path);
    FAIL() << "expected an io error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
  EXPECT_EQ(checkpoint_name(20, 40, 2), "tf_d20_n40_L2.ckpt");
}

}  // namespace
}  // namespace iclab::tf
