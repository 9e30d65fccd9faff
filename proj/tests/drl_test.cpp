// Copyright 2026 The rmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fd_checks.hpp"
#include "rmpc/drl.hpp"

namespace rmpc {
namespace {

using testing::Gen;

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  const Mlp net({5, 400, 300, 27});
  EXPECT_TRUE(net.forward(Eigen::VectorXd::Ones(5)).isZero(0.0));
}

TEST(Mlp, OutputBiasPassesThrough) {
  Mlp net({3, 8, 4});
  net.biases()[1] = Eigen::Vector4d(1.0, -2.0, 0.5, 3.0);
  net.biases()[0] = Eigen::VectorXd::Constant(8, 0.7);
  EXPECT_EQ(net.forward(Eigen::Vector3d(1.0, 2.0, 3.0)), net.biases()[1]);
}

TEST(Mlp, ToyForwardMatchesHandChain) {
  Mlp net({4, 3, 2});
  net.weights()[0] << 0.5, -1.0, 0.25, 2.0,  //
      -0.3, 0.8, 1.0, -0.5,                 //
      1.5, 0.2, -0.7, 0.1;
  net.biases()[0] << 0.1, -0.2, 0.3;
  net.weights()[1] << 1.0, -2.0, 0.5,  //
      0.25, 0.75, -1.5;
  net.biases()[1] << -0.05, 0.4;
  const Eigen::Vector4d x(1.0, 0.5, -1.0, 2.0);
  // Hidden pre-activations 3.85, -2.1, 2.8; ReLU gives 3.85, 0, 2.8.
  const Eigen::VectorXd q = net.forward(x);
  EXPECT_NEAR(q(0), 3.85 + 0.5 * 2.8 - 0.05, 1e-12);
  EXPECT_NEAR(q(1), 0.25 * 3.85 - 1.5 * 2.8 + 0.4, 1e-12);
  EXPECT_NEAR(q(0), 5.2, 1e-12);
  EXPECT_NEAR(q(1), -2.8375, 1e-12);
}

TEST(Mlp, BatchMatchesSingle) {
  Gen gen(5);
  const Mlp net = testing::random_mlp({6, 10, 7, 4}, gen);
  const Eigen::MatrixXd x = gen.matrix(6, 9);
  const Eigen::MatrixXd q = net.forward_batch(x);
  for (Eigen::Index i = 0; i < x.cols(); ++i) EXPECT_NEAR((q.col(i) - net.forward(x.col(i))).norm(), 0.0, 1e-12);
}

TEST(Mlp, DimensionMismatchThrows) {
  const Mlp net({3, 4, 2});
  EXPECT_THROW(net.forward(Eigen::Vector2d::Zero()), DimensionError);
  EXPECT_THROW(Mlp({3}), DimensionError);
}

TEST(Mlp, FlatRoundTrips) {
  Gen gen(2);
  Mlp net = testing::random_mlp({3, 5, 2}, gen);
  EXPECT_EQ(net.parameter_count(), 3 * 5 + 5 + 5 * 2 + 2);
  const Eigen::VectorXd v = gen.vector(net.parameter_count());
  net.set_flat(v);
  EXPECT_EQ(net.flat(), v);
}

TEST(MlpGradient, ZeroErrorGivesZeroGradient) {
  Gen gen(7);
  const Mlp net = testing::random_mlp({4, 6, 3}, gen);
  TdBatch b = testing::random_batch(net, 5, gen);
  const Eigen::MatrixXd q = net.forward_batch(b.observations);
  for (Eigen::Index i = 0; i < 5; ++i) b.targets(i) = q(b.actions[static_cast<std::size_t>(i)], i);
  EXPECT_TRUE(mlp_gradient(net, b).flat.isZero(0.0));
}

TEST(MlpGradient, SingleSampleMatchesFiniteDifferences) {
  Gen gen(17);
  const Mlp net = testing::random_mlp({4, 6, 5, 3}, gen);
  const TdBatch b = testing::random_batch(net, 1, gen);
  const MlpGradient g = mlp_gradient(net, b);
  EXPECT_LT(testing::relative_error(g.flat, testing::fd_mlp_gradient(net, b)), 1e-4);
  EXPECT_NEAR(g.loss, testing::td_loss(net, b), 1e-12);
}

TEST(MlpGradient, RandomPointsMatchFiniteDifferences) {
  Gen gen(19);
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp net = testing::random_mlp({5, 8, 6, 4}, gen);
    const TdBatch b = testing::random_batch(net, 3, gen);
    EXPECT_LT(testing::relative_error(mlp_gradient(net, b).flat, testing::fd_mlp_gradient(net, b)), 1e-4) << trial;
  }
}

TEST(MlpGradient, SumOfSamplesIsSumOfGradients) {
  Gen gen(23);
  const Mlp net = testing::random_mlp({3, 7, 2}, gen);
  const TdBatch all = testing::random_batch(net, 4, gen);
  // The loss is a mean, so n * grad(batch) = sum of single-sample gradients.
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(net.parameter_count());
  for (Eigen::Index i = 0; i < 4; ++i) {
    TdBatch one;
    one.observations = all.observations.col(i);
    one.actions = {all.actions[static_cast<std::size_t>(i)]};
    one.targets = all.targets.segment(i, 1);
    sum += mlp_gradient(net, one).flat;
  }
  EXPECT_LT(testing::relative_error(4.0 * mlp_gradient(net, all).flat, sum), 1e-12);
}

TEST(MlpGradient, EmptyBatchThrows) {
  const Mlp net({2, 2});
  EXPECT_THROW(mlp_gradient(net, TdBatch{}), DimensionError);
}

Transition transition(int tag) {
  return {Eigen::VectorXd::Constant(2, tag), tag, static_cast<double>(tag), Eigen::VectorXd::Zero(2), false};
}

TEST(ReplayBuffer, IsFifoAtCapacity) {
  ReplayBuffer r(3);
  for (int i = 0; i < 5; ++i) r.push(transition(i));
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.at(0).action, 2);
  EXPECT_EQ(r.at(1).action, 3);
  EXPECT_EQ(r.at(2).action, 4);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer r(10);
  for (int i = 0; i < 10; ++i) r.push(transition(i));
  std::mt19937_64 rng(4);
  std::array<int, 10> counts{};
  const int n = 100000;
  for (const Transition* t : r.sample(n, rng)) ++counts[static_cast<std::size_t>(t->action)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 10.0) * (c - n / 10.0) / (n / 10.0);
  // 99th percentile of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 21.666);
}

TEST(ReplayBuffer, EmptySampleThrows) {
  ReplayBuffer r(4);
  std::mt19937_64 rng(1);
  EXPECT_THROW(r.sample(1, rng), LifecycleError);
}

TEST(SelectAction, GreedyWithoutExploration) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(select_action(Eigen::Vector4d(0.1, 0.9, -3.0, 0.5), 0.0, rng), 1);
}

TEST(SelectAction, TiesGoToLowestIndex) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(select_action(Eigen::Vector4d(0.2, 0.7, 0.7, 0.7), 0.0, rng), 1);
  EXPECT_EQ(select_action(Eigen::VectorXd::Zero(27), 0.0, rng), 0);
}

TEST(SelectAction, FullExplorationIsUniform) {
  std::mt19937_64 rng(99);
  const Eigen::VectorXd q = Eigen::VectorXd::LinSpaced(27, 0.0, 1.0);
  std::array<int, 27> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(q, 1.0, rng))];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 27.0) * (c - n / 27.0) / (n / 27.0);
  // 99th percentile of chi-square with 26 degrees of freedom.
  EXPECT_LT(chi2, 45.642);
}

TEST(Normalizer, FreezesAfterWarmup) {
  Normalizer n(1, 3);
  for (double x : {1.0, 2.0, 3.0, 100.0}) n.observe(Eigen::VectorXd::Constant(1, x));
  EXPECT_EQ(n.count(), 3);
  EXPECT_DOUBLE_EQ(n.mean()(0), 2.0);
  // Sample variance of {1, 2, 3} is 1.
  EXPECT_NEAR(n.normalize(Eigen::VectorXd::Constant(1, 4.0))(0), 2.0, 1e-7);
}

TEST(TdTargets, DoneTransitionsUseRewardOnly) {
  Gen gen(3);
  const Mlp target = testing::random_mlp({2, 4, 3}, gen);
  const Eigen::MatrixXd next = gen.matrix(2, 2);
  const Eigen::VectorXd y = td_targets(target, {1.5, -0.5}, next, {true, false}, 0.9);
  EXPECT_EQ(y(0), 1.5);
  EXPECT_NEAR(y(1), -0.5 + 0.9 * target.forward(next.col(1)).maxCoeff(), 1e-12);
}

TEST(TdTargets, ZeroDiscountIsRegressionOntoReward) {
  Gen gen(4);
  const Mlp target = testing::random_mlp({2, 4, 3}, gen);
  const Eigen::VectorXd y = td_targets(target, {1.0, 2.0, 3.0}, gen.matrix(2, 3), {false, false, false}, 0.0);
  EXPECT_EQ(y, Eigen::Vector3d(1.0, 2.0, 3.0));
}

TEST(SgdStep, ClipsGradientNorm) {
  Gen gen(8);
  Mlp net = testing::random_mlp({3, 5, 2}, gen);
  TdBatch b = testing::random_batch(net, 4, gen);
  b.targets *= 1000.0;
  const Eigen::VectorXd before = net.flat();
  sgd_step(net, b, 0.1, 10.0);
  EXPECT_NEAR((net.flat() - before).norm(), 0.1 * 10.0, 1e-9);
}

// Two states, two actions, deterministic. Action 1 moves to state 1, action
// 0 moves to state 0. Rewards: (s0,a0) 0, (s0,a1) 1, (s1,a0) 0, (s1,a1) 2.
TEST(DqnAgent, ConvergesToValueIterationFixedPoint) {
  constexpr double kDiscount = 0.9;
  const std::array<std::array<double, 2>, 2> reward{{{0.0, 1.0}, {0.0, 2.0}}};
  std::array<std::array<double, 2>, 2> q{};
  for (int it = 0; it < 2000; ++it) {
    auto next = q;
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) next[s][a] = reward[s][a] + kDiscount * std::max(q[a][0], q[a][1]);
    }
    q = next;
  }
  ASSERT_NEAR(q[1][1], 20.0, 1e-9);

  DqnConfig cfg;
  cfg.hidden = {};
  cfg.learning_rate = 0.05;
  cfg.discount = kDiscount;
  cfg.replay_capacity = 4;
  cfg.batch_size = 4;
  cfg.target_sync = 50;
  cfg.gradient_clip = 10.0;
  cfg.normalizer_warmup = 0;
  cfg.seed = 5;
  DqnAgent agent(2, 2, cfg);
  const auto one_hot = [](int s) { return Eigen::Vector2d(s == 0 ? 1.0 : 0.0, s == 1 ? 1.0 : 0.0); };
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) agent.remember({one_hot(s), a, reward[s][a], one_hot(a), false});
  }
  for (int i = 0; i < 10000; ++i) agent.update();
  for (int s = 0; s < 2; ++s) {
    const Eigen::VectorXd got = agent.q_values(one_hot(s));
    for (int a = 0; a < 2; ++a) EXPECT_NEAR(got(a), q[s][a], 1e-3) << s << "," << a;
  }
}

TEST(DqnAgent, EpsilonDecaysLinearly) {
  DqnConfig cfg;
  cfg.hidden = {4};
  cfg.epsilon_decay_steps = 10;
  DqnAgent agent(2, 3, cfg);
  EXPECT_EQ(agent.epsilon(), 1.0);
  for (int i = 0; i < 5; ++i) agent.act(Eigen::Vector2d::Zero());
  EXPECT_NEAR(agent.epsilon(), 1.0 + 0.5 * (0.05 - 1.0), 1e-12);
  for (int i = 0; i < 5; ++i) agent.act(Eigen::Vector2d::Zero());
  EXPECT_EQ(agent.epsilon(), 0.05);
}

TEST(DqnAgent, TargetSyncsOnSchedule) {
  DqnConfig cfg;
  cfg.hidden = {4};
  cfg.batch_size = 2;
  cfg.replay_capacity = 8;
  cfg.target_sync = 3;
  cfg.learning_rate = 0.1;
  DqnAgent agent(2, 2, cfg);
  EXPECT_FALSE(agent.ready());
  EXPECT_THROW(agent.update(), LifecycleError);
  agent.remember({Eigen::Vector2d(1, 0), 0, 1.0, Eigen::Vector2d(0, 1), true});
  agent.remember({Eigen::Vector2d(0, 1), 1, -1.0, Eigen::Vector2d(1, 0), true});
  ASSERT_TRUE(agent.ready());
  const Eigen::VectorXd initial = agent.target().flat();
  agent.update();
  agent.update();
  EXPECT_EQ(agent.target().flat(), initial);
  agent.update();
  EXPECT_EQ(agent.target().flat(), agent.online().flat());
}

TEST(DqnConfig, Validation) {
  DqnConfig cfg;
  cfg.discount = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = DqnConfig{};
  cfg.replay_capacity = 10;
  cfg.batch_size = 64;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "dqn.replay_capacity");
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::string path = (std::filesystem::temp_directory_path() /
                      ("rmpc_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + ".bin"))
                         .string();
  void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(CheckpointTest, RoundTripPreservesPolicy) {
  Gen gen(31);
  QPolicy p{testing::random_mlp({4, 6, 3}, gen), Normalizer(4, 2)};
  p.normalizer.observe(gen.vector(4));
  p.normalizer.observe(gen.vector(4));
  save_checkpoint(path, p, 0xabcdef);
  const QPolicy back = load_checkpoint(path, 0xabcdef);
  EXPECT_EQ(back.net.sizes(), p.net.sizes());
  EXPECT_EQ(back.net.flat(), p.net.flat());
  const Eigen::VectorXd o = gen.vector(4);
  EXPECT_EQ(back.normalizer.normalize(o), p.normalizer.normalize(o));
  EXPECT_EQ(back.greedy(o), p.greedy(o));
}

TEST_F(CheckpointTest, HashMismatchIsRejected) {
  QPolicy p{Mlp({2, 2}), Normalizer(2, 0)};
  save_checkpoint(path, p, 1);
  EXPECT_THROW(load_checkpoint(path, 2), ConfigError);
}

TEST_F(CheckpointTest, GarbageIsRejected) {
  std::ofstream(path) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(path, 0), std::runtime_error);
}

}  // namespace
}  // namespace rmpc
