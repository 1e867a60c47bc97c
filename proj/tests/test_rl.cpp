#include "shepherd/rl.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace shepherd {
namespace {

TEST(DrivingReward, ControlPenaltyOnlyInsideGoal) {
  Regions regions;
  RewardGains gains;
  const double r = driving_reward({1.0, 0.0}, {9.0, 9.0}, {1.0, 0.0}, regions, gains);
  EXPECT_NEAR(r, -0.02, 1e-15);
}

TEST(DrivingReward, HandComputedShapedCase) {
  Regions regions;
  RewardGains gains;
  const double r = driving_reward({10.0, 0.0}, {12.0, 0.0}, {1.0, 0.0}, regions, gains);
  EXPECT_NEAR(r, -(0.05 * 2.0 + 0.1 * 5.0 + 0.02 * 1.0), 1e-15);
}

TEST(DrivingReward, ZeroBeyondInitCircleWithZeroControl) {
  Regions regions;
  RewardGains gains;
  EXPECT_DOUBLE_EQ(driving_reward({30.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, regions, gains), 0.0);
}

TEST(DrivingReward, NonPositiveEverywhere) {
  Regions regions;
  RewardGains gains;
  RngStream rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 t{rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0)};
    const Vec2 h{rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0)};
    const Vec2 u{rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
    EXPECT_LE(driving_reward(t, h, u, regions, gains), 0.0);
  }
}

TEST(RewardGains, OrderingEnforced) {
  RewardGains gains;
  EXPECT_NO_THROW(gains.validate());
  gains.k_approach = 0.2;  // larger than k_steering
  EXPECT_THROW(gains.validate(), ConfigError);
}

TEST(ResetEpisode, CurriculumProbabilityExtremes) {
  const ObstacleSpec spec;
  Regions regions;
  WorldParams params;
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const ResetResult r = reset_episode(0.0, spec, regions, params, rng);
    EXPECT_FALSE(in_cone_region(r.state.targets[0], r.field.obstacles[0].center, regions));
  }
  for (int i = 0; i < 1000; ++i) {
    const ResetResult r = reset_episode(1.0, spec, regions, params, rng);
    EXPECT_TRUE(in_cone_region(r.state.targets[0], r.field.obstacles[0].center, regions));
  }
}

TEST(ResetEpisode, CurriculumFrequencyNearHalf) {
  const ObstacleSpec spec;
  Regions regions;
  WorldParams params;
  RngStream rng(4);
  int in_cone = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const ResetResult r = reset_episode(0.5, spec, regions, params, rng);
    if (in_cone_region(r.state.targets[0], r.field.obstacles[0].center, regions)) ++in_cone;
  }
  const double freq = static_cast<double>(in_cone) / n;
  EXPECT_GE(freq, 0.45);
  EXPECT_LE(freq, 0.55);
}

TEST(ResetEpisode, HerderNeverInCone) {
  const ObstacleSpec spec;
  Regions regions;
  WorldParams params;
  RngStream rng(5);
  for (int i = 0; i < 500; ++i) {
    const ResetResult r = reset_episode(0.5, spec, regions, params, rng);
    EXPECT_FALSE(in_cone_region(r.state.herders[0], r.field.obstacles[0].center, regions));
    EXPECT_GT(signed_distance_min(r.state.herders[0], r.field), 0.0);
    EXPECT_GT(signed_distance_min(r.state.targets[0], r.field), 0.0);
  }
}

RolloutBuffer make_buffer_from(const std::vector<double>& rewards,
                               const std::vector<double>& values,
                               const std::vector<int>& dones) {
  RolloutBuffer buffer(static_cast<int>(rewards.size()), 1);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    Transition tr;
    tr.reward = rewards[t];
    tr.value = values[t];
    tr.done = dones[t] != 0;
    buffer.put(0, static_cast<int>(t), tr);
  }
  return buffer;
}

TEST(ComputeGae, ZeroDiscountReducesToTdError) {
  PpoConfig config;
  config.discount = 0.0;
  config.gae_lambda = 0.95;
  RolloutBuffer buffer = make_buffer_from({1.0, -2.0, 0.5}, {0.3, 0.1, -0.2}, {0, 0, 0});
  Eigen::VectorXd bootstrap(1);
  bootstrap << 0.7;
  compute_gae(buffer, bootstrap, config);
  EXPECT_NEAR(buffer.advantages(0), 1.0 - 0.3, 1e-15);
  EXPECT_NEAR(buffer.advantages(1), -2.0 - 0.1, 1e-15);
  EXPECT_NEAR(buffer.advantages(2), 0.5 + 0.2, 1e-15);
}

TEST(ComputeGae, HandUnrolledThreeStepEpisode) {
  PpoConfig config;
  config.discount = 0.9;
  config.gae_lambda = 0.8;
  RolloutBuffer buffer = make_buffer_from({1.0, 2.0, 3.0}, {0.5, 1.5, 2.5}, {0, 0, 1});
  Eigen::VectorXd bootstrap(1);
  bootstrap << 9.9;  // masked by the final done
  compute_gae(buffer, bootstrap, config);
  const double d2 = 3.0 - 2.5;
  const double d1 = 2.0 + 0.9 * 2.5 - 1.5;
  const double d0 = 1.0 + 0.9 * 1.5 - 0.5;
  const double a2 = d2;
  const double a1 = d1 + 0.9 * 0.8 * a2;
  const double a0 = d0 + 0.9 * 0.8 * a1;
  EXPECT_NEAR(buffer.advantages(2), a2, 1e-15);
  EXPECT_NEAR(buffer.advantages(1), a1, 1e-15);
  EXPECT_NEAR(buffer.advantages(0), a0, 1e-15);
  EXPECT_NEAR(buffer.returns(0), a0 + 0.5, 1e-15);
}

TEST(ComputeGae, LambdaOneEqualsDiscountedMonteCarlo) {
  PpoConfig config;
  config.discount = 0.97;
  config.gae_lambda = 1.0;
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 20;
    std::vector<double> rewards(T);
    std::vector<double> values(T);
    std::vector<int> dones(T, 0);
    for (int t = 0; t < T; ++t) {
      rewards[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
      values[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
    }
    dones[static_cast<std::size_t>(T - 1)] = 1;  // full episode
    RolloutBuffer buffer = make_buffer_from(rewards, values, dones);
    Eigen::VectorXd bootstrap(1);
    bootstrap << rng.uniform(-1.0, 1.0);
    compute_gae(buffer, bootstrap, config);
    for (int t = 0; t < T; ++t) {
      double ret = 0.0;
      for (int k = T - 1; k >= t; --k) ret = rewards[static_cast<std::size_t>(k)] + 0.97 * ret;
      EXPECT_NEAR(buffer.advantages(t), ret - values[static_cast<std::size_t>(t)], 1e-10);
    }
  }
}

TEST(ComputeGae, NoDonesEqualsReversedCumulativeSumAtGammaLambdaOne) {
  PpoConfig config;
  config.discount = 1.0;
  config.gae_lambda = 1.0;
  RngStream rng(7);
  const int T = 64;
  std::vector<double> rewards(T);
  std::vector<double> values(T);
  for (int t = 0; t < T; ++t) {
    rewards[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
    values[static_cast<std::size_t>(t)] = rng.uniform(-1.0, 1.0);
  }
  RolloutBuffer buffer = make_buffer_from(rewards, values, std::vector<int>(T, 0));
  Eigen::VectorXd bootstrap(1);
  const double tail = 0.37;
  bootstrap << tail;
  compute_gae(buffer, bootstrap, config);
  double acc = tail;
  std::vector<double> expected(T);
  for (int t = T - 1; t >= 0; --t) {
    acc = rewards[static_cast<std::size_t>(t)] - values[static_cast<std::size_t>(t)] + acc;
    expected[static_cast<std::size_t>(t)] = acc;
    acc += values[static_cast<std::size_t>(t)];
  }
  for (int t = 0; t < T; ++t) EXPECT_NEAR(buffer.advantages(t), expected[static_cast<std::size_t>(t)], 1e-10);
}

TEST(StandardizeAdvantages, MeanZeroStdOne) {
  RngStream rng(8);
  RolloutBuffer buffer(128, 2);
  for (int e = 0; e < 2; ++e)
    for (int t = 0; t < 128; ++t) {
      Transition tr;
      tr.reward = rng.uniform(-2.0, 1.0);
      tr.value = rng.uniform(-1.0, 1.0);
      buffer.put(e, t, tr);
    }
  Eigen::VectorXd bootstrap = Eigen::VectorXd::Zero(2);
  PpoConfig config;
  compute_gae(buffer, bootstrap, config);
  standardize_advantages(buffer);
  EXPECT_LE(std::abs(buffer.advantages.mean()), 1e-9);
  const double var = buffer.advantages.array().square().mean();
  EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
}

struct TinyBatch {
  GaussianPolicy policy;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd act;
  Eigen::VectorXd old_logp;
  Eigen::VectorXd adv;
  Eigen::VectorXd ret;
};

TinyBatch make_tiny_batch(std::uint64_t seed, bool behavior_logp) {
  RngStream rng(seed);
  TinyBatch b;
  b.policy = make_policy(6, 2, 2, 8, 25.0, 8.0, rng);
  b.policy.log_std << std::log(0.9), std::log(1.2);
  const int n = 4;
  b.obs.resize(n, 6);
  b.act.resize(n, 2);
  b.old_logp.resize(n);
  b.adv.resize(n);
  b.ret.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 6; ++k) b.obs(i, k) = rng.uniform(-1.0, 1.0);
    for (int k = 0; k < 2; ++k) b.act(i, k) = rng.uniform(-1.5, 1.5);
    b.adv(i) = rng.uniform(-2.0, 2.0);
    b.ret(i) = rng.uniform(-3.0, 0.0);
    if (behavior_logp) {
      b.old_logp(i) = gaussian_log_prob(b.act.row(i).transpose(),
                                        forward(b.policy.actor, b.obs.row(i).transpose()),
                                        b.policy.log_std);
    } else {
      b.old_logp(i) = rng.uniform(-4.0, -1.0);
    }
  }
  return b;
}

TEST(PpoLoss, RatioOneAtBehaviorParameters) {
  const TinyBatch b = make_tiny_batch(11, /*behavior_logp=*/true);
  PpoConfig config;
  const MinibatchLoss loss =
      ppo_minibatch_loss(b.policy, b.obs, b.act, b.old_logp, b.adv, b.ret, config, false);
  EXPECT_NEAR(loss.policy, -b.adv.mean(), 1e-12);
  EXPECT_DOUBLE_EQ(loss.clip_fraction, 0.0);
}

TEST(PpoLoss, ZeroAdvantagesZeroPolicyGradient) {
  TinyBatch b = make_tiny_batch(12, true);
  b.adv.setZero();
  PpoConfig config;
  config.entropy_coef = 1e-12;  // isolate the policy term
  config.value_coef = 1e-12;
  const MinibatchLoss loss =
      ppo_minibatch_loss(b.policy, b.obs, b.act, b.old_logp, b.adv, b.ret, config, true);
  Eigen::VectorXd flat = loss.grads.flatten(b.policy);
  // actor gradients live in the leading segment; with zero advantages only
  // value/entropy terms contribute, both suppressed here
  const Eigen::Index actor_size = b.policy.actor.parameter_count();
  EXPECT_LT(flat.head(actor_size).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PpoLoss, GradientMatchesFiniteDifferences) {
  const TinyBatch b = make_tiny_batch(13, /*behavior_logp=*/false);
  PpoConfig config;
  GaussianPolicy policy = b.policy;
  const MinibatchLoss analytic =
      ppo_minibatch_loss(policy, b.obs, b.act, b.old_logp, b.adv, b.ret, config, true);
  const Eigen::VectorXd grad = analytic.grads.flatten(policy);
  const Eigen::VectorXd p0 = gather_parameters(policy);
  const double h = 1e-6;
  const Eigen::Index stride = std::max<Eigen::Index>(1, p0.size() / 300);
  for (Eigen::Index i = 0; i < p0.size(); i += stride) {
    Eigen::VectorXd pp = p0;
    Eigen::VectorXd pm = p0;
    pp(i) += h;
    pm(i) -= h;
    GaussianPolicy probe = policy;
    scatter_parameters(probe, pp);
    const double lp =
        ppo_minibatch_loss(probe, b.obs, b.act, b.old_logp, b.adv, b.ret, config, false).total;
    scatter_parameters(probe, pm);
    const double lm =
        ppo_minibatch_loss(probe, b.obs, b.act, b.old_logp, b.adv, b.ret, config, false).total;
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max(1.0, std::abs(fd));
    ASSERT_NEAR(grad(i), fd, 1e-4 * scale) << "param " << i;
  }
  // log_std entries sit at the tail; check them explicitly
  for (Eigen::Index i = p0.size() - 2; i < p0.size(); ++i) {
    Eigen::VectorXd pp = p0;
    Eigen::VectorXd pm = p0;
    pp(i) += h;
    pm(i) -= h;
    GaussianPolicy probe = policy;
    scatter_parameters(probe, pp);
    const double lp =
        ppo_minibatch_loss(probe, b.obs, b.act, b.old_logp, b.adv, b.ret, config, false).total;
    scatter_parameters(probe, pm);
    const double lm =
        ppo_minibatch_loss(probe, b.obs, b.act, b.old_logp, b.adv, b.ret, config, false).total;
    const double fd = (lp - lm) / (2 * h);
    ASSERT_NEAR(grad(i), fd, 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST(PpoUpdate, ClipFractionWithinRangeAndEntropyReported) {
  RngStream rng(14);
  GaussianPolicy policy = make_policy(6, 2, 2, 8, 25.0, 8.0, rng);
  PpoConfig config;
  config.rollout_length = 64;
  config.num_envs = 2;
  config.minibatches = 8;
  config.epochs = 3;
  RolloutBuffer buffer(config.rollout_length, config.num_envs);
  for (int e = 0; e < config.num_envs; ++e)
    for (int t = 0; t < config.rollout_length; ++t) {
      Transition tr;
      for (auto& o : tr.observation) o = rng.uniform(-1.0, 1.0);
      Eigen::VectorXd obs(6);
      for (int k = 0; k < 6; ++k) obs(k) = tr.observation[static_cast<std::size_t>(k)];
      const Eigen::Vector2d mean = forward(policy.actor, obs);
      const auto [z0, z1] = rng.normal_pair();
      const Eigen::Vector2d act(mean(0) + z0, mean(1) + z1);
      tr.action = {act(0), act(1)};
      tr.log_prob = gaussian_log_prob(act, mean, policy.log_std);
      tr.value = forward(policy.critic, obs)(0);
      tr.reward = rng.uniform(-1.0, 0.0);
      tr.done = (t % 50) == 49;
      buffer.put(e, t, tr);
    }
  Eigen::VectorXd bootstrap = Eigen::VectorXd::Zero(config.num_envs);
  compute_gae(buffer, bootstrap, config);
  AdamState adam = AdamState::create(policy.parameter_count(), config.learning_rate);
  RngStream shuffle(15);
  const PpoUpdateReport report = ppo_update(policy, buffer, adam, config, shuffle);
  EXPECT_GE(report.clip_fraction, 0.0);
  EXPECT_LE(report.clip_fraction, 1.0);
  EXPECT_TRUE(std::isfinite(report.policy_loss));
  EXPECT_GT(report.entropy, 0.0);
  EXPECT_GT(adam.step_count, 0);
}

TEST(Train, ZeroEpisodesReturnsInitializedPolicyUnchanged) {
  TrainSetup setup;
  setup.ppo.total_episodes = 0;
  setup.seed = 99;
  const TrainResult result = train(setup);
  RngStream init_rng(RngStream::derive(99, 0x494e4954ULL));
  const GaussianPolicy expected = make_policy(6, 2, 5, 64, setup.regions.init_radius,
                                              setup.world.v_herder, init_rng);
  EXPECT_EQ(gather_parameters(result.policy), gather_parameters(expected));
  EXPECT_EQ(result.updates, 0);
}

TEST(Train, DeterministicSmallRunsProduceIdenticalPolicies) {
  TrainSetup setup;
  setup.ppo.rollout_length = 256;
  setup.ppo.num_envs = 2;
  setup.ppo.minibatches = 8;
  setup.ppo.epochs = 2;
  setup.ppo.episode_cap = 120;
  setup.ppo.total_episodes = 6;
  setup.seed = 7;
  const TrainResult a = train(setup);
  const TrainResult b = train(setup);
  EXPECT_EQ(gather_parameters(a.policy), gather_parameters(b.policy));
  EXPECT_EQ(a.env_steps, b.env_steps);
  EXPECT_EQ(a.episodes_completed, b.episodes_completed);
  EXPECT_GT(a.updates, 0);
}

TEST(Train, EpisodeLogRowsAreConsistent) {
  TrainSetup setup;
  setup.ppo.rollout_length = 256;
  setup.ppo.num_envs = 2;
  setup.ppo.minibatches = 8;
  setup.ppo.epochs = 2;
  setup.ppo.episode_cap = 100;
  setup.ppo.total_episodes = 4;
  setup.seed = 21;
  std::vector<EpisodeLogRow> rows;
  TrainHooks hooks;
  hooks.on_episode = [&](const EpisodeLogRow& r) { rows.push_back(r); };
  const TrainResult result = train(setup, hooks);
  EXPECT_GE(static_cast<std::int64_t>(rows.size()), result.episodes_completed);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].episode, static_cast<std::int64_t>(i));
    EXPECT_LE(rows[i].cumulative_reward, 0.0);
    EXPECT_GE(rows[i].length, 1);
    EXPECT_LE(rows[i].length, setup.ppo.episode_cap);
  }
}

}  // namespace
}  // namespace shepherd
