#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "shepherd/control.hpp"
#include "shepherd/dynamics.hpp"
#include "shepherd/geometry.hpp"
#include "shepherd/metrics.hpp"
#include "shepherd/nn.hpp"
#include "shepherd/rng.hpp"

namespace shepherd {

// Substream tags so herder-side draws never collide with target noise,
// which uses plain target indices as the agent tag.
inline constexpr std::uint64_t kHerderStreamTag = 1ULL << 32;
inline constexpr std::uint64_t kActionStreamTag = 1ULL << 33;

struct RewardGains {
  double k_approach = 5e-2;
  double k_steering = 1e-1;
  double k_control = 2e-2;

  void validate() const {
    if (!(k_steering > k_approach && k_approach > k_control && k_control > 0.0))
      throw ConfigError("reward gains must satisfy k_steering > k_approach > k_control > 0");
  }
};

struct PpoConfig {
  double discount = 0.98;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_clip_norm = 0.5;
  int rollout_length = 4096;  // steps per environment per update
  int num_envs = 8;
  int epochs = 10;
  int minibatches = 128;
  double learning_rate = 5e-4;
  double p_obstacle = 0.5;  // curriculum: chance the target starts in the cone
  int episode_cap = 2000;
  std::int64_t total_episodes = 100000;
  int checkpoint_every = 50;  // updates between checkpoint callbacks

  void validate() const {
    if (!(discount > 0.0 && gae_lambda > 0.0 && entropy_coef > 0.0 && value_coef > 0.0 &&
          grad_clip_norm > 0.0 && rollout_length > 0 && num_envs > 0 && epochs > 0 &&
          minibatches > 0 && learning_rate > 0.0 && episode_cap > 0 &&
          total_episodes >= 0 && checkpoint_every > 0))
      throw ConfigError("ppo config fields must be positive");
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip must lie in (0,1)");
    if (!(p_obstacle >= 0.0 && p_obstacle <= 1.0))
      throw ConfigError("p_obstacle must lie in [0,1]");
    if ((static_cast<std::int64_t>(rollout_length) * num_envs) % minibatches != 0)
      throw ConfigError("rollout_length * num_envs must divide evenly into minibatches");
  }
};

// Shaped reward: approach and radial-progress terms active while the target
// is between the goal disc and the init circle, plus an always-on control
// effort penalty. Non-positive by construction.
inline double driving_reward(Vec2 target, Vec2 herder, Vec2 control, const Regions& regions,
                             const RewardGains& gains) {
  const double tr = norm(target);
  double r = -gains.k_control * norm(control);
  if (tr > regions.goal_radius && tr <= regions.init_radius) {
    r -= gains.k_approach * distance(target, herder);
    r -= gains.k_steering * (tr - regions.goal_radius);
  }
  return r;
}

struct ResetResult {
  WorldState state;
  ObstacleField field;
};

// Curriculum initialization for the nominal one-herder/one-target scene:
// one sampled obstacle; with probability p_obstacle the target starts in the
// cone sector behind it (herder outside the cone), otherwise both agents
// start uniformly outside the cone.
inline ResetResult reset_episode(double p_obstacle, const ObstacleSpec& spec,
                                 const Regions& regions, const WorldParams& params,
                                 RngStream& rng) {
  ResetResult out;
  out.field = sample_obstacle_field(1, spec, regions, params.d_obstacle, rng);
  const Obstacle& obstacle = out.field.obstacles.front();

  auto sample_outside_cone = [&]() {
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
      const Vec2 p = sample_free_point(regions, out.field, rng);
      if (!in_cone_region(p, obstacle.center, regions)) return p;
    }
    throw InfeasibleError("initialization outside the cone exhausted its budget");
  };

  Vec2 target;
  if (rng.uniform() < p_obstacle) {
    target = sample_cone_point(obstacle, out.field, regions, rng);
  } else {
    target = sample_outside_cone();
  }
  const Vec2 herder = sample_outside_cone();

  out.state.targets = {target};
  out.state.herders = {herder};
  out.state.time_step = 0;
  return out;
}

struct Transition {
  std::array<double, 6> observation{};  // normalized
  std::array<double, 2> action{};       // normalized, pre-clamp
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

// Fixed-size on-policy storage, one slot per (environment, step).
// Rows are laid out env-major: index = env * rollout_length + step.
class RolloutBuffer {
 public:
  RolloutBuffer(int rollout_length, int num_envs)
      : rollout_length_(rollout_length),
        num_envs_(num_envs),
        observations(static_cast<Eigen::Index>(rollout_length) * num_envs, 6),
        actions(static_cast<Eigen::Index>(rollout_length) * num_envs, 2),
        log_probs(static_cast<Eigen::Index>(rollout_length) * num_envs),
        rewards(static_cast<Eigen::Index>(rollout_length) * num_envs),
        values(static_cast<Eigen::Index>(rollout_length) * num_envs),
        dones(static_cast<std::size_t>(rollout_length) * static_cast<std::size_t>(num_envs), 0),
        advantages(static_cast<Eigen::Index>(rollout_length) * num_envs),
        returns(static_cast<Eigen::Index>(rollout_length) * num_envs) {}

  Eigen::Index index(int env, int step) const {
    return static_cast<Eigen::Index>(env) * rollout_length_ + step;
  }

  void put(int env, int step, const Transition& tr) {
    const Eigen::Index i = index(env, step);
    for (int k = 0; k < 6; ++k) observations(i, k) = tr.observation[static_cast<std::size_t>(k)];
    actions(i, 0) = tr.action[0];
    actions(i, 1) = tr.action[1];
    log_probs(i) = tr.log_prob;
    rewards(i) = tr.reward;
    values(i) = tr.value;
    dones[static_cast<std::size_t>(i)] = tr.done ? 1 : 0;
  }

  // Bootstrap credit for an episode cut off by the step cap: the tail value
  // folds into the final reward so the advantage recursion stays simple.
  void add_truncation_bootstrap(int env, int step, double discounted_tail_value) {
    rewards(index(env, step)) += discounted_tail_value;
  }

  Eigen::Index size() const { return observations.rows(); }
  int rollout_length() const { return rollout_length_; }
  int num_envs() const { return num_envs_; }

  Eigen::MatrixXd observations;
  Eigen::MatrixXd actions;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

 private:
  int rollout_length_;
  int num_envs_;
};

// Generalized advantage estimation over the buffer; `bootstrap_values` holds
// one critic value per environment for the truncated rollout tail. Episode
// boundaries (done flags) cut the recursion and mask the next value.
inline void compute_gae(RolloutBuffer& buffer, const Eigen::VectorXd& bootstrap_values,
                        const PpoConfig& config) {
  if (bootstrap_values.size() != buffer.num_envs())
    throw ConfigError("compute_gae: one bootstrap value per environment required");
  const int T = buffer.rollout_length();
  for (int env = 0; env < buffer.num_envs(); ++env) {
    double gae = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      const Eigen::Index i = buffer.index(env, t);
      const double not_done = buffer.dones[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
      const double next_value =
          t + 1 < T ? buffer.values(buffer.index(env, t + 1)) : bootstrap_values(env);
      const double delta =
          buffer.rewards(i) + config.discount * next_value * not_done - buffer.values(i);
      gae = delta + config.discount * config.gae_lambda * not_done * gae;
      buffer.advantages(i) = gae;
      buffer.returns(i) = gae + buffer.values(i);
    }
  }
}

// In-place standardization used once per update.
inline void standardize_advantages(RolloutBuffer& buffer) {
  const double mean = buffer.advantages.mean();
  const double var =
      (buffer.advantages.array() - mean).square().sum() / static_cast<double>(buffer.size());
  const double std = std::max(std::sqrt(var), 1e-8);
  buffer.advantages = (buffer.advantages.array() - mean) / std;
}

struct MinibatchLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  PolicyGrads grads;
};

// Clipped-surrogate PPO loss on one minibatch, with analytic gradients when
// requested. Rows of `obs`/`act` are samples; `old_logp`, `adv`, `ret` are
// per-sample columns.
inline MinibatchLoss ppo_minibatch_loss(const GaussianPolicy& policy,
                                        const Eigen::MatrixXd& obs, const Eigen::MatrixXd& act,
                                        const Eigen::VectorXd& old_logp,
                                        const Eigen::VectorXd& adv, const Eigen::VectorXd& ret,
                                        const PpoConfig& config, bool want_grads) {
  const Eigen::Index B = obs.rows();
  const double invB = 1.0 / static_cast<double>(B);

  MlpCache actor_cache;
  MlpCache critic_cache;
  const Eigen::MatrixXd mean =
      forward_batch(policy.actor, obs, want_grads ? &actor_cache : nullptr);
  const Eigen::VectorXd value =
      forward_batch(policy.critic, obs, want_grads ? &critic_cache : nullptr).col(0);

  const Eigen::Array2d std = policy.log_std.array().exp();
  // z = (a - mu) / sigma per sample and component
  Eigen::MatrixXd z = act - mean;
  z.col(0) /= std(0);
  z.col(1) /= std(1);
  const Eigen::VectorXd new_logp =
      (-0.5 * z.array().square().rowwise().sum() - policy.log_std.sum() -
       std::log(2.0 * M_PI))
          .matrix();

  const Eigen::ArrayXd ratio = (new_logp - old_logp).array().exp();
  const Eigen::ArrayXd clipped =
      ratio.min(1.0 + config.clip).max(1.0 - config.clip);
  const Eigen::ArrayXd surr1 = ratio * adv.array();
  const Eigen::ArrayXd surr2 = clipped * adv.array();

  MinibatchLoss out;
  out.policy = -surr1.min(surr2).mean();
  out.value = (value - ret).array().square().mean();
  out.entropy = gaussian_entropy(policy.log_std);
  out.clip_fraction =
      ((ratio - 1.0).abs() > config.clip).cast<double>().mean();
  out.total = out.policy + config.value_coef * out.value - config.entropy_coef * out.entropy;

  if (!want_grads) return out;

  // d total / d new_logp: only the unclipped branch carries gradient; ties
  // resolve to the unclipped branch.
  Eigen::ArrayXd dlogp = Eigen::ArrayXd::Zero(B);
  for (Eigen::Index i = 0; i < B; ++i)
    if (surr1(i) <= surr2(i)) dlogp(i) = -invB * adv(i) * ratio(i);

  // Actor head: d logp / d mean = z / sigma.
  Eigen::MatrixXd mean_grad(B, 2);
  mean_grad.col(0) = (dlogp * z.col(0).array() / std(0)).matrix();
  mean_grad.col(1) = (dlogp * z.col(1).array() / std(1)).matrix();

  // Critic head: value MSE.
  const Eigen::MatrixXd value_grad = 2.0 * config.value_coef * invB * (value - ret);

  out.grads.actor = backward_batch(policy.actor, actor_cache, mean_grad);
  out.grads.critic = backward_batch(policy.critic, critic_cache, value_grad);

  // log_std: from logp (z^2 - 1 per component) and from the entropy bonus.
  for (int d = 0; d < 2; ++d)
    out.grads.log_std(d) =
        (dlogp * (z.col(d).array().square() - 1.0)).sum() - config.entropy_coef;
  return out;
}

struct PpoUpdateReport {
  int update_index = 0;
  double policy_loss = 0.0;    // mean over minibatches
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;      // mean pre-clip global norm
  std::int64_t env_steps = 0;
  std::int64_t episodes_completed = 0;
};

// One PPO update: standardizes advantages, then runs `epochs` passes of
// shuffled minibatches with a clipped Adam step each.
inline PpoUpdateReport ppo_update(GaussianPolicy& policy, RolloutBuffer& buffer,
                                  AdamState& optimizer, const PpoConfig& config,
                                  RngStream& shuffle_rng) {
  standardize_advantages(buffer);

  const Eigen::Index n = buffer.size();
  const Eigen::Index mb_size = n / config.minibatches;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd params = gather_parameters(policy);
  PpoUpdateReport report;
  int batches = 0;

  Eigen::MatrixXd mb_obs(mb_size, 6);
  Eigen::MatrixXd mb_act(mb_size, 2);
  Eigen::VectorXd mb_logp(mb_size);
  Eigen::VectorXd mb_adv(mb_size);
  Eigen::VectorXd mb_ret(mb_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates driven by the caller's stream, for reproducible runs.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const Eigen::Index j =
          static_cast<Eigen::Index>(shuffle_rng.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    for (int mb = 0; mb < config.minibatches; ++mb) {
      for (Eigen::Index row = 0; row < mb_size; ++row) {
        const Eigen::Index src = order[static_cast<std::size_t>(mb * mb_size + row)];
        mb_obs.row(row) = buffer.observations.row(src);
        mb_act.row(row) = buffer.actions.row(src);
        mb_logp(row) = buffer.log_probs(src);
        mb_adv(row) = buffer.advantages(src);
        mb_ret(row) = buffer.returns(src);
      }
      const MinibatchLoss loss = ppo_minibatch_loss(policy, mb_obs, mb_act, mb_logp, mb_adv,
                                                    mb_ret, config, /*want_grads=*/true);
      if (!std::isfinite(loss.total))
        throw NumericError("ppo_update: non-finite loss at update " +
                           std::to_string(report.update_index) + " epoch " +
                           std::to_string(epoch) + " minibatch " + std::to_string(mb) +
                           " (policy=" + std::to_string(loss.policy) +
                           ", value=" + std::to_string(loss.value) + ")");

      Eigen::VectorXd grad = loss.grads.flatten(policy);
      const double gnorm = grad.norm();
      if (gnorm > config.grad_clip_norm) grad *= config.grad_clip_norm / gnorm;
      adam_step(params, grad, optimizer);
      scatter_parameters(policy, params);

      report.policy_loss += loss.policy;
      report.value_loss += loss.value;
      report.entropy += loss.entropy;
      report.clip_fraction += loss.clip_fraction;
      report.grad_norm += gnorm;
      ++batches;
    }
  }
  const double inv = 1.0 / static_cast<double>(batches);
  report.policy_loss *= inv;
  report.value_loss *= inv;
  report.entropy *= inv;
  report.clip_fraction *= inv;
  report.grad_norm *= inv;
  return report;
}

// ---- training loop ----

struct EpisodeLogRow {
  std::int64_t episode = 0;  // aggregate index across environments
  double cumulative_reward = 0.0;
  std::int64_t length = 0;
  bool success = false;
};

struct TrainHooks {
  std::function<void(const EpisodeLogRow&)> on_episode;
  std::function<void(const PpoUpdateReport&)> on_update;
  std::function<void(const GaussianPolicy&, int update_index)> on_checkpoint;
};

struct TrainSetup {
  PpoConfig ppo;
  WorldParams world;
  Regions regions;
  ObstacleSpec obstacle;
  RewardGains gains;
  std::uint64_t seed = 0;
};

struct TrainResult {
  GaussianPolicy policy;
  std::int64_t episodes_completed = 0;
  std::int64_t env_steps = 0;
  int updates = 0;
};

namespace detail {

// One training environment (single herder, single target, one obstacle).
class DrivingEnv {
 public:
  DrivingEnv(const TrainSetup& setup, int env_id)
      : setup_(&setup), env_id_(env_id) {}

  void reset() {
    const std::uint64_t key = RngStream::derive(setup_->seed, 0x454e56ULL,
                                                static_cast<std::uint64_t>(env_id_),
                                                static_cast<std::uint64_t>(episode_counter_));
    rng_ = EpisodeRng::from_key(key);
    RngStream placement = rng_.stream(0x504c4143ULL);
    ResetResult r = reset_episode(setup_->ppo.p_obstacle, setup_->obstacle, setup_->regions,
                                  setup_->world, placement);
    state_ = std::move(r.state);
    field_ = std::move(r.field);
    episode_reward_ = 0.0;
    ++episode_counter_;
  }

  // Normalized observation of the single herder.
  Eigen::Matrix<double, 6, 1> observation() const {
    RngStream tie = rng_.stream(static_cast<std::uint64_t>(state_.time_step),
                                kHerderStreamTag);
    Assignment assignment{0, 0};
    const DrivingObservation obs =
        build_observation(0, assignment, state_, field_, setup_->regions, tie);
    const auto flat = obs.flatten();
    Eigen::Matrix<double, 6, 1> x;
    for (int i = 0; i < 6; ++i) x(i) = flat[static_cast<std::size_t>(i)] / setup_->regions.init_radius;
    return x;
  }

  RngStream action_stream() const {
    return rng_.stream(static_cast<std::uint64_t>(state_.time_step), kActionStreamTag);
  }

  struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    bool success = false;
    bool truncated = false;
  };

  // Applies a normalized action: scales to world units, clamps to the box,
  // integrates one step, evaluates the reward at the pre-step state.
  StepOutcome step(const Eigen::Vector2d& normalized_action) {
    const double scale = setup_->world.v_herder;
    const Vec2 command = saturate(
        {normalized_action(0) * scale, normalized_action(1) * scale}, scale);
    StepOutcome out;
    out.reward = driving_reward(state_.targets[0], state_.herders[0], command,
                                setup_->regions, setup_->gains);
    episode_reward_ += out.reward;

    const std::array<Vec2, 1> controls{command};
    state_ = world_step(state_, controls, field_, setup_->world, rng_);

    out.success = in_goal(state_.targets[0], setup_->regions);
    out.truncated = !out.success && state_.time_step >= setup_->ppo.episode_cap;
    out.done = out.success || out.truncated;
    return out;
  }

  std::int64_t episode_length() const { return state_.time_step; }
  double episode_reward() const { return episode_reward_; }

 private:
  const TrainSetup* setup_;
  int env_id_;
  std::int64_t episode_counter_ = 0;
  EpisodeRng rng_;
  WorldState state_;
  ObstacleField field_;
  double episode_reward_ = 0.0;
};

}  // namespace detail

// PPO training in the nominal scene. Episodes are counted across all
// environments; the loop stops at the first update boundary past
// total_episodes. Deterministic for a fixed seed.
inline TrainResult train(const TrainSetup& setup, const TrainHooks& hooks = {}) {
  setup.ppo.validate();
  setup.world.validate();
  setup.regions.validate();
  setup.gains.validate();

  TrainResult result;
  RngStream init_rng(RngStream::derive(setup.seed, 0x494e4954ULL));
  result.policy = make_policy(6, 2, 5, 64, setup.regions.init_radius,
                              setup.world.v_herder, init_rng);
  if (setup.ppo.total_episodes == 0) return result;

  AdamState optimizer =
      AdamState::create(result.policy.parameter_count(), setup.ppo.learning_rate);
  RngStream shuffle_rng(RngStream::derive(setup.seed, 0x53485546ULL));

  std::vector<detail::DrivingEnv> envs;
  envs.reserve(static_cast<std::size_t>(setup.ppo.num_envs));
  for (int e = 0; e < setup.ppo.num_envs; ++e) {
    envs.emplace_back(setup, e);
    envs.back().reset();
  }

  RolloutBuffer buffer(setup.ppo.rollout_length, setup.ppo.num_envs);
  const int E = setup.ppo.num_envs;
  Eigen::MatrixXd obs_batch(E, 6);

  while (result.episodes_completed < setup.ppo.total_episodes) {
    for (int t = 0; t < setup.ppo.rollout_length; ++t) {
      for (int e = 0; e < E; ++e)
        obs_batch.row(e) = envs[static_cast<std::size_t>(e)].observation().transpose();
      const Eigen::MatrixXd mean = forward_batch(result.policy.actor, obs_batch);
      const Eigen::VectorXd value = forward_batch(result.policy.critic, obs_batch).col(0);
      const Eigen::Array2d std = result.policy.log_std.array().exp();

      for (int e = 0; e < E; ++e) {
        auto& env = envs[static_cast<std::size_t>(e)];
        RngStream action_rng = env.action_stream();
        const Vec2 zvec = action_rng.normal_vec2();
        Eigen::Vector2d action = mean.row(e).transpose();
        action(0) += std(0) * zvec.x;
        action(1) += std(1) * zvec.y;

        Transition tr;
        for (int k = 0; k < 6; ++k) tr.observation[static_cast<std::size_t>(k)] = obs_batch(e, k);
        tr.action = {action(0), action(1)};
        tr.log_prob =
            gaussian_log_prob(action, mean.row(e).transpose(), result.policy.log_std);
        tr.value = value(e);

        const auto outcome = env.step(action);
        tr.reward = outcome.reward;
        tr.done = outcome.done;
        buffer.put(e, t, tr);
        ++result.env_steps;

        if (outcome.done) {
          if (outcome.truncated) {
            // Timeout is not a true terminal: credit the tail through the critic.
            const double tail = forward(result.policy.critic, env.observation())(0);
            buffer.add_truncation_bootstrap(e, t, setup.ppo.discount * tail);
          }
          if (hooks.on_episode)
            hooks.on_episode({result.episodes_completed, env.episode_reward(),
                              env.episode_length(), outcome.success});
          ++result.episodes_completed;
          env.reset();
        }
      }
    }

    Eigen::VectorXd bootstrap(E);
    for (int e = 0; e < E; ++e)
      bootstrap(e) = forward(result.policy.critic, envs[static_cast<std::size_t>(e)].observation())(0);
    compute_gae(buffer, bootstrap, setup.ppo);

    PpoUpdateReport report = ppo_update(result.policy, buffer, optimizer, setup.ppo, shuffle_rng);
    ++result.updates;
    report.update_index = result.updates;
    report.env_steps = result.env_steps;
    report.episodes_completed = result.episodes_completed;
    if (hooks.on_update) hooks.on_update(report);
    if (hooks.on_checkpoint && result.updates % setup.ppo.checkpoint_every == 0)
      hooks.on_checkpoint(result.policy, result.updates);
  }
  return result;
}

}  // namespace shepherd
