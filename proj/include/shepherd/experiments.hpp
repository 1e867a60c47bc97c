#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "shepherd/config.hpp"
#include "shepherd/control.hpp"
#include "shepherd/dynamics.hpp"
#include "shepherd/metrics.hpp"
#include "shepherd/nn.hpp"
#include "shepherd/rl.hpp"

namespace shepherd {

inline constexpr double kChiStar = 1.0;

// Worker cap: explicit argument beats SHEPHERD_THREADS beats hardware count.
inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHEPHERD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Mean/std of agent distances from the origin, one entry per recorded step.
struct RadiiSeries {
  std::vector<double> target_mean;
  std::vector<double> target_std;
  std::vector<double> herder_mean;
  std::vector<double> herder_std;
};

struct EpisodeOutput {
  EpisodeRecord record;
  double max_target_radius_at_gathering = std::numeric_limits<double>::quiet_NaN();
  RadiiSeries radii;  // populated when requested
};

namespace detail {

inline std::pair<double, double> radial_stats(const std::vector<Vec2>& agents) {
  double mean = 0.0;
  for (const Vec2& a : agents) mean += norm(a);
  mean /= static_cast<double>(agents.size());
  double ss = 0.0;
  for (const Vec2& a : agents) {
    const double d = norm(a) - mean;
    ss += d * d;
  }
  return {mean, std::sqrt(ss / static_cast<double>(agents.size()))};
}

inline void append_trajectory_rows(std::FILE* f, const WorldState& state) {
  for (std::size_t j = 0; j < state.herders.size(); ++j)
    std::fprintf(f, "%lld,herder,%zu,%.17g,%.17g\n",
                 static_cast<long long>(state.time_step), j, state.herders[j].x,
                 state.herders[j].y);
  for (std::size_t i = 0; i < state.targets.size(); ++i)
    std::fprintf(f, "%lld,target,%zu,%.17g,%.17g\n",
                 static_cast<long long>(state.time_step), i, state.targets[i].x,
                 state.targets[i].y);
}

// Initial conditions for an evaluation episode. The nominal 1H-1T scene uses
// the training curriculum verbatim; larger scenes place herders uniformly in
// free space and give each target an independent p_obstacle chance of
// starting in the cone sector behind a randomly chosen obstacle.
inline ResetResult reset_eval_episode(const RunConfig& cfg, RngStream& rng) {
  if (cfg.scenario.herders == 1 && cfg.scenario.targets == 1 && cfg.scenario.obstacles == 1)
    return reset_episode(cfg.ppo.p_obstacle, cfg.obstacle, cfg.regions, cfg.world, rng);

  ResetResult out;
  out.field = sample_obstacle_field(cfg.scenario.obstacles, cfg.obstacle, cfg.regions,
                                    cfg.world.d_obstacle, rng);
  out.state.herders.reserve(static_cast<std::size_t>(cfg.scenario.herders));
  out.state.targets.reserve(static_cast<std::size_t>(cfg.scenario.targets));
  for (int j = 0; j < cfg.scenario.herders; ++j)
    out.state.herders.push_back(sample_free_point(cfg.regions, out.field, rng));
  for (int i = 0; i < cfg.scenario.targets; ++i) {
    if (!out.field.empty() && rng.uniform() < cfg.ppo.p_obstacle) {
      const std::size_t pick =
          static_cast<std::size_t>(rng.next_u64() % out.field.obstacles.size());
      out.state.targets.push_back(
          sample_cone_point(out.field.obstacles[pick], out.field, cfg.regions, rng));
    } else {
      out.state.targets.push_back(sample_free_point(cfg.regions, out.field, rng));
    }
  }
  return out;
}

}  // namespace detail

// Runs one evaluation episode. The environment noise streams depend only on
// (seed, episode_index, step, agent), so different strategies see identical
// initial conditions and disturbances. Snapshots are recorded at step 0 and
// after every integration step; the cap bounds integration steps.
inline EpisodeOutput run_episode(const RunConfig& cfg, const GaussianPolicy* policy,
                                 std::uint64_t episode_index, bool record_radii = false,
                                 std::FILE* trajectory_csv = nullptr) {
  if (cfg.strategy == Strategy::kPpo && policy == nullptr)
    throw ConfigError("run_episode: ppo strategy requires a loaded policy");

  const EpisodeRng rng(cfg.seed, episode_index);
  RngStream placement = rng.stream(0x504c4143ULL);
  ResetResult scene = detail::reset_eval_episode(cfg, placement);
  WorldState state = std::move(scene.state);
  const ObstacleField& field = scene.field;

  const std::size_t n_herders = state.herders.size();
  EpisodeOutput out;
  out.record.herder_displacements.assign(n_herders, {});

  auto record_snapshot = [&](const WorldState& s) {
    out.record.chi_series.push_back(chi(s, cfg.regions));
    if (record_radii) {
      const auto [tm, ts] = detail::radial_stats(s.targets);
      const auto [hm, hs] = detail::radial_stats(s.herders);
      out.radii.target_mean.push_back(tm);
      out.radii.target_std.push_back(ts);
      out.radii.herder_mean.push_back(hm);
      out.radii.herder_std.push_back(hs);
    }
    if (trajectory_csv != nullptr) detail::append_trajectory_rows(trajectory_csv, s);
  };

  record_snapshot(state);
  std::vector<Vec2> controls(n_herders);
  while (out.record.chi_series.back() < kChiStar &&
         state.time_step < cfg.eval_cap_steps) {
    for (std::size_t j = 0; j < n_herders; ++j) {
      const Assignment assignment = select_target(static_cast<int>(j), state, cfg.regions);
      if (!assignment.selected_target) {
        controls[j] = fallback_control(state.herders[j], cfg.regions, cfg.world);
        continue;
      }
      RngStream tie = rng.stream(static_cast<std::uint64_t>(state.time_step),
                                 kHerderStreamTag + j);
      const DrivingObservation obs = build_observation(
          static_cast<int>(j), assignment, state, field, cfg.regions, tie);
      if (cfg.strategy == Strategy::kPpo) {
        RngStream action = rng.stream(static_cast<std::uint64_t>(state.time_step),
                                      kActionStreamTag + j);
        controls[j] = policy_control(obs, *policy, /*deterministic=*/true, action);
      } else {
        controls[j] = vortex_control(obs, field, cfg.regions, cfg.world, cfg.vortex);
      }
    }
    const WorldState next = world_step(state, controls, field, cfg.world, rng);
    for (std::size_t j = 0; j < n_herders; ++j)
      out.record.herder_displacements[j].push_back(distance(next.herders[j], state.herders[j]));
    state = next;
    record_snapshot(state);
  }

  out.record.steps = static_cast<std::int64_t>(out.record.chi_series.size());
  out.record.gathering_step = gathering_time(out.record.chi_series, kChiStar);
  out.record.succeeded = out.record.gathering_step.has_value();
  if (out.record.succeeded) {
    double max_radius = 0.0;
    for (const Vec2& t : state.targets) max_radius = std::max(max_radius, norm(t));
    out.max_target_radius_at_gathering = max_radius;
  }
  return out;
}

struct EvalResult {
  MetricsSummary summary;
  std::vector<EpisodeRecord> records;
  std::vector<double> max_radius_at_gathering;  // NaN for failed episodes
};

namespace detail {

inline void write_episode_csv(const std::filesystem::path& path,
                              const std::vector<EpisodeRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "episode,steps,succeeded,gathering_step,path_length\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EpisodeRecord& r = records[i];
    os << i << ',' << r.steps << ',' << (r.succeeded ? 1 : 0) << ',';
    if (r.gathering_step) os << *r.gathering_step;
    os << ',' << path_length(r.herder_displacements) << "\n";
  }
}

inline nlohmann::json summary_to_json(const MetricsSummary& s) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["episodes"] = s.episodes;
  j["success_rate"] = s.success_rate;
  if (s.gathering_mean_steps) {
    j["gathering_time"] = {{"mean_steps", *s.gathering_mean_steps},
                           {"std_steps", *s.gathering_std_steps},
                           {"mean_seconds", *s.gathering_mean_steps * s.gathering_time_unit_seconds},
                           {"std_seconds", *s.gathering_std_steps * s.gathering_time_unit_seconds}};
  } else {
    j["gathering_time"] = nullptr;
  }
  j["path_length"] = {{"mean", s.path_length_mean},
                      {"std", s.path_length_std},
                      {"per_herder_std", s.path_length_per_herder_std}};
  return j;
}

inline nlohmann::json geometry_to_json(const ObstacleField& field, const Regions& regions) {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Obstacle& o : field.obstacles) {
    obstacles.push_back({{"center", {o.center.x, o.center.y}},
                         {"long_axis", {o.long_axis.x, o.long_axis.y}},
                         {"half_long", o.half_long},
                         {"half_short", o.half_short},
                         {"corner_radius", o.corner_radius}});
  }
  return {{"goal_radius", regions.goal_radius},
          {"init_radius", regions.init_radius},
          {"obstacles", obstacles}};
}

inline std::string episode_file_stem(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%05llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace detail

// Writes one trajectory CSV per episode plus a geometry sidecar, re-running
// the episode with the same seed so files match the recorded metrics.
inline void export_trajectories(const RunConfig& cfg, const GaussianPolicy* policy,
                                std::uint64_t episode_index,
                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = detail::episode_file_stem(episode_index);

  const EpisodeRng rng(cfg.seed, episode_index);
  RngStream placement = rng.stream(0x504c4143ULL);
  const ResetResult scene = detail::reset_eval_episode(cfg, placement);
  {
    std::ofstream os(dir / (stem + "_geometry.json"));
    if (!os) throw IoError("cannot write geometry sidecar in " + dir.string());
    os << detail::geometry_to_json(scene.field, cfg.regions).dump(2) << "\n";
  }

  const std::filesystem::path csv = dir / (stem + ".csv");
  std::FILE* f = std::fopen(csv.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot write trajectory file: " + csv.string());
  std::fprintf(f, "step,agent_kind,agent_index,x,y\n");
  EpisodeOutput out;
  try {
    out = run_episode(cfg, policy, episode_index, /*record_radii=*/true, f);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw IoError("short write to trajectory file: " + csv.string());

  std::ofstream os(dir / (stem + "_radii.csv"));
  if (!os) throw IoError("cannot write radii series in " + dir.string());
  os << "step,target_mean,target_std,herder_mean,herder_std\n";
  for (std::size_t t = 0; t < out.radii.target_mean.size(); ++t)
    os << t << ',' << out.radii.target_mean[t] << ',' << out.radii.target_std[t] << ','
       << out.radii.herder_mean[t] << ',' << out.radii.herder_std[t] << "\n";
}

// Runs the configured number of independent episodes (worker pool; results
// are keyed by episode index so the outcome is thread-count independent)
// and writes episodes.csv + metrics.json to the output directory.
inline EvalResult run_eval(const RunConfig& cfg, const GaussianPolicy* policy,
                           int threads = 0, bool keep_trajectories = false) {
  cfg.validate();
  if (cfg.episodes < 1) throw ConfigError("run_eval requires episodes >= 1");
  const std::filesystem::path out_dir(cfg.output_dir);
  std::filesystem::create_directories(out_dir);
  write_resolved_config(cfg, out_dir);

  const auto n = static_cast<std::size_t>(cfg.episodes);
  std::vector<EpisodeOutput> outputs(n);
  const int workers = std::min<int>(resolve_thread_count(threads), static_cast<int>(n));
  std::atomic<std::uint64_t> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const std::uint64_t i = cursor.fetch_add(1);
      if (i >= n) return;
      outputs[i] = run_episode(cfg, policy, i);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  EvalResult result;
  result.records.reserve(n);
  result.max_radius_at_gathering.reserve(n);
  for (auto& o : outputs) {
    result.records.push_back(std::move(o.record));
    result.max_radius_at_gathering.push_back(o.max_target_radius_at_gathering);
  }
  result.summary = aggregate(result.records, cfg.world.dt);

  detail::write_episode_csv(out_dir / "episodes.csv", result.records);
  {
    std::ofstream os(out_dir / "metrics.json");
    if (!os) throw IoError("cannot write metrics.json in " + cfg.output_dir);
    nlohmann::json j = detail::summary_to_json(result.summary);
    j["strategy"] = to_string(cfg.strategy);
    j["scenario"] = {{"herders", cfg.scenario.herders},
                     {"targets", cfg.scenario.targets},
                     {"obstacles", cfg.scenario.obstacles}};
    j["seed"] = cfg.seed;
    os << j.dump(2) << "\n";
  }
  if (keep_trajectories) {
    const std::filesystem::path traj_dir = out_dir / "trajectories";
    for (std::uint64_t i = 0; i < n; ++i)
      export_trajectories(cfg, policy, i, traj_dir);
  }
  return result;
}

struct BenchmarkReport {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::int64_t calls = 0;
};

// Wall-clock latency of single-herder policy inference.
inline BenchmarkReport benchmark_inference(const GaussianPolicy& policy,
                                           std::int64_t calls = 100000) {
  RngStream rng(20240);
  BenchmarkReport report;
  report.calls = calls;
  double sum = 0.0;
  double sum_sq = 0.0;
  volatile double sink = 0.0;
  for (std::int64_t i = 0; i < calls; ++i) {
    DrivingObservation obs;
    obs.herder = {rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0)};
    obs.target = {rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0)};
    obs.obstacle_center = {rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0)};
    RngStream action(0);
    const auto t0 = std::chrono::steady_clock::now();
    const Vec2 u = policy_control(obs, policy, /*deterministic=*/true, action);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + u.x + u.y;
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    sum += ms;
    sum_sq += ms * ms;
  }
  report.mean_ms = sum / static_cast<double>(calls);
  report.std_ms = std::sqrt(
      std::max(0.0, sum_sq / static_cast<double>(calls) - report.mean_ms * report.mean_ms));
  return report;
}

// ---- training entry point with artifacts ----

struct TrainingArtifacts {
  std::filesystem::path weights;
  std::filesystem::path reward_curve_csv;
  std::filesystem::path updates_jsonl;
  TrainResult result;
};

// Runs PPO training per the config and writes weights, checkpoints, the
// per-episode reward curve and per-update loss report into output_dir.
inline TrainingArtifacts run_training(const RunConfig& cfg) {
  cfg.validate();
  const std::filesystem::path out_dir(cfg.output_dir);
  std::filesystem::create_directories(out_dir / "checkpoints");
  write_resolved_config(cfg, out_dir);

  TrainingArtifacts artifacts;
  artifacts.reward_curve_csv = out_dir / "reward_curve.csv";
  artifacts.updates_jsonl = out_dir / "updates.jsonl";
  artifacts.weights = out_dir / "policy.shrd";

  std::ofstream curve(artifacts.reward_curve_csv);
  if (!curve) throw IoError("cannot write " + artifacts.reward_curve_csv.string());
  curve << "episode,cumulative_reward,length,success\n";
  std::ofstream updates(artifacts.updates_jsonl);
  if (!updates) throw IoError("cannot write " + artifacts.updates_jsonl.string());

  TrainSetup setup;
  setup.ppo = cfg.ppo;
  setup.world = cfg.world;
  setup.regions = cfg.regions;
  setup.obstacle = cfg.obstacle;
  setup.gains = cfg.gains;
  setup.seed = cfg.seed;

  TrainHooks hooks;
  hooks.on_episode = [&](const EpisodeLogRow& row) {
    curve << row.episode << ',' << row.cumulative_reward << ',' << row.length << ','
          << (row.success ? 1 : 0) << "\n";
  };
  hooks.on_update = [&](const PpoUpdateReport& r) {
    nlohmann::json j{{"update", r.update_index},
                     {"policy_loss", r.policy_loss},
                     {"value_loss", r.value_loss},
                     {"entropy", r.entropy},
                     {"clip_fraction", r.clip_fraction},
                     {"grad_norm", r.grad_norm},
                     {"env_steps", r.env_steps},
                     {"episodes", r.episodes_completed}};
    updates << j.dump() << "\n";
    updates.flush();
  };
  hooks.on_checkpoint = [&](const GaussianPolicy& p, int update_index) {
    char name[48];
    std::snprintf(name, sizeof name, "ckpt_%06d.shrd", update_index);
    save_weights(p, (out_dir / "checkpoints" / name).string());
  };

  artifacts.result = train(setup, hooks);
  curve.flush();
  if (!curve) throw IoError("short write to " + artifacts.reward_curve_csv.string());
  save_weights(artifacts.result.policy, artifacts.weights.string());
  return artifacts;
}

}  // namespace shepherd
