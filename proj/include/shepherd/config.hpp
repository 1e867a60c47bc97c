#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "shepherd/control.hpp"
#include "shepherd/dynamics.hpp"
#include "shepherd/errors.hpp"
#include "shepherd/geometry.hpp"
#include "shepherd/rl.hpp"

namespace shepherd {

enum class Strategy { kPpo, kVortex };

inline std::string to_string(Strategy s) { return s == Strategy::kPpo ? "ppo" : "vortex"; }

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "ppo") return Strategy::kPpo;
  if (s == "vortex") return Strategy::kVortex;
  throw ConfigError("strategy must be \"ppo\" or \"vortex\", got \"" + s + "\"");
}

struct Scenario {
  int herders = 1;
  int targets = 1;
  int obstacles = 1;

  void validate() const {
    if (herders < 1 || targets < 1 || obstacles < 0)
      throw ConfigError("scenario requires herders >= 1, targets >= 1, obstacles >= 0");
  }
};

// Named presets used by the CLI; eval caps bound episode length during
// evaluation (episodes past the cap count as failures).
inline Scenario scenario_preset(const std::string& name) {
  if (name == "1h1t") return {1, 1, 1};
  if (name == "10h100t") return {10, 100, 3};
  throw ConfigError("unknown scenario preset \"" + name + "\" (use 1h1t, 10h100t or custom)");
}

inline std::int64_t default_eval_cap(const Scenario& s) {
  return s.targets > 1 || s.herders > 1 ? 30000 : 5000;
}

struct RunConfig {
  WorldParams world;
  Regions regions;
  ObstacleSpec obstacle;
  PpoConfig ppo;
  RewardGains gains;
  VortexParams vortex;
  Scenario scenario;
  std::int64_t episodes = 1000;  // evaluation episode count
  std::uint64_t seed = 0;
  std::optional<std::string> policy_path;
  Strategy strategy = Strategy::kPpo;
  std::string output_dir = "run";
  std::int64_t eval_cap_steps = 5000;

  void validate() const {
    world.validate();
    regions.validate();
    ppo.validate();
    gains.validate();
    scenario.validate();
    if (!(obstacle.length > obstacle.width && obstacle.width > 2.0 * obstacle.corner_radius &&
          obstacle.corner_radius >= 0.0))
      throw ConfigError("obstacle requires length > width > 2*corner_radius >= 0");
    if (episodes < 0) throw ConfigError("episodes must be >= 0");
    if (eval_cap_steps < 1) throw ConfigError("eval_cap_steps must be >= 1");
  }
};

namespace detail {

using Json = nlohmann::json;

inline void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
}

inline double read_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + " must be a number");
  return j.get<double>();
}

inline std::int64_t read_integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + " must be an integer");
  return j.get<std::int64_t>();
}

template <typename Fn>
void walk_object(const Json& j, const std::string& path, Fn&& assign) {
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    if (!assign(key, value)) throw ConfigError("unknown key \"" + path + "." + key + "\"");
  }
}

inline void apply_world(const Json& j, WorldParams& w, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "beta") w.beta = read_number(v, path + ".beta");
    else if (k == "lambda") w.lambda = read_number(v, path + ".lambda");
    else if (k == "diffusion") w.diffusion = read_number(v, path + ".diffusion");
    else if (k == "k_obstacle") w.k_obstacle = read_number(v, path + ".k_obstacle");
    else if (k == "d_obstacle") w.d_obstacle = read_number(v, path + ".d_obstacle");
    else if (k == "v_target") w.v_target = read_number(v, path + ".v_target");
    else if (k == "v_herder") w.v_herder = read_number(v, path + ".v_herder");
    else if (k == "dt") w.dt = read_number(v, path + ".dt");
    else if (k == "s_min") w.s_min = read_number(v, path + ".s_min");
    else return false;
    return true;
  });
  if (w.beta <= 0.0) throw ConfigError(path + ".beta must be > 0");
  if (w.lambda <= 0.0) throw ConfigError(path + ".lambda must be > 0");
  if (w.diffusion <= 0.0) throw ConfigError(path + ".diffusion must be > 0");
  if (w.k_obstacle <= 0.0) throw ConfigError(path + ".k_obstacle must be > 0");
  if (w.d_obstacle <= 0.0) throw ConfigError(path + ".d_obstacle must be > 0");
  if (w.v_target <= 0.0) throw ConfigError(path + ".v_target must be > 0");
  if (w.v_herder <= 0.0) throw ConfigError(path + ".v_herder must be > 0");
  if (w.dt <= 0.0) throw ConfigError(path + ".dt must be > 0");
  if (w.s_min <= 0.0) throw ConfigError(path + ".s_min must be > 0");
}

inline void apply_regions(const Json& j, Regions& r, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "goal_radius") r.goal_radius = read_number(v, path + ".goal_radius");
    else if (k == "init_radius") r.init_radius = read_number(v, path + ".init_radius");
    else if (k == "cone_half_angle") r.cone_half_angle = read_number(v, path + ".cone_half_angle");
    else return false;
    return true;
  });
  if (!(r.goal_radius > 0.0)) throw ConfigError(path + ".goal_radius must be > 0");
  if (!(r.init_radius > r.goal_radius))
    throw ConfigError(path + ".init_radius must be > goal_radius");
}

inline void apply_obstacle(const Json& j, ObstacleSpec& o, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "length") o.length = read_number(v, path + ".length");
    else if (k == "width") o.width = read_number(v, path + ".width");
    else if (k == "corner_radius") o.corner_radius = read_number(v, path + ".corner_radius");
    else return false;
    return true;
  });
}

inline void apply_gains(const Json& j, RewardGains& g, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "k_approach") g.k_approach = read_number(v, path + ".k_approach");
    else if (k == "k_steering") g.k_steering = read_number(v, path + ".k_steering");
    else if (k == "k_control") g.k_control = read_number(v, path + ".k_control");
    else return false;
    return true;
  });
  if (!(g.k_steering > g.k_approach && g.k_approach > g.k_control && g.k_control > 0.0))
    throw ConfigError(path + " must satisfy k_steering > k_approach > k_control > 0");
}

inline void apply_vortex(const Json& j, VortexParams& v, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& val) {
    if (k == "standoff") v.standoff = read_number(val, path + ".standoff");
    else if (k == "k_attract") v.k_attract = read_number(val, path + ".k_attract");
    else if (k == "k_standoff") v.k_standoff = read_number(val, path + ".k_standoff");
    else if (k == "k_vortex") v.k_vortex = read_number(val, path + ".k_vortex");
    else return false;
    return true;
  });
}

inline void apply_ppo(const Json& j, PpoConfig& p, const std::string& path) {
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "discount") p.discount = read_number(v, path + ".discount");
    else if (k == "gae_lambda") p.gae_lambda = read_number(v, path + ".gae_lambda");
    else if (k == "clip") p.clip = read_number(v, path + ".clip");
    else if (k == "entropy_coef") p.entropy_coef = read_number(v, path + ".entropy_coef");
    else if (k == "value_coef") p.value_coef = read_number(v, path + ".value_coef");
    else if (k == "grad_clip_norm") p.grad_clip_norm = read_number(v, path + ".grad_clip_norm");
    else if (k == "rollout_length") p.rollout_length = static_cast<int>(read_integer(v, path + ".rollout_length"));
    else if (k == "num_envs") p.num_envs = static_cast<int>(read_integer(v, path + ".num_envs"));
    else if (k == "epochs") p.epochs = static_cast<int>(read_integer(v, path + ".epochs"));
    else if (k == "minibatches") p.minibatches = static_cast<int>(read_integer(v, path + ".minibatches"));
    else if (k == "learning_rate") p.learning_rate = read_number(v, path + ".learning_rate");
    else if (k == "p_obstacle") p.p_obstacle = read_number(v, path + ".p_obstacle");
    else if (k == "episode_cap") p.episode_cap = static_cast<int>(read_integer(v, path + ".episode_cap"));
    else if (k == "total_episodes") p.total_episodes = read_integer(v, path + ".total_episodes");
    else if (k == "checkpoint_every") p.checkpoint_every = static_cast<int>(read_integer(v, path + ".checkpoint_every"));
    else return false;
    return true;
  });
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void apply_scenario(const Json& j, Scenario& s, const std::string& path) {
  if (j.is_string()) {
    s = scenario_preset(j.get<std::string>());
    return;
  }
  walk_object(j, path, [&](const std::string& k, const Json& v) {
    if (k == "herders") s.herders = static_cast<int>(read_integer(v, path + ".herders"));
    else if (k == "targets") s.targets = static_cast<int>(read_integer(v, path + ".targets"));
    else if (k == "obstacles") s.obstacles = static_cast<int>(read_integer(v, path + ".obstacles"));
    else return false;
    return true;
  });
  s.validate();
}

inline void apply_run_config(const Json& j, RunConfig& cfg) {
  // Preset scenarios also pick their evaluation cap; an explicit
  // eval_cap_steps key still wins because it is applied in the walk below.
  if (j.is_object() && j.contains("scenario") && j["scenario"].is_string()) {
    cfg.scenario = scenario_preset(j["scenario"].get<std::string>());
    cfg.eval_cap_steps = default_eval_cap(cfg.scenario);
  }
  walk_object(j, "config", [&](const std::string& k, const Json& v) {
    if (k == "world") apply_world(v, cfg.world, "world");
    else if (k == "regions") apply_regions(v, cfg.regions, "regions");
    else if (k == "obstacle") apply_obstacle(v, cfg.obstacle, "obstacle");
    else if (k == "gains") apply_gains(v, cfg.gains, "gains");
    else if (k == "vortex") apply_vortex(v, cfg.vortex, "vortex");
    else if (k == "ppo") apply_ppo(v, cfg.ppo, "ppo");
    else if (k == "scenario") apply_scenario(v, cfg.scenario, "scenario");
    else if (k == "episodes") cfg.episodes = read_integer(v, "episodes");
    else if (k == "seed") {
      if (!v.is_number_unsigned() && !v.is_number_integer())
        throw ConfigError("seed must be a non-negative integer");
      cfg.seed = v.get<std::uint64_t>();
    } else if (k == "policy_path") {
      if (!v.is_string()) throw ConfigError("policy_path must be a string");
      cfg.policy_path = v.get<std::string>();
    } else if (k == "strategy") {
      if (!v.is_string()) throw ConfigError("strategy must be a string");
      cfg.strategy = strategy_from_string(v.get<std::string>());
    } else if (k == "output_dir") {
      if (!v.is_string()) throw ConfigError("output_dir must be a string");
      cfg.output_dir = v.get<std::string>();
    } else if (k == "eval_cap_steps") {
      cfg.eval_cap_steps = read_integer(v, "eval_cap_steps");
    } else {
      return false;
    }
    return true;
  });
}

inline std::pair<int, int> line_column_of(const std::string& text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["episodes"] = c.episodes;
  j["strategy"] = to_string(c.strategy);
  if (c.policy_path) j["policy_path"] = *c.policy_path;
  j["output_dir"] = c.output_dir;
  j["eval_cap_steps"] = c.eval_cap_steps;
  j["scenario"] = {{"herders", c.scenario.herders},
                   {"targets", c.scenario.targets},
                   {"obstacles", c.scenario.obstacles}};
  j["world"] = {{"beta", c.world.beta},         {"lambda", c.world.lambda},
                {"diffusion", c.world.diffusion}, {"k_obstacle", c.world.k_obstacle},
                {"d_obstacle", c.world.d_obstacle}, {"v_target", c.world.v_target},
                {"v_herder", c.world.v_herder},   {"dt", c.world.dt},
                {"s_min", c.world.s_min}};
  j["regions"] = {{"goal_radius", c.regions.goal_radius},
                  {"init_radius", c.regions.init_radius},
                  {"cone_half_angle", c.regions.cone_half_angle}};
  j["obstacle"] = {{"length", c.obstacle.length},
                   {"width", c.obstacle.width},
                   {"corner_radius", c.obstacle.corner_radius}};
  j["gains"] = {{"k_approach", c.gains.k_approach},
                {"k_steering", c.gains.k_steering},
                {"k_control", c.gains.k_control}};
  j["vortex"] = {{"standoff", c.vortex.standoff},
                 {"k_attract", c.vortex.k_attract},
                 {"k_standoff", c.vortex.k_standoff},
                 {"k_vortex", c.vortex.k_vortex}};
  j["ppo"] = {{"discount", c.ppo.discount},
              {"gae_lambda", c.ppo.gae_lambda},
              {"clip", c.ppo.clip},
              {"entropy_coef", c.ppo.entropy_coef},
              {"value_coef", c.ppo.value_coef},
              {"grad_clip_norm", c.ppo.grad_clip_norm},
              {"rollout_length", c.ppo.rollout_length},
              {"num_envs", c.ppo.num_envs},
              {"epochs", c.ppo.epochs},
              {"minibatches", c.ppo.minibatches},
              {"learning_rate", c.ppo.learning_rate},
              {"p_obstacle", c.ppo.p_obstacle},
              {"episode_cap", c.ppo.episode_cap},
              {"total_episodes", c.ppo.total_episodes},
              {"checkpoint_every", c.ppo.checkpoint_every}};
  return j;
}

// Parses a JSON config; unknown keys are rejected, missing keys keep their
// defaults. Parse failures report line and column.
inline RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
  nlohmann::json j;
  try {
    j = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column_of(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(source_name + ": parse error at line " + std::to_string(line) +
                      ", column " + std::to_string(col) + ": " + e.what());
  }
  RunConfig cfg;
  detail::apply_run_config(j, cfg);
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path);
}

// Writes the fully-resolved configuration next to the run outputs so every
// run re-loads to the exact same settings.
inline std::filesystem::path write_resolved_config(const RunConfig& cfg,
                                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / "config_resolved.json";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write resolved config: " + path.string());
  os << to_json(cfg).dump(2) << "\n";
  return path;
}

}  // namespace shepherd
