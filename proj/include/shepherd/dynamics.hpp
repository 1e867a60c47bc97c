#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "shepherd/geometry.hpp"
#include "shepherd/rng.hpp"
#include "shepherd/vec2.hpp"

namespace shepherd {

struct WorldParams {
  double beta = 3.0;         // herder->target repulsion gain
  double lambda = 2.5;       // herder-target interaction radius
  double diffusion = 0.1;    // target diffusion coefficient
  double k_obstacle = 1.0;   // obstacle potential gain
  double d_obstacle = 3.0;   // obstacle activation distance
  double v_target = 7.5;     // target drift saturation bound
  double v_herder = 8.0;     // herder velocity saturation bound
  double dt = 0.01;          // integration step
  double s_min = 0.05;       // distance floor for the obstacle force law

  void validate() const {
    auto positive = [](double v) { return v > 0.0; };
    if (!(positive(beta) && positive(lambda) && positive(diffusion) &&
          positive(k_obstacle) && positive(d_obstacle) && positive(v_target) &&
          positive(v_herder) && positive(dt) && positive(s_min)))
      throw ConfigError("world parameters must be strictly positive");
  }
};

struct WorldState {
  std::vector<Vec2> herders;
  std::vector<Vec2> targets;
  std::int64_t time_step = 0;
};

// Counters for events the step functions tolerate but flag.
struct StepDiagnostics {
  std::int64_t out_of_box_controls = 0;
};

// Per-component clamp to [-bound, bound].
inline Vec2 saturate(Vec2 v, double bound) {
  assert(bound > 0.0);
  return {std::clamp(v.x, -bound, bound), std::clamp(v.y, -bound, bound)};
}

// Repulsion away from every obstacle whose boundary is within the activation
// distance. The potential is compact-support; its gradient magnitude is
// k_o (1/s - 1/d*) / s^2 and vanishes at s = d*. Distances at or below s_min
// (including penetration) are evaluated at s_min so the force stays bounded.
inline Vec2 obstacle_force(Vec2 q, const ObstacleField& field, const WorldParams& p) {
  Vec2 force{0.0, 0.0};
  for (const Obstacle& o : field.obstacles) {
    const double s = signed_distance(q, o);
    if (s > p.d_obstacle) continue;
    const double se = std::max(s, p.s_min);
    const double mag = p.k_obstacle * (1.0 / se - 1.0 / p.d_obstacle) / (se * se);
    force += mag * outward_normal(q, o);
  }
  return force;
}

// Harmonic radial repulsion from herders within the interaction radius;
// vanishes at distance lambda. A coincident pair contributes magnitude
// beta*lambda in a direction hashed from the pair indices.
inline Vec2 herder_repulsion(Vec2 target, std::span<const Vec2> herders,
                             const WorldParams& p, int target_index = 0) {
  Vec2 force{0.0, 0.0};
  for (std::size_t j = 0; j < herders.size(); ++j) {
    const Vec2 d = target - herders[j];
    const double dist = norm(d);
    if (dist > p.lambda) continue;
    if (dist < 1e-9) {
      const std::uint64_t h = RngStream::derive(
          0x434f494eULL, static_cast<std::uint64_t>(target_index), j);
      const double angle =
          2.0 * M_PI * static_cast<double>(h >> 11) * 0x1.0p-53;
      force += (p.beta * p.lambda) * from_angle(angle);
    } else {
      force += (p.beta * (p.lambda - dist) / dist) * d;
    }
  }
  return force;
}

// One Euler-Maruyama step for every target from the pre-step snapshot.
// Drift is saturated at v_target; the diffusion term is added outside the
// saturation. Noise for target i at step t comes from the (t, i) substream.
inline std::vector<Vec2> target_step(const WorldState& state, const ObstacleField& field,
                                     const WorldParams& p, const EpisodeRng& rng) {
  std::vector<Vec2> next(state.targets.size());
  const double noise_scale = std::sqrt(2.0 * p.diffusion * p.dt);
  for (std::size_t i = 0; i < state.targets.size(); ++i) {
    const Vec2 t = state.targets[i];
    Vec2 drift = herder_repulsion(t, state.herders, p, static_cast<int>(i));
    drift += obstacle_force(t, field, p);
    drift = saturate(drift, p.v_target);
    RngStream noise =
        rng.stream(static_cast<std::uint64_t>(state.time_step), i);
    next[i] = t + p.dt * drift + noise_scale * noise.normal_vec2();
    assert(next[i].is_finite());
  }
  return next;
}

// One integration step for every herder: commanded velocity plus obstacle
// repulsion, saturated at v_herder. Controls are expected inside the box
// already; violations are clamped and counted.
inline std::vector<Vec2> herder_step(const WorldState& state,
                                     std::span<const Vec2> controls,
                                     const ObstacleField& field, const WorldParams& p,
                                     StepDiagnostics* diag = nullptr) {
  assert(controls.size() == state.herders.size());
  std::vector<Vec2> next(state.herders.size());
  for (std::size_t j = 0; j < state.herders.size(); ++j) {
    Vec2 u = controls[j];
    if (infinity_norm(u) > p.v_herder) {
      if (diag != nullptr) ++diag->out_of_box_controls;
      u = saturate(u, p.v_herder);
    }
    const Vec2 v = saturate(u + obstacle_force(state.herders[j], field, p), p.v_herder);
    next[j] = state.herders[j] + p.dt * v;
    assert(next[j].is_finite());
  }
  return next;
}

// Advances targets and herders one step from the same snapshot.
inline WorldState world_step(const WorldState& state, std::span<const Vec2> controls,
                             const ObstacleField& field, const WorldParams& p,
                             const EpisodeRng& rng, StepDiagnostics* diag = nullptr) {
  WorldState next;
  next.targets = target_step(state, field, p, rng);
  next.herders = herder_step(state, controls, field, p, diag);
  next.time_step = state.time_step + 1;
  return next;
}

}  // namespace shepherd
