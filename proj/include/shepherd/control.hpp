#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "shepherd/dynamics.hpp"
#include "shepherd/geometry.hpp"
#include "shepherd/nn.hpp"
#include "shepherd/rng.hpp"

namespace shepherd {

// Input of the low-level driving policy: own position, assigned target,
// nearest obstacle center. Flattens to 6 entries in that order.
struct DrivingObservation {
  Vec2 herder;
  Vec2 target;
  Vec2 obstacle_center;

  std::array<double, 6> flatten() const {
    return {herder.x, herder.y, target.x, target.y, obstacle_center.x, obstacle_center.y};
  }
};

struct Assignment {
  int herder_index = 0;
  std::optional<int> selected_target;  // empty -> fallback mode
};

// High-level selection rule: a target is admissible for a herder when that
// herder is strictly its nearest and the target is still outside the goal;
// among admissible targets pick the one farthest from the goal, ties to the
// lowest index. Strictly-nearest keeps admissible sets disjoint across
// herders without communication.
inline Assignment select_target(int herder_index, const WorldState& state,
                                const Regions& regions) {
  Assignment out;
  out.herder_index = herder_index;
  const Vec2 h = state.herders[static_cast<std::size_t>(herder_index)];
  double best_radius = -1.0;
  for (std::size_t i = 0; i < state.targets.size(); ++i) {
    const Vec2 t = state.targets[i];
    if (in_goal(t, regions)) continue;
    const double own = squared_norm(t - h);
    bool nearest = true;
    for (std::size_t a = 0; a < state.herders.size(); ++a) {
      if (a == static_cast<std::size_t>(herder_index)) continue;
      if (!(own < squared_norm(t - state.herders[a]))) {
        nearest = false;
        break;
      }
    }
    if (!nearest) continue;
    const double radius = norm(t);
    if (radius > best_radius) {
      best_radius = radius;
      out.selected_target = static_cast<int>(i);
    }
  }
  return out;
}

// With no admissible target the herder makes for the nearest point of the
// goal boundary at speed v_herder, idling once within tolerance of it. The
// speed tapers inside the last integration step so the herder settles on the
// circle instead of hunting across it.
inline Vec2 fallback_control(Vec2 herder, const Regions& regions, const WorldParams& p) {
  const double r = norm(herder);
  const double gap = std::abs(r - regions.goal_radius);
  if (gap <= 1e-3) return {0.0, 0.0};
  const Vec2 radial = normalized(herder);  // +x when at the origin
  const Vec2 dir = r > regions.goal_radius ? -radial : radial;
  const double speed = std::min(p.v_herder, gap / p.dt);
  return saturate(speed * dir, p.v_herder);
}

// Observation for one herder: own position, assigned target, and the center
// of the obstacle nearest to the herder. Distance ties are broken by a
// seeded draw; with no obstacles the center is a far sentinel outside any
// activation range.
inline DrivingObservation build_observation(int herder_index, const Assignment& assignment,
                                            const WorldState& state,
                                            const ObstacleField& field,
                                            const Regions& regions, RngStream& tie_rng) {
  DrivingObservation obs;
  obs.herder = state.herders[static_cast<std::size_t>(herder_index)];
  obs.target = state.targets[static_cast<std::size_t>(*assignment.selected_target)];

  if (field.empty()) {
    const double sentinel = 2.0 * regions.init_radius;
    obs.obstacle_center = {sentinel, sentinel};
    return obs;
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> tied;
  for (std::size_t k = 0; k < field.obstacles.size(); ++k) {
    const double s = signed_distance(obs.herder, field.obstacles[k]);
    if (s < best - 1e-9) {
      best = s;
      tied.assign(1, k);
    } else if (s <= best + 1e-9) {
      best = std::min(best, s);
      tied.push_back(k);
    }
  }
  std::size_t pick = tied.front();
  if (tied.size() > 1)
    pick = tied[static_cast<std::size_t>(tie_rng.uniform() * static_cast<double>(tied.size())) %
                tied.size()];
  obs.obstacle_center = field.obstacles[pick].center;
  return obs;
}

// Rescales v onto the [-bound, bound]^2 box preserving direction.
inline Vec2 scale_into_box(Vec2 v, double bound) {
  const double m = infinity_norm(v);
  if (m <= bound) return v;
  return v * (bound / m);
}

struct VortexParams {
  // standoff must sit inside the herder-target interaction radius: at the
  // radius itself the plant repulsion is zero and the heuristic cannot push
  double standoff = 1.25;
  double k_attract = 4.0;   // pull toward the steering point
  double k_standoff = 8.0;  // push-back inside the standoff radius
  double k_vortex = 6.0;    // tangential gain around obstacles
};

// Heuristic driving controller. Attracts the herder to a steering point a
// fixed standoff behind the target so the plant repulsion pushes the target
// along the desired direction, keeps the standoff with a short-range
// repulsion, and circulates tangentially around nearby obstacles. The same
// tangential deflection shapes the desired target direction: a target pressed
// against an obstacle face gets pushed along the face instead of into it.
inline Vec2 vortex_control(const DrivingObservation& obs, const ObstacleField& field,
                           const Regions& regions, const WorldParams& p,
                           const VortexParams& v = {}) {
  (void)regions;
  // desired direction of target travel: toward the goal, bent along the face
  // of any obstacle the target would otherwise be pressed into; the bend runs
  // toward the nearer end of the face, which keeps the side choice stable as
  // the target makes progress
  Vec2 desired = -normalized(obs.target);
  for (const Obstacle& o : field.obstacles) {
    const double s = signed_distance(obs.target, o);
    if (s > p.d_obstacle) continue;
    const Vec2 n = outward_normal(obs.target, o);
    if (dot(desired, n) >= 0.0) continue;  // not pressing into this obstacle
    const double along = dot(obs.target - o.center, o.long_axis);
    const Vec2 tangent = along >= 0.0 ? o.long_axis : -o.long_axis;
    const double w = std::clamp(1.0 - s / p.d_obstacle, 0.0, 1.0);
    desired = normalized((1.0 - w) * desired + w * tangent, tangent);
  }
  const Vec2 steering = obs.target - v.standoff * desired;

  Vec2 command = scale_into_box(v.k_attract * (steering - obs.herder), p.v_herder);

  const Vec2 gap = obs.herder - obs.target;
  const double gap_dist = norm(gap);
  if (gap_dist < v.standoff)
    command += v.k_standoff * (v.standoff - gap_dist) * normalized(gap);

  // tangential bypass, active only while an obstacle blocks the way to the
  // steering point; bounded ramp so the herder can still hold position when
  // the steering point sits close to a face. The circulation runs toward the
  // nearer end of the face, the shorter angular route around.
  const Vec2 to_steering = steering - obs.herder;
  const Vec2 heading = normalized(to_steering);
  for (const Obstacle& o : field.obstacles) {
    const double s = signed_distance(obs.herder, o);
    if (s > p.d_obstacle) continue;
    const Vec2 n = outward_normal(obs.herder, o);
    if (dot(n, heading) >= 0.0 || norm(to_steering) < 0.5 * v.standoff) continue;
    const double ramp = 1.0 - s / p.d_obstacle;
    const double along = dot(obs.herder - o.center, o.long_axis);
    const Vec2 tangent = along >= 0.0 ? o.long_axis : -o.long_axis;
    // shed the command components that fight the slide (into the face or
    // against the circulation), then push along the face
    const double into_face = dot(command, n);
    if (into_face < 0.0) command -= (ramp * into_face) * n;
    const double against = dot(command, tangent);
    if (against < 0.0) command -= (ramp * against) * tangent;
    command += v.k_vortex * ramp * tangent;
  }
  return saturate(command, p.v_herder);
}

// Runs the actor on the normalized observation and returns the command in
// world units, box-clamped. Deterministic mode uses the mean; stochastic mode
// draws one reparameterized sample.
inline Vec2 policy_control(const DrivingObservation& obs, const GaussianPolicy& policy,
                           bool deterministic, RngStream& rng) {
  const auto flat = obs.flatten();
  Eigen::VectorXd x(6);
  for (int i = 0; i < 6; ++i) x(i) = flat[static_cast<std::size_t>(i)] / policy.norm_radius;
  const Eigen::Vector2d mean = forward(policy.actor, x);
  Eigen::Vector2d action = mean;
  if (!deterministic) {
    const Vec2 z = rng.normal_vec2();
    action(0) += std::exp(policy.log_std(0)) * z.x;
    action(1) += std::exp(policy.log_std(1)) * z.y;
  }
  return saturate({action(0) * policy.action_scale, action(1) * policy.action_scale},
                  policy.action_scale);
}

}  // namespace shepherd
