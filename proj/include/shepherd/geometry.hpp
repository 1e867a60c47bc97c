#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "shepherd/errors.hpp"
#include "shepherd/rng.hpp"
#include "shepherd/vec2.hpp"

namespace shepherd {

inline constexpr int kMaxRejections = 10000;

// Rectangle with circular corner fillets. `long_axis` is the unit direction
// of the long side; by construction it is orthogonal to the ray from the
// origin (goal center) to `center`, so the flat face squares up to the goal.
struct Obstacle {
  Vec2 center;
  double half_long = 5.0;
  double half_short = 0.5;
  Vec2 long_axis = {1.0, 0.0};
  double corner_radius = 0.1;

  // Places an obstacle with its long side orthogonal to center->goal.
  static Obstacle facing_goal(Vec2 center, double length, double width,
                              double corner_radius) {
    Obstacle o;
    o.center = center;
    o.half_long = 0.5 * length;
    o.half_short = 0.5 * width;
    o.long_axis = perp(normalized(center));
    o.corner_radius = corner_radius;
    o.validate();
    return o;
  }

  void validate() const {
    if (!(half_long > half_short && half_short > corner_radius && corner_radius >= 0.0))
      throw ConfigError("obstacle requires half_long > half_short > corner_radius >= 0");
    if (std::abs(norm(long_axis) - 1.0) > 1e-9)
      throw ConfigError("obstacle long_axis must be unit-norm");
  }
};

// Side dimensions used when sampling obstacles.
struct ObstacleSpec {
  double length = 10.0;
  double width = 1.0;
  double corner_radius = 0.1;
};

struct ObstacleField {
  std::vector<Obstacle> obstacles;
  double safety_margin = 3.0;

  std::size_t size() const { return obstacles.size(); }
  bool empty() const { return obstacles.empty(); }
};

// Goal disc, initialization disc and the conical curriculum sector.
struct Regions {
  double goal_radius = 5.0;
  double init_radius = 25.0;
  double cone_half_angle = 0.35;

  void validate() const {
    if (!(goal_radius > 0.0 && goal_radius < init_radius))
      throw ConfigError("regions require 0 < goal_radius < init_radius");
    if (!(cone_half_angle > 0.0 && cone_half_angle < M_PI))
      throw ConfigError("cone_half_angle must lie in (0, pi)");
  }
};

// Distance from q to the obstacle boundary; negative inside. The rounded
// rectangle is the box shrunk by corner_radius, inflated back by it.
inline double signed_distance(Vec2 q, const Obstacle& o) {
  const Vec2 d = q - o.center;
  const Vec2 short_axis = perp(o.long_axis);
  const double u = std::abs(dot(d, o.long_axis)) - (o.half_long - o.corner_radius);
  const double v = std::abs(dot(d, short_axis)) - (o.half_short - o.corner_radius);
  const double ox = std::max(u, 0.0);
  const double oy = std::max(v, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(u, v), 0.0) - o.corner_radius;
}

// Gradient of signed_distance. Ties on the interior medial axis break toward
// the long-axis side; exact zeros take the positive sign.
inline Vec2 outward_normal(Vec2 q, const Obstacle& o) {
  const Vec2 d = q - o.center;
  const Vec2 short_axis = perp(o.long_axis);
  const double lu = dot(d, o.long_axis);
  const double lv = dot(d, short_axis);
  const double su = lu < 0.0 ? -1.0 : 1.0;
  const double sv = lv < 0.0 ? -1.0 : 1.0;
  const double u = std::abs(lu) - (o.half_long - o.corner_radius);
  const double v = std::abs(lv) - (o.half_short - o.corner_radius);

  double gu;
  double gv;
  if (u > 0.0 || v > 0.0) {
    // Nearest feature is a side or a corner arc of the shrunk box.
    const double ox = std::max(u, 0.0);
    const double oy = std::max(v, 0.0);
    const double n = std::sqrt(ox * ox + oy * oy);
    gu = ox / n;
    gv = oy / n;
  } else if (u >= v) {
    gu = 1.0;
    gv = 0.0;
  } else {
    gu = 0.0;
    gv = 1.0;
  }
  return (su * gu) * o.long_axis + (sv * gv) * short_axis;
}

inline double signed_distance_min(Vec2 q, const ObstacleField& field) {
  double best = std::numeric_limits<double>::infinity();
  for (const Obstacle& o : field.obstacles) best = std::min(best, signed_distance(q, o));
  return best;
}

inline bool in_goal(Vec2 q, const Regions& regions) {
  return norm(q) <= regions.goal_radius;
}

// Minimum admissible center-to-center distance for obstacles with sides
// (length, width) and buffer margin on all sides.
inline double min_center_spacing(const ObstacleSpec& spec, double margin) {
  const double a = spec.width + 2.0 * margin;
  const double b = spec.length + 2.0 * margin;
  return std::sqrt(a * a + b * b);
}

// Uniform point in the disc of radius `radius`.
inline Vec2 sample_disc_point(double radius, RngStream& rng) {
  const double r = radius * std::sqrt(rng.uniform());
  return r * from_angle(rng.uniform(0.0, 2.0 * M_PI));
}

// Draws `count` obstacle centers uniformly in the init disc, oriented per the
// facing rule, rejecting candidates that violate the pairwise spacing bound
// or whose body comes within `margin` of the goal disc.
inline ObstacleField sample_obstacle_field(int count, const ObstacleSpec& spec,
                                           const Regions& regions, double margin,
                                           RngStream& rng) {
  if (count < 0) throw ConfigError("obstacle count must be >= 0");
  ObstacleField field;
  field.safety_margin = margin;
  field.obstacles.reserve(static_cast<std::size_t>(count));
  const double spacing = min_center_spacing(spec, margin);
  int rejections = 0;
  while (field.obstacles.size() < static_cast<std::size_t>(count)) {
    const Vec2 center = sample_disc_point(regions.init_radius, rng);
    const Obstacle candidate =
        Obstacle::facing_goal(center, spec.length, spec.width, spec.corner_radius);
    bool ok = signed_distance({0.0, 0.0}, candidate) > regions.goal_radius + margin;
    for (const Obstacle& placed : field.obstacles) {
      if (!ok) break;
      ok = distance(placed.center, candidate.center) > spacing;
    }
    if (ok) {
      field.obstacles.push_back(candidate);
      rejections = 0;
    } else if (++rejections >= kMaxRejections) {
      throw InfeasibleError("obstacle placement: " + std::to_string(kMaxRejections) +
                            " consecutive rejections");
    }
  }
  return field;
}

// Uniform point in the init disc excluding all obstacle interiors.
inline Vec2 sample_free_point(const Regions& regions, const ObstacleField& field,
                              RngStream& rng) {
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const Vec2 p = sample_disc_point(regions.init_radius, rng);
    bool free = true;
    for (const Obstacle& o : field.obstacles) {
      if (signed_distance(p, o) <= 0.0) {
        free = false;
        break;
      }
    }
    if (free) return p;
  }
  throw InfeasibleError("free-point sampling exhausted its rejection budget");
}

// Membership test for the conical sector behind `obstacle_center`: farther
// from the origin than the center and within the half-angle of its ray.
inline bool in_cone_region(Vec2 q, Vec2 obstacle_center, const Regions& regions) {
  const double pr = norm(obstacle_center);
  const double qr = norm(q);
  if (!(qr > pr)) return false;
  return dot(normalized(q), normalized(obstacle_center)) >=
         std::cos(regions.cone_half_angle);
}

// Uniform point in the cone sector behind the obstacle, clipped to the init
// disc and to free space. Samples the annular sector directly (area-uniform),
// then rejects points inside obstacles.
inline Vec2 sample_cone_point(const Obstacle& obstacle, const ObstacleField& field,
                              const Regions& regions, RngStream& rng) {
  const double pr = norm(obstacle.center);
  const double R = regions.init_radius;
  if (pr >= R)
    throw InfeasibleError("cone sector is empty: obstacle center outside init disc");
  const double theta0 = std::atan2(obstacle.center.y, obstacle.center.x);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const double r = std::sqrt(rng.uniform(pr * pr, R * R));
    const double theta =
        theta0 + rng.uniform(-regions.cone_half_angle, regions.cone_half_angle);
    const Vec2 p = r * from_angle(theta);
    bool free = true;
    for (const Obstacle& o : field.obstacles) {
      if (signed_distance(p, o) <= 0.0) {
        free = false;
        break;
      }
    }
    if (free && in_cone_region(p, obstacle.center, regions)) return p;
  }
  throw InfeasibleError("cone-point sampling exhausted its rejection budget");
}

}  // namespace shepherd
