#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "shepherd/dynamics.hpp"
#include "shepherd/geometry.hpp"

namespace shepherd {

// Per-episode trace of the performance measures.
struct EpisodeRecord {
  std::vector<double> chi_series;  // success fraction per step, in [0, 1]
  std::vector<std::vector<double>> herder_displacements;  // [herder][step]
  std::int64_t steps = 0;
  bool succeeded = false;
  std::optional<std::int64_t> gathering_step;
};

// Fraction of targets inside the goal disc.
inline double chi(const WorldState& state, const Regions& regions) {
  std::size_t inside = 0;
  for (const Vec2& t : state.targets)
    if (in_goal(t, regions)) ++inside;
  return static_cast<double>(inside) / static_cast<double>(state.targets.size());
}

// First step index at which the success fraction reaches chi_star.
inline std::optional<std::int64_t> gathering_time(const std::vector<double>& chi_series,
                                                  double chi_star) {
  for (std::size_t t = 0; t < chi_series.size(); ++t)
    if (chi_series[t] >= chi_star) return static_cast<std::int64_t>(t);
  return std::nullopt;
}

// Mean distance travelled per herder (discrete path integral).
inline double path_length(const std::vector<std::vector<double>>& herder_displacements) {
  if (herder_displacements.empty()) return 0.0;
  double total = 0.0;
  for (const auto& steps : herder_displacements)
    for (double d : steps) total += d;
  return total / static_cast<double>(herder_displacements.size());
}

struct MetricsSummary {
  std::size_t episodes = 0;
  double success_rate = 0.0;
  // Over successful episodes only (absent when none succeeded);
  // population std (divisor n).
  std::optional<double> gathering_mean_steps;
  std::optional<double> gathering_std_steps;
  double gathering_time_unit_seconds = 0.01;  // multiply steps by this for seconds
  // Over all episodes; each episode's value is the per-herder mean.
  double path_length_mean = 0.0;
  double path_length_std = 0.0;
  // Dispersion across individual (episode, herder) path lengths.
  double path_length_per_herder_std = 0.0;
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

}  // namespace detail

inline MetricsSummary aggregate(const std::vector<EpisodeRecord>& records,
                                double step_seconds = 0.01) {
  if (records.empty()) throw ConfigError("aggregate requires at least one episode record");
  MetricsSummary summary;
  summary.episodes = records.size();
  summary.gathering_time_unit_seconds = step_seconds;

  std::vector<double> gather_steps;
  std::vector<double> path_means;
  std::vector<double> per_herder;
  std::size_t successes = 0;
  for (const EpisodeRecord& r : records) {
    if (r.succeeded) {
      ++successes;
      if (r.gathering_step) gather_steps.push_back(static_cast<double>(*r.gathering_step));
    }
    path_means.push_back(path_length(r.herder_displacements));
    for (const auto& steps : r.herder_displacements) {
      double total = 0.0;
      for (double d : steps) total += d;
      per_herder.push_back(total);
    }
  }
  summary.success_rate =
      static_cast<double>(successes) / static_cast<double>(records.size());
  if (!gather_steps.empty()) {
    const auto g = detail::mean_std(gather_steps);
    summary.gathering_mean_steps = g.mean;
    summary.gathering_std_steps = g.std;
  }
  const auto p = detail::mean_std(path_means);
  summary.path_length_mean = p.mean;
  summary.path_length_std = p.std;
  summary.path_length_per_herder_std = detail::mean_std(per_herder).std;
  return summary;
}

}  // namespace shepherd
