#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "shepherd/vec2.hpp"

namespace shepherd {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer (Stafford mix 13).
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based pseudo-random stream (splitmix64). Streams for distinct keys
// are independent for simulation purposes, which makes per-(episode, step,
// agent) substreams cheap: hash the indices into a key and draw. All outputs
// are pure functions of the seed, so trajectories are bit-reproducible and
// independent of scheduling.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal pair (Box-Muller).
  std::pair<double, double> normal_pair() {
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    return {r * std::cos(t), r * std::sin(t)};
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    auto [a, b] = normal_pair();
    cached_ = b;
    has_cached_ = true;
    return a;
  }

  Vec2 normal_vec2() {
    auto [a, b] = normal_pair();
    return {a, b};
  }

  // Derived stream, decorrelated from this one and from other tags.
  RngStream split(std::uint64_t tag) const { return RngStream(derive(state_, tag)); }

  static std::uint64_t derive(std::uint64_t key, std::uint64_t tag) {
    return detail::mix64(detail::mix64(key + detail::kGolden * (tag + 1)) ^ tag);
  }

  template <typename... Tags>
  static std::uint64_t derive(std::uint64_t key, std::uint64_t tag, Tags... rest) {
    return derive(derive(key, tag), rest...);
  }

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Substream factory for one episode. Hands out one stream per (step, agent)
// so per-agent noise does not depend on evaluation order or thread count.
class EpisodeRng {
 public:
  EpisodeRng() : key_(0) {}
  EpisodeRng(std::uint64_t master_seed, std::uint64_t episode_index)
      : key_(RngStream::derive(master_seed, 0x45505349ULL, episode_index)) {}

  static EpisodeRng from_key(std::uint64_t key) {
    EpisodeRng rng;
    rng.key_ = key;
    return rng;
  }

  std::uint64_t key() const { return key_; }

  RngStream stream(std::uint64_t step, std::uint64_t agent) const {
    return RngStream(RngStream::derive(key_, step, agent));
  }

  RngStream stream(std::uint64_t tag) const {
    return RngStream(RngStream::derive(key_, tag));
  }

 private:
  std::uint64_t key_;
};

}  // namespace shepherd
