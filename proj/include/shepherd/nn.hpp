#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "shepherd/errors.hpp"
#include "shepherd/rng.hpp"

namespace shepherd {

// Dense multilayer perceptron: affine -> ReLU chain with an identity output
// layer. Weights[l] maps layer l (cols) to layer l+1 (rows).
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }

  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim());
    for (const auto& w : weights) dims.push_back(static_cast<int>(w.rows()));
    return dims;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += weights[l].size() + biases[l].size();
    return n;
  }
};

namespace detail {

// Orthogonal matrix via QR of a Gaussian draw, sign-fixed so the
// decomposition is unique, scaled by `gain`.
inline Eigen::MatrixXd orthogonal_init(int rows, int cols, double gain, RngStream& rng) {
  const int r = std::max(rows, cols);
  const int c = std::min(rows, cols);
  Eigen::MatrixXd a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rm = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j)
    if (rm(j, j) < 0.0) q.col(j) *= -1.0;
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

}  // namespace detail

// Builds an MLP with orthogonal hidden layers (gain sqrt(2)) and an output
// layer scaled by `output_gain`; biases start at zero.
inline Mlp make_mlp(const std::vector<int>& dims, double output_gain, RngStream& rng) {
  if (dims.size() < 2) throw ConfigError("mlp needs at least input and output dims");
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const bool last = l + 2 == dims.size();
    const double gain = last ? output_gain : std::sqrt(2.0);
    net.weights.push_back(detail::orthogonal_init(dims[l + 1], dims[l], gain, rng));
    net.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  return net;
}

// Activations retained by forward for the matching backward call.
// Row convention: one sample per row.
struct MlpCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post-ReLU per hidden layer
};

inline Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x,
                                     MlpCache* cache = nullptr) {
  if (x.cols() != net.input_dim())
    throw ConfigError("forward: input has " + std::to_string(x.cols()) +
                      " features, network expects " + std::to_string(net.input_dim()));
  if (cache != nullptr) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::MatrixXd z = h * net.weights[l].transpose();
    z.rowwise() += net.biases[l].transpose();
    if (cache != nullptr) cache->pre.push_back(z);
    if (l + 1 < net.weights.size()) {
      h = z.cwiseMax(0.0);
      if (cache != nullptr) cache->post.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

inline Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& x,
                               MlpCache* cache = nullptr) {
  return forward_batch(net, x.transpose(), cache).transpose();
}

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;  // gradient w.r.t. the forward input

  static MlpGrads zeros_like(const Mlp& net) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
      g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
  }
};

// Reverse pass for the scalar loss whose gradient w.r.t. the network output
// is `output_grad` (same shape as the forward output). ReLU passes no
// gradient at exactly zero.
inline MlpGrads backward_batch(const Mlp& net, const MlpCache& cache,
                               const Eigen::MatrixXd& output_grad) {
  const std::size_t layers = net.weights.size();
  if (cache.pre.size() != layers)
    throw ConfigError("backward: cache does not match the network");
  MlpGrads grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  Eigen::MatrixXd dz = output_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& layer_in = l == 0 ? cache.input : cache.post[l - 1];
    grads.weights[l].noalias() = dz.transpose() * layer_in;
    grads.biases[l] = dz.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd dh = dz * net.weights[l];
      dz = dh.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    } else {
      grads.input = dz * net.weights[0];
    }
  }
  return grads;
}

// Actor-critic pair with a state-independent diagonal Gaussian head.
// norm_radius, action_scale and missing_obstacle_sentinel are the runtime
// conventions baked into the weights file so training and inference agree.
struct GaussianPolicy {
  Mlp actor;
  Mlp critic;
  Eigen::Vector2d log_std = Eigen::Vector2d::Zero();
  double norm_radius = 25.0;
  double action_scale = 8.0;
  double missing_obstacle_sentinel = 50.0;

  std::int64_t parameter_count() const {
    return actor.parameter_count() + critic.parameter_count() + log_std.size();
  }
};

inline GaussianPolicy make_policy(int obs_dim, int action_dim, int hidden_layers,
                                  int hidden_width, double norm_radius,
                                  double action_scale, RngStream& rng) {
  std::vector<int> actor_dims{obs_dim};
  for (int i = 0; i < hidden_layers; ++i) actor_dims.push_back(hidden_width);
  actor_dims.push_back(action_dim);
  std::vector<int> critic_dims = actor_dims;
  critic_dims.back() = 1;

  GaussianPolicy policy;
  RngStream actor_rng = rng.split(1);
  RngStream critic_rng = rng.split(2);
  policy.actor = make_mlp(actor_dims, 0.01, actor_rng);
  policy.critic = make_mlp(critic_dims, 1.0, critic_rng);
  policy.log_std.setZero();
  policy.norm_radius = norm_radius;
  policy.action_scale = action_scale;
  policy.missing_obstacle_sentinel = 2.0 * norm_radius;
  return policy;
}

struct PolicyEvaluation {
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

inline double gaussian_log_prob(const Eigen::Vector2d& action, const Eigen::Vector2d& mean,
                                const Eigen::Vector2d& log_std) {
  const Eigen::Vector2d std = log_std.array().exp();
  const Eigen::Vector2d z = (action - mean).cwiseQuotient(std);
  return -0.5 * z.squaredNorm() - log_std.sum() - std::log(2.0 * M_PI);
}

inline double gaussian_entropy(const Eigen::Vector2d& log_std) {
  return log_std.size() * 0.5 * std::log(2.0 * M_PI * std::exp(1.0)) + log_std.sum();
}

// Diagonal-Gaussian log-density of `action` under the actor at `obs`, the
// (state-independent) entropy, and the critic value.
inline PolicyEvaluation log_prob_and_entropy(const GaussianPolicy& policy,
                                             const Eigen::VectorXd& obs,
                                             const Eigen::Vector2d& action) {
  PolicyEvaluation out;
  const Eigen::Vector2d mean = forward(policy.actor, obs);
  out.log_prob = gaussian_log_prob(action, mean, policy.log_std);
  out.entropy = gaussian_entropy(policy.log_std);
  out.value = forward(policy.critic, obs)(0);
  return out;
}

// ---- Adam ----

struct AdamState {
  std::int64_t step_count = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(Eigen::Index n, double lr) {
    AdamState s;
    s.first_moment = Eigen::VectorXd::Zero(n);
    s.second_moment = Eigen::VectorXd::Zero(n);
    s.learning_rate = lr;
    return s;
  }
};

// Bias-corrected adaptive-moment update, in place.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.first_moment.size())
    throw ConfigError("adam_step: parameter/gradient/state sizes differ");
  ++s.step_count;
  s.first_moment = s.beta1 * s.first_moment + (1.0 - s.beta1) * grads;
  s.second_moment =
      s.beta2 * s.second_moment.array() + (1.0 - s.beta2) * grads.array().square();
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
  params.array() -= s.learning_rate * (s.first_moment.array() / bc1) /
                    ((s.second_moment.array() / bc2).sqrt() + s.epsilon);
}

// ---- flat parameter views (declaration order: actor, critic, log_std) ----

namespace detail {

template <typename Policy, typename Fn>
void for_each_tensor(Policy& policy, Fn&& fn) {
  for (std::size_t l = 0; l < policy.actor.weights.size(); ++l) {
    fn(policy.actor.weights[l]);
    fn(policy.actor.biases[l]);
  }
  for (std::size_t l = 0; l < policy.critic.weights.size(); ++l) {
    fn(policy.critic.weights[l]);
    fn(policy.critic.biases[l]);
  }
  fn(policy.log_std);
}

}  // namespace detail

inline Eigen::VectorXd gather_parameters(const GaussianPolicy& policy) {
  Eigen::VectorXd flat(policy.parameter_count());
  Eigen::Index offset = 0;
  detail::for_each_tensor(policy, [&](const auto& t) {
    flat.segment(offset, t.size()) =
        Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    offset += t.size();
  });
  return flat;
}

inline void scatter_parameters(GaussianPolicy& policy, const Eigen::VectorXd& flat) {
  if (flat.size() != policy.parameter_count())
    throw ConfigError("scatter_parameters: size mismatch");
  Eigen::Index offset = 0;
  detail::for_each_tensor(policy, [&](auto& t) {
    Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(offset, t.size());
    offset += t.size();
  });
}

// Gradients for the full parameter set, flattened in declaration order.
struct PolicyGrads {
  MlpGrads actor;
  MlpGrads critic;
  Eigen::Vector2d log_std = Eigen::Vector2d::Zero();

  static PolicyGrads zeros_like(const GaussianPolicy& policy) {
    PolicyGrads g;
    g.actor = MlpGrads::zeros_like(policy.actor);
    g.critic = MlpGrads::zeros_like(policy.critic);
    return g;
  }

  Eigen::VectorXd flatten(const GaussianPolicy& policy) const {
    Eigen::VectorXd flat(policy.parameter_count());
    Eigen::Index offset = 0;
    auto put = [&](const auto& t) {
      flat.segment(offset, t.size()) =
          Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
      offset += t.size();
    };
    for (std::size_t l = 0; l < actor.weights.size(); ++l) {
      put(actor.weights[l]);
      put(actor.biases[l]);
    }
    for (std::size_t l = 0; l < critic.weights.size(); ++l) {
      put(critic.weights[l]);
      put(critic.biases[l]);
    }
    put(log_std);
    return flat;
  }
};

// ---- weights file ----
//
// Binary, little-endian. Layout:
//   "SHRD" | u32 version | actor dims (u32 count, u32 each)
//   | critic dims (u32 count, u32 each)
//   | f64 norm_radius | f64 action_scale | f64 missing_obstacle_sentinel
//   | u64 parameter count | f64 parameters in declaration order

inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("weights file truncated while reading u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw IoError("weights file truncated while reading u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_dims(std::ostream& os, const std::vector<int>& dims) {
  write_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) write_u32(os, static_cast<std::uint32_t>(d));
}

inline std::vector<int> read_dims(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  if (n < 2 || n > 64) throw IoError("weights header: implausible layer count");
  std::vector<int> dims(n);
  for (auto& d : dims) d = static_cast<int>(read_u32(is));
  return dims;
}

inline std::string dims_to_string(const std::vector<int>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i)
    s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

}  // namespace detail

inline void save_weights(const GaussianPolicy& policy, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open weights file for writing: " + path);
  os.write("SHRD", 4);
  detail::write_u32(os, kWeightsVersion);
  detail::write_dims(os, policy.actor.layer_dims());
  detail::write_dims(os, policy.critic.layer_dims());
  detail::write_f64(os, policy.norm_radius);
  detail::write_f64(os, policy.action_scale);
  detail::write_f64(os, policy.missing_obstacle_sentinel);
  const Eigen::VectorXd flat = gather_parameters(policy);
  detail::write_u64(os, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) detail::write_f64(os, flat(i));
  if (!os) throw IoError("short write to weights file: " + path);
}

inline GaussianPolicy load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open weights file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SHRD")
    throw IoError("not a weights file (bad magic): " + path);
  const std::uint32_t version = detail::read_u32(is);
  if (version != kWeightsVersion)
    throw IoError("weights version mismatch: expected " +
                  std::to_string(kWeightsVersion) + ", found " + std::to_string(version));
  const std::vector<int> actor_dims = detail::read_dims(is);
  const std::vector<int> critic_dims = detail::read_dims(is);

  GaussianPolicy policy;
  RngStream zeros(0);
  policy.actor = make_mlp(actor_dims, 0.0, zeros);
  policy.critic = make_mlp(critic_dims, 0.0, zeros);
  policy.norm_radius = detail::read_f64(is);
  policy.action_scale = detail::read_f64(is);
  policy.missing_obstacle_sentinel = detail::read_f64(is);

  const std::uint64_t count = detail::read_u64(is);
  if (count != static_cast<std::uint64_t>(policy.parameter_count()))
    throw IoError("weights header: expected " + std::to_string(policy.parameter_count()) +
                  " parameters for dims " + detail::dims_to_string(actor_dims) + "/" +
                  detail::dims_to_string(critic_dims) + ", header says " +
                  std::to_string(count));
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = detail::read_f64(is);
  scatter_parameters(policy, flat);
  return policy;
}

// Loads weights and enforces the driving-policy interface (6 observation
// entries, 2 action components, scalar critic).
inline GaussianPolicy load_driving_policy(const std::string& path) {
  GaussianPolicy policy = load_weights(path);
  if (policy.actor.input_dim() != 6 || policy.actor.output_dim() != 2 ||
      policy.critic.input_dim() != 6 || policy.critic.output_dim() != 1)
    throw IoError("weights at " + path + " are not a driving policy: actor " +
                  detail::dims_to_string(policy.actor.layer_dims()) + ", critic " +
                  detail::dims_to_string(policy.critic.layer_dims()) +
                  "; expected 6 inputs, 2 action outputs, scalar value");
  return policy;
}

}  // namespace shepherd
