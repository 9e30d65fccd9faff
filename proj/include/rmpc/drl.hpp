// Copyright 2026 The rmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Multilayer perceptron, replay buffer and DQN learner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/errors.hpp"

namespace rmpc {

/// Fully connected network, ReLU on hidden layers and a linear output layer.
/// Layer l maps sizes[l] -> sizes[l + 1] as W_l x + b_l.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw DimensionError("an MLP needs at least input and output sizes");
    for (int s : sizes_) {
      if (s <= 0) throw DimensionError("layer sizes must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
  }

  /// He-uniform weights, zero biases.
  template <class Rng>
  void initialize(Rng& rng) {
    for (auto& w : weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    }
    for (auto& b : biases_) b.setZero();
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim()) throw DimensionError("MLP input dimension mismatch");
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = weights_[l] * h + biases_[l];
      if (l + 1 < weights_.size()) h = h.cwiseMax(0.0);
    }
    return h;
  }

  /// Columns are samples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const {
    if (x.rows() != input_dim()) throw DimensionError("MLP input dimension mismatch");
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l] * h;
      z.colwise() += biases_[l];
      h = l + 1 < weights_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return h;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Parameters flattened layer by layer (weights column-major, then bias).
  Eigen::VectorXd flat() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      v.segment(k, weights_[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
      k += weights_[l].size();
      v.segment(k, biases_[l].size()) = biases_[l];
      k += biases_[l].size();
    }
    return v;
  }

  void set_flat(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw DimensionError("parameter vector length mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) = v.segment(k, weights_[l].size());
      k += weights_[l].size();
      biases_[l] = v.segment(k, biases_[l].size());
      k += biases_[l].size();
    }
  }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct TdBatch {
  // Columns are samples.
  Eigen::MatrixXd observations;
  std::vector<int> actions;
  Eigen::VectorXd targets;
};

struct MlpGradient {
  Eigen::VectorXd flat;
  double loss = 0.0;
};

/// Gradient of L = mean_i (Q(o_i, a_i) - y_i)^2 with respect to the flattened parameters.
inline MlpGradient mlp_gradient(const Mlp& net, const TdBatch& batch) {
  const auto n = batch.observations.cols();
  if (n == 0) throw DimensionError("empty batch");
  if (static_cast<Eigen::Index>(batch.actions.size()) != n || batch.targets.size() != n) {
    throw DimensionError("batch component lengths differ");
  }
  const auto& w = net.weights();
  const auto& b = net.biases();
  const std::size_t layers = w.size();
  std::vector<Eigen::MatrixXd> act(layers + 1);
  act[0] = batch.observations;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = w[l] * act[l];
    z.colwise() += b[l];
    act[l + 1] = l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(net.output_dim(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= net.output_dim()) throw DimensionError("action index out of range");
    const double e = act[layers](a, i) - batch.targets(i);
    loss += e * e;
    delta(a, i) = 2.0 * e / static_cast<double>(n);
  }
  std::vector<Eigen::MatrixXd> gw(layers);
  std::vector<Eigen::VectorXd> gb(layers);
  for (std::size_t l = layers; l-- > 0;) {
    gw[l] = delta * act[l].transpose();
    gb[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (w[l].transpose() * delta).cwiseProduct((act[l].array() > 0.0).cast<double>().matrix());
    }
  }
  MlpGradient g;
  g.loss = loss / static_cast<double>(n);
  g.flat.resize(net.parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    g.flat.segment(k, gw[l].size()) = Eigen::Map<const Eigen::VectorXd>(gw[l].data(), gw[l].size());
    k += gw[l].size();
    g.flat.segment(k, gb[l].size()) = gb[l];
    k += gb[l].size();
  }
  return g;
}

struct Transition {
  Eigen::VectorXd observation;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_observation;
  bool done = false;
};

/// Fixed-capacity FIFO with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("dqn.replay_capacity", "must be > 0");
    data_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

  template <class Rng>
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    if (data_.empty()) throw LifecycleError("sampling from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> u(0, data_.size() - 1);
    std::vector<const Transition*> out(n);
    for (auto& p : out) p = &data_[u(rng)];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

/// Running mean/variance (Welford) that stops updating after `warmup` samples.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(int dim, std::int64_t warmup)
      : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)), warmup_(warmup) {}

  void observe(const Eigen::VectorXd& x) {
    if (frozen()) return;
    ++count_;
    const Eigen::VectorXd d = x - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d.cwiseProduct(x - mean_);
  }

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
    if (count_ < 2) return x - mean_;
    const Eigen::VectorXd var = m2_ / static_cast<double>(count_ - 1);
    return (x - mean_).cwiseQuotient((var.array() + 1e-8).sqrt().matrix());
  }

  bool frozen() const { return count_ >= warmup_; }
  std::int64_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& m2() const { return m2_; }
  std::int64_t warmup() const { return warmup_; }

  void restore(Eigen::VectorXd mean, Eigen::VectorXd m2, std::int64_t count, std::int64_t warmup) {
    mean_ = std::move(mean);
    m2_ = std::move(m2);
    count_ = count;
    warmup_ = warmup;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  std::int64_t count_ = 0;
  std::int64_t warmup_ = 0;
};

struct DqnConfig {
  std::vector<int> hidden{400, 300};
  double learning_rate = 1e-4;
  double discount = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 10000;
  std::size_t replay_capacity = 50000;
  std::size_t batch_size = 64;
  std::int64_t target_sync = 500;
  double gradient_clip = 10.0;
  std::int64_t normalizer_warmup = 1000;
  std::uint64_t seed = 1;

  void validate() const {
    for (int h : hidden) {
      if (h <= 0) throw ConfigError("dqn.hidden", "layer sizes must be > 0");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("dqn.learning_rate", "must be > 0");
    if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("dqn.discount", "must be in [0, 1)");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw ConfigError("dqn.epsilon_start", "must be in [0, 1]");
    if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) throw ConfigError("dqn.epsilon_end", "must be in [0, 1]");
    if (epsilon_decay_steps < 0) throw ConfigError("dqn.epsilon_decay_steps", "must be >= 0");
    if (batch_size == 0) throw ConfigError("dqn.batch_size", "must be > 0");
    if (replay_capacity < batch_size) throw ConfigError("dqn.replay_capacity", "must be >= batch_size");
    if (target_sync < 1) throw ConfigError("dqn.target_sync", "must be >= 1");
    if (!(gradient_clip > 0.0)) throw ConfigError("dqn.gradient_clip", "must be > 0");
    if (normalizer_warmup < 0) throw ConfigError("dqn.normalizer_warmup", "must be >= 0");
  }
};

/// Argmax with probability 1 - epsilon (lowest index on ties), otherwise uniform.
template <class Rng>
int select_action(const Eigen::VectorXd& q, double epsilon, Rng& rng) {
  if (q.size() == 0) throw DimensionError("empty q vector");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return std::uniform_int_distribution<int>(0, static_cast<int>(q.size()) - 1)(rng);
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i) {
    if (q(i) > q(best)) best = i;
  }
  return static_cast<int>(best);
}

/// TD targets y = r + discount * max_a' Q_target(o', a') * (1 - done).
inline Eigen::VectorXd td_targets(const Mlp& target, const std::vector<double>& rewards, const Eigen::MatrixXd& next,
                                  const std::vector<bool>& done, double discount) {
  const Eigen::MatrixXd q = target.forward_batch(next);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rewards.size()));
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double boot = done[i] ? 0.0 : q.col(static_cast<Eigen::Index>(i)).maxCoeff();
    y(static_cast<Eigen::Index>(i)) = rewards[i] + discount * boot;
  }
  return y;
}

/// One SGD step on the online network with gradient-norm clipping. Returns the loss.
inline double sgd_step(Mlp& net, const TdBatch& batch, double learning_rate, double clip) {
  MlpGradient g = mlp_gradient(net, batch);
  const double norm = g.flat.norm();
  if (norm > clip) g.flat *= clip / norm;
  net.set_flat(net.flat() - learning_rate * g.flat);
  return g.loss;
}

/// Online/target network pair with replay, normalizer and schedule state.
class DqnAgent {
 public:
  DqnAgent(int observation_dim, int num_actions, const DqnConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed), replay_(cfg.replay_capacity), normalizer_(observation_dim, cfg.normalizer_warmup) {
    cfg_.validate();
    std::vector<int> sizes{observation_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(num_actions);
    online_ = Mlp(sizes);
    online_.initialize(rng_);
    target_ = online_;
  }

  double epsilon() const {
    if (cfg_.epsilon_decay_steps == 0 || steps_ >= cfg_.epsilon_decay_steps) return cfg_.epsilon_end;
    const double f = static_cast<double>(steps_) / static_cast<double>(cfg_.epsilon_decay_steps);
    return cfg_.epsilon_start + f * (cfg_.epsilon_end - cfg_.epsilon_start);
  }

  Eigen::VectorXd q_values(const Eigen::VectorXd& o) const { return online_.forward(normalizer_.normalize(o)); }

  int greedy(const Eigen::VectorXd& o) const {
    std::mt19937_64 unused(0);
    return select_action(q_values(o), 0.0, unused);
  }

  /// Epsilon-greedy action; advances the exploration schedule.
  int act(const Eigen::VectorXd& o) {
    normalizer_.observe(o);
    const int a = select_action(q_values(o), epsilon(), rng_);
    ++steps_;
    return a;
  }

  void remember(Transition t) { replay_.push(std::move(t)); }

  bool ready() const { return replay_.size() >= cfg_.batch_size; }

  /// One DQN update from a uniform replay sample. Returns the loss.
  double update() {
    if (!ready()) throw LifecycleError("update before the replay buffer holds a batch");
    const auto sample = replay_.sample(cfg_.batch_size, rng_);
    const auto n = static_cast<Eigen::Index>(sample.size());
    TdBatch batch;
    batch.observations.resize(online_.input_dim(), n);
    Eigen::MatrixXd next(online_.input_dim(), n);
    std::vector<double> rewards(sample.size());
    std::vector<bool> done(sample.size());
    batch.actions.resize(sample.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Transition& t = *sample[static_cast<std::size_t>(i)];
      batch.observations.col(i) = normalizer_.normalize(t.observation);
      next.col(i) = normalizer_.normalize(t.next_observation);
      batch.actions[static_cast<std::size_t>(i)] = t.action;
      rewards[static_cast<std::size_t>(i)] = t.reward;
      done[static_cast<std::size_t>(i)] = t.done;
    }
    batch.targets = td_targets(target_, rewards, next, done, cfg_.discount);
    const double loss = sgd_step(online_, batch, cfg_.learning_rate, cfg_.gradient_clip);
    if (++updates_ % cfg_.target_sync == 0) target_ = online_;
    return loss;
  }

  const Mlp& online() const { return online_; }
  const Mlp& target() const { return target_; }
  Mlp& online() { return online_; }
  const Normalizer& normalizer() const { return normalizer_; }
  Normalizer& normalizer() { return normalizer_; }
  const ReplayBuffer& replay() const { return replay_; }
  const DqnConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t updates() const { return updates_; }

 private:
  DqnConfig cfg_;
  std::mt19937_64 rng_;
  Mlp online_;
  Mlp target_;
  ReplayBuffer replay_;
  Normalizer normalizer_;
  std::int64_t steps_ = 0;
  std::int64_t updates_ = 0;
};

/// Frozen greedy policy: network plus observation normalizer.
struct QPolicy {
  Mlp net;
  Normalizer normalizer;

  int greedy(const Eigen::VectorXd& o) const {
    std::mt19937_64 unused(0);
    return select_action(net.forward(normalizer.normalize(o)), 0.0, unused);
  }
};

inline constexpr char kCheckpointMagic[8] = {'R', 'M', 'P', 'C', 'D', 'Q', 'N', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}
inline void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline Eigen::VectorXd read_vector(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 32)) throw std::runtime_error("corrupt checkpoint vector length");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}
}  // namespace detail

/// Binary layout: magic, version, config hash, layer sizes, flat parameters,
/// normalizer state. Native endianness.
inline void save_checkpoint(const std::string& path, const QPolicy& p, std::uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, config_hash);
  detail::write_pod<std::uint64_t>(os, p.net.sizes().size());
  for (int s : p.net.sizes()) detail::write_pod<std::int64_t>(os, s);
  detail::write_vector(os, p.net.flat());
  detail::write_vector(os, p.normalizer.mean());
  detail::write_vector(os, p.normalizer.m2());
  detail::write_pod<std::int64_t>(os, p.normalizer.count());
  detail::write_pod<std::int64_t>(os, p.normalizer.warmup());
  if (!os) throw std::runtime_error("failed writing " + path);
}

/// Throws if the file is malformed or was written under a different config hash.
inline QPolicy load_checkpoint(const std::string& path, std::uint64_t expected_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path + ": not a policy checkpoint");
  }
  if (detail::read_pod<std::uint32_t>(is) != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version");
  }
  const auto hash = detail::read_pod<std::uint64_t>(is);
  if (hash != expected_hash) throw ConfigError("checkpoint", "config hash does not match the loaded config");
  const auto layers = detail::read_pod<std::uint64_t>(is);
  if (layers < 2 || layers > 64) throw std::runtime_error(path + ": corrupt layer count");
  std::vector<int> sizes;
  for (std::uint64_t i = 0; i < layers; ++i) sizes.push_back(static_cast<int>(detail::read_pod<std::int64_t>(is)));
  QPolicy p{Mlp(sizes), {}};
  p.net.set_flat(detail::read_vector(is));
  Eigen::VectorXd mean = detail::read_vector(is);
  Eigen::VectorXd m2 = detail::read_vector(is);
  const auto count = detail::read_pod<std::int64_t>(is);
  const auto warmup = detail::read_pod<std::int64_t>(is);
  if (mean.size() != sizes.front() || m2.size() != sizes.front()) {
    throw std::runtime_error(path + ": normalizer dimension mismatch");
  }
  p.normalizer.restore(std::move(mean), std::move(m2), count, warmup);
  return p;
}

}  // namespace rmpc
