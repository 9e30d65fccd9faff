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

// Kinematic pick-from-conveyor simulation: episode lifecycle, observations,
// terminal checks and the shaped step reward.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/errors.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/robot_models.hpp"

namespace rmpc {

enum class Outcome : int { Running = 0, Success, Boundary, Collision, Rollover, MaxStep };
inline constexpr int kNumOutcomes = 6;

inline std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Success: return "success";
    case Outcome::Boundary: return "boundary";
    case Outcome::Collision: return "collision";
    case Outcome::Rollover: return "rollover";
    case Outcome::MaxStep: return "max_step";
  }
  return "?";
}

enum class TargetProgressMode { Formula, RemainingDistance };

struct Interval {
  double min = 0.0;
  double max = 1.0;

  double lerp(double t) const { return min + t * (max - min); }
};

struct WorkspaceBounds {
  Interval x{-3.0, 3.0};
  Interval y{-3.0, 3.0};
  // Applied to the end-effector height.
  Interval z{0.0, 2.0};
};

struct WorldConfig {
  WorkspaceBounds bounds;
  std::vector<Box3> boxes{Box3{Vec3(0.0, 2.0, 0.3), 0.0, 3.0, 0.5, 0.6}};
  Interval start_x{-1.5, 1.5};
  Interval start_y{-2.0, -0.5};
  Interval start_yaw{-std::numbers::pi, std::numbers::pi};
  Interval goal_x{-1.0, 1.0};
  double goal_y = 1.85;
  double goal_z = 0.7;
  UnitQuaternion goal_orientation = UnitQuaternion::from_rpy(0.0, std::numbers::pi, std::numbers::pi / 2);
  // Success when d_pos + d_ori falls below this (m + rad).
  double success_threshold = 0.1;
  double collision_distance = 0.05;
  double ground_height = 0.0;
  std::vector<std::pair<int, int>> self_pairs{{0, 3}, {0, 4}, {0, 5}, {1, 4}, {1, 5}, {2, 5}};
  double self_collision_distance = 0.05;
  // Static support polygon (m, half extents in the base frame).
  double support_half_length = 0.19;
  double support_half_width = 0.15;
  double max_roll = 0.1;
  double max_pitch = 0.1;
  double com_threshold = 0.05;
  double sub_target_tolerance = 0.1;
  TargetProgressMode target_progress_mode = TargetProgressMode::Formula;

  int observation_dim(int n_arm) const {
    return 3 + 6 * static_cast<int>(boxes.size()) + static_cast<int>(self_pairs.size()) + 2 + 2 * n_arm;
  }

  void validate(const KinematicChain& chain) const {
    const auto ordered = [](const Interval& i, const std::string& key) {
      if (!(i.min < i.max)) throw ConfigError(key, "min must be < max");
    };
    ordered(bounds.x, "world.bounds.x");
    ordered(bounds.y, "world.bounds.y");
    ordered(bounds.z, "world.bounds.z");
    ordered(start_x, "world.start_x");
    ordered(start_y, "world.start_y");
    ordered(start_yaw, "world.start_yaw");
    if (goal_x.min > goal_x.max) throw ConfigError("world.goal_x", "min must be <= max");
    if (!(success_threshold > 0.0)) throw ConfigError("world.success_threshold", "must be > 0");
    if (!(collision_distance > 0.0)) throw ConfigError("world.collision_distance", "must be > 0");
    if (!(support_half_length > 0.0 && support_half_width > 0.0)) {
      throw ConfigError("world.support_half_extents", "must be > 0");
    }
    if (!(max_roll > 0.0)) throw ConfigError("world.max_roll", "must be > 0");
    if (!(max_pitch > 0.0)) throw ConfigError("world.max_pitch", "must be > 0");
    if (!(com_threshold > 0.0)) throw ConfigError("world.com_threshold", "must be > 0");
    if (!(sub_target_tolerance > 0.0)) throw ConfigError("world.sub_target_tolerance", "must be > 0");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto& b = boxes[i];
      if (!(b.width > 0.0 && b.length > 0.0 && b.height > 0.0)) {
        throw ConfigError("world.boxes[" + std::to_string(i) + "]", "extents must be > 0");
      }
    }
    for (std::size_t i = 0; i < self_pairs.size(); ++i) {
      const auto [a, b] = self_pairs[i];
      if (a < 0 || b < 0 || a >= chain.dof() || b >= chain.dof() || a == b) {
        throw ConfigError("world.self_pairs[" + std::to_string(i) + "]", "link index out of range");
      }
    }
  }
};

struct RewardParams {
  double tau_success = 20.0;
  double tau_boundary = -10.0;
  double tau_collision = -10.0;
  double tau_roll = -10.0;
  double tau_max_step = -5.0;
  double tau_target = 1.0;
  double gamma = -1.0;
  double alpha_sub = 0.4;
  double w_model = 1.0;
  double w_goal = 1.0;
  double w_target = 1.0;
  int max_rl_steps = 50;

  double terminal_reward(Outcome o) const {
    switch (o) {
      case Outcome::Running: return 0.0;
      case Outcome::Success: return tau_success;
      case Outcome::Boundary: return tau_boundary;
      case Outcome::Collision: return tau_collision;
      case Outcome::Rollover: return tau_roll;
      case Outcome::MaxStep: return tau_max_step;
    }
    return 0.0;
  }

  void validate() const {
    if (!(tau_success > 0.0)) throw ConfigError("reward.tau_success", "must be > 0");
    if (!(tau_boundary < 0.0)) throw ConfigError("reward.tau_boundary", "must be < 0");
    if (!(tau_collision < 0.0)) throw ConfigError("reward.tau_collision", "must be < 0");
    if (!(tau_roll < 0.0)) throw ConfigError("reward.tau_roll", "must be < 0");
    if (!(tau_max_step < 0.0)) throw ConfigError("reward.tau_max_step", "must be < 0");
    if (!(tau_target > 0.0)) throw ConfigError("reward.tau_target", "must be > 0");
    if (!(alpha_sub > 0.0 && alpha_sub <= 1.0)) throw ConfigError("reward.alpha_sub", "must be in (0, 1]");
    if (max_rl_steps < 1) throw ConfigError("reward.max_rl_steps", "must be >= 1");
  }
};

struct SimState {
  WholeBodyState wb;
  BaseControl base_velocity;
  Eigen::VectorXd arm_velocity;
  double roll = 0.0;
  double pitch = 0.0;
  // RL actions completed.
  int n = 0;
  double t = 0.0;
  Pose3 goal;
  double initial_distance = 0.0;
  // Stable CoM reference, base frame.
  Vec3 com_reference = Vec3::Zero();
  double com_deviation_sum = 0.0;
  int com_samples = 0;
  Eigen::Vector2d sub_position = Eigen::Vector2d::Zero();
  double sub_yaw = 0.0;
  bool sub_target_reached = false;
  Outcome outcome = Outcome::Running;

  double mean_com_deviation() const { return com_samples > 0 ? com_deviation_sum / com_samples : 0.0; }
};

using Observation = Eigen::VectorXd;

struct RewardBreakdown {
  double r_model = 0.0;
  double r_goal = 0.0;
  double r_target = 0.0;
  double r_terminal = 0.0;
  double total = 0.0;
  Outcome outcome = Outcome::Running;
};

/// CoM relative to the base frame.
inline Vec3 base_frame_com(const KinematicChain& chain, const ChainFrames& f) {
  return invert(f.base).transform_point(com_position(chain, f));
}

/// Tilt for a base-frame CoM position.
inline std::pair<double, double> tilt_from_com(const Vec3& c, const WorldConfig& w) {
  const double lateral = std::max(0.0, std::abs(c.y()) - w.support_half_width);
  const double longitudinal = std::max(0.0, std::abs(c.x()) - w.support_half_length);
  return {std::atan2(lateral, c.z()), std::atan2(longitudinal, c.z())};
}

/// Kinematic roll/pitch proxy: CoM overhang beyond the support rectangle over CoM height.
inline std::pair<double, double> pseudo_tilt(const KinematicChain& chain, const WholeBodyState& s,
                                             const WorldConfig& w) {
  return tilt_from_com(base_frame_com(chain, chain_frames(chain, s)), w);
}

inline std::vector<double> self_distances(const ChainFrames& f, const WorldConfig& w) {
  std::vector<double> d;
  d.reserve(w.self_pairs.size());
  for (const auto& [a, b] : w.self_pairs) {
    d.push_back(segment_segment_distance(f.links[static_cast<std::size_t>(a)], f.links[static_cast<std::size_t>(b)]));
  }
  return d;
}

inline Observation build_observation(const KinematicChain& chain, const SimState& s, const WorldConfig& w) {
  const ChainFrames f = chain_frames(chain, s.wb);
  const Pose3 to_robot = invert(f.base);
  const int n = chain.dof();
  Observation o(w.observation_dim(n));
  Eigen::Index k = 0;
  o.segment<3>(k) = to_robot.transform_point(s.goal.position);
  k += 3;
  for (const Box3& b : w.boxes) {
    o.segment<3>(k) = to_robot.transform_point(b.center);
    o(k + 3) = b.width;
    o(k + 4) = b.length;
    o(k + 5) = b.height;
    k += 6;
  }
  for (double d : self_distances(f, w)) o(k++) = d;
  o(k++) = s.base_velocity.v;
  o(k++) = s.base_velocity.omega;
  o.segment(k, n) = s.wb.arm;
  k += n;
  o.segment(k, n) = s.arm_velocity;
  return o;
}

inline bool in_collision(const KinematicChain& chain, const ChainFrames& f, const WorldConfig& w) {
  for (const Vec3& p : collision_points(chain, f)) {
    if (p.z() < w.ground_height) return true;
    for (const Box3& b : w.boxes) {
      if (closest_point_box(p, b).distance < w.collision_distance) return true;
    }
  }
  for (double d : self_distances(f, w)) {
    if (d < w.self_collision_distance) return true;
  }
  return false;
}

inline double goal_error(const Pose3& ee, const Pose3& goal) {
  return d_pos(ee.position, goal.position) + d_ori(ee.orientation, goal.orientation);
}

/// First matching case in priority order success, boundary, collision,
/// rollover, max_step. max_step fires once n reaches the step budget.
inline std::pair<Outcome, double> check_terminal(const KinematicChain& chain, const SimState& s, const WorldConfig& w,
                                                 const RewardParams& r) {
  const ChainFrames f = chain_frames(chain, s.wb);
  Outcome o = Outcome::Running;
  const Vec3& ee = f.ee.position;
  if (goal_error(f.ee, s.goal) < w.success_threshold) {
    o = Outcome::Success;
  } else if (s.wb.base.x < w.bounds.x.min || s.wb.base.x > w.bounds.x.max || s.wb.base.y < w.bounds.y.min ||
             s.wb.base.y > w.bounds.y.max || ee.z() < w.bounds.z.min || ee.z() > w.bounds.z.max) {
    o = Outcome::Boundary;
  } else if (in_collision(chain, f, w)) {
    o = Outcome::Collision;
  } else if (s.roll > w.max_roll || s.pitch > w.max_pitch) {
    o = Outcome::Rollover;
  } else if (s.n >= r.max_rl_steps) {
    o = Outcome::MaxStep;
  }
  return {o, r.terminal_reward(o)};
}

struct SubGoal {
  Eigen::Vector2d position;
  double yaw = 0.0;
};

/// Point a fraction alpha of the way from p_b to p_g, facing the goal.
inline SubGoal sub_goal(const Eigen::Vector2d& p_b, const Eigen::Vector2d& p_g, double alpha, double fallback_yaw) {
  const Eigen::Vector2d d = p_g - p_b;
  const double yaw = d.isZero(0.0) ? fallback_yaw : std::atan2(d.y(), d.x());
  return {p_b + alpha * d, yaw};
}

/// Heading error folded so that facing away from the target counts as aligned.
inline double yaw_progress_term(double sub_yaw, double yaw) {
  const double d = std::abs(wrap_angle(sub_yaw - yaw));
  return std::min(d, std::numbers::pi - d) / std::numbers::pi;
}

inline double base_target_reward(double dp, double dphi, bool reached, const RewardParams& r) {
  if (reached) return -r.tau_target * std::exp(-r.gamma * dp) / std::exp(r.gamma);
  return r.tau_target * std::exp(0.5 * r.gamma * (dp + dphi));
}

inline double arm_target_reward(double mean_com_deviation, double com_threshold, const RewardParams& r) {
  const double x = com_threshold - mean_com_deviation;
  return (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0)) * r.tau_target;
}

/// Normalized base progress toward the sub-target over one RL step, clamped to [0, 1].
inline double base_progress(const Eigen::Vector2d& prev, const Eigen::Vector2d& curr, const Eigen::Vector2d& sub,
                            TargetProgressMode mode) {
  const double d_prev = (prev - sub).norm();
  const double d_curr = (curr - sub).norm();
  if (!(d_prev > 0.0)) return 0.0;
  const double v = mode == TargetProgressMode::Formula ? (d_prev - d_curr) / d_prev : d_curr / d_prev;
  return std::clamp(v, 0.0, 1.0);
}

/// Reward of one RL step from the state at its start (prev) to its end (curr).
/// curr carries the sub-target chosen at the start, the reached flag and the
/// CoM deviation accumulated over the step's control sub-steps.
inline RewardBreakdown step_reward(const KinematicChain& chain, const SimState& prev, const SimState& curr, Model m,
                                   const WorldConfig& w, const RewardParams& r) {
  RewardBreakdown out;
  const int n_arm = chain.dof();
  out.r_model = -static_cast<double>(model_dof(m, n_arm)) / model_dof(Model::WholeBody, n_arm);
  const double d_prev = d_pos(forward_kinematics(chain, prev.wb).position, prev.goal.position);
  const double d_curr = d_pos(forward_kinematics(chain, curr.wb).position, curr.goal.position);
  out.r_goal = curr.initial_distance > 0.0 ? (d_prev - d_curr) / curr.initial_distance : 0.0;
  if (m == Model::Arm) {
    out.r_target = arm_target_reward(curr.mean_com_deviation(), w.com_threshold, r);
  } else {
    const Eigen::Vector2d pb_prev(prev.wb.base.x, prev.wb.base.y);
    const Eigen::Vector2d pb_curr(curr.wb.base.x, curr.wb.base.y);
    const double dp = base_progress(pb_prev, pb_curr, curr.sub_position, w.target_progress_mode);
    const double dphi = yaw_progress_term(curr.sub_yaw, curr.wb.base.yaw);
    out.r_target = base_target_reward(dp, dphi, curr.sub_target_reached, r);
  }
  const auto [outcome, r_term] = check_terminal(chain, curr, w, r);
  out.outcome = outcome;
  out.r_terminal = r_term;
  out.total = r.w_model * out.r_model + r.w_goal * out.r_goal + r.w_target * out.r_target + out.r_terminal;
  return out;
}

struct EnvStep {
  Observation observation;
  bool done = false;
  Outcome outcome = Outcome::Running;
};

/// Start pose and goal drawn uniformly from the world's start and goal intervals.
inline std::pair<BaseState, Pose3> sample_start(const WorldConfig& w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BaseState b;
  b.x = w.start_x.lerp(u(rng));
  b.y = w.start_y.lerp(u(rng));
  b.yaw = wrap_angle(w.start_yaw.lerp(u(rng)));
  const double gx = w.goal_x.lerp(u(rng));
  return {b, Pose3{Vec3(gx, w.goal_y, w.goal_z), w.goal_orientation}};
}

/// One episode at a time: reset, then per RL action begin_action, one or more
/// step calls and end_action.
class Environment {
 public:
  Environment(const KinematicChain& chain, const WorldConfig& world, const RewardParams& reward)
      : chain_(&chain), world_(&world), reward_(&reward) {
    chain.validate();
    world.validate(chain);
    reward.validate();
  }

  Observation reset(std::uint64_t seed) {
    const auto [b, g] = sample_start(*world_, seed);
    return reset(b, g);
  }

  Observation reset(const BaseState& base, const Pose3& goal) {
    const auto& bd = world_->bounds;
    if (base.x < bd.x.min || base.x > bd.x.max || base.y < bd.y.min || base.y > bd.y.max) {
      throw ConfigError("reset.base", "start pose outside the workspace bounds");
    }
    SimState s;
    s.wb = WholeBodyState{{base.x, base.y, wrap_angle(base.yaw)}, chain_->home};
    s.arm_velocity = Eigen::VectorXd::Zero(chain_->dof());
    s.goal = goal;
    const ChainFrames f = chain_frames(*chain_, s.wb);
    s.com_reference = base_frame_com(*chain_, f);
    s.initial_distance = d_pos(f.ee.position, goal.position);
    std::tie(s.roll, s.pitch) = pseudo_tilt(*chain_, s.wb, *world_);
    state_ = s;
    action_start_ = s;
    in_action_ = false;
    active_ = true;
    reward_emitted_ = false;
    // A start already in a terminal configuration ends the episode at once.
    state_.outcome = check_terminal(*chain_, state_, *world_, *reward_).first;
    return observation();
  }

  Observation observation() const { return build_observation(*chain_, state_, *world_); }

  void begin_action(Model m) {
    if (!active_) throw LifecycleError("begin_action before reset");
    if (done()) throw LifecycleError("begin_action after the episode ended");
    if (in_action_) throw LifecycleError("begin_action while an action is open");
    model_ = m;
    state_.com_deviation_sum = 0.0;
    state_.com_samples = 0;
    state_.sub_target_reached = false;
    const SubGoal g = sub_goal({state_.wb.base.x, state_.wb.base.y},
                               {state_.goal.position.x(), state_.goal.position.y()}, reward_->alpha_sub,
                               state_.wb.base.yaw);
    state_.sub_position = g.position;
    state_.sub_yaw = g.yaw;
    action_start_ = state_;
    in_action_ = true;
  }

  EnvStep step(const WholeBodyControl& u, double dt) {
    if (!in_action_) throw LifecycleError("step outside begin_action/end_action");
    if (done()) throw LifecycleError("step after the episode ended");
    if (u.arm.size() != chain_->dof()) throw DimensionError("arm control length does not match the chain");
    WholeBodyControl c = u;
    c.base.v = std::clamp(c.base.v, -chain_->base.v_max, chain_->base.v_max);
    c.base.omega = std::clamp(c.base.omega, -chain_->base.omega_max, chain_->base.omega_max);
    for (int i = 0; i < chain_->dof(); ++i) {
      const double vmax = chain_->joints[static_cast<std::size_t>(i)].velocity_max;
      c.arm(i) = std::clamp(c.arm(i), -vmax, vmax);
    }
    state_.wb = integrate(state_.wb, c, dt);
    for (int i = 0; i < chain_->dof(); ++i) {
      const auto& j = chain_->joints[static_cast<std::size_t>(i)];
      state_.wb.arm(i) = std::clamp(state_.wb.arm(i), j.position_min, j.position_max);
    }
    state_.base_velocity = c.base;
    state_.arm_velocity = c.arm;
    state_.t += dt;
    const ChainFrames f = chain_frames(*chain_, state_.wb);
    state_.com_deviation_sum += d_pos(base_frame_com(*chain_, f), state_.com_reference);
    ++state_.com_samples;
    if ((Eigen::Vector2d(state_.wb.base.x, state_.wb.base.y) - state_.sub_position).norm() <
        world_->sub_target_tolerance) {
      state_.sub_target_reached = true;
    }
    std::tie(state_.roll, state_.pitch) = pseudo_tilt(*chain_, state_.wb, *world_);
    state_.outcome = check_terminal(*chain_, state_, *world_, *reward_).first;
    return {observation(), done(), state_.outcome};
  }

  RewardBreakdown end_action() {
    if (!in_action_) throw LifecycleError("end_action without begin_action");
    if (reward_emitted_) throw LifecycleError("no rewards after the episode ended");
    in_action_ = false;
    ++state_.n;
    const RewardBreakdown r = step_reward(*chain_, action_start_, state_, model_, *world_, *reward_);
    state_.outcome = r.outcome;
    if (done()) reward_emitted_ = true;
    return r;
  }

  bool done() const { return state_.outcome != Outcome::Running; }
  bool in_action() const { return in_action_; }
  Outcome outcome() const { return state_.outcome; }
  const SimState& state() const { return state_; }
  const KinematicChain& chain() const { return *chain_; }
  const WorldConfig& world() const { return *world_; }
  const RewardParams& reward_params() const { return *reward_; }

 private:
  const KinematicChain* chain_;
  const WorldConfig* world_;
  const RewardParams* reward_;
  SimState state_;
  SimState action_start_;
  Model model_ = Model::WholeBody;
  bool active_ = false;
  bool in_action_ = false;
  bool reward_emitted_ = false;
};

}  // namespace rmpc
