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

// Decoding of policy outputs into NMPC problems.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/env.hpp"
#include "rmpc/errors.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/nmpc.hpp"
#include "rmpc/robot_models.hpp"

namespace rmpc {

enum class TargetType : int { SubGoal = 0, Goal = 1 };

inline std::string_view target_type_name(TargetType t) { return t == TargetType::Goal ? "goal" : "sub_goal"; }

struct ContinuousAction {
  double model = 0.0;
  Eigen::VectorXd constraints = Eigen::VectorXd::Zero(kNumConstraintGroups);
  double type = 0.0;
  // a_x, a_y, a_z in [-1, 1].
  Vec3 offset = Vec3::Zero();
  // Roll, pitch, yaw in [-pi, pi).
  Vec3 euler = Vec3::Zero();
};

struct TargetRanges {
  // Sub-goal box in the robot frame.
  Interval sub_x{-2.0, 2.0};
  Interval sub_y{-2.0, 2.0};
  Interval sub_z{0.2, 1.5};
  // Slack around the goal in the goal frame.
  Interval goal_x{-0.1, 0.1};
  Interval goal_y{-0.1, 0.1};
  Interval goal_z{-0.1, 0.1};

  void validate() const {
    const auto ordered = [](const Interval& i, const std::string& key) {
      if (!(i.min < i.max)) throw ConfigError(key, "min must be < max");
    };
    ordered(sub_x, "codec.ranges.sub_x");
    ordered(sub_y, "codec.ranges.sub_y");
    ordered(sub_z, "codec.ranges.sub_z");
    ordered(goal_x, "codec.ranges.goal_x");
    ordered(goal_y, "codec.ranges.goal_y");
    ordered(goal_z, "codec.ranges.goal_z");
  }
};

struct CodecConfig {
  TargetRanges ranges;
  // Cost table keyed by model index.
  std::array<CostSpec, kNumModels> costs{};
  // Distance from the base origin to the goal when the base model is sent to the goal.
  double base_standoff = 0.5;

  void validate(const KinematicChain& chain) const {
    ranges.validate();
    for (Model m : kAllModels) {
      costs[static_cast<std::size_t>(model_index(m))].validate(
          "codec.costs." + std::string(model_name(m)), model_control_dim(m, chain.dof()));
    }
    if (!(base_standoff >= 0.0)) throw ConfigError("codec.base_standoff", "must be >= 0");
  }
};

struct DecodedAction {
  Model model = Model::WholeBody;
  CostSpec costs;
  std::vector<ConstraintGroup> constraints;
  TargetType target_type = TargetType::Goal;
  Pose3 target;
  BaseState base_target;
};

namespace detail {
inline double clamp_logged(double v, double lo, double hi, std::string_view what) {
  if (v < lo || v > hi || std::isnan(v)) {
    std::clog << "rmpc: warning: " << what << " = " << v << " outside [" << lo << ", " << hi << "], clamped\n";
    return std::isnan(v) ? lo : std::clamp(v, lo, hi);
  }
  return v;
}
}  // namespace detail

inline Model decode_model(double a_model) {
  const double a = detail::clamp_logged(a_model, 0.0, 1.0, "a_model");
  if (a <= 0.3) return Model::Base;
  if (a <= 0.6) return Model::Arm;
  return Model::WholeBody;
}

/// Groups whose toggle exceeds 0.5 and that apply to model m.
inline std::vector<ConstraintGroup> decode_constraints(const Eigen::VectorXd& a, Model m,
                                                       const std::vector<ConstraintGroup>& groups) {
  if (a.size() != static_cast<Eigen::Index>(groups.size())) {
    throw DimensionError("constraint toggle length does not match the number of groups");
  }
  std::vector<ConstraintGroup> out;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (a(static_cast<Eigen::Index>(j)) > 0.5 && constraint_applies(groups[j].kind, m)) {
      out.push_back(groups[j]);
      out.back().active = true;
    }
  }
  return out;
}

/// Affine map of a in [-1, 1] onto [lo, hi].
inline double map_unit(double a, const Interval& r) { return r.min + 0.5 * (a + 1.0) * (r.max - r.min); }

inline std::pair<TargetType, Pose3> decode_target(double a_type, const Vec3& offset, const Vec3& euler,
                                                  const BaseState& robot, const Pose3& goal, const TargetRanges& r) {
  const double type = detail::clamp_logged(a_type, 0.0, 1.0, "a_type");
  Vec3 a;
  for (int k = 0; k < 3; ++k) a(k) = detail::clamp_logged(offset(k), -1.0, 1.0, "a_target offset");
  if (type <= 0.5) {
    const Pose3 local{Vec3(map_unit(a.x(), r.sub_x), map_unit(a.y(), r.sub_y), map_unit(a.z(), r.sub_z)),
                      UnitQuaternion::from_rpy(euler.x(), euler.y(), euler.z())};
    return {TargetType::SubGoal, compose(base_pose(robot), local)};
  }
  const Vec3 local(map_unit(a.x(), r.goal_x), map_unit(a.y(), r.goal_y), map_unit(a.z(), r.goal_z));
  return {TargetType::Goal, Pose3{goal.transform_point(local), goal.orientation}};
}

/// Base pose `standoff` metres short of the goal, facing it from the current position.
inline BaseState standoff_pose(const BaseState& robot, const Vec3& goal, double standoff) {
  const double dx = goal.x() - robot.x;
  const double dy = goal.y() - robot.y;
  const double yaw = (dx == 0.0 && dy == 0.0) ? robot.yaw : std::atan2(dy, dx);
  return {goal.x() - standoff * std::cos(yaw), goal.y() - standoff * std::sin(yaw), yaw};
}

/// Closed-form unicycle pose after holding (v, omega) for duration t.
inline BaseState unicycle_endpoint(const BaseState& s, double v, double omega, double t) {
  if (std::abs(omega) < 1e-12) {
    return {s.x + v * t * std::cos(s.yaw), s.y + v * t * std::sin(s.yaw), s.yaw};
  }
  const double yaw = s.yaw + omega * t;
  const double r = v / omega;
  return {s.x + r * (std::sin(yaw) - std::sin(s.yaw)), s.y - r * (std::cos(yaw) - std::cos(s.yaw)), wrap_angle(yaw)};
}

/// One row of the discrete action table. Sub-goals are instantiated from the
/// robot state at decode time.
struct DiscreteEntry {
  int index = 0;
  Model model = Model::Base;
  TargetType target_type = TargetType::Goal;
  // Unicycle primitive (base and whole-body sub-goals).
  double v = 0.0;
  double omega = 0.0;
  // Fraction of the way to the goal (arm sub-goals).
  double fraction = 0.0;

  std::string describe() const {
    std::ostringstream os;
    if (target_type == TargetType::Goal) {
      os << "goal";
    } else if (model == Model::Arm) {
      os << "ee toward goal fraction=" << fraction;
    } else {
      os << "primitive v=" << v << " omega=" << omega;
    }
    return os.str();
  }
};

inline constexpr int kTargetsPerModel = 9;
inline constexpr int kDiscreteActions = kNumModels * kTargetsPerModel;

class ActionCodec {
 public:
  ActionCodec(const KinematicChain& chain, const CodecConfig& config, double action_duration)
      : chain_(&chain), config_(config), duration_(action_duration), groups_(make_constraint_groups(chain)) {
    config_.validate(chain);
    if (!(action_duration > 0.0)) throw ConfigError("action_duration", "must be > 0");
    build_table();
  }

  /// Index = model * 9 + j; j = 0 is the goal, j = 1..8 the sub-goals.
  const std::vector<DiscreteEntry>& table() const { return table_; }
  const std::vector<ConstraintGroup>& groups() const { return groups_; }
  const CodecConfig& config() const { return config_; }

  DecodedAction decode(const ContinuousAction& a, const SimState& s) const {
    DecodedAction d;
    d.model = decode_model(a.model);
    d.costs = cost_for(d.model);
    d.constraints = decode_constraints(a.constraints, d.model, groups_);
    std::tie(d.target_type, d.target) = decode_target(a.type, a.offset, a.euler, s.wb.base, s.goal, config_.ranges);
    d.base_target = reduce_to_base(d.target_type, d.target, s.wb.base);
    return d;
  }

  DecodedAction decode_discrete(int index, const SimState& s) const {
    if (index < 0 || index >= kDiscreteActions) {
      throw DimensionError("discrete action index " + std::to_string(index) + " out of range");
    }
    const DiscreteEntry& e = table_[static_cast<std::size_t>(index)];
    DecodedAction d;
    d.model = e.model;
    d.costs = cost_for(e.model);
    for (const auto& g : groups_) {
      if (constraint_applies(g.kind, e.model)) d.constraints.push_back(g);
    }
    d.target_type = e.target_type;
    if (e.target_type == TargetType::Goal) {
      d.target = s.goal;
      d.base_target = reduce_to_base(TargetType::Goal, s.goal, s.wb.base);
      return d;
    }
    const Pose3 ee = forward_kinematics(*chain_, s.wb);
    if (e.model == Model::Arm) {
      d.target = {ee.position + e.fraction * (s.goal.position - ee.position), s.goal.orientation};
      d.base_target = s.wb.base;
      return d;
    }
    const BaseState end = unicycle_endpoint(s.wb.base, e.v, e.omega, duration_);
    d.base_target = end;
    if (e.model == Model::Base) {
      d.target = base_pose(end);
    } else {
      // End effector carried rigidly with the base.
      d.target = compose(base_pose(end), compose(invert(base_pose(s.wb.base)), ee));
    }
    return d;
  }

  NmpcProblem problem(const DecodedAction& d, const WholeBodyState& state) const {
    NmpcProblem p;
    p.model = d.model;
    p.costs = d.costs;
    p.constraints = d.constraints;
    p.state = state;
    p.target = d.target;
    p.base_target = d.base_target;
    return p;
  }

 private:
  CostSpec cost_for(Model m) const { return config_.costs[static_cast<std::size_t>(model_index(m))]; }

  BaseState reduce_to_base(TargetType type, const Pose3& target, const BaseState& robot) const {
    if (type == TargetType::Goal) return standoff_pose(robot, target.position, config_.base_standoff);
    return {target.position.x(), target.position.y(), target.orientation.yaw()};
  }

  void build_table() {
    const double vmax = chain_->base.v_max;
    const double wmax = chain_->base.omega_max;
    for (Model m : kAllModels) {
      DiscreteEntry goal;
      goal.index = static_cast<int>(table_.size());
      goal.model = m;
      goal.target_type = TargetType::Goal;
      table_.push_back(goal);
      for (int j = 0; j < kTargetsPerModel - 1; ++j) {
        DiscreteEntry e;
        e.index = static_cast<int>(table_.size());
        e.model = m;
        e.target_type = TargetType::SubGoal;
        if (m == Model::Arm) {
          e.fraction = (j + 1) / 8.0;
        } else {
          e.v = (j < 4 ? 0.5 : 1.0) * vmax;
          constexpr std::array<double, 4> kTurn{-1.0, -0.5, 0.5, 1.0};
          e.omega = kTurn[static_cast<std::size_t>(j % 4)] * wmax;
        }
        table_.push_back(e);
      }
    }
  }

  const KinematicChain* chain_;
  CodecConfig config_;
  double duration_;
  std::vector<ConstraintGroup> groups_;
  std::vector<DiscreteEntry> table_;
};

}  // namespace rmpc
