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

// Kinematic models of a wheeled mobile manipulator: a no-slip unicycle base,
// a velocity-controlled serial arm, and their decoupled concatenation.
//
// Model state vectors are laid out as
//   base:        [x, y, yaw]
//   arm:         [q_1 .. q_n]
//   whole body:  [x, y, yaw, q_1 .. q_n]
// and controls as [v, omega], [qd_1 .. qd_n], [v, omega, qd_1 .. qd_n].

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/errors.hpp"
#include "rmpc/geometry.hpp"

namespace rmpc {

enum class Model : int { Base = 0, Arm = 1, WholeBody = 2 };
inline constexpr int kNumModels = 3;
inline constexpr std::array<Model, kNumModels> kAllModels = {Model::Base, Model::Arm,
                                                             Model::WholeBody};

inline int model_index(Model m) { return static_cast<int>(m); }

inline Model model_from_index(int i) {
  if (i < 0 || i >= kNumModels) throw DimensionError("model index out of range: " + std::to_string(i));
  return static_cast<Model>(i);
}

inline std::string_view model_name(Model m) {
  switch (m) {
    case Model::Base: return "base";
    case Model::Arm: return "arm";
    case Model::WholeBody: return "wb";
  }
  return "?";
}

struct BaseState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

struct BaseControl {
  double v = 0.0;
  double omega = 0.0;
};

using ArmState = Eigen::VectorXd;
using ArmControl = Eigen::VectorXd;

struct WholeBodyState {
  BaseState base;
  ArmState arm;
};

struct WholeBodyControl {
  BaseControl base;
  ArmControl arm;
};

struct JointSpec {
  Vec3 axis = Vec3::UnitZ();
  // Fixed transform from the rotated joint frame to the next joint.
  Pose3 offset;
  double position_min = -std::numbers::pi;
  double position_max = std::numbers::pi;
  double velocity_max = 1.0;
  double mass = 1.0;
  // Link centre of mass in the rotated joint frame.
  Vec3 com = Vec3::Zero();
};

struct BaseSpec {
  // Footprint half extents (m), also used as the static support rectangle.
  double half_length = 0.25;
  double half_width = 0.2;
  // Height of the footprint collision corners.
  double corner_height = 0.05;
  double mass = 8.0;
  Vec3 com = Vec3(0.0, 0.0, 0.15);
  double v_max = 1.0;
  double omega_max = 1.0;
};

struct KinematicChain {
  Pose3 mount;
  std::vector<JointSpec> joints;
  Pose3 ee_offset;
  Eigen::VectorXd home;
  BaseSpec base;
  int collision_points_per_link = 3;

  int dof() const { return static_cast<int>(joints.size()); }

  void validate() const {
    if (joints.empty()) throw ConfigError("chain.joints", "at least one joint required");
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const auto& j = joints[i];
      const std::string key = "chain.joints[" + std::to_string(i) + "]";
      if (!(j.axis.norm() > 0.0)) throw ConfigError(key + ".axis", "zero axis");
      if (!(j.mass > 0.0)) throw ConfigError(key + ".mass", "must be > 0");
      if (!(j.position_min < j.position_max)) throw ConfigError(key + ".position_limits", "min must be < max");
      if (!(j.velocity_max > 0.0)) throw ConfigError(key + ".velocity_max", "must be > 0");
    }
    if (home.size() != dof()) throw ConfigError("chain.home", "length must equal the number of joints");
    if (!(base.mass > 0.0)) throw ConfigError("chain.base.mass", "must be > 0");
    if (!(base.half_length > 0.0 && base.half_width > 0.0)) {
      throw ConfigError("chain.base.half_extents", "must be > 0");
    }
    if (!(base.v_max > 0.0)) throw ConfigError("chain.base.v_max", "must be > 0");
    if (!(base.omega_max > 0.0)) throw ConfigError("chain.base.omega_max", "must be > 0");
    if (collision_points_per_link < 0) throw ConfigError("chain.collision_points_per_link", "must be >= 0");
  }

  /// Six joints alternating z/y axes with 0.15 m links, 1.5 kg per link and an
  /// 8 kg base.
  static KinematicChain default_chain() {
    KinematicChain c;
    c.mount = Pose3::translation(Vec3(0.12, 0.0, 0.3));
    for (int i = 0; i < 6; ++i) {
      JointSpec j;
      const bool yaw_joint = (i % 2 == 0);
      j.axis = yaw_joint ? Vec3::UnitZ() : Vec3::UnitY();
      j.offset = Pose3::translation(Vec3(0.0, 0.0, 0.15));
      j.position_min = yaw_joint ? -3.0 : -2.2;
      j.position_max = yaw_joint ? 3.0 : 2.2;
      j.velocity_max = 1.0;
      j.mass = 1.5;
      j.com = Vec3(0.0, 0.0, 0.075);
      c.joints.push_back(j);
    }
    c.ee_offset = Pose3::identity();
    c.home = Eigen::VectorXd::Zero(6);
    c.home << 0.0, -0.2, 0.0, 0.8, 0.0, 1.8;
    return c;
  }
};

inline int model_state_dim(Model m, int n_arm) {
  switch (m) {
    case Model::Base: return 3;
    case Model::Arm: return n_arm;
    case Model::WholeBody: return 3 + n_arm;
  }
  return 0;
}

inline int model_control_dim(Model m, int n_arm) {
  switch (m) {
    case Model::Base: return 2;
    case Model::Arm: return n_arm;
    case Model::WholeBody: return 2 + n_arm;
  }
  return 0;
}

/// Degrees of freedom actuated by a model.
inline int model_dof(Model m, int n_arm) { return model_state_dim(m, n_arm); }

inline Vec3 base_derivative(const BaseState& s, const BaseControl& u) {
  return {u.v * std::cos(s.yaw), u.v * std::sin(s.yaw), u.omega};
}

inline Eigen::VectorXd arm_derivative(const ArmState& s, const ArmControl& u) {
  if (s.size() != u.size()) {
    throw DimensionError("arm state/control length mismatch: " + std::to_string(s.size()) + " vs " +
                         std::to_string(u.size()));
  }
  return u;
}

inline Eigen::VectorXd wb_derivative(const WholeBodyState& s, const WholeBodyControl& u) {
  const Eigen::VectorXd arm = arm_derivative(s.arm, u.arm);
  Eigen::VectorXd out(3 + arm.size());
  out.head<3>() = base_derivative(s.base, u.base);
  out.tail(arm.size()) = arm;
  return out;
}

/// f_m(x, u) on flat model vectors.
inline Eigen::VectorXd model_derivative(Model m, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd dx(x.size());
  switch (m) {
    case Model::Base:
      if (x.size() != 3 || u.size() != 2) throw DimensionError("base model expects 3 states, 2 controls");
      dx << u(0) * std::cos(x(2)), u(0) * std::sin(x(2)), u(1);
      break;
    case Model::Arm:
      if (x.size() != u.size()) throw DimensionError("arm model expects equal state/control length");
      dx = u;
      break;
    case Model::WholeBody:
      if (x.size() < 3 || u.size() != x.size() - 1) {
        throw DimensionError("whole-body model expects 3+n states, 2+n controls");
      }
      dx(0) = u(0) * std::cos(x(2));
      dx(1) = u(0) * std::sin(x(2));
      dx(2) = u(1);
      dx.tail(x.size() - 3) = u.tail(u.size() - 2);
      break;
  }
  return dx;
}

/// Analytic continuous-time Jacobians of f_m.
inline void model_jacobians(Model m, const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) {
  const auto nx = x.size();
  const auto nu = u.size();
  a.setZero(nx, nx);
  b.setZero(nx, nu);
  if (m == Model::Arm) {
    b.setIdentity();
    return;
  }
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));
  a(0, 2) = -u(0) * s;
  a(1, 2) = u(0) * c;
  b(0, 0) = c;
  b(1, 0) = s;
  b(2, 1) = 1.0;
  for (Eigen::Index i = 3; i < nx; ++i) b(i, i - 1) = 1.0;
}

/// One classical RK4 step with zero-order-hold control; angles are not wrapped.
inline Eigen::VectorXd rk4_step(Model m, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt) {
  const Eigen::VectorXd k1 = model_derivative(m, x, u);
  const Eigen::VectorXd k2 = model_derivative(m, x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = model_derivative(m, x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = model_derivative(m, x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step followed by wrapping the base yaw to [-pi, pi).
inline Eigen::VectorXd integrate(Model m, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt) {
  if (!(dt > 0.0)) throw DimensionError("integration step must be positive");
  Eigen::VectorXd next = rk4_step(m, x, u, dt);
  if (m != Model::Arm) next(2) = wrap_angle(next(2));
  return next;
}

inline Eigen::VectorXd to_vector(const WholeBodyState& s) {
  Eigen::VectorXd v(3 + s.arm.size());
  v << s.base.x, s.base.y, s.base.yaw, s.arm;
  return v;
}

inline Eigen::VectorXd to_vector(const WholeBodyControl& u) {
  Eigen::VectorXd v(2 + u.arm.size());
  v << u.base.v, u.base.omega, u.arm;
  return v;
}

/// Model state s_m read from the whole-body state.
inline Eigen::VectorXd extract_state(Model m, const WholeBodyState& s) {
  switch (m) {
    case Model::Base: return Eigen::Vector3d(s.base.x, s.base.y, s.base.yaw);
    case Model::Arm: return s.arm;
    case Model::WholeBody: return to_vector(s);
  }
  return {};
}

/// Whole-body state with the model's block replaced by x; other blocks frozen.
inline WholeBodyState merge_state(Model m, const Eigen::VectorXd& x, const WholeBodyState& frozen) {
  WholeBodyState s = frozen;
  if (x.size() != model_state_dim(m, static_cast<int>(frozen.arm.size()))) {
    throw DimensionError("model state length does not match the whole-body arm size");
  }
  if (m != Model::Arm) {
    s.base = {x(0), x(1), x(2)};
  }
  if (m == Model::Arm) s.arm = x;
  if (m == Model::WholeBody) s.arm = x.tail(x.size() - 3);
  return s;
}

inline WholeBodyState integrate(const WholeBodyState& s, const WholeBodyControl& u, double dt) {
  const Eigen::VectorXd next = integrate(Model::WholeBody, to_vector(s), to_vector(u), dt);
  return merge_state(Model::WholeBody, next, s);
}

/// Expands a model control into whole-body commands; inactive blocks are zero.
inline WholeBodyControl map_whole_body_control(Model m, const Eigen::VectorXd& u, int n_arm) {
  if (u.size() != model_control_dim(m, n_arm)) {
    throw DimensionError("control length " + std::to_string(u.size()) + " does not match model " +
                         std::string(model_name(m)));
  }
  WholeBodyControl out{{}, Eigen::VectorXd::Zero(n_arm)};
  if (m != Model::Arm) out.base = {u(0), u(1)};
  if (m == Model::Arm) out.arm = u;
  if (m == Model::WholeBody) out.arm = u.tail(n_arm);
  return out;
}

inline Pose3 base_pose(const BaseState& b) { return Pose3::planar(b.x, b.y, b.yaw); }

/// Intermediate frames of one forward-kinematics evaluation, all in the world frame.
struct ChainFrames {
  Pose3 base;
  // Joint i's rotating frame (after its rotation, before its link offset).
  std::vector<Pose3> joints;
  std::vector<Vec3> axes;
  std::vector<Segment3> links;
  Pose3 ee;
};

inline ChainFrames chain_frames(const KinematicChain& chain, const WholeBodyState& s) {
  if (s.arm.size() != chain.dof()) throw DimensionError("arm state length does not match the chain");
  ChainFrames f;
  f.base = base_pose(s.base);
  f.joints.reserve(chain.joints.size());
  f.axes.reserve(chain.joints.size());
  f.links.reserve(chain.joints.size());
  Pose3 frame = compose(f.base, chain.mount);
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    const JointSpec& j = chain.joints[i];
    const Pose3 rotated =
        compose(frame, Pose3{Vec3::Zero(), UnitQuaternion::from_axis_angle(j.axis, s.arm(static_cast<Eigen::Index>(i)))});
    f.joints.push_back(rotated);
    f.axes.push_back(frame.orientation.rotate(j.axis.normalized()));
    frame = compose(rotated, j.offset);
    f.links.push_back({rotated.position, frame.position});
  }
  f.ee = compose(frame, chain.ee_offset);
  return f;
}

inline Pose3 forward_kinematics(const KinematicChain& chain, const WholeBodyState& s) {
  return chain_frames(chain, s).ee;
}

inline Vec3 com_position(const KinematicChain& chain, const ChainFrames& f) {
  double total = chain.base.mass;
  Vec3 acc = chain.base.mass * f.base.transform_point(chain.base.com);
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    total += chain.joints[i].mass;
    acc += chain.joints[i].mass * f.joints[i].transform_point(chain.joints[i].com);
  }
  return acc / total;
}

inline Vec3 com_position(const KinematicChain& chain, const WholeBodyState& s) {
  return com_position(chain, chain_frames(chain, s));
}

/// Geometric end-effector Jacobian (rows: linear velocity, angular velocity;
/// columns: x, y, yaw, q_1 .. q_n), world frame.
inline Eigen::Matrix<double, 6, Eigen::Dynamic> ee_jacobian(const ChainFrames& f) {
  const auto n = static_cast<Eigen::Index>(f.joints.size());
  Eigen::Matrix<double, 6, Eigen::Dynamic> j = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, 3 + n);
  const Vec3& p = f.ee.position;
  j(0, 0) = 1.0;
  j(1, 1) = 1.0;
  j.block<3, 1>(0, 2) = Vec3::UnitZ().cross(p - f.base.position);
  j.block<3, 1>(3, 2) = Vec3::UnitZ();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& axis = f.axes[static_cast<std::size_t>(i)];
    j.block<3, 1>(0, 3 + i) = axis.cross(p - f.joints[static_cast<std::size_t>(i)].position);
    j.block<3, 1>(3, 3 + i) = axis;
  }
  return j;
}

/// Points sampled along each link at fractions (k + 0.5) / K, followed by the
/// four base footprint corners.
inline std::vector<Vec3> collision_points(const KinematicChain& chain, const ChainFrames& f) {
  std::vector<Vec3> pts;
  const int k = chain.collision_points_per_link;
  pts.reserve(f.links.size() * static_cast<std::size_t>(k) + 4);
  for (const auto& link : f.links) {
    for (int i = 0; i < k; ++i) {
      const double t = (i + 0.5) / k;
      pts.push_back(link.a + t * (link.b - link.a));
    }
  }
  const double hx = chain.base.half_length;
  const double hy = chain.base.half_width;
  for (const auto& [sx, sy] : {std::pair{1.0, 1.0}, {1.0, -1.0}, {-1.0, 1.0}, {-1.0, -1.0}}) {
    pts.push_back(f.base.transform_point(Vec3(sx * hx, sy * hy, chain.base.corner_height)));
  }
  return pts;
}

}  // namespace rmpc
