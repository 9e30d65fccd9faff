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

// Multi-model NMPC for the mobile manipulator: pose-tracking costs, relaxed
// barrier penalties for joint and velocity limits, and one receding-horizon
// SLQ solver per kinematic model.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/geometry.hpp"
#include "rmpc/robot_models.hpp"
#include "rmpc/slq.hpp"

namespace rmpc {

struct RbfParams {
  double mu = 1e-2;
  double delta = 1e-2;
};

/// Relaxed log barrier: -mu*ln(h) for h >= delta, quadratic extension below.
inline double rbf(double h, const RbfParams& p) {
  if (h >= p.delta) return -p.mu * std::log(h);
  const double z = (h - 2.0 * p.delta) / p.delta;
  return p.mu * (0.5 * (z * z - 1.0) - std::log(p.delta));
}

inline double rbf_derivative(double h, const RbfParams& p) {
  if (h >= p.delta) return -p.mu / h;
  return p.mu * (h - 2.0 * p.delta) / (p.delta * p.delta);
}

inline double rbf_second_derivative(double h, const RbfParams& p) {
  if (h >= p.delta) return p.mu / (h * h);
  return p.mu / (p.delta * p.delta);
}

/// Weights of the pose-tracking objective. control_weights is the diagonal of
/// R_u; a single entry is broadcast over all controls.
struct CostSpec {
  std::vector<double> control_weights = {0.1};
  double position_weight = 10.0;         // w_p [1/m^2]
  double orientation_weight = 2.0;       // w_q [1/rad^2]
  double terminal_position_scale = 5.0;  // kappa_p
  double terminal_orientation_scale = 5.0;  // kappa_q

  double control_weight(int i) const {
    return control_weights.size() == 1 ? control_weights.front() : control_weights.at(static_cast<std::size_t>(i));
  }

  void validate(const std::string& key, int control_dim) const {
    if (control_weights.empty()) throw ConfigError(key + ".control_weights", "must not be empty");
    if (control_weights.size() != 1 && static_cast<int>(control_weights.size()) != control_dim) {
      throw ConfigError(key + ".control_weights", "length must be 1 or the control dimension");
    }
    for (double w : control_weights) {
      if (!(w > 0.0)) throw ConfigError(key + ".control_weights", "entries must be > 0");
    }
    if (!(position_weight >= 0.0)) throw ConfigError(key + ".position_weight", "must be >= 0");
    if (!(orientation_weight >= 0.0)) throw ConfigError(key + ".orientation_weight", "must be >= 0");
    if (!(terminal_position_scale >= 0.0)) throw ConfigError(key + ".terminal_position_scale", "must be >= 0");
    if (!(terminal_orientation_scale >= 0.0)) {
      throw ConfigError(key + ".terminal_orientation_scale", "must be >= 0");
    }
  }
};

enum class ConstraintKind : int { ArmPosition = 0, ArmVelocity = 1, BaseVelocity = 2 };
inline constexpr int kNumConstraintGroups = 3;

inline std::string_view constraint_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::BaseVelocity: return "base_velocity";
    case ConstraintKind::ArmPosition: return "arm_position";
    case ConstraintKind::ArmVelocity: return "arm_velocity";
  }
  return "?";
}

inline bool constraint_applies(ConstraintKind k, Model m) {
  if (k == ConstraintKind::BaseVelocity) return m != Model::Arm;
  return m != Model::Base;
}

/// Box inequality lower <= z <= upper on one block of the state or control.
/// An equality is expressed with lower == upper (two opposing inequalities).
struct ConstraintGroup {
  ConstraintKind kind = ConstraintKind::ArmPosition;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  bool active = true;
};

/// The three limit groups of a chain, in ConstraintKind order.
inline std::vector<ConstraintGroup> make_constraint_groups(const KinematicChain& chain) {
  const int n = chain.dof();
  ConstraintGroup base{ConstraintKind::BaseVelocity, Eigen::Vector2d(-chain.base.v_max, -chain.base.omega_max),
                       Eigen::Vector2d(chain.base.v_max, chain.base.omega_max), true};
  ConstraintGroup pos{ConstraintKind::ArmPosition, Eigen::VectorXd(n), Eigen::VectorXd(n), true};
  ConstraintGroup vel{ConstraintKind::ArmVelocity, Eigen::VectorXd(n), Eigen::VectorXd(n), true};
  for (int i = 0; i < n; ++i) {
    const auto& j = chain.joints[static_cast<std::size_t>(i)];
    pos.lower(i) = j.position_min;
    pos.upper(i) = j.position_max;
    vel.lower(i) = -j.velocity_max;
    vel.upper(i) = j.velocity_max;
  }
  return {pos, vel, base};
}

/// One decoded optimization instance. `state` carries the full robot state:
/// the block of model m is the initial state s_m(t0), the rest stays frozen.
/// For m = base the tracked frame is the base itself and `base_target` is
/// used; otherwise the end effector tracks `target`.
struct NmpcProblem {
  Model model = Model::WholeBody;
  CostSpec costs;
  std::vector<ConstraintGroup> constraints;
  WholeBodyState state;
  Pose3 target;
  BaseState base_target;
  SlqSettings settings;

  Eigen::VectorXd initial_state() const { return extract_state(model, state); }
};

/// Continuous-time Jacobians (A = df/ds, B = df/du) of f_m.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(Model m, const Eigen::VectorXd& s,
                                                           const Eigen::VectorXd& u) {
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> ab;
  model_jacobians(m, s, u, ab.first, ab.second);
  return ab;
}

/// Rotation vector of q_target^-1 * q, taking the short way round; its norm is
/// d_ori(q, q_target).
inline Vec3 orientation_error(const UnitQuaternion& q, const UnitQuaternion& q_target) {
  Eigen::Quaterniond e = q_target.eigen().conjugate() * q.eigen();
  if (e.w() < 0.0) e.coeffs() = -e.coeffs();
  const Vec3 v = e.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  return (2.0 * std::atan2(s, e.w()) / s) * v;
}

/// Inverse left Jacobian of SO(3) at rotation vector r.
inline Mat3 so3_left_jacobian_inverse(const Vec3& r) {
  const double theta = r.norm();
  Mat3 rx;
  rx << 0.0, -r.z(), r.y(), r.z(), 0.0, -r.x(), -r.y(), r.x(), 0.0;
  if (theta < 1e-6) return Mat3::Identity() - 0.5 * rx + (1.0 / 12.0) * rx * rx;
  const double c = 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * rx + c * rx * rx;
}

/// The SLQ problem for one NmpcProblem. Gradients are exact; pose-error
/// Hessians use the Gauss-Newton approximation.
class ManipulatorOcp {
 public:
  ManipulatorOcp(const KinematicChain& chain, const NmpcProblem& problem, const RbfParams& rbf)
      : chain_(&chain),
        model_(problem.model),
        costs_(problem.costs),
        frozen_(problem.state),
        target_(problem.target),
        base_target_(problem.base_target),
        rbf_(rbf),
        nx_(model_state_dim(problem.model, chain.dof())),
        nu_(model_control_dim(problem.model, chain.dof())) {
    if (problem.state.arm.size() != chain.dof()) throw DimensionError("problem state does not match the chain");
    costs_.validate("costs", nu_);
    for (const auto& g : problem.constraints) {
      if (g.active && constraint_applies(g.kind, model_)) constraints_.push_back(g);
    }
    r_diag_.resize(nu_);
    for (int i = 0; i < nu_; ++i) r_diag_(i) = costs_.control_weight(i);
  }

  int state_dim() const { return nx_; }
  int control_dim() const { return nu_; }
  Model model() const { return model_; }

  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return model_derivative(model_, x, u);
  }

  void jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a, Eigen::MatrixXd& b) const {
    model_jacobians(model_, x, u, a, b);
  }

  double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    double c = u.dot(r_diag_.cwiseProduct(u));
    c += pose_cost(x, costs_.position_weight, costs_.orientation_weight, nullptr);
    c += barrier_cost(x, u, nullptr);
    return c;
  }

  void stage_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& u, StageQuadratic& q) const {
    q.lx.setZero(nx_);
    q.lu = 2.0 * r_diag_.cwiseProduct(u);
    q.lxx.setZero(nx_, nx_);
    q.luu = (2.0 * r_diag_).asDiagonal();
    q.lux.setZero(nu_, nx_);
    Derivs d{q.lx, q.lxx, q.lu, q.luu};
    q.value = u.dot(r_diag_.cwiseProduct(u));
    q.value += pose_cost(x, costs_.position_weight, costs_.orientation_weight, &d);
    q.value += barrier_cost(x, u, &d);
  }

  double terminal_cost(const Eigen::VectorXd& x) const {
    return pose_cost(x, costs_.terminal_position_scale * costs_.position_weight,
                     costs_.terminal_orientation_scale * costs_.orientation_weight, nullptr);
  }

  void terminal_quadratic(const Eigen::VectorXd& x, TerminalQuadratic& q) const {
    q.px.setZero(nx_);
    q.pxx.setZero(nx_, nx_);
    Eigen::VectorXd lu;
    Eigen::MatrixXd luu;
    Derivs d{q.px, q.pxx, lu, luu};
    q.value = pose_cost(x, costs_.terminal_position_scale * costs_.position_weight,
                        costs_.terminal_orientation_scale * costs_.orientation_weight, &d);
  }

 private:
  struct Derivs {
    Eigen::VectorXd& gx;
    Eigen::MatrixXd& hxx;
    Eigen::VectorXd& gu;
    Eigen::MatrixXd& huu;
  };

  double pose_cost(const Eigen::VectorXd& x, double wp, double wq, Derivs* d) const {
    if (model_ == Model::Base) {
      const double ex = x(0) - base_target_.x;
      const double ey = x(1) - base_target_.y;
      const double eyaw = wrap_angle(x(2) - base_target_.yaw);
      if (d != nullptr) {
        d->gx(0) += 2.0 * wp * ex;
        d->gx(1) += 2.0 * wp * ey;
        d->gx(2) += 2.0 * wq * eyaw;
        d->hxx(0, 0) += 2.0 * wp;
        d->hxx(1, 1) += 2.0 * wp;
        d->hxx(2, 2) += 2.0 * wq;
      }
      return wp * (ex * ex + ey * ey) + wq * eyaw * eyaw;
    }
    const WholeBodyState s = merge_state(model_, x, frozen_);
    const ChainFrames f = chain_frames(*chain_, s);
    const Vec3 ep = f.ee.position - target_.position;
    const Vec3 eq = orientation_error(f.ee.orientation, target_.orientation);
    if (d != nullptr) {
      const auto jfull = ee_jacobian(f);
      const Eigen::Index off = model_ == Model::Arm ? 3 : 0;
      const Eigen::MatrixXd jp = jfull.block(0, off, 3, nx_);
      const Mat3 rt = target_.orientation.matrix();
      const Eigen::MatrixXd jw = rt.transpose() * jfull.block(3, off, 3, nx_);
      d->gx += 2.0 * wp * jp.transpose() * ep + 2.0 * wq * jw.transpose() * eq;
      const Eigen::MatrixXd jq =
          eq.norm() < std::numbers::pi - 1e-3 ? Eigen::MatrixXd(so3_left_jacobian_inverse(eq) * jw) : jw;
      d->hxx += 2.0 * wp * jp.transpose() * jp + 2.0 * wq * jq.transpose() * jq;
    }
    return wp * ep.squaredNorm() + wq * eq.squaredNorm();
  }

  // Adds rbf(upper - z) + rbf(z - lower) for each entry of a block.
  double box_barrier(const Eigen::VectorXd& z, Eigen::Index off, const ConstraintGroup& g, Eigen::VectorXd* grad,
                     Eigen::MatrixXd* hess) const {
    double c = 0.0;
    for (Eigen::Index i = 0; i < g.lower.size(); ++i) {
      const double v = z(off + i);
      const double hu = g.upper(i) - v;
      const double hl = v - g.lower(i);
      c += rbf(hu, rbf_) + rbf(hl, rbf_);
      if (grad != nullptr) {
        (*grad)(off + i) += -rbf_derivative(hu, rbf_) + rbf_derivative(hl, rbf_);
        (*hess)(off + i, off + i) += rbf_second_derivative(hu, rbf_) + rbf_second_derivative(hl, rbf_);
      }
    }
    return c;
  }

  double barrier_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Derivs* d) const {
    double c = 0.0;
    for (const auto& g : constraints_) {
      switch (g.kind) {
        case ConstraintKind::BaseVelocity:
          c += box_barrier(u, 0, g, d ? &d->gu : nullptr, d ? &d->huu : nullptr);
          break;
        case ConstraintKind::ArmPosition:
          c += box_barrier(x, model_ == Model::Arm ? 0 : 3, g, d ? &d->gx : nullptr, d ? &d->hxx : nullptr);
          break;
        case ConstraintKind::ArmVelocity:
          c += box_barrier(u, model_ == Model::Arm ? 0 : 2, g, d ? &d->gu : nullptr, d ? &d->huu : nullptr);
          break;
      }
    }
    return c;
  }

  const KinematicChain* chain_;
  Model model_;
  CostSpec costs_;
  WholeBodyState frozen_;
  Pose3 target_;
  BaseState base_target_;
  RbfParams rbf_;
  std::vector<ConstraintGroup> constraints_;
  Eigen::VectorXd r_diag_;
  int nx_;
  int nu_;
};

static_assert(OptimalControlProblem<ManipulatorOcp>);

/// J_I evaluated at model state x and control u.
inline double intermediate_cost(const KinematicChain& chain, const NmpcProblem& p, const RbfParams& rbf,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  return ManipulatorOcp(chain, p, rbf).stage_cost(x, u);
}

/// J_T evaluated at model state x.
inline double terminal_cost(const KinematicChain& chain, const NmpcProblem& p, const Eigen::VectorXd& x) {
  return ManipulatorOcp(chain, p, RbfParams{}).terminal_cost(x);
}

/// One receding-horizon solver per model, each keeping its own warm start.
class MultiModelMpc {
 public:
  using Step = MpcSolver<ManipulatorOcp>::Step;

  MultiModelMpc(const KinematicChain& chain, const SlqSettings& settings, const RbfParams& rbf, double shift)
      : chain_(&chain),
        rbf_(rbf),
        solvers_{MpcSolver<ManipulatorOcp>(settings, shift), MpcSolver<ManipulatorOcp>(settings, shift),
                 MpcSolver<ManipulatorOcp>(settings, shift)} {}

  /// Solves p with the solver of p.model; throws SolverDiverged.
  Step step(const NmpcProblem& p) {
    const ManipulatorOcp ocp(*chain_, p, rbf_);
    return solvers_[static_cast<std::size_t>(model_index(p.model))].step(ocp, p.initial_state());
  }

  void reset_warm_start() {
    for (auto& s : solvers_) s.reset_warm_start();
  }
  void reset_warm_start(Model m) { solvers_[static_cast<std::size_t>(model_index(m))].reset_warm_start(); }

 private:
  const KinematicChain* chain_;
  RbfParams rbf_;
  std::array<MpcSolver<ManipulatorOcp>, kNumModels> solvers_;
};

}  // namespace rmpc
