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

#include "rmpc/robot_models.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace rmpc {
namespace {

using testing::Gen;
constexpr double kPi = std::numbers::pi;

Eigen::Isometry3d iso(const Pose3& p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = p.orientation.matrix();
  t.translation() = p.position;
  return t;
}

// Homogeneous-matrix chain product, independent of the quaternion path.
Eigen::Isometry3d fk_oracle(const KinematicChain& c, const WholeBodyState& s, std::vector<Eigen::Isometry3d>* links) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.translate(Vec3(s.base.x, s.base.y, 0.0));
  t.rotate(Eigen::AngleAxisd(s.base.yaw, Vec3::UnitZ()));
  t = t * iso(c.mount);
  for (int i = 0; i < c.dof(); ++i) {
    const auto& j = c.joints[static_cast<std::size_t>(i)];
    t.rotate(Eigen::AngleAxisd(s.arm(i), j.axis.normalized()));
    if (links) links->push_back(t);
    t = t * iso(j.offset);
  }
  return t * iso(c.ee_offset);
}

KinematicChain random_chain(Gen& g, int n) {
  KinematicChain c;
  c.mount = g.pose(0.3);
  for (int i = 0; i < n; ++i) {
    JointSpec j;
    j.axis = g.vec3().normalized();
    j.offset = g.pose(0.2);
    j.mass = g.uniform(0.2, 2.0);
    j.com = g.vec3(0.1);
    c.joints.push_back(j);
  }
  c.ee_offset = g.pose(0.1);
  c.home = Eigen::VectorXd::Zero(n);
  c.base.mass = g.uniform(5, 30);
  c.base.com = g.vec3(0.2);
  return c;
}

WholeBodyState random_state(Gen& g, int n) {
  return {{g.uniform(-3, 3), g.uniform(-3, 3), g.uniform(-kPi, kPi)}, g.vector(n, kPi)};
}

TEST(BaseDerivative, Examples) {
  EXPECT_TRUE(base_derivative({0, 0, 0.3}, {0, 0}).isZero());
  EXPECT_TRUE(base_derivative({0, 0, 0}, {1, 0}).isApprox(Vec3(1, 0, 0)));
  const Vec3 d = base_derivative({0, 0, kPi / 2}, {2, 0.5});
  EXPECT_NEAR(d.x(), 2 * std::cos(kPi / 2), 1e-15);
  EXPECT_NEAR(d.y(), 2.0, 1e-15);
  EXPECT_EQ(d.z(), 0.5);
}

TEST(ArmDerivative, IdentityMap) {
  Gen g(1);
  const Eigen::VectorXd s = g.vector(6);
  EXPECT_TRUE(arm_derivative(s, Eigen::VectorXd::Zero(6)).isZero());
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(6, 0.1);
  EXPECT_EQ(arm_derivative(s, u), u);
  EXPECT_THROW(arm_derivative(s, Eigen::VectorXd::Zero(5)), DimensionError);
}

TEST(WholeBodyDerivative, StacksSubModelsExactly) {
  Gen g(2);
  for (int i = 0; i < 100; ++i) {
    const WholeBodyState s = random_state(g, 6);
    const WholeBodyControl u{{g.uniform(-1, 1), g.uniform(-1, 1)}, g.vector(6)};
    const Eigen::VectorXd d = wb_derivative(s, u);
    EXPECT_EQ(Vec3(d.head<3>()), base_derivative(s.base, u.base));
    EXPECT_EQ(Eigen::VectorXd(d.tail(6)), arm_derivative(s.arm, u.arm));
  }
  const WholeBodyState s = random_state(g, 6);
  EXPECT_TRUE(wb_derivative(s, {{0, 0}, Eigen::VectorXd::Zero(6)}).isZero());
  EXPECT_TRUE(wb_derivative(s, {{0.5, 0.2}, Eigen::VectorXd::Zero(6)}).tail(6).isZero());
}

TEST(Integrate, ZeroControlIsStationary) {
  Gen g(3);
  const WholeBodyState s = random_state(g, 6);
  const WholeBodyState n = integrate(s, {{0, 0}, Eigen::VectorXd::Zero(6)}, 0.05);
  EXPECT_EQ(n.base.x, s.base.x);
  EXPECT_EQ(n.base.y, s.base.y);
  EXPECT_EQ(n.arm, s.arm);
}

double arc_error(double dt) {
  Eigen::VectorXd x = Eigen::Vector3d::Zero();
  const Eigen::Vector2d u(1.0, 1.0);
  const int steps = static_cast<int>(std::lround(1.0 / dt));
  for (int k = 0; k < steps; ++k) x = integrate(Model::Base, x, u, dt);
  const double t = 1.0;
  return (x - Eigen::Vector3d(std::sin(t), 1 - std::cos(t), t)).cwiseAbs().maxCoeff();
}

TEST(Integrate, UnicycleArcMatchesClosedForm) { EXPECT_LT(arc_error(0.01), 1e-8); }

TEST(Integrate, Rk4ObservedOrder) {
  const double e1 = arc_error(0.1);
  const double e2 = arc_error(0.05);
  EXPECT_GE(e1 / e2, 8.0);
}

TEST(Integrate, ArmIsExactForConstantControl) {
  Gen g(4);
  const Eigen::VectorXd q = g.vector(6), u = g.vector(6);
  const Eigen::VectorXd n = integrate(Model::Arm, q, u, 0.05);
  EXPECT_TRUE(n.isApprox(q + u * 0.05, 1e-14));
}

TEST(Integrate, WrapsYaw) {
  Eigen::VectorXd x = Eigen::Vector3d(0, 0, 3.1);
  x = integrate(Model::Base, x, Eigen::Vector2d(0, 1), 0.1);
  EXPECT_NEAR(x(2), 3.2 - 2 * kPi, 1e-12);
  EXPECT_THROW(integrate(Model::Base, x, Eigen::Vector2d(0, 1), 0.0), DimensionError);
}

TEST(ForwardKinematics, ZeroConfigurationIsProductOfOffsets) {
  Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const KinematicChain c = random_chain(g, g.integer(1, 7));
    const WholeBodyState s{{0, 0, 0}, Eigen::VectorXd::Zero(c.dof())};
    Eigen::Isometry3d prod = iso(c.mount);
    for (const auto& j : c.joints) prod = prod * iso(j.offset);
    prod = prod * iso(c.ee_offset);
    const Pose3 ee = forward_kinematics(c, s);
    EXPECT_TRUE(ee.position.isApprox(prod.translation(), 1e-12));
    EXPECT_TRUE(ee.orientation.matrix().isApprox(prod.linear(), 1e-12));
  }
}

TEST(ForwardKinematics, MatchesHomogeneousOracle) {
  Gen g(6);
  for (int trial = 0; trial < 50; ++trial) {
    const KinematicChain c = random_chain(g, 6);
    const WholeBodyState s = random_state(g, 6);
    const Eigen::Isometry3d t = fk_oracle(c, s, nullptr);
    const Pose3 ee = forward_kinematics(c, s);
    EXPECT_TRUE(ee.position.isApprox(t.translation(), 1e-12));
    EXPECT_TRUE(ee.orientation.matrix().isApprox(t.linear(), 1e-12));
  }
}

TEST(ForwardKinematics, PlanarEquivariance) {
  Gen g(7);
  const KinematicChain c = KinematicChain::default_chain();
  for (int trial = 0; trial < 50; ++trial) {
    WholeBodyState s = random_state(g, 6);
    const Pose3 ee = forward_kinematics(c, s);
    // Translation.
    WholeBodyState t = s;
    t.base.x += 0.7;
    t.base.y -= 1.3;
    EXPECT_TRUE((forward_kinematics(c, t).position - ee.position).isApprox(Vec3(0.7, -1.3, 0), 1e-12));
    // Rotation about the base origin.
    const double dyaw = g.uniform(-kPi, kPi);
    WholeBodyState r = s;
    r.base.yaw += dyaw;
    const Eigen::AngleAxisd rot(dyaw, Vec3::UnitZ());
    const Vec3 origin(s.base.x, s.base.y, 0);
    const Pose3 ee_r = forward_kinematics(c, r);
    EXPECT_TRUE(ee_r.position.isApprox(origin + rot * (ee.position - origin), 1e-9));
    EXPECT_TRUE(ee_r.orientation.matrix().isApprox(rot.toRotationMatrix() * ee.orientation.matrix(), 1e-9));
  }
}

TEST(ForwardKinematics, HalfTurnOfBaseRotatesHomePose) {
  const KinematicChain c = KinematicChain::default_chain();
  const WholeBodyState s{{0.4, -0.2, 0.0}, c.home};
  WholeBodyState r = s;
  r.base.yaw = kPi;
  const Vec3 p = forward_kinematics(c, s).position;
  const Vec3 q = forward_kinematics(c, r).position;
  EXPECT_NEAR(q.x(), 2 * 0.4 - p.x(), 1e-12);
  EXPECT_NEAR(q.y(), 2 * -0.2 - p.y(), 1e-12);
  EXPECT_NEAR(q.z(), p.z(), 1e-12);
}

TEST(ComPosition, MidpointOfTwoEqualMasses) {
  KinematicChain c;
  c.mount = Pose3::identity();
  JointSpec j;
  j.mass = 1.0;
  j.com = Vec3(0, 0, 1);
  c.joints = {j};
  c.home = Eigen::VectorXd::Zero(1);
  c.base.mass = 1.0;
  c.base.com = Vec3::Zero();
  EXPECT_TRUE(com_position(c, WholeBodyState{{0, 0, 0}, Eigen::VectorXd::Zero(1)}).isApprox(Vec3(0, 0, 0.5)));
}

TEST(ComPosition, SingleDominantBody) {
  KinematicChain c = KinematicChain::default_chain();
  for (auto& j : c.joints) j.mass = 1e-300;
  const WholeBodyState s{{1, 2, 0.3}, c.home};
  const Vec3 expected = base_pose(s.base).transform_point(c.base.com);
  EXPECT_TRUE(com_position(c, s).isApprox(expected, 1e-12));
}

TEST(ComPosition, MatchesSummationOracle) {
  Gen g(8);
  for (int trial = 0; trial < 50; ++trial) {
    const KinematicChain c = random_chain(g, 6);
    const WholeBodyState s = random_state(g, 6);
    std::vector<Eigen::Isometry3d> links;
    fk_oracle(c, s, &links);
    Eigen::Isometry3d base = Eigen::Isometry3d::Identity();
    base.translate(Vec3(s.base.x, s.base.y, 0.0));
    base.rotate(Eigen::AngleAxisd(s.base.yaw, Vec3::UnitZ()));
    double m = c.base.mass;
    Vec3 acc = c.base.mass * (base * c.base.com);
    for (int i = 0; i < c.dof(); ++i) {
      m += c.joints[static_cast<std::size_t>(i)].mass;
      acc += c.joints[static_cast<std::size_t>(i)].mass * (links[static_cast<std::size_t>(i)] * c.joints[static_cast<std::size_t>(i)].com);
    }
    EXPECT_LT((com_position(c, s) - acc / m).norm(), 1e-12);
  }
}

TEST(EeJacobian, MatchesFiniteDifferences) {
  Gen g(9);
  const KinematicChain c = random_chain(g, 6);
  const WholeBodyState s = random_state(g, 6);
  const auto f = chain_frames(c, s);
  const auto j = ee_jacobian(f);
  const Eigen::VectorXd x = to_vector(s);
  constexpr double h = 1e-6;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    const Pose3 pp = forward_kinematics(c, merge_state(Model::WholeBody, xp, s));
    const Pose3 pm = forward_kinematics(c, merge_state(Model::WholeBody, xm, s));
    const Vec3 dp = (pp.position - pm.position) / (2 * h);
    EXPECT_TRUE(dp.isApprox(j.block<3, 1>(0, k), 1e-6)) << k;
    // Angular velocity from the rotation difference.
    const Mat3 dr = (pp.orientation.matrix() - pm.orientation.matrix()) / (2 * h) * f.ee.orientation.matrix().transpose();
    const Vec3 w(dr(2, 1), dr(0, 2), dr(1, 0));
    EXPECT_TRUE((w - j.block<3, 1>(3, k)).norm() < 1e-6) << k;
  }
}

TEST(MapWholeBodyControl, BlocksAreZeroedOrCopied) {
  const WholeBodyControl b = map_whole_body_control(Model::Base, Eigen::Vector2d(1, 0.2), 6);
  EXPECT_EQ(b.base.v, 1.0);
  EXPECT_EQ(b.base.omega, 0.2);
  EXPECT_TRUE(b.arm.isZero());

  Gen g(10);
  const Eigen::VectorXd ua = g.vector(6);
  const WholeBodyControl a = map_whole_body_control(Model::Arm, ua, 6);
  EXPECT_EQ(a.base.v, 0.0);
  EXPECT_EQ(a.base.omega, 0.0);
  EXPECT_EQ(a.arm, ua);

  const Eigen::VectorXd uw = g.vector(8);
  EXPECT_EQ(to_vector(map_whole_body_control(Model::WholeBody, uw, 6)), uw);

  EXPECT_THROW(map_whole_body_control(Model::Base, ua, 6), DimensionError);
  EXPECT_THROW(map_whole_body_control(Model::Arm, Eigen::Vector2d(1, 1), 6), DimensionError);
}

TEST(MapWholeBodyControl, InactiveSubsystemNeverCommanded) {
  Gen g(11);
  for (int i = 0; i < 100; ++i) {
    EXPECT_TRUE(map_whole_body_control(Model::Base, g.vector(2, 5), 6).arm.isZero());
    const auto a = map_whole_body_control(Model::Arm, g.vector(6, 5), 6);
    EXPECT_EQ(a.base.v, 0.0);
    EXPECT_EQ(a.base.omega, 0.0);
  }
}

TEST(KinematicChain, ValidateRejectsBadConfig) {
  KinematicChain c = KinematicChain::default_chain();
  EXPECT_NO_THROW(c.validate());
  c.joints[2].mass = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = KinematicChain::default_chain();
  c.joints[1].position_min = c.joints[1].position_max;
  EXPECT_THROW(c.validate(), ConfigError);
  c = KinematicChain::default_chain();
  c.home = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace rmpc
