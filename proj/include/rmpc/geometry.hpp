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

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "rmpc/errors.hpp"

namespace rmpc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Wraps an angle to [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  w -= std::numbers::pi;
  // fmod can return exactly 2*pi - eps rounding up to pi.
  if (w >= std::numbers::pi) w -= kTwoPi;
  return w;
}

/// Orientation stored as a quaternion that is renormalized on construction.
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(Eigen::Quaterniond::Identity()) {}
  UnitQuaternion(double w, double x, double y, double z) : q_(w, x, y, z) { normalize(); }
  explicit UnitQuaternion(const Eigen::Quaterniond& q) : q_(q) { normalize(); }

  static UnitQuaternion identity() { return {}; }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    return UnitQuaternion(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
  }

  /// Intrinsic roll-pitch-yaw (rotate about x, then the new y, then the new z).
  static UnitQuaternion from_rpy(double roll, double pitch, double yaw) {
    Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                           Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                           Eigen::AngleAxisd(roll, Vec3::UnitX());
    return UnitQuaternion(q);
  }

  static UnitQuaternion from_yaw(double yaw) { return from_axis_angle(Vec3::UnitZ(), yaw); }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  const Eigen::Quaterniond& eigen() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  UnitQuaternion operator*(const UnitQuaternion& o) const { return UnitQuaternion(q_ * o.q_); }
  UnitQuaternion operator-() const { return UnitQuaternion(-q_.w(), -q_.x(), -q_.y(), -q_.z()); }
  UnitQuaternion conjugate() const { return UnitQuaternion(q_.conjugate()); }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  double dot(const UnitQuaternion& o) const { return q_.dot(o.q_); }

  /// Heading of the rotated x axis projected on the ground plane.
  double yaw() const {
    const Vec3 ex = rotate(Vec3::UnitX());
    return std::atan2(ex.y(), ex.x());
  }

 private:
  void normalize() {
    const double n = q_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DimensionError("quaternion with zero or non-finite norm");
    }
    q_.coeffs() /= n;
  }

  Eigen::Quaterniond q_;
};

struct Pose3 {
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;

  static Pose3 identity() { return {}; }
  static Pose3 translation(const Vec3& p) { return {p, UnitQuaternion::identity()}; }
  static Pose3 planar(double x, double y, double yaw) {
    return {Vec3(x, y, 0.0), UnitQuaternion::from_yaw(yaw)};
  }

  Vec3 transform_point(const Vec3& p) const { return position + orientation.rotate(p); }
};

inline Pose3 compose(const Pose3& parent, const Pose3& child) {
  return {parent.transform_point(child.position), parent.orientation * child.orientation};
}

inline Pose3 invert(const Pose3& p) {
  const UnitQuaternion qi = p.orientation.conjugate();
  return {-qi.rotate(p.position), qi};
}

/// Oriented box rotated about z only. Extents are full lengths: width along the
/// local x axis, length along local y, height along z.
struct Box3 {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  double width = 1.0;
  double length = 1.0;
  double height = 1.0;

  Vec3 half_extents() const { return {0.5 * width, 0.5 * length, 0.5 * height}; }
};

struct Segment3 {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
};

/// Euclidean distance.
inline double d_pos(const Vec3& p1, const Vec3& p2) { return (p1 - p2).norm(); }

/// Angular distance 2*acos(|<q1,q2>|), in [0, pi]; q and -q are the same rotation.
inline double d_ori(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  const double c = std::clamp(std::abs(q1.dot(q2)), 0.0, 1.0);
  return 2.0 * std::acos(c);
}

struct ClosestPoint {
  Vec3 point;
  double distance = 0.0;
};

inline ClosestPoint closest_point_box(const Vec3& p, const Box3& b) {
  const Eigen::AngleAxisd rot(b.yaw, Vec3::UnitZ());
  const Vec3 local = rot.inverse() * (p - b.center);
  const Vec3 he = b.half_extents();
  const Vec3 clamped = local.cwiseMax(-he).cwiseMin(he);
  const Vec3 world = b.center + rot * clamped;
  return {world, (local - clamped).norm()};
}

/// Minimum distance between two segments (Ericson, Real-Time Collision
/// Detection, 5.1.9). Degenerate segments are points.
inline double segment_segment_distance(const Segment3& s1, const Segment3& s2) {
  constexpr double kEps = 1e-12;
  const Vec3 d1 = s1.b - s1.a;
  const Vec3 d2 = s2.b - s2.a;
  const Vec3 r = s1.a - s2.a;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (a <= kEps && e <= kEps) {
    return r.norm();
  }
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 c1 = s1.a + d1 * s;
  const Vec3 c2 = s2.a + d2 * t;
  return (c1 - c2).norm();
}

}  // namespace rmpc
