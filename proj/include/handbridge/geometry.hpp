// Copyright 2026 The Handbridge Authors.
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

// 3D primitives shared by every stage: vectors, unit quaternions, rotation
// matrices, rigid transforms and total-least-squares plane fitting.
//
// Conventions: lengths in meters, angles in radians, quaternions stored as
// (w, x, y, z) with the sign canonicalized so that w >= 0 (ties broken by the
// first nonzero vector component being positive).

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "handbridge/errors.hpp"

namespace handbridge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kEigenTieTolerance = 1e-12;
inline constexpr double kParallelTolerance = 1e-9;

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Normalizes and canonicalizes. The input must have nonzero norm.
  static UnitQuaternion from_wxyz(double w, double x, double y, double z) {
    UnitQuaternion q;
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    q.c_ = {w / n, x / n, y / n, z / n};
    q.canonicalize();
    return q;
  }

  static UnitQuaternion identity() { return UnitQuaternion{}; }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return from_wxyz(std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s);
  }

  /// Exponential map of a rotation vector (axis * angle).
  static UnitQuaternion from_rotation_vector(const Vec3& rv) {
    const double angle = rv.norm();
    if (angle < 1e-300) return identity();
    return from_axis_angle(rv / angle, angle);
  }

  double w() const { return c_[0]; }
  double x() const { return c_[1]; }
  double y() const { return c_[2]; }
  double z() const { return c_[3]; }
  Vec3 vec() const { return {c_[1], c_[2], c_[3]}; }
  std::array<double, 4> wxyz() const { return c_; }

  double norm() const { return std::sqrt(dot(*this)); }
  double dot(const UnitQuaternion& o) const {
    return c_[0] * o.c_[0] + c_[1] * o.c_[1] + c_[2] * o.c_[2] + c_[3] * o.c_[3];
  }

  UnitQuaternion conjugate() const { return raw(c_[0], -c_[1], -c_[2], -c_[3]).canonical(); }

  /// Hamilton product, canonicalized.
  UnitQuaternion operator*(const UnitQuaternion& o) const {
    return product(*this, o).canonical();
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 u = vec();
    const Vec3 t = 2.0 * u.cross(v);
    return v + c_[0] * t + u.cross(t);
  }

  /// Rotation vector (log map); angle in [0, pi].
  Vec3 rotation_vector() const {
    const Vec3 u = vec();
    const double s = u.norm();
    if (s < 1e-300) return Vec3::Zero();
    const double angle = 2.0 * std::atan2(s, c_[0]);
    return u * (angle / s);
  }

  /// Geodesic angle between two orientations, in [0, pi].
  double angle_to(const UnitQuaternion& o) const {
    const UnitQuaternion d = product(conjugate(), o);
    return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
  }

  bool operator==(const UnitQuaternion&) const = default;

 private:
  static UnitQuaternion raw(double w, double x, double y, double z) {
    UnitQuaternion q;
    q.c_ = {w, x, y, z};
    return q;
  }

  static UnitQuaternion product(const UnitQuaternion& a, const UnitQuaternion& b) {
    const auto& p = a.c_;
    const auto& q = b.c_;
    return raw(p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
               p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
               p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
               p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]);
  }

  UnitQuaternion canonical() const {
    UnitQuaternion q = *this;
    q.canonicalize();
    return q;
  }

  void canonicalize() {
    bool flip = false;
    for (double v : c_) {
      if (v != 0.0) {
        flip = v < 0.0;
        break;
      }
    }
    if (flip) {
      for (double& v : c_) v = -v;
    }
    // Negative zero would break bitwise comparisons of equal rotations.
    for (double& v : c_) v += 0.0;
  }

  std::array<double, 4> c_{1.0, 0.0, 0.0, 0.0};
};

/// Largest elementwise deviation of R^T R from identity.
inline double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return r.allFinite() && orthonormality_error(r) <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

inline Mat3 matrix_from_quat(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Shepperd's method: pick the largest of (trace, R00, R11, R22) as the pivot
/// so the square root argument stays well away from zero.
inline UnitQuaternion quat_from_matrix(const Mat3& r) {
  const double trace = r.trace();
  const std::array<double, 4> pivots{trace, r(0, 0), r(1, 1), r(2, 2)};
  const auto best = std::max_element(pivots.begin(), pivots.end()) - pivots.begin();
  double w, x, y, z;
  switch (best) {
    case 0: {
      const double s = 2.0 * std::sqrt(1.0 + trace);
      w = 0.25 * s;
      x = (r(2, 1) - r(1, 2)) / s;
      y = (r(0, 2) - r(2, 0)) / s;
      z = (r(1, 0) - r(0, 1)) / s;
      break;
    }
    case 1: {
      const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
      w = (r(2, 1) - r(1, 2)) / s;
      x = 0.25 * s;
      y = (r(0, 1) + r(1, 0)) / s;
      z = (r(0, 2) + r(2, 0)) / s;
      break;
    }
    case 2: {
      const double s = 2.0 * std::sqrt(1.0 - r(0, 0) + r(1, 1) - r(2, 2));
      w = (r(0, 2) - r(2, 0)) / s;
      x = (r(0, 1) + r(1, 0)) / s;
      y = 0.25 * s;
      z = (r(1, 2) + r(2, 1)) / s;
      break;
    }
    default: {
      const double s = 2.0 * std::sqrt(1.0 - r(0, 0) - r(1, 1) + r(2, 2));
      w = (r(1, 0) - r(0, 1)) / s;
      x = (r(0, 2) + r(2, 0)) / s;
      y = (r(1, 2) + r(2, 1)) / s;
      z = 0.25 * s;
      break;
    }
  }
  return UnitQuaternion::from_wxyz(w, x, y, z);
}

inline Mat3 rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Rotation vector of R (axis * angle, angle in [0, pi]).
inline Vec3 rotation_vector(const Mat3& r) { return quat_from_matrix(r).rotation_vector(); }

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

struct Pose {
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;
};

inline Pose transform_pose(const RigidTransform& t, const Vec3& p, const UnitQuaternion& q) {
  return {t.apply(p), quat_from_matrix(t.rotation) * q};
}

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  Vec3 centroid = Vec3::Zero();
  double residual_rms = 0.0;
};

/// Total least squares plane through the points: the normal is the
/// eigenvector of the covariance with the smallest eigenvalue. The sign of
/// the normal is left to the caller.
inline Plane fit_plane(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw Error(ErrorCode::DegenerateFit, "plane fit needs at least 3 points");
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());

  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  const Vec3 eig = solver.eigenvalues();
  if (eig(1) - eig(0) <= kEigenTieTolerance) {
    throw Error(ErrorCode::DegenerateFit, "collinear or coincident points");
  }
  Plane plane;
  plane.normal = solver.eigenvectors().col(0).normalized();
  plane.centroid = centroid;
  double sum_sq = 0.0;
  for (const auto& p : points) {
    const double d = (p - centroid).dot(plane.normal);
    sum_sq += d * d;
  }
  plane.residual_rms = std::sqrt(sum_sq / static_cast<double>(points.size()));
  return plane;
}

/// Right-handed frame with Z along z and X along the component of x_hint
/// orthogonal to Z. Columns of the result are [X Y Z].
inline Mat3 frame_from_axes(const Vec3& x_hint, const Vec3& z) {
  const double zn = z.norm();
  if (!(zn > kParallelTolerance)) {
    throw Error(ErrorCode::ParallelAxes, "z axis has zero length");
  }
  const Vec3 zu = z / zn;
  if (x_hint.cross(zu).norm() < kParallelTolerance) {
    throw Error(ErrorCode::ParallelAxes, "x hint is parallel to z axis");
  }
  const Vec3 xu = (x_hint - x_hint.dot(zu) * zu).normalized();
  const Vec3 yu = zu.cross(xu);
  Mat3 r;
  r.col(0) = xu;
  r.col(1) = yu;
  r.col(2) = zu;
  return r;
}

/// Shortest-arc spherical interpolation, t in [0, 1].
inline UnitQuaternion slerp(const UnitQuaternion& q0, const UnitQuaternion& q1, double t) {
  auto a = q0.wxyz();
  auto b = q1.wxyz();
  double d = q0.dot(q1);
  if (d < 0.0) {
    for (double& v : b) v = -v;
    d = -d;
  }
  double s0, s1;
  if (d > 1.0 - 1e-12) {
    s0 = 1.0 - t;
    s1 = t;
  } else {
    const double theta = std::acos(std::min(d, 1.0));
    const double sin_theta = std::sin(theta);
    s0 = std::sin((1.0 - t) * theta) / sin_theta;
    s1 = std::sin(t * theta) / sin_theta;
  }
  return UnitQuaternion::from_wxyz(s0 * a[0] + s1 * b[0], s0 * a[1] + s1 * b[1],
                                   s0 * a[2] + s1 * b[2], s0 * a[3] + s1 * b[3]);
}

}  // namespace handbridge
