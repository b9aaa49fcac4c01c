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

// Forward kinematics, geometric Jacobian and damped-least-squares IK for a
// six-joint revolute chain, plus a trajectory executability check.
//
// Chain file (JSON):
//   {"format":"handbridge.chain","version":1,"name":"...",
//    "joints":[{"name":"shoulder_pan","axis":[0,0,1],
//               "origin":{"xyz":[0,0,0.05],"rpy":[0,0,0]},
//               "limits":[-2.0,2.0]}, ... exactly six ...],
//    "tool":{"xyz":[0.105,0,0],"rpy":[0,0,0]}}
// Each joint's transform is origin * Rot(axis, q). rpy follows the URDF
// convention R = Rz(yaw) * Ry(pitch) * Rx(roll).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/io.hpp"
#include "handbridge/retarget.hpp"

namespace handbridge {

inline constexpr std::size_t kNumJoints = 6;

using JointVector = Eigen::Matrix<double, 6, 1>;
using Jacobian = Eigen::Matrix<double, 6, 6>;

struct Joint {
  std::string name;
  Vec3 axis = Vec3::UnitZ();
  RigidTransform origin;
  double lower = -M_PI;
  double upper = M_PI;
};

struct KinematicChain {
  std::string name;
  std::array<Joint, kNumJoints> joints;
  RigidTransform tool;

  JointVector lower() const {
    JointVector v;
    for (std::size_t i = 0; i < kNumJoints; ++i) v(static_cast<Eigen::Index>(i)) = joints[i].lower;
    return v;
  }
  JointVector upper() const {
    JointVector v;
    for (std::size_t i = 0; i < kNumJoints; ++i) v(static_cast<Eigen::Index>(i)) = joints[i].upper;
    return v;
  }
  JointVector mid_range() const { return 0.5 * (lower() + upper()); }

  JointVector clamp(const JointVector& q) const { return q.cwiseMax(lower()).cwiseMin(upper()); }

  bool within_limits(const JointVector& q) const {
    return (q.array() >= lower().array()).all() && (q.array() <= upper().array()).all();
  }

  /// Sum of link offset lengths plus the tool offset; an upper bound on the
  /// distance from the base origin to the tool point.
  double reach_bound() const {
    double r = tool.translation.norm();
    for (const auto& j : joints) r += j.origin.translation.norm();
    return r;
  }
};

inline Mat3 rpy_matrix(double roll, double pitch, double yaw) {
  return rotation_about(Vec3::UnitZ(), yaw) * rotation_about(Vec3::UnitY(), pitch) *
         rotation_about(Vec3::UnitX(), roll);
}

namespace detail {

inline Vec3 json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline RigidTransform json_origin(const nlohmann::json& j) {
  const Vec3 xyz = j.contains("xyz") ? json_vec3(j["xyz"]) : Vec3::Zero();
  const Vec3 rpy = j.contains("rpy") ? json_vec3(j["rpy"]) : Vec3::Zero();
  return {rpy_matrix(rpy.x(), rpy.y(), rpy.z()), xyz};
}

}  // namespace detail

inline KinematicChain parse_chain(const nlohmann::json& j, const std::string& name = "<json>") {
  KinematicChain chain;
  try {
    chain.name = j.value("name", "");
    const auto& joints = j.at("joints");
    if (!joints.is_array() || joints.size() != kNumJoints) {
      throw Error(ErrorCode::ParseError, name + ": chain must have exactly 6 joints");
    }
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      const auto& jj = joints[i];
      Joint& joint = chain.joints[i];
      joint.name = jj.value("name", "joint" + std::to_string(i + 1));
      const Vec3 axis = detail::json_vec3(jj.at("axis"));
      if (std::abs(axis.norm() - 1.0) > 1e-9) {
        throw Error(ErrorCode::ParseError, name + ": joint " + joint.name + " axis is not unit length");
      }
      joint.axis = axis;
      joint.origin = jj.contains("origin") ? detail::json_origin(jj["origin"]) : RigidTransform{};
      const auto& lim = jj.at("limits");
      joint.lower = lim.at(0).get<double>();
      joint.upper = lim.at(1).get<double>();
      if (!(joint.lower < joint.upper)) {
        throw Error(ErrorCode::ParseError, name + ": joint " + joint.name + " limits must satisfy min < max");
      }
    }
    chain.tool = j.contains("tool") ? detail::json_origin(j["tool"]) : RigidTransform{};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
  return chain;
}

inline KinematicChain load_chain(const std::string& path) {
  return parse_chain(detail::read_json_file(path), path);
}

/// Approximate geometry of a 6-DoF SO100-class arm (the stock 5-DoF arm with
/// an extra wrist yaw joint). Link lengths are plausible values chosen so the
/// shoulder-to-tool reach is about 0.40 m; they are not measured. The elbow
/// and wrist yaw limits stop short of the stretched-arm and wrist-alignment
/// singularities at +-pi/2.
inline constexpr const char* kDefaultChainJson = R"json({
  "format": "handbridge.chain",
  "version": 1,
  "name": "so100-plus (approximate)",
  "joints": [
    {"name": "shoulder_pan",  "axis": [0, 0, 1], "origin": {"xyz": [0, 0, 0.05],     "rpy": [0, 0, 0]}, "limits": [-2.0, 2.0]},
    {"name": "shoulder_lift", "axis": [0, 1, 0], "origin": {"xyz": [0.03, 0, 0.05],  "rpy": [0, 0, 0]}, "limits": [-1.6, 1.6]},
    {"name": "elbow_flex",    "axis": [0, 1, 0], "origin": {"xyz": [0, 0, 0.116],    "rpy": [0, 0, 0]}, "limits": [-1.4, 1.4]},
    {"name": "wrist_flex",    "axis": [0, 1, 0], "origin": {"xyz": [0.135, 0, 0],    "rpy": [0, 0, 0]}, "limits": [-1.8, 1.8]},
    {"name": "wrist_yaw",     "axis": [0, 0, 1], "origin": {"xyz": [0.045, 0, 0],    "rpy": [0, 0, 0]}, "limits": [-1.4, 1.4]},
    {"name": "wrist_roll",    "axis": [1, 0, 0], "origin": {"xyz": [0, 0, 0],        "rpy": [0, 0, 0]}, "limits": [-2.8, 2.8]}
  ],
  "tool": {"xyz": [0.105, 0, 0], "rpy": [0, 0, 0]}
})json";

inline KinematicChain default_chain() { return parse_chain(nlohmann::json::parse(kDefaultChainJson), "default chain"); }

inline RigidTransform forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  RigidTransform t;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Joint& j = chain.joints[i];
    t = t * j.origin * RigidTransform{rotation_about(j.axis, q(static_cast<Eigen::Index>(i))), Vec3::Zero()};
  }
  return t * chain.tool;
}

/// Geometric Jacobian in the base frame. Rows 0-2 are linear velocity, rows
/// 3-5 angular velocity.
inline Jacobian jacobian(const KinematicChain& chain, const JointVector& q) {
  std::array<Vec3, kNumJoints> axes;
  std::array<Vec3, kNumJoints> points;
  RigidTransform t;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Joint& j = chain.joints[i];
    t = t * j.origin;
    axes[i] = t.rotation * j.axis;
    points[i] = t.translation;
    t = t * RigidTransform{rotation_about(j.axis, q(static_cast<Eigen::Index>(i))), Vec3::Zero()};
  }
  const Vec3 end = (t * chain.tool).translation;
  Jacobian jac;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    jac.block<3, 1>(0, c) = axes[i].cross(end - points[i]);
    jac.block<3, 1>(3, c) = axes[i];
  }
  return jac;
}

struct IkOptions {
  double damping = 0.05;
  int max_iters = 200;       // per attempt
  double pos_tol = 1e-4;     // meters
  double rot_tol = 1e-3;     // radians
  double max_step = 0.3;     // largest joint change per iteration, radians
  double max_pos_error = 0.05;  // error twist clamp, meters
  double max_rot_error = 0.3;   // error twist clamp, radians
  int restarts = 64;         // extra attempts from the seed grid after the seed fails
};

struct IkResult {
  JointVector joints = JointVector::Zero();
  bool converged = false;
  int iterations = 0;  // summed over all attempts
  double position_error = 0.0;
  double orientation_error = 0.0;
};

/// Pose error twist from `current` to the target: translation difference and
/// the rotation vector of R_target * R_current^T.
inline Eigen::Matrix<double, 6, 1> pose_error(const RigidTransform& current, const Vec3& target_p, const Mat3& target_r) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = target_p - current.translation;
  e.tail<3>() = rotation_vector(target_r * current.rotation.transpose());
  return e;
}

namespace detail {

/// One damped least squares descent from `seed`.
inline IkResult dls_attempt(const KinematicChain& chain, const Vec3& target_p, const Mat3& target_r,
                            const JointVector& seed, const IkOptions& opts) {
  const double lambda_sq = opts.damping * opts.damping;
  const JointVector lo = chain.lower();
  const JointVector hi = chain.upper();
  IkResult res;
  res.joints = chain.clamp(seed);
  for (int iter = 0;; ++iter) {
    Eigen::Matrix<double, 6, 1> e = pose_error(forward_kinematics(chain, res.joints), target_p, target_r);
    res.iterations = iter;
    res.position_error = e.head<3>().norm();
    res.orientation_error = e.tail<3>().norm();
    if (res.position_error <= opts.pos_tol && res.orientation_error <= opts.rot_tol) {
      res.converged = true;
      return res;
    }
    if (iter >= opts.max_iters) return res;
    if (res.position_error > opts.max_pos_error) e.head<3>() *= opts.max_pos_error / res.position_error;
    if (res.orientation_error > opts.max_rot_error) e.tail<3>() *= opts.max_rot_error / res.orientation_error;

    Jacobian jac = jacobian(chain, res.joints);
    JointVector dq;
    // Joints that would leave their range are frozen (column zeroed) and the
    // step is recomputed with the remaining joints.
    for (std::size_t pass = 0; pass <= kNumJoints; ++pass) {
      const Jacobian damped = jac * jac.transpose() + lambda_sq * Jacobian::Identity();
      dq = jac.transpose() * damped.ldlt().solve(e);
      const double largest = dq.cwiseAbs().maxCoeff();
      if (largest > opts.max_step) dq *= opts.max_step / largest;
      const JointVector next = res.joints + dq;
      bool froze = false;
      for (Eigen::Index k = 0; k < 6; ++k) {
        if ((next(k) < lo(k) || next(k) > hi(k)) && !jac.col(k).isZero()) {
          jac.col(k).setZero();
          froze = true;
        }
      }
      if (!froze) break;
    }
    res.joints = chain.clamp(res.joints + dq);
  }
}

/// Deterministic restart seeds: mid-range offset by +-half of each joint's
/// half-range, all 64 sign combinations.
inline std::vector<JointVector> restart_seeds(const KinematicChain& chain) {
  std::vector<JointVector> seeds;
  const JointVector mid = chain.mid_range();
  const JointVector half = 0.25 * (chain.upper() - chain.lower());
  for (unsigned m = 0; m < 64; ++m) {
    JointVector s = mid;
    for (Eigen::Index k = 0; k < 6; ++k) s(k) += ((m >> k) & 1U) ? half(k) : -half(k);
    seeds.push_back(s);
  }
  return seeds;
}

}  // namespace detail

/// Damped least squares IK: dq = J^T (J J^T + damping^2 I)^-1 e, with the
/// joints clamped to their limits after every step. The first attempt starts
/// at `seed`; if it does not converge, up to `restarts` further attempts start
/// from a fixed grid of seeds and the best attempt is returned.
inline IkResult solve_ik(const KinematicChain& chain, const Vec3& target_position,
                         const UnitQuaternion& target_orientation, const JointVector& seed,
                         const IkOptions& opts = {}) {
  const Mat3 target_r = matrix_from_quat(target_orientation);
  IkResult best = detail::dls_attempt(chain, target_position, target_r, seed, opts);
  if (best.converged || opts.restarts <= 0) return best;
  int total = best.iterations;
  const auto seeds = detail::restart_seeds(chain);
  const auto attempts = std::min<std::size_t>(static_cast<std::size_t>(opts.restarts), seeds.size());
  auto score = [&](const IkResult& r) { return r.position_error / opts.pos_tol + r.orientation_error / opts.rot_tol; };
  for (std::size_t a = 0; a < attempts; ++a) {
    IkResult r = detail::dls_attempt(chain, target_position, target_r, seeds[a], opts);
    total += r.iterations;
    if (r.converged || score(r) < score(best)) best = r;
    if (r.converged) break;
  }
  best.iterations = total;
  return best;
}

struct TrajectoryValidation {
  // NaN when the trajectory is empty.
  double reachable_fraction = std::numeric_limits<double>::quiet_NaN();
  std::vector<IkResult> results;
  std::vector<JointVector> joint_trajectory;
  double max_joint_jump = 0.0;  // radians, between consecutive converged solutions
  std::size_t reachable = 0;
};

/// Solves IK pose by pose, seeding each solve with the previous solution.
inline TrajectoryValidation validate_trajectory(const KinematicChain& chain, const StateTrajectory& traj,
                                                const IkOptions& opts = {},
                                                const std::optional<JointVector>& seed = std::nullopt) {
  if (!traj.poses.empty() && traj.frame != FrameTag::RobotBase) {
    throw Error(ErrorCode::ValidationFailure, "trajectory must be expressed in the robot base frame");
  }
  TrajectoryValidation out;
  if (traj.poses.empty()) return out;
  JointVector q = seed.value_or(chain.mid_range());
  std::optional<JointVector> prev_ok;
  for (const auto& pose : traj.poses) {
    IkResult r = solve_ik(chain, pose.position, pose.orientation, q, opts);
    if (r.converged) {
      ++out.reachable;
      if (prev_ok) out.max_joint_jump = std::max(out.max_joint_jump, (r.joints - *prev_ok).cwiseAbs().maxCoeff());
      prev_ok = r.joints;
      q = r.joints;
    }
    out.joint_trajectory.push_back(r.joints);
    out.results.push_back(std::move(r));
  }
  out.reachable_fraction = static_cast<double>(out.reachable) / static_cast<double>(traj.poses.size());
  return out;
}

}  // namespace handbridge
