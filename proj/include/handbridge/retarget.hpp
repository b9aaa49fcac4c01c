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

// Hand-to-gripper action space alignment.
//
// Each hand frame becomes an end-effector state (position, orientation,
// gripper opening):
//  * position: midpoint of the thumb interphalangeal joint and the index MCP
//    joint. The thumb has no PIP joint; THUMB_IP is its anatomical analogue.
//  * orientation: Z is the normal of the plane through the four index finger
//    joints and THUMB_IP, X follows index MCP -> PIP, Y = Z x X.
//  * gripper: thumb/index fingertip distance mapped linearly onto [0, 1]
//    between d_min (closed) and d_max (open), clipped.
// The camera-frame states are then moved into the robot base frame with the
// hand-eye transform.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/hand_model.hpp"

namespace handbridge {

enum class FrameTag { Camera, RobotBase };
enum class Embodiment { HumanHand, Robot };

inline std::string to_string(FrameTag f) { return f == FrameTag::Camera ? "camera" : "robot_base"; }
inline std::string to_string(Embodiment e) { return e == Embodiment::HumanHand ? "human" : "robot"; }

struct EndEffectorPose {
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;
  double gripper = 0.0;
  double timestamp = 0.0;
};

struct StateTrajectory {
  std::vector<EndEffectorPose> poses;
  Embodiment embodiment = Embodiment::HumanHand;
  FrameTag frame = FrameTag::Camera;

  std::size_t size() const { return poses.size(); }
};

struct GripperCalibration {
  double d_min = 0.02;  // fully closed, meters
  double d_max = 0.10;  // fully open, meters

  bool valid() const { return d_min > 0.0 && d_min < d_max && std::isfinite(d_max); }
};

inline Vec3 anchor_position(const HandFrame& frame) {
  return 0.5 * (frame[kp::THUMB_IP] + frame[kp::INDEX_MCP]);
}

inline double fingertip_distance(const HandFrame& frame) {
  return (frame[kp::THUMB_TIP] - frame[kp::INDEX_TIP]).norm();
}

inline double gripper_state(double distance, const GripperCalibration& cal) {
  return std::clamp((distance - cal.d_min) / (cal.d_max - cal.d_min), 0.0, 1.0);
}

inline double gripper_state(const HandFrame& frame, const GripperCalibration& cal) {
  return gripper_state(fingertip_distance(frame), cal);
}

/// Below this normalized triple product the chirality test is considered
/// ambiguous and the previous frame's normal decides the sign.
inline constexpr double kChiralityAmbiguity = 1e-3;

struct PalmFrame {
  UnitQuaternion orientation;
  Vec3 normal;  // sign-resolved Z axis
};

/// Palm frame with sign resolution. The normal is oriented so that
/// Z . ((THUMB_IP - centroid) x (INDEX_TIP - INDEX_MCP)) > 0, which points out
/// of the palm for a right hand. When that product is near zero the sign
/// closest to `previous_normal` is used instead.
inline PalmFrame palm_frame(const HandFrame& frame, const std::optional<Vec3>& previous_normal = std::nullopt) {
  const std::array<Vec3, 5> points{frame[kp::INDEX_MCP], frame[kp::INDEX_PIP], frame[kp::INDEX_DIP],
                                   frame[kp::INDEX_TIP], frame[kp::THUMB_IP]};
  const Plane plane = fit_plane(points);
  Vec3 z = plane.normal;

  const Vec3 thumb_arm = frame[kp::THUMB_IP] - plane.centroid;
  const Vec3 index_dir = frame[kp::INDEX_TIP] - frame[kp::INDEX_MCP];
  const double scale = thumb_arm.norm() * index_dir.norm();
  const double chirality = scale > 0.0 ? z.dot(thumb_arm.cross(index_dir)) / scale : 0.0;
  if (std::abs(chirality) >= kChiralityAmbiguity || !previous_normal) {
    if (chirality < 0.0) z = -z;
  } else if (z.dot(*previous_normal) < 0.0) {
    z = -z;
  }

  const Vec3 x_hint = frame[kp::INDEX_PIP] - frame[kp::INDEX_MCP];
  return {quat_from_matrix(frame_from_axes(x_hint, z)), z};
}

inline UnitQuaternion hand_orientation(const HandFrame& frame) { return palm_frame(frame).orientation; }

/// Linear-interpolated percentile, p in [0, 100], of an unsorted sample.
inline double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline GripperCalibration calibrate_gripper(const HandTrack& track, double low_pct = 5.0, double high_pct = 95.0) {
  if (track.frames.empty()) throw Error(ErrorCode::EmptyTrack, "cannot calibrate gripper on an empty track");
  if (!(low_pct >= 0.0 && low_pct < high_pct && high_pct <= 100.0)) {
    throw Error(ErrorCode::ConfigError, "gripper percentiles must satisfy 0 <= low < high <= 100");
  }
  std::vector<double> d;
  d.reserve(track.frames.size());
  for (const auto& f : track.frames) d.push_back(fingertip_distance(f));
  GripperCalibration cal{percentile(d, low_pct), percentile(d, high_pct)};
  if (!(cal.d_min < cal.d_max) || !(cal.d_min > 0.0)) {
    throw Error(ErrorCode::DegenerateCalibration,
                "fingertip distance percentiles do not span a range (d_min=" + std::to_string(cal.d_min) +
                    ", d_max=" + std::to_string(cal.d_max) + ")");
  }
  return cal;
}

/// Maps a pose computed on a mirrored (left) hand back to the real camera
/// frame: the position and the finger and normal axes are reflected in x and
/// Y is negated so the frame stays right-handed.
inline Pose unmirror_pose(const Vec3& position, const UnitQuaternion& orientation) {
  const Mat3 m = Vec3(-1.0, 1.0, 1.0).asDiagonal();
  const Mat3 r = m * matrix_from_quat(orientation) * Vec3(1.0, -1.0, 1.0).asDiagonal();
  return {m * position, quat_from_matrix(r)};
}

struct RetargetOptions {
  int max_gap = 5;                   // frames of orientation gap that may be filled
  double min_valid_fraction = 0.8;   // below this the track is rejected
};

struct RetargetResult {
  StateTrajectory trajectory;
  std::size_t filled = 0;  // frames whose orientation was interpolated
  std::vector<double> dropped_timestamps;
};

inline RetargetResult retarget_track_report(const HandTrack& track, const GripperCalibration& cal,
                                            const RigidTransform& cam_to_base, const RetargetOptions& opts = {}) {
  const auto& frames = track.frames;
  if (frames.empty()) throw Error(ErrorCode::EmptyTrack, "retargeting an empty track");
  if (!cal.valid()) throw Error(ErrorCode::DegenerateCalibration, "invalid gripper calibration");

  const std::size_t n = frames.size();
  std::vector<std::optional<UnitQuaternion>> orient(n);
  std::optional<Vec3> prev_normal;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const PalmFrame pf = palm_frame(frames[i], prev_normal);
      orient[i] = pf.orientation;
      prev_normal = pf.normal;
      ++valid;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFit && e.code() != ErrorCode::ParallelAxes) throw;
    }
  }
  const double fraction = static_cast<double>(valid) / static_cast<double>(n);
  if (valid == 0 || fraction < opts.min_valid_fraction) {
    throw Error(ErrorCode::TooManyGaps, "only " + std::to_string(valid) + " of " + std::to_string(n) +
                                            " frames have a usable palm plane");
  }

  RetargetResult result;
  result.trajectory.embodiment = Embodiment::HumanHand;
  result.trajectory.frame = FrameTag::RobotBase;
  const auto max_gap = static_cast<std::size_t>(std::max(opts.max_gap, 0));

  std::size_t i = 0;
  while (i < n) {
    if (orient[i]) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < n && !orient[end]) ++end;
    const std::size_t gap = end - i;
    const bool has_before = i > 0;
    const bool has_after = end < n;
    if (gap <= max_gap) {
      for (std::size_t k = i; k < end; ++k) {
        if (has_before && has_after) {
          const double ta = frames[i - 1].timestamp;
          const double tb = frames[end].timestamp;
          orient[k] = slerp(*orient[i - 1], *orient[end], (frames[k].timestamp - ta) / (tb - ta));
        } else {
          orient[k] = has_before ? *orient[i - 1] : *orient[end];
        }
      }
      result.filled += gap;
    }
    i = end;
  }

  for (std::size_t k = 0; k < n; ++k) {
    const HandFrame& f = frames[k];
    if (!orient[k]) {
      result.dropped_timestamps.push_back(f.timestamp);
      continue;
    }
    const Pose cam = track.mirrored ? unmirror_pose(anchor_position(f), *orient[k])
                                    : Pose{anchor_position(f), *orient[k]};
    const Pose p = transform_pose(cam_to_base, cam.position, cam.orientation);
    result.trajectory.poses.push_back({p.position, p.orientation, gripper_state(f, cal), f.timestamp});
  }
  return result;
}

inline StateTrajectory retarget_track(const HandTrack& track, const GripperCalibration& cal,
                                      const RigidTransform& cam_to_base, const RetargetOptions& opts = {}) {
  return retarget_track_report(track, cal, cam_to_base, opts).trajectory;
}

/// Iterative (Karcher) mean of unit quaternions, started at `initial`.
inline UnitQuaternion average_orientation(std::span<const UnitQuaternion> qs, const UnitQuaternion& initial) {
  UnitQuaternion mean = initial;
  for (int iter = 0; iter < 50; ++iter) {
    Vec3 delta = Vec3::Zero();
    for (const auto& q : qs) delta += (mean.conjugate() * q).rotation_vector();
    delta /= static_cast<double>(qs.size());
    mean = mean * UnitQuaternion::from_rotation_vector(delta);
    if (delta.norm() < 1e-13) break;
  }
  return mean;
}

/// Centered moving-average smoothing with windows shrunk at the ends. A
/// window of 1 leaves the corresponding channel untouched.
inline StateTrajectory smooth_trajectory(const StateTrajectory& traj, int position_window, int orientation_window) {
  if (position_window < 1 || orientation_window < 1 || position_window % 2 == 0 || orientation_window % 2 == 0) {
    throw Error(ErrorCode::ConfigError, "smoothing windows must be odd and >= 1");
  }
  StateTrajectory out = traj;
  const auto n = static_cast<std::ptrdiff_t>(traj.poses.size());
  const std::ptrdiff_t ph = position_window / 2;
  const std::ptrdiff_t oh = orientation_window / 2;
  std::vector<UnitQuaternion> window;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& dst = out.poses[static_cast<std::size_t>(i)];
    if (ph > 0) {
      const std::ptrdiff_t r = std::min({ph, i, n - 1 - i});
      Vec3 sum = Vec3::Zero();
      double g = 0.0;
      for (std::ptrdiff_t j = i - r; j <= i + r; ++j) {
        sum += traj.poses[static_cast<std::size_t>(j)].position;
        g += traj.poses[static_cast<std::size_t>(j)].gripper;
      }
      const double count = static_cast<double>(2 * r + 1);
      dst.position = sum / count;
      dst.gripper = std::clamp(g / count, 0.0, 1.0);
    }
    if (oh > 0) {
      const std::ptrdiff_t r = std::min({oh, i, n - 1 - i});
      window.clear();
      for (std::ptrdiff_t j = i - r; j <= i + r; ++j) window.push_back(traj.poses[static_cast<std::size_t>(j)].orientation);
      dst.orientation = r == 0 ? window.front() : average_orientation(window, traj.poses[static_cast<std::size_t>(i)].orientation);
    }
  }
  return out;
}

}  // namespace handbridge
