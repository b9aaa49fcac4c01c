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

// Synthetic hands, meshes and tracks with known ground truth.
//
// The canonical right hand lives in a local frame where the anchor sits at the
// origin, the index finger runs along +x, the fingers spread toward +y and the
// palm normal is +z. Its palm frame is therefore the identity, so a hand posed
// by (R, p) retargets to exactly (p, R).

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "handbridge/augment.hpp"
#include "handbridge/calibration.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/hand_model.hpp"
#include "handbridge/image.hpp"
#include "handbridge/kinematics.hpp"
#include "handbridge/retarget.hpp"
#include "handbridge/rng.hpp"

namespace handbridge::synthetic {

inline const Vec3 kThumbTipDirection(0.0, -0.6, -0.8);

/// Canonical keypoints with thumb-index fingertip distance `d`.
inline Keypoints canonical_keypoints(double d) {
  Keypoints k;
  k[kp::WRIST] = {-0.08, 0.03, 0.0};
  k[kp::THUMB_CMC] = {-0.05, -0.03, 0.0};
  k[kp::THUMB_MCP] = {-0.025, -0.035, 0.0};
  k[kp::THUMB_IP] = {0.0, -0.02, 0.0};
  k[kp::INDEX_MCP] = {0.0, 0.02, 0.0};
  k[kp::INDEX_PIP] = {0.04, 0.02, 0.0};
  k[kp::INDEX_DIP] = {0.065, 0.02, 0.0};
  k[kp::INDEX_TIP] = {0.085, 0.02, 0.0};
  k[kp::MIDDLE_MCP] = {0.0, 0.04, 0.0};
  k[kp::MIDDLE_PIP] = {0.045, 0.04, 0.0};
  k[kp::MIDDLE_DIP] = {0.072, 0.04, 0.0};
  k[kp::MIDDLE_TIP] = {0.094, 0.04, 0.0};
  k[kp::RING_MCP] = {-0.003, 0.06, 0.0};
  k[kp::RING_PIP] = {0.038, 0.06, 0.0};
  k[kp::RING_DIP] = {0.063, 0.06, 0.0};
  k[kp::RING_TIP] = {0.083, 0.06, 0.0};
  k[kp::PINKY_MCP] = {-0.008, 0.08, 0.0};
  k[kp::PINKY_PIP] = {0.024, 0.08, 0.0};
  k[kp::PINKY_DIP] = {0.044, 0.08, 0.0};
  k[kp::PINKY_TIP] = {0.06, 0.08, 0.0};
  k[kp::THUMB_TIP] = k[kp::INDEX_TIP] + d * kThumbTipDirection;
  return k;
}

inline constexpr int kRingsPerFinger = 16;
inline constexpr int kRingVertices = 8;
inline constexpr int kPalmRows = 7;
inline constexpr int kPalmCols = 19;
static_assert(5 * (kRingsPerFinger * kRingVertices + 1) + kPalmRows * kPalmCols == kNumVertices);

namespace detail {

inline Vec3 polyline_point(const std::array<Vec3, 4>& pts, double s, Vec3& tangent) {
  std::array<double, 4> cum{0.0, 0.0, 0.0, 0.0};
  for (int i = 1; i < 4; ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double target = s * cum[3];
  int seg = 0;
  while (seg < 2 && target > cum[seg + 1]) ++seg;
  const double len = cum[seg + 1] - cum[seg];
  const double u = len > 0.0 ? (target - cum[seg]) / len : 0.0;
  tangent = (pts[seg + 1] - pts[seg]).normalized();
  return pts[seg] + u * (pts[seg + 1] - pts[seg]);
}

inline std::array<std::array<std::size_t, 4>, 5> finger_chains() {
  return {{{kp::THUMB_CMC, kp::THUMB_MCP, kp::THUMB_IP, kp::THUMB_TIP},
           {kp::INDEX_MCP, kp::INDEX_PIP, kp::INDEX_DIP, kp::INDEX_TIP},
           {kp::MIDDLE_MCP, kp::MIDDLE_PIP, kp::MIDDLE_DIP, kp::MIDDLE_TIP},
           {kp::RING_MCP, kp::RING_PIP, kp::RING_DIP, kp::RING_TIP},
           {kp::PINKY_MCP, kp::PINKY_PIP, kp::PINKY_DIP, kp::PINKY_TIP}}};
}

inline Face face(std::size_t a, std::size_t b, std::size_t c) {
  return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
}

}  // namespace detail

/// 778 vertices: five tapered finger tubes (16 rings of 8 plus a tip) and a
/// 7 x 19 palm grid, built around canonical keypoints.
inline std::vector<Vec3> canonical_vertices(const Keypoints& k) {
  std::vector<Vec3> v;
  v.reserve(kNumVertices);
  for (const auto& chain : detail::finger_chains()) {
    const std::array<Vec3, 4> pts{k[chain[0]], k[chain[1]], k[chain[2]], k[chain[3]]};
    Vec3 tangent;
    for (int r = 0; r < kRingsPerFinger; ++r) {
      const double s = static_cast<double>(r) / (kRingsPerFinger - 1);
      const Vec3 c = detail::polyline_point(pts, s, tangent);
      Vec3 u = tangent.cross(Vec3::UnitZ());
      if (u.norm() < 1e-6) u = tangent.cross(Vec3::UnitY());
      u.normalize();
      const Vec3 w = tangent.cross(u);
      const double radius = 0.008 - 0.002 * s;
      for (int a = 0; a < kRingVertices; ++a) {
        const double ang = 2.0 * std::numbers::pi * a / kRingVertices;
        v.push_back(c + radius * (std::cos(ang) * u + std::sin(ang) * w));
      }
    }
    v.push_back(pts[3] + 0.006 * tangent);
  }
  for (int r = 0; r < kPalmRows; ++r) {
    for (int c = 0; c < kPalmCols; ++c) {
      v.push_back({-0.08 + 0.08 * r / (kPalmRows - 1), -0.02 + 0.1 * c / (kPalmCols - 1), -0.004});
    }
  }
  return v;
}

/// Faces and exact part labels matching canonical_vertices.
inline MeshTopology hand_topology() {
  MeshTopology t;
  t.num_vertices = kNumVertices;
  const std::size_t per_finger = kRingsPerFinger * kRingVertices + 1;
  for (std::size_t f = 0; f < 5; ++f) {
    const std::size_t base = f * per_finger;
    for (int r = 0; r + 1 < kRingsPerFinger; ++r) {
      for (int a = 0; a < kRingVertices; ++a) {
        const std::size_t i0 = base + r * kRingVertices + a;
        const std::size_t i1 = base + r * kRingVertices + (a + 1) % kRingVertices;
        const std::size_t j0 = i0 + kRingVertices;
        const std::size_t j1 = i1 + kRingVertices;
        t.faces.push_back(detail::face(i0, i1, j1));
        t.faces.push_back(detail::face(i0, j1, j0));
      }
    }
    const std::size_t tip = base + per_finger - 1;
    const std::size_t last = base + (kRingsPerFinger - 1) * kRingVertices;
    for (int a = 0; a < kRingVertices; ++a) {
      t.faces.push_back(detail::face(last + a, last + (a + 1) % kRingVertices, tip));
    }
    for (std::size_t i = 0; i < per_finger; ++i) t.labels.push_back(static_cast<HandPart>(f));
  }
  const std::size_t palm = 5 * per_finger;
  for (int r = 0; r + 1 < kPalmRows; ++r) {
    for (int c = 0; c + 1 < kPalmCols; ++c) {
      const std::size_t a = palm + r * kPalmCols + c;
      t.faces.push_back(detail::face(a, a + 1, a + kPalmCols + 1));
      t.faces.push_back(detail::face(a, a + kPalmCols + 1, a + kPalmCols));
    }
  }
  for (int i = 0; i < kPalmRows * kPalmCols; ++i) t.labels.push_back(HandPart::Palm);
  return t;
}

/// Canonical hand moved by `pose` (local to camera); vertices optional.
inline HandFrame posed_hand(const RigidTransform& pose, double d, double timestamp, bool with_vertices) {
  HandFrame f;
  f.timestamp = timestamp;
  f.confidence = 1.0;
  f.handedness = Handedness::Right;
  const Keypoints local = canonical_keypoints(d);
  for (std::size_t i = 0; i < kNumKeypoints; ++i) f.keypoints[i] = pose.apply(local[i]);
  if (with_vertices) {
    std::vector<Vec3> verts = canonical_vertices(local);
    for (auto& v : verts) v = pose.apply(v);
    f.vertices = std::move(verts);
  }
  return f;
}

inline UnitQuaternion random_rotation(Rng& rng) {
  const double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
  return UnitQuaternion::from_wxyz(w, x, y, z);
}

inline RigidTransform random_rigid(Rng& rng, double translation_scale) {
  RigidTransform t;
  t.rotation = matrix_from_quat(random_rotation(rng));
  t.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * translation_scale;
  return t;
}

/// Random hand track in camera coordinates: a smooth random pose walk with
/// per-keypoint jitter so the plane fits are not exact.
inline HandTrack random_track(Rng& rng, std::size_t frames, double jitter = 0.002) {
  HandTrack track;
  track.source_fps = 30.0;
  RigidTransform pose;
  pose.rotation = matrix_from_quat(random_rotation(rng));
  pose.translation = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.4, 0.8));
  for (std::size_t i = 0; i < frames; ++i) {
    const Vec3 step(rng.normal(), rng.normal(), rng.normal());
    pose.rotation = rotation_about(step.normalized(), 0.03) * pose.rotation;
    pose.translation += 0.005 * Vec3(rng.normal(), rng.normal(), rng.normal());
    HandFrame f = posed_hand(pose, rng.uniform(0.015, 0.12), static_cast<double>(i) / track.source_fps, false);
    for (auto& p : f.keypoints) p += jitter * Vec3(rng.normal(), rng.normal(), rng.normal());
    track.frames.push_back(std::move(f));
  }
  return track;
}

/// Camera at `eye` looking at `target`, base z up; camera x right, y down.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(Vec3::UnitZ()).normalized();
  const Vec3 y = z.cross(x);
  RigidTransform t;
  t.rotation.col(0) = x;
  t.rotation.col(1) = y;
  t.rotation.col(2) = z;
  t.translation = eye;
  return t;
}

inline RigidTransform demo_cam_to_base() { return look_at({0.18, -0.45, 0.35}, {0.18, 0.0, 0.0}); }

inline CameraModel demo_camera() { return {160.0, 160.0, 80.0, 60.0, 160, 120}; }

struct GraspTrack {
  HandTrack track;                    // camera frame
  std::vector<JointVector> joints;    // ground-truth joint path
  std::vector<RigidTransform> tool;   // ground-truth tool poses in the base frame
};

struct GraspSpec {
  std::size_t frames = 90;
  double fps = 30.0;
  double d_open = 0.10;
  double d_closed = 0.02;
  JointVector q_start = (JointVector() << -0.4, -0.1, 0.5, 0.7, -0.2, 0.1).finished();
  JointVector q_end = (JointVector() << 0.35, 0.15, 0.4, 1.0, 0.25, -0.3).finished();
  bool with_vertices = true;
};

/// Scripted grasp: a smoothstep joint path driven through forward kinematics,
/// observed by the camera, with the fingertip distance ramping open to closed.
inline GraspTrack grasp_track(const KinematicChain& chain, const RigidTransform& cam_to_base, const GraspSpec& spec = {}) {
  GraspTrack g;
  g.track.source_fps = spec.fps;
  g.track.camera_id = "demo_cam";
  const RigidTransform base_to_cam = cam_to_base.inverse();
  for (std::size_t i = 0; i < spec.frames; ++i) {
    const double s = spec.frames > 1 ? static_cast<double>(i) / static_cast<double>(spec.frames - 1) : 0.0;
    const double blend = s * s * (3.0 - 2.0 * s);
    const JointVector q = spec.q_start + blend * (spec.q_end - spec.q_start);
    const RigidTransform tool = forward_kinematics(chain, q);
    const double d = spec.d_open + (spec.d_closed - spec.d_open) * s;
    g.joints.push_back(q);
    g.tool.push_back(tool);
    g.track.frames.push_back(posed_hand(base_to_cam * tool, d, static_cast<double>(i) / spec.fps, spec.with_vertices));
  }
  return g;
}

/// Deterministic textured backdrop for synthetic camera frames.
inline Image backdrop(int width, int height, std::uint64_t seed) {
  Image img(width, height);
  Rng rng(seed);
  const int r0 = static_cast<int>(rng.below(128)), g0 = static_cast<int>(rng.below(128)), b0 = static_cast<int>(rng.below(128));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(r0 + (x * 127) / std::max(1, width - 1)),
                     static_cast<std::uint8_t>(g0 + (y * 127) / std::max(1, height - 1)),
                     static_cast<std::uint8_t>(b0 + ((x + y) % 16) * 4)});
    }
  }
  return img;
}

}  // namespace handbridge::synthetic
