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

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "handbridge/retarget.hpp"
#include "handbridge/rng.hpp"
#include "handbridge/synthetic.hpp"

namespace hb = handbridge;
using hb::Mat3;
using hb::UnitQuaternion;
using hb::Vec3;
namespace syn = hb::synthetic;

namespace {

hb::ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const hb::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return hb::ErrorCode::IoError;
}

hb::HandFrame collinear_frame(double t) {
  hb::HandFrame f = syn::posed_hand({}, 0.05, t, false);
  for (std::size_t k = 0; k < hb::kNumKeypoints; ++k) f.keypoints[k] = Vec3(0.01 * k, 0.0, 0.5);
  return f;
}

// Oracle: the clipped distance ratio written out independently.
double gripper_oracle(double d, double dmin, double dmax) {
  const double g = (d - dmin) / (dmax - dmin);
  return g < 0.0 ? 0.0 : (g > 1.0 ? 1.0 : g);
}

// Oracle: percentile by explicit rank interpolation on a sorted copy.
double percentile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * (v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(rank);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1.0 - (rank - i)) + v[i + 1] * (rank - i);
}

}  // namespace

TEST(Anchor, Midpoint) {
  hb::HandFrame f;
  f.keypoints[hb::kp::THUMB_IP] = {0, 0, 0};
  f.keypoints[hb::kp::INDEX_MCP] = {0.02, 0, 0};
  EXPECT_TRUE(hb::anchor_position(f).isApprox(Vec3(0.01, 0, 0)));
  f.keypoints[hb::kp::THUMB_IP] = f.keypoints[hb::kp::INDEX_MCP] = {0.3, -0.1, 0.7};
  EXPECT_EQ(hb::anchor_position(f), Vec3(0.3, -0.1, 0.7));
}

TEST(Anchor, CommutesWithRigidMaps) {
  hb::Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto g = syn::random_rigid(rng, 0.5);
    const auto f = syn::posed_hand({}, 0.05, 0.0, false);
    const auto moved = syn::posed_hand(g, 0.05, 0.0, false);
    EXPECT_LT((hb::anchor_position(moved) - g.apply(hb::anchor_position(f))).norm(), 1e-12);
  }
}

TEST(Orientation, CanonicalFlatHandIsIdentity) {
  const auto f = syn::posed_hand({}, 0.05, 0.0, false);
  EXPECT_LT(hb::hand_orientation(f).angle_to(UnitQuaternion::identity()), 1e-12);
  EXPECT_LT(hb::anchor_position(f).norm(), 1e-15);
}

TEST(Orientation, RotatedNinetyAboutZ) {
  hb::RigidTransform g;
  g.rotation = hb::rotation_about({0, 0, 1}, std::numbers::pi / 2);
  const auto f = syn::posed_hand(g, 0.05, 0.0, false);
  EXPECT_LT(hb::hand_orientation(f).angle_to(UnitQuaternion::from_axis_angle({0, 0, 1}, std::numbers::pi / 2)), 1e-12);
}

TEST(Orientation, CollinearIsDegenerate) {
  EXPECT_EQ(code_of([] { hb::hand_orientation(collinear_frame(0.0)); }), hb::ErrorCode::DegenerateFit);
}

TEST(Orientation, RecoversAppliedRotation) {
  hb::Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto q = syn::random_rotation(rng);
    hb::RigidTransform g{hb::matrix_from_quat(q), Vec3(rng.normal(), rng.normal(), rng.normal())};
    const auto f = syn::posed_hand(g, rng.uniform(0.01, 0.12), 0.0, false);
    EXPECT_LT(hb::hand_orientation(f).angle_to(q), 1e-6);
  }
}

TEST(Orientation, ScaleCovariant) {
  hb::Rng rng(3);
  const auto tr = syn::random_track(rng, 50);
  for (const auto& f : tr.frames) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : f.keypoints) c += p;
    c /= hb::kNumKeypoints;
    for (double s : {0.5, 2.0, 7.0}) {
      hb::HandFrame g = f;
      for (auto& p : g.keypoints) p = c + s * (p - c);
      EXPECT_LT(hb::hand_orientation(g).angle_to(hb::hand_orientation(f)), 1e-9);
    }
  }
}

TEST(Orientation, PreviousNormalBreaksAmbiguousTies) {
  // Thumb arm parallel to the index direction makes the chirality product vanish.
  hb::HandFrame f = syn::posed_hand({}, 0.05, 0.0, false);
  f.keypoints[hb::kp::INDEX_MCP] = Vec3(0.0, 0.02, 0.0);
  f.keypoints[hb::kp::INDEX_PIP] = Vec3(0.03, 0.03, 0.0);
  f.keypoints[hb::kp::INDEX_DIP] = Vec3(0.05, 0.02, 0.0);
  f.keypoints[hb::kp::INDEX_TIP] = Vec3(0.07, 0.02, 0.0);
  f.keypoints[hb::kp::THUMB_IP] = Vec3(0.1, 0.0225, 0.0);
  const auto up = hb::palm_frame(f, Vec3(0, 0, 1));
  const auto down = hb::palm_frame(f, Vec3(0, 0, -1));
  EXPECT_GT(up.normal.dot(Vec3(0, 0, 1)), 0.0);
  EXPECT_LT(down.normal.dot(Vec3(0, 0, 1)), 0.0);
}

TEST(Gripper, Examples) {
  const hb::GripperCalibration cal{0.02, 0.10};
  EXPECT_EQ(hb::gripper_state(0.02, cal), 0.0);
  EXPECT_EQ(hb::gripper_state(0.10, cal), 1.0);
  EXPECT_NEAR(hb::gripper_state(0.06, cal), 0.5, 1e-15);
  EXPECT_EQ(hb::gripper_state(0.15, cal), 1.0);
  EXPECT_EQ(hb::gripper_state(-1.0, cal), 0.0);
  const auto f = syn::posed_hand({}, 0.06, 0.0, false);
  EXPECT_NEAR(hb::gripper_state(f, cal), 0.5, 1e-12);
}

TEST(Gripper, RangeExactnessMonotonicity) {
  hb::Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double dmin = rng.uniform(0.0, 0.1);
    const double dmax = dmin + rng.uniform(1e-6, 0.2);
    const double d = rng.uniform(-0.05, 0.35);
    const double d2 = d + rng.uniform(0.0, 0.05);
    const hb::GripperCalibration cal{dmin, dmax};
    const double g = hb::gripper_state(d, cal);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
    EXPECT_EQ(g, gripper_oracle(d, dmin, dmax));
    EXPECT_LE(g, hb::gripper_state(d2, cal));
  }
}

TEST(CalibrateGripper, UniformDistancesGivePercentiles) {
  hb::HandTrack t;
  std::vector<double> ds;
  for (int i = 0; i <= 1000; ++i) {
    const double d = 0.02 + 0.08 * i / 1000.0;
    ds.push_back(d);
    t.frames.push_back(syn::posed_hand({}, d, i / 30.0, false));
  }
  const auto cal = hb::calibrate_gripper(t);
  std::vector<double> measured;
  for (const auto& f : t.frames) measured.push_back(hb::fingertip_distance(f));
  EXPECT_NEAR(cal.d_min, percentile_oracle(measured, 5), 1e-15);
  EXPECT_NEAR(cal.d_max, percentile_oracle(measured, 95), 1e-15);
  EXPECT_NEAR(cal.d_min, 0.024, 1e-12);
  EXPECT_NEAR(cal.d_max, 0.096, 1e-12);
}

TEST(CalibrateGripper, DegenerateCases) {
  hb::HandTrack constant;
  for (int i = 0; i < 10; ++i) constant.frames.push_back(syn::posed_hand({}, 0.05, i / 30.0, false));
  EXPECT_EQ(code_of([&] { hb::calibrate_gripper(constant); }), hb::ErrorCode::DegenerateCalibration);
  hb::HandTrack single;
  single.frames.push_back(syn::posed_hand({}, 0.05, 0.0, false));
  EXPECT_EQ(code_of([&] { hb::calibrate_gripper(single, 0, 100); }), hb::ErrorCode::DegenerateCalibration);
  EXPECT_EQ(code_of([&] { hb::calibrate_gripper(single, 60, 40); }), hb::ErrorCode::ConfigError);
}

TEST(RetargetTrack, IdentitySingleFrame) {
  hb::HandTrack t;
  t.frames.push_back(syn::posed_hand({}, 0.05, 0.25, false));
  const auto traj = hb::retarget_track(t, {}, hb::RigidTransform::identity());
  ASSERT_EQ(traj.poses.size(), 1u);
  EXPECT_EQ(traj.frame, hb::FrameTag::RobotBase);
  EXPECT_EQ(traj.embodiment, hb::Embodiment::HumanHand);
  EXPECT_LT(traj.poses[0].position.norm(), 1e-15);
  EXPECT_LT(traj.poses[0].orientation.angle_to(UnitQuaternion::identity()), 1e-12);
  EXPECT_EQ(traj.poses[0].timestamp, 0.25);
}

TEST(RetargetTrack, PureTranslationShiftsPositions) {
  hb::Rng rng(5);
  const auto t = syn::random_track(rng, 30);
  hb::RigidTransform shift;
  shift.translation = {0.1, -0.2, 0.3};
  const auto a = hb::retarget_track(t, {}, hb::RigidTransform::identity());
  const auto b = hb::retarget_track(t, {}, shift);
  ASSERT_EQ(a.poses.size(), t.frames.size());
  for (std::size_t i = 0; i < a.poses.size(); ++i) {
    EXPECT_LT((b.poses[i].position - a.poses[i].position - shift.translation).norm(), 1e-15);
    EXPECT_EQ(b.poses[i].orientation, a.poses[i].orientation);
    EXPECT_EQ(b.poses[i].timestamp, t.frames[i].timestamp);
  }
}

TEST(RetargetTrack, GraspRampClosesMonotonically) {
  hb::HandTrack t;
  const hb::GripperCalibration cal{0.02, 0.10};
  for (int i = 0; i < 60; ++i) t.frames.push_back(syn::posed_hand({}, 0.10 - 0.08 * i / 59.0, i / 30.0, false));
  const auto traj = hb::retarget_track(t, cal, {});
  EXPECT_NEAR(traj.poses.front().gripper, 1.0, 1e-12);
  EXPECT_NEAR(traj.poses.back().gripper, 0.0, 1e-12);
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    EXPECT_EQ(traj.poses[i].gripper, gripper_oracle(hb::fingertip_distance(t.frames[i]), 0.02, 0.10));
    if (i > 0) {
      EXPECT_LE(traj.poses[i].gripper, traj.poses[i - 1].gripper + 1e-12);
    }
  }
}

TEST(RetargetTrack, RigidEquivariance) {
  hb::Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto track = syn::random_track(rng, 20);
    const auto g = syn::random_rigid(rng, 0.5);
    const auto cam = syn::random_rigid(rng, 1.0);
    hb::HandTrack moved = track;
    for (auto& f : moved.frames) {
      for (auto& p : f.keypoints) p = g.apply(p);
    }
    const auto a = hb::retarget_track(moved, {}, cam);
    const auto b = hb::retarget_track(track, {}, cam * g);
    ASSERT_EQ(a.poses.size(), b.poses.size());
    for (std::size_t i = 0; i < a.poses.size(); ++i) {
      EXPECT_LT((a.poses[i].position - b.poses[i].position).norm(), 1e-7);
      EXPECT_LT(a.poses[i].orientation.angle_to(b.poses[i].orientation), 1e-7);
      EXPECT_NEAR(a.poses[i].gripper, b.poses[i].gripper, 1e-12);
    }
  }
}

TEST(RetargetTrack, ShortGapInterpolatedLongGapDropped) {
  hb::HandTrack t;
  for (int i = 0; i < 40; ++i) {
    hb::RigidTransform g;
    g.rotation = hb::rotation_about({0, 0, 1}, 0.01 * i);
    t.frames.push_back(syn::posed_hand(g, 0.05, i / 30.0, false));
  }
  for (int i : {10, 11}) t.frames[i] = collinear_frame(i / 30.0);
  const auto r = hb::retarget_track_report(t, {}, {}, {5, 0.5});
  EXPECT_EQ(r.filled, 2u);
  EXPECT_TRUE(r.dropped_timestamps.empty());
  ASSERT_EQ(r.trajectory.poses.size(), 40u);
  EXPECT_LT(r.trajectory.poses[10].orientation.angle_to(UnitQuaternion::from_axis_angle({0, 0, 1}, 0.10)), 1e-9);

  for (int i = 20; i < 30; ++i) t.frames[i] = collinear_frame(i / 30.0);
  const auto r2 = hb::retarget_track_report(t, {}, {}, {5, 0.5});
  EXPECT_EQ(r2.dropped_timestamps.size(), 10u);
  EXPECT_EQ(r2.trajectory.poses.size(), 30u);
  EXPECT_EQ(code_of([&] { hb::retarget_track_report(t, {}, {}, {5, 0.8}); }), hb::ErrorCode::TooManyGaps);
}

TEST(RetargetTrack, EdgeGapHoldsNearestOrientation) {
  hb::HandTrack t;
  hb::RigidTransform g;
  g.rotation = hb::rotation_about({1, 0, 0}, 0.4);
  for (int i = 0; i < 10; ++i) t.frames.push_back(syn::posed_hand(g, 0.05, i / 30.0, false));
  t.frames[0] = collinear_frame(0.0);
  const auto traj = hb::retarget_track(t, {}, {});
  ASSERT_EQ(traj.poses.size(), 10u);
  EXPECT_EQ(traj.poses[0].orientation, traj.poses[1].orientation);
}

TEST(RetargetTrack, MirroredLeftHandKeepsRealPositions) {
  hb::Rng rng(7);
  hb::HandTrack right = syn::random_track(rng, 15, 0.0);
  hb::HandTrack left = right;
  for (auto& f : left.frames) hb::mirror_x(f);  // as parsed: mirrored into right-hand convention
  left.mirrored = true;
  // The real left hand is the reflection of the mirrored keypoints.
  const auto traj = hb::retarget_track(left, {}, {});
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    Vec3 real = hb::anchor_position(left.frames[i]);
    real.x() = -real.x();
    EXPECT_LT((traj.poses[i].position - real).norm(), 1e-15);
    const Mat3 r = hb::matrix_from_quat(traj.poses[i].orientation);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    // Finger direction of the real hand maps to X.
    Vec3 finger = left.frames[i][hb::kp::INDEX_PIP] - left.frames[i][hb::kp::INDEX_MCP];
    finger.x() = -finger.x();
    EXPECT_GT(r.col(0).dot(finger.normalized()), 0.999);
  }
}

TEST(RetargetTrack, EmptyAndInvalidInputs) {
  EXPECT_EQ(code_of([] { hb::retarget_track({}, {}, {}); }), hb::ErrorCode::EmptyTrack);
  hb::HandTrack t;
  t.frames.push_back(syn::posed_hand({}, 0.05, 0.0, false));
  EXPECT_EQ(code_of([&] { hb::retarget_track(t, {0.1, 0.05}, {}); }), hb::ErrorCode::DegenerateCalibration);
}

TEST(Smooth, WindowOneIsIdentityAndConstantUnchanged) {
  hb::Rng rng(8);
  const auto traj = hb::retarget_track(syn::random_track(rng, 30), {}, {});
  const auto same = hb::smooth_trajectory(traj, 1, 1);
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    EXPECT_EQ(same.poses[i].position, traj.poses[i].position);
    EXPECT_EQ(same.poses[i].orientation, traj.poses[i].orientation);
    EXPECT_EQ(same.poses[i].gripper, traj.poses[i].gripper);
  }
  hb::StateTrajectory constant;
  for (int i = 0; i < 20; ++i) constant.poses.push_back({Vec3(0.1, 0.2, 0.3), UnitQuaternion::from_axis_angle({1, 1, 0}, 0.5), 0.4, i / 30.0});
  const auto smoothed = hb::smooth_trajectory(constant, 5, 5);
  for (const auto& p : smoothed.poses) {
    EXPECT_LT((p.position - Vec3(0.1, 0.2, 0.3)).norm(), 1e-15);
    EXPECT_LT(p.orientation.angle_to(constant.poses[0].orientation), 1e-12);
    EXPECT_NEAR(p.gripper, 0.4, 1e-15);
  }
  EXPECT_EQ(code_of([&] { hb::smooth_trajectory(constant, 4, 1); }), hb::ErrorCode::ConfigError);
}

TEST(Smooth, WhiteNoiseJitterReduced) {
  hb::Rng rng(9);
  hb::StateTrajectory traj;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    traj.poses.push_back({Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.005, UnitQuaternion::identity(), 0.5, i / 30.0});
  }
  auto sigma = [&](const hb::StateTrajectory& t) {
    double s = 0.0;
    for (int i = 2; i < n - 2; ++i) s += t.poses[i].position.squaredNorm();
    return std::sqrt(s / (3.0 * (n - 4)));
  };
  const auto out = hb::smooth_trajectory(traj, 5, 1);
  EXPECT_GE(sigma(traj) / sigma(out), 2.0);
}
