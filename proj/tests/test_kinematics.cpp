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

#include <gtest/gtest.h>

#include "handbridge/kinematics.hpp"
#include "handbridge/rng.hpp"

namespace hb = handbridge;
using hb::Mat3;
using hb::Vec3;

namespace {

// Oracle: Rodrigues formula expanded by hand into a 4x4 homogeneous matrix.
Eigen::Matrix4d homogeneous_rotation(const Vec3& a, double t) {
  const double c = std::cos(t), s = std::sin(t), v = 1.0 - c;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = a.x() * a.x() * v + c;
  m(0, 1) = a.x() * a.y() * v - a.z() * s;
  m(0, 2) = a.x() * a.z() * v + a.y() * s;
  m(1, 0) = a.y() * a.x() * v + a.z() * s;
  m(1, 1) = a.y() * a.y() * v + c;
  m(1, 2) = a.y() * a.z() * v - a.x() * s;
  m(2, 0) = a.z() * a.x() * v - a.y() * s;
  m(2, 1) = a.z() * a.y() * v + a.x() * s;
  m(2, 2) = a.z() * a.z() * v + c;
  return m;
}

Eigen::Matrix4d homogeneous(const hb::RigidTransform& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = t.rotation;
  m.topRightCorner<3, 1>() = t.translation;
  return m;
}

Eigen::Matrix4d fk_oracle(const hb::KinematicChain& chain, const hb::JointVector& q) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int i = 0; i < 6; ++i) {
    m = m * homogeneous(chain.joints[static_cast<std::size_t>(i)].origin) *
        homogeneous_rotation(chain.joints[static_cast<std::size_t>(i)].axis, q(i));
  }
  return m * homogeneous(chain.tool);
}

hb::JointVector random_q(hb::Rng& rng, const hb::KinematicChain& chain) {
  hb::JointVector q;
  for (int k = 0; k < 6; ++k) q(k) = rng.uniform(chain.lower()(k), chain.upper()(k));
  return q;
}

// Finite-difference twist of FK around q along joint k.
Eigen::Matrix<double, 6, 1> fd_column(const hb::KinematicChain& chain, const hb::JointVector& q, int k, double h) {
  hb::JointVector a = q, b = q;
  a(k) += h;
  b(k) -= h;
  const auto fa = hb::forward_kinematics(chain, a);
  const auto fb = hb::forward_kinematics(chain, b);
  Eigen::Matrix<double, 6, 1> col;
  col.head<3>() = (fa.translation - fb.translation) / (2.0 * h);
  col.tail<3>() = hb::rotation_vector(fa.rotation * fb.rotation.transpose()) / (2.0 * h);
  return col;
}

// Single revolute joint about z at the base, unit link along x.
hb::KinematicChain one_joint_chain() {
  hb::KinematicChain c;
  for (auto& j : c.joints) {
    j.axis = Vec3::UnitZ();
    j.lower = -3.0;
    j.upper = 3.0;
  }
  c.tool.translation = Vec3(1, 0, 0);
  return c;
}

// Planar 2R: joints 1 and 2 about z with links l1 and l2 along x.
hb::KinematicChain planar_2r(double l1, double l2) {
  hb::KinematicChain c = one_joint_chain();
  c.joints[1].origin.translation = Vec3(l1, 0, 0);
  c.tool.translation = Vec3(l2, 0, 0);
  return c;
}

bool reproduces(const hb::KinematicChain& chain, const hb::IkResult& r, const Vec3& p, const hb::UnitQuaternion& q,
                const hb::IkOptions& opts) {
  const auto fk = hb::forward_kinematics(chain, r.joints);
  return (fk.translation - p).norm() <= opts.pos_tol &&
         hb::quat_from_matrix(fk.rotation).angle_to(q) <= opts.rot_tol + 1e-12;
}

}  // namespace

TEST(Chain, DefaultParsesAndReachIsAboutFortyCentimetres) {
  const auto chain = hb::default_chain();
  EXPECT_NE(chain.name.find("approximate"), std::string::npos);
  // Stretched length from the shoulder lift axis to the tool point.
  double from_shoulder = chain.tool.translation.norm();
  for (std::size_t i = 2; i < hb::kNumJoints; ++i) from_shoulder += chain.joints[i].origin.translation.norm();
  EXPECT_NEAR(from_shoulder, 0.40, 0.005);
  EXPECT_GT(chain.reach_bound(), 0.40);
}

TEST(Chain, RejectsMalformedChains) {
  auto j = nlohmann::json::parse(hb::kDefaultChainJson);
  j["joints"].erase(0);
  EXPECT_THROW(hb::parse_chain(j), hb::Error);
  j = nlohmann::json::parse(hb::kDefaultChainJson);
  j["joints"][2]["limits"] = {1.0, -1.0};
  EXPECT_THROW(hb::parse_chain(j), hb::Error);
  j = nlohmann::json::parse(hb::kDefaultChainJson);
  j["joints"][2]["axis"] = {0, 2, 0};
  EXPECT_THROW(hb::parse_chain(j), hb::Error);
}

TEST(ForwardKinematics, ZeroConfigurationIsProductOfOffsets) {
  const auto chain = hb::default_chain();
  hb::RigidTransform expected;
  for (const auto& j : chain.joints) expected = expected * j.origin;
  expected = expected * chain.tool;
  const auto fk = hb::forward_kinematics(chain, hb::JointVector::Zero());
  EXPECT_LT((fk.translation - expected.translation).norm(), 1e-15);
  EXPECT_LT((fk.rotation - expected.rotation).norm(), 1e-15);
}

TEST(ForwardKinematics, SingleJointQuarterTurn) {
  hb::JointVector q = hb::JointVector::Zero();
  q(0) = std::numbers::pi / 2;
  const auto fk = hb::forward_kinematics(one_joint_chain(), q);
  EXPECT_LT((fk.translation - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(ForwardKinematics, MatchesHomogeneousMatrixChain) {
  hb::Rng rng(21);
  const auto chain = hb::default_chain();
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_q(rng, chain);
    const Eigen::Matrix4d expected = fk_oracle(chain, q);
    EXPECT_LT((homogeneous(hb::forward_kinematics(chain, q)) - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Jacobian, MatchesFiniteDifferences) {
  hb::Rng rng(22);
  const auto chain = hb::default_chain();
  for (int i = 0; i < 100; ++i) {
    const auto q = random_q(rng, chain);
    const auto jac = hb::jacobian(chain, q);
    for (int k = 0; k < 6; ++k) {
      EXPECT_LT((jac.col(k) - fd_column(chain, q, k, 1e-6)).cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(Jacobian, PlanarTwoLinkClosedForm) {
  const double l1 = 0.3, l2 = 0.2;
  hb::Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    hb::JointVector q = hb::JointVector::Zero();
    q(0) = rng.uniform(-2.0, 2.0);
    q(1) = rng.uniform(-2.0, 2.0);
    const auto jac = hb::jacobian(planar_2r(l1, l2), q);
    const double s1 = std::sin(q(0)), c1 = std::cos(q(0));
    const double s12 = std::sin(q(0) + q(1)), c12 = std::cos(q(0) + q(1));
    EXPECT_NEAR(jac(0, 0), -l1 * s1 - l2 * s12, 1e-14);
    EXPECT_NEAR(jac(1, 0), l1 * c1 + l2 * c12, 1e-14);
    EXPECT_NEAR(jac(0, 1), -l2 * s12, 1e-14);
    EXPECT_NEAR(jac(1, 1), l2 * c12, 1e-14);
    EXPECT_NEAR(jac(5, 0), 1.0, 1e-15);
    EXPECT_NEAR(jac(5, 1), 1.0, 1e-15);
  }
  const auto zero = hb::jacobian(planar_2r(l1, l2), hb::JointVector::Zero());
  EXPECT_NEAR(zero(1, 0), l1 + l2, 1e-15);
  EXPECT_NEAR(zero(1, 1), l2, 1e-15);
}

TEST(Jacobian, AxisThroughEndPointHasZeroLinearPart) {
  // Wrist roll turns about x and the tool sits on that axis.
  hb::Rng rng(24);
  const auto chain = hb::default_chain();
  for (int i = 0; i < 20; ++i) {
    const auto jac = hb::jacobian(chain, random_q(rng, chain));
    EXPECT_LT((jac.block<3, 1>(0, 5)).norm(), 1e-15);
  }
}

TEST(SolveIk, FixedPointConvergesImmediately) {
  hb::Rng rng(25);
  const auto chain = hb::default_chain();
  for (int i = 0; i < 100; ++i) {
    const auto q = random_q(rng, chain);
    const auto fk = hb::forward_kinematics(chain, q);
    const auto r = hb::solve_ik(chain, fk.translation, hb::quat_from_matrix(fk.rotation), q);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 1);
    EXPECT_LT(r.position_error, 1e-12);
    EXPECT_LT(r.orientation_error, 1e-7);
  }
}

TEST(SolveIk, OutsideReachDoesNotConverge) {
  const auto chain = hb::default_chain();
  hb::IkOptions opts;
  opts.restarts = 4;
  const Vec3 far = Vec3(1, 1, 1).normalized() * (chain.reach_bound() + 0.1);
  const auto r = hb::solve_ik(chain, far, hb::UnitQuaternion::identity(), chain.mid_range(), opts);
  EXPECT_FALSE(r.converged);
  EXPECT_TRUE(chain.within_limits(r.joints));
}

TEST(SolveIk, RandomReachableTargets) {
  hb::Rng rng(26);
  const auto chain = hb::default_chain();
  const hb::IkOptions opts;
  int converged = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto fk = hb::forward_kinematics(chain, random_q(rng, chain));
    const auto target_q = hb::quat_from_matrix(fk.rotation);
    const auto r = hb::solve_ik(chain, fk.translation, target_q, chain.mid_range(), opts);
    EXPECT_TRUE(chain.within_limits(r.joints));
    if (r.converged) {
      ++converged;
      EXPECT_TRUE(reproduces(chain, r, fk.translation, target_q, opts));
      EXPECT_LE(r.position_error, opts.pos_tol);
      EXPECT_LE(r.orientation_error, opts.rot_tol);
    }
  }
  EXPECT_GE(converged, 950) << converged << " of " << n;
}

TEST(SolveIk, ReturnedJointsAlwaysWithinLimits) {
  hb::Rng rng(27);
  const auto chain = hb::default_chain();
  hb::IkOptions opts;
  opts.restarts = 2;
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.3, 0.6));
    const auto r = hb::solve_ik(chain, p, hb::UnitQuaternion::from_axis_angle({0, 1, 0}, rng.uniform(-3, 3)),
                                random_q(rng, chain), opts);
    EXPECT_TRUE(chain.within_limits(r.joints));
  }
}

TEST(ValidateTrajectory, SmoothJointPathIsFullyReachable) {
  const auto chain = hb::default_chain();
  hb::JointVector a, b;
  a << -0.5, -0.2, 0.4, 0.6, -0.3, 0.2;
  b << 0.4, 0.2, 0.5, 1.0, 0.3, -0.4;
  hb::StateTrajectory traj;
  traj.frame = hb::FrameTag::RobotBase;
  std::vector<hb::JointVector> truth;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    const hb::JointVector q = a + (3 * s * s - 2 * s * s * s) * (b - a);
    truth.push_back(q);
    const auto fk = hb::forward_kinematics(chain, q);
    traj.poses.push_back({fk.translation, hb::quat_from_matrix(fk.rotation), 0.5, i / 30.0});
  }
  for (int i = 1; i < n; ++i) {
    ASSERT_LT((traj.poses[i].position - traj.poses[i - 1].position).norm(), 0.005);
    ASSERT_LT(traj.poses[i].orientation.angle_to(traj.poses[i - 1].orientation), 0.05);
  }
  const auto report = hb::validate_trajectory(chain, traj, {}, truth.front());
  EXPECT_EQ(report.reachable_fraction, 1.0);
  EXPECT_LT(report.max_joint_jump, 0.2);
  for (int i = 0; i < n; ++i) {
    EXPECT_TRUE(reproduces(chain, report.results[i], traj.poses[i].position, traj.poses[i].orientation, {}));
  }
}

TEST(ValidateTrajectory, WarmStartFromMidRangeStaysContinuous) {
  const auto chain = hb::default_chain();
  hb::StateTrajectory traj;
  traj.frame = hb::FrameTag::RobotBase;
  // Circle in front of the robot with a slowly turning tool.
  for (int i = 0; i < 300; ++i) {
    const double t = i / 300.0 * 2.0 * std::numbers::pi;
    const Vec3 p(0.25 + 0.05 * std::cos(t), 0.05 * std::sin(t), 0.15);
    const auto q = hb::UnitQuaternion::from_axis_angle({0, 1, 0}, 0.6 + 0.2 * std::sin(t));
    traj.poses.push_back({p, q, 0.0, i / 30.0});
  }
  const auto report = hb::validate_trajectory(chain, traj);
  EXPECT_EQ(report.reachable_fraction, 1.0);
  EXPECT_LT(report.max_joint_jump, 0.2);
}

TEST(ValidateTrajectory, OneMetreAwayIsUnreachable) {
  const auto chain = hb::default_chain();
  hb::StateTrajectory traj;
  traj.frame = hb::FrameTag::RobotBase;
  for (int i = 0; i < 10; ++i) {
    const double a = 0.3 * i;
    traj.poses.push_back({Vec3(std::cos(a), std::sin(a), 0.0), hb::UnitQuaternion::identity(), 0.0, i / 30.0});
  }
  hb::IkOptions opts;
  opts.restarts = 4;
  const auto report = hb::validate_trajectory(chain, traj, opts);
  EXPECT_EQ(report.reachable_fraction, 0.0);
  EXPECT_EQ(report.results.size(), 10u);
}

TEST(ValidateTrajectory, EmptyTrajectoryIsNaN) {
  const auto report = hb::validate_trajectory(hb::default_chain(), {});
  EXPECT_TRUE(std::isnan(report.reachable_fraction));
  EXPECT_TRUE(report.results.empty());
}

TEST(ValidateTrajectory, CameraFrameRejected) {
  hb::StateTrajectory traj;
  traj.frame = hb::FrameTag::RobotBase;
  traj.frame = hb::FrameTag::Camera;
  traj.poses.push_back({});
  EXPECT_THROW(hb::validate_trajectory(hb::default_chain(), traj), hb::Error);
}
