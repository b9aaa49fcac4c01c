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

// Hand-eye transform and pinhole intrinsics.
//
// Hand-eye file (JSON):
//   {"format":"handbridge.handeye","version":1,"camera_id":"top",
//    "T_cam_to_base":[r00,r01,r02,tx, r10,r11,r12,ty, r20,r21,r22,tz, 0,0,0,1],
//    "rms_error":0.0015}          // optional, meters
//
// Intrinsics file (JSON):
//   {"format":"handbridge.intrinsics","version":1,
//    "fx":600,"fy":600,"cx":320,"cy":240,"width":640,"height":480}
//
// No lens distortion is modeled.

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/io.hpp"

namespace handbridge {

struct CameraModel {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  }
};

struct HandEyeCalibration {
  RigidTransform cam_to_base;
  std::string camera_id;
  std::optional<double> rms_error;
};

inline constexpr double kKeepRotationTolerance = 1e-12;
inline constexpr double kRepairRotationTolerance = 1e-6;

/// Accepts a 4x4 homogeneous matrix as a rigid transform. Rotation blocks that
/// are orthonormal to 1e-12 are kept bit-for-bit; blocks within 1e-6 are
/// projected onto SO(3) with the polar decomposition; anything else throws
/// InvalidMatrix.
inline RigidTransform rigid_from_matrix(const Eigen::Matrix4d& m) {
  if (!m.allFinite()) throw Error(ErrorCode::InvalidMatrix, "matrix has non-finite entries");
  const Eigen::RowVector4d bottom = m.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorCode::InvalidMatrix, "bottom row must be (0, 0, 0, 1)");
  }
  Mat3 r = m.topLeftCorner<3, 3>();
  if (r.determinant() <= 0.0) throw Error(ErrorCode::InvalidMatrix, "rotation block has non-positive determinant");
  const double err = orthonormality_error(r);
  if (err > kRepairRotationTolerance) {
    throw Error(ErrorCode::InvalidMatrix, "rotation block is not orthonormal (error " + std::to_string(err) + ")");
  }
  if (err > kKeepRotationTolerance) {
    const Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
  }
  return {r, m.topRightCorner<3, 1>()};
}

inline HandEyeCalibration parse_calibration(const nlohmann::json& j, const std::string& name = "<json>") {
  try {
    const auto& arr = j.at("T_cam_to_base");
    if (!arr.is_array() || arr.size() != 16) {
      throw Error(ErrorCode::ParseError, name + ": T_cam_to_base must hold 16 numbers");
    }
    Eigen::Matrix4d m;
    for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = arr[static_cast<std::size_t>(i)].get<double>();
    HandEyeCalibration cal;
    cal.cam_to_base = rigid_from_matrix(m);
    cal.camera_id = j.at("camera_id").get<std::string>();
    if (j.contains("rms_error") && !j["rms_error"].is_null()) cal.rms_error = j["rms_error"].get<double>();
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
}

inline nlohmann::json to_json(const HandEyeCalibration& cal) {
  const Eigen::Matrix4d m = cal.cam_to_base.matrix();
  auto arr = nlohmann::json::array();
  for (int i = 0; i < 16; ++i) arr.push_back(m(i / 4, i % 4));
  nlohmann::json j = {{"format", "handbridge.handeye"}, {"version", 1}, {"camera_id", cal.camera_id}, {"T_cam_to_base", arr}};
  if (cal.rms_error) j["rms_error"] = *cal.rms_error;
  return j;
}

inline HandEyeCalibration load_calibration(const std::string& path) {
  return parse_calibration(detail::read_json_file(path), path);
}

inline void save_calibration(const std::string& path, const HandEyeCalibration& cal) {
  detail::write_json_file(path, to_json(cal));
}

inline CameraModel parse_intrinsics(const nlohmann::json& j, const std::string& name = "<json>") {
  CameraModel cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
  if (!cam.valid()) throw Error(ErrorCode::ParseError, name + ": intrinsics out of range");
  return cam;
}

inline nlohmann::json to_json(const CameraModel& cam) {
  return {{"format", "handbridge.intrinsics"}, {"version", 1}, {"fx", cam.fx}, {"fy", cam.fy},
          {"cx", cam.cx}, {"cy", cam.cy}, {"width", cam.width}, {"height", cam.height}};
}

inline CameraModel load_intrinsics(const std::string& path) {
  return parse_intrinsics(detail::read_json_file(path), path);
}

inline void save_intrinsics(const std::string& path, const CameraModel& cam) {
  detail::write_json_file(path, to_json(cam));
}

inline constexpr double kMinDepth = 1e-6;

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

inline PixelCoord project_point(const CameraModel& cam, const Vec3& p) {
  if (!(p.z() > kMinDepth)) throw Error(ErrorCode::BehindCamera, "point is not in front of the camera");
  return {cam.fx * (p.x() / p.z()) + cam.cx, cam.fy * (p.y() / p.z()) + cam.cy};
}

}  // namespace handbridge
