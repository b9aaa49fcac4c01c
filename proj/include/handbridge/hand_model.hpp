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

// 21-keypoint / 778-vertex hand conventions, the hand track file format, and
// track cleaning (flicker rejection, resampling).
//
// Hand track file (newline-delimited JSON, one object per line):
//
//   {"type":"meta","format":"handbridge.handtrack","version":1,"fps":30,"camera_id":"top"}
//   {"t":0.0,"hand":"R","conf":0.97,"kp":[x0,y0,z0, ..., x20,y20,z20],"verts":[...]}
//
// The first non-empty line is the metadata record. Every following line is
// one frame: "t" seconds, "hand" "L" or "R", "conf" in [0,1], "kp" exactly 63
// reals in meters (camera frame, KeypointIndex order) and optional "verts"
// exactly 2334 reals (778 vertices). Left hands are mirrored to the right
// hand convention when parsed (x negated) and mirrored back when written.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"

namespace handbridge {

inline constexpr std::size_t kNumKeypoints = 21;
inline constexpr std::size_t kNumVertices = 778;

/// Standard 21-landmark ordering: wrist, then four joints per finger from the
/// base outward.
namespace kp {
inline constexpr std::size_t WRIST = 0;
inline constexpr std::size_t THUMB_CMC = 1;
inline constexpr std::size_t THUMB_MCP = 2;
inline constexpr std::size_t THUMB_IP = 3;
inline constexpr std::size_t THUMB_TIP = 4;
inline constexpr std::size_t INDEX_MCP = 5;
inline constexpr std::size_t INDEX_PIP = 6;
inline constexpr std::size_t INDEX_DIP = 7;
inline constexpr std::size_t INDEX_TIP = 8;
inline constexpr std::size_t MIDDLE_MCP = 9;
inline constexpr std::size_t MIDDLE_PIP = 10;
inline constexpr std::size_t MIDDLE_DIP = 11;
inline constexpr std::size_t MIDDLE_TIP = 12;
inline constexpr std::size_t RING_MCP = 13;
inline constexpr std::size_t RING_PIP = 14;
inline constexpr std::size_t RING_DIP = 15;
inline constexpr std::size_t RING_TIP = 16;
inline constexpr std::size_t PINKY_MCP = 17;
inline constexpr std::size_t PINKY_PIP = 18;
inline constexpr std::size_t PINKY_DIP = 19;
inline constexpr std::size_t PINKY_TIP = 20;
}  // namespace kp

enum class Handedness { Left, Right };

using Keypoints = std::array<Vec3, kNumKeypoints>;

struct HandFrame {
  double timestamp = 0.0;
  Keypoints keypoints{};
  std::optional<std::vector<Vec3>> vertices;
  double confidence = 1.0;
  Handedness handedness = Handedness::Right;

  const Vec3& operator[](std::size_t index) const { return keypoints[index]; }
};

struct HandTrack {
  std::vector<HandFrame> frames;
  double source_fps = 30.0;
  std::string camera_id;
  // Set when the file held a left hand that was mirrored on load.
  bool mirrored = false;
};

/// Empty string when the frame satisfies its invariants.
inline std::string frame_violation(const HandFrame& f) {
  if (!std::isfinite(f.timestamp)) return "timestamp is not finite";
  if (!(f.confidence >= 0.0 && f.confidence <= 1.0)) return "confidence outside [0,1]";
  for (const auto& p : f.keypoints) {
    if (!is_finite(p)) return "non-finite keypoint";
  }
  if (f.vertices) {
    if (f.vertices->size() != kNumVertices) return "vertex count is not 778";
    for (const auto& v : *f.vertices) {
      if (!is_finite(v)) return "non-finite vertex";
    }
  }
  return {};
}

inline void mirror_x(HandFrame& f) {
  for (auto& p : f.keypoints) p.x() = -p.x();
  if (f.vertices) {
    for (auto& v : *f.vertices) v.x() = -v.x();
  }
  f.handedness = f.handedness == Handedness::Left ? Handedness::Right : Handedness::Left;
}

struct ParseDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct ParsedHandTrack {
  HandTrack track;
  std::vector<ParseDiagnostic> rejected;
};

namespace detail {

inline std::vector<Vec3> read_points(const nlohmann::json& arr, std::size_t count,
                                     const std::string& what, std::size_t line) {
  if (!arr.is_array() || arr.size() != 3 * count) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": " + what + " must hold " +
                    std::to_string(3 * count) + " numbers, got " +
                    (arr.is_array() ? std::to_string(arr.size()) : std::string("non-array")));
  }
  std::vector<Vec3> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& v = arr[3 * i + k];
      if (!v.is_number()) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line) + ": " + what + " holds a non-number");
      }
      out[i](static_cast<Eigen::Index>(k)) = v.get<double>();
    }
  }
  return out;
}

inline nlohmann::json write_points(std::span<const Vec3> points, bool negate_x) {
  auto arr = nlohmann::json::array();
  for (const auto& p : points) {
    arr.push_back(negate_x ? -p.x() : p.x());
    arr.push_back(p.y());
    arr.push_back(p.z());
  }
  return arr;
}

}  // namespace detail

/// Parses a hand track from a stream. Structural problems throw ParseError
/// with the line number; frames with out-of-range values are dropped and
/// listed in `rejected`.
inline ParsedHandTrack parse_hand_track(std::istream& in, const std::string& name = "<stream>") {
  ParsedHandTrack result;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  std::optional<Handedness> track_hand;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  name + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object()) {
      throw Error(ErrorCode::ParseError, name + " line " + std::to_string(line_no) + ": not an object");
    }
    try {
      if (!have_meta) {
        if (rec.value("type", "") != "meta") {
          throw Error(ErrorCode::ParseError, "first record must be the metadata record");
        }
        result.track.source_fps = rec.at("fps").get<double>();
        result.track.camera_id = rec.at("camera_id").get<std::string>();
        if (!(result.track.source_fps > 0.0)) {
          throw Error(ErrorCode::ParseError, "fps must be positive");
        }
        have_meta = true;
        continue;
      }
      HandFrame f;
      f.timestamp = rec.at("t").get<double>();
      const std::string hand = rec.at("hand").get<std::string>();
      if (hand != "L" && hand != "R") throw Error(ErrorCode::ParseError, "hand must be \"L\" or \"R\"");
      f.handedness = hand == "L" ? Handedness::Left : Handedness::Right;
      f.confidence = rec.at("conf").get<double>();
      const auto kps = detail::read_points(rec.at("kp"), kNumKeypoints, "frame t=" + std::to_string(f.timestamp) + " kp", line_no);
      std::copy(kps.begin(), kps.end(), f.keypoints.begin());
      if (rec.contains("verts") && !rec["verts"].is_null()) {
        f.vertices = detail::read_points(rec["verts"], kNumVertices, "frame t=" + std::to_string(f.timestamp) + " verts", line_no);
      }
      if (auto why = frame_violation(f); !why.empty()) {
        result.rejected.push_back({line_no, why});
        continue;
      }
      if (!track_hand) track_hand = f.handedness;
      if (f.handedness != *track_hand) {
        result.rejected.push_back({line_no, "handedness differs from the rest of the track"});
        continue;
      }
      if (f.handedness == Handedness::Left) mirror_x(f);
      if (!result.track.frames.empty() && !(f.timestamp > result.track.frames.back().timestamp)) {
        throw Error(ErrorCode::NonMonotonicTime,
                    name + " line " + std::to_string(line_no) + ": timestamp " +
                        std::to_string(f.timestamp) + " does not increase");
      }
      result.track.frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, name + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError) throw;
      const std::string msg = e.what();
      if (msg.find(" line ") != std::string::npos) throw;
      throw Error(ErrorCode::ParseError, name + " line " + std::to_string(line_no) + ": " + msg);
    }
  }
  if (!have_meta) throw Error(ErrorCode::ParseError, name + ": missing metadata record");
  if (result.track.frames.empty()) throw Error(ErrorCode::EmptyTrack, name + ": no valid frames");
  result.track.mirrored = track_hand == Handedness::Left;
  return result;
}

inline ParsedHandTrack parse_hand_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open hand track " + path);
  return parse_hand_track(in, path);
}

/// Canonical serialization; parse(write(track)) restores every number exactly.
inline void write_hand_track(std::ostream& out, const HandTrack& track) {
  nlohmann::json meta = {{"type", "meta"},
                         {"format", "handbridge.handtrack"},
                         {"version", 1},
                         {"fps", track.source_fps},
                         {"camera_id", track.camera_id}};
  out << meta.dump() << '\n';
  for (const auto& f : track.frames) {
    const bool left_on_disk = track.mirrored ? f.handedness == Handedness::Right
                                             : f.handedness == Handedness::Left;
    nlohmann::json rec;
    rec["t"] = f.timestamp;
    rec["hand"] = left_on_disk ? "L" : "R";
    rec["conf"] = f.confidence;
    rec["kp"] = detail::write_points(f.keypoints, track.mirrored);
    if (f.vertices) rec["verts"] = detail::write_points(*f.vertices, track.mirrored);
    out << rec.dump() << '\n';
  }
}

inline void write_hand_track(const std::string& path, const HandTrack& track) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write hand track " + path);
  write_hand_track(out, track);
}

struct FlickerOptions {
  double jump_threshold = 0.05;  // meters
  int window = 5;                // odd, >= 3
};

struct FlickerReport {
  HandTrack track;
  std::vector<double> removed_timestamps;
};

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// One pass: indices whose wrist strays from the window median.
inline std::vector<bool> flag_flicker(const std::vector<HandFrame>& frames, const FlickerOptions& opts) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(frames.size());
  const std::ptrdiff_t half = opts.window / 2;
  std::vector<bool> flagged(frames.size(), false);
  std::vector<double> xs, ys, zs;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    xs.clear();
    ys.clear();
    zs.clear();
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const Vec3& w = frames[static_cast<std::size_t>(j)][kp::WRIST];
      xs.push_back(w.x());
      ys.push_back(w.y());
      zs.push_back(w.z());
    }
    const Vec3 med(median(xs), median(ys), median(zs));
    flagged[static_cast<std::size_t>(i)] =
        (frames[static_cast<std::size_t>(i)][kp::WRIST] - med).norm() > opts.jump_threshold;
  }
  return flagged;
}

}  // namespace detail

/// Drops frames whose wrist deviates from the windowed median wrist position
/// by more than the threshold. Passes repeat until nothing more is flagged, so
/// the result is a fixed point (applying it again removes nothing).
inline FlickerReport reject_flicker(const HandTrack& track, const FlickerOptions& opts = {}) {
  if (opts.window < 3 || opts.window % 2 == 0) {
    throw Error(ErrorCode::ConfigError, "flicker window must be odd and >= 3");
  }
  if (!(opts.jump_threshold > 0.0)) {
    throw Error(ErrorCode::ConfigError, "flicker jump threshold must be positive");
  }
  FlickerReport report;
  report.track = track;
  auto& frames = report.track.frames;
  while (true) {
    const auto flagged = detail::flag_flicker(frames, opts);
    if (std::none_of(flagged.begin(), flagged.end(), [](bool b) { return b; })) break;
    std::vector<HandFrame> kept;
    kept.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (flagged[i]) {
        report.removed_timestamps.push_back(frames[i].timestamp);
      } else {
        kept.push_back(std::move(frames[i]));
      }
    }
    frames = std::move(kept);
    if (frames.empty()) throw Error(ErrorCode::EmptyTrack, "flicker rejection removed every frame");
  }
  std::sort(report.removed_timestamps.begin(), report.removed_timestamps.end());
  return report;
}

/// Snap tolerance for matching target and source timestamps.
inline constexpr double kTimeSnap = 1e-9;

/// Number of uniformly spaced samples covering [first, last] at fps.
inline std::size_t resample_count(double first, double last, double fps) {
  return static_cast<std::size_t>(std::floor((last - first) * fps + kTimeSnap)) + 1;
}

/// Linear per-coordinate interpolation at t_first + i / fps. Target times that
/// coincide with a source time copy that frame verbatim.
inline HandTrack resample_track(const HandTrack& track, double target_fps) {
  if (track.frames.size() < 2) throw Error(ErrorCode::EmptyTrack, "resampling needs at least 2 frames");
  if (!(target_fps > 0.0)) throw Error(ErrorCode::ConfigError, "target fps must be positive");
  const auto& src = track.frames;
  const double t0 = src.front().timestamp;
  const std::size_t count = resample_count(t0, src.back().timestamp, target_fps);

  HandTrack out;
  out.source_fps = target_fps;
  out.camera_id = track.camera_id;
  out.mirrored = track.mirrored;
  out.frames.reserve(count);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = t0 + static_cast<double>(i) / target_fps;
    while (seg + 2 < src.size() && src[seg + 1].timestamp <= t) ++seg;
    const HandFrame& a = src[seg];
    const HandFrame& b = src[seg + 1];
    if (std::abs(t - a.timestamp) <= kTimeSnap || std::abs(t - b.timestamp) <= kTimeSnap) {
      HandFrame f = std::abs(t - a.timestamp) <= kTimeSnap ? a : b;
      f.timestamp = t;
      out.frames.push_back(std::move(f));
      continue;
    }
    const double alpha = std::clamp((t - a.timestamp) / (b.timestamp - a.timestamp), 0.0, 1.0);
    HandFrame f;
    f.timestamp = t;
    f.handedness = a.handedness;
    f.confidence = a.confidence + alpha * (b.confidence - a.confidence);
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
      f.keypoints[k] = a.keypoints[k] + alpha * (b.keypoints[k] - a.keypoints[k]);
    }
    if (a.vertices && b.vertices) {
      std::vector<Vec3> verts(kNumVertices);
      for (std::size_t k = 0; k < kNumVertices; ++k) {
        verts[k] = (*a.vertices)[k] + alpha * ((*b.vertices)[k] - (*a.vertices)[k]);
      }
      f.vertices = std::move(verts);
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace handbridge
