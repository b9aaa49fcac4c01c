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

// Visual augmentation: rasterize the reconstructed hand mesh over the source
// frame and paint it with one random flat color.
//
// Rasterization rules:
//  * vertices are projected with the pinhole model and snapped to a 1/256
//    pixel fixed-point grid; coverage tests are exact integer arithmetic;
//  * a pixel is covered when its center lies strictly inside the projected
//    triangle, or on a top or left edge;
//  * depth is resolved per pixel by the largest perspective-correct 1/z; equal
//    depths keep the face that comes first in the topology;
//  * faces with any vertex at z <= 1e-4 m are dropped (no near-plane clipping),
//    as are faces whose projection leaves a +-2^20 pixel guard band.
//
// Topology file (JSON):
//   {"format":"handbridge.topology","version":1,"num_vertices":778,
//    "faces":[[i,j,k],...],
//    "part_labels":[0..5 per vertex]}      // optional
// Part label codes: 0 thumb, 1 index, 2 middle, 3 ring, 4 pinky, 5 palm.
// Without labels, parts are assigned from the nearest hand keypoint of the
// first frame that has a mesh (approximate).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handbridge/calibration.hpp"
#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/hand_model.hpp"
#include "handbridge/image.hpp"
#include "handbridge/io.hpp"
#include "handbridge/rng.hpp"

namespace handbridge {

enum class HandPart : std::uint8_t { Thumb = 0, Index = 1, Middle = 2, Ring = 3, Pinky = 4, Palm = 5 };

/// Bit set over HandPart.
using PartMask = std::uint8_t;

inline constexpr PartMask part_bit(HandPart p) { return static_cast<PartMask>(1U << static_cast<unsigned>(p)); }
inline constexpr PartMask kAllParts = 0x3F;
inline constexpr PartMask kThumbIndex = part_bit(HandPart::Thumb) | part_bit(HandPart::Index);

using Face = std::array<std::uint32_t, 3>;

struct MeshTopology {
  std::size_t num_vertices = kNumVertices;
  std::vector<Face> faces;
  std::vector<HandPart> labels;  // empty until assigned
  bool labels_approximate = false;
};

inline HandPart keypoint_part(std::size_t k) {
  if (k == kp::WRIST || k == kp::THUMB_CMC || k == kp::INDEX_MCP || k == kp::MIDDLE_MCP ||
      k == kp::RING_MCP || k == kp::PINKY_MCP) {
    return HandPart::Palm;
  }
  if (k <= kp::THUMB_TIP) return HandPart::Thumb;
  if (k <= kp::INDEX_TIP) return HandPart::Index;
  if (k <= kp::MIDDLE_TIP) return HandPart::Middle;
  if (k <= kp::RING_TIP) return HandPart::Ring;
  return HandPart::Pinky;
}

/// Fallback part labels: each vertex takes the part of its nearest keypoint.
inline std::vector<HandPart> label_by_nearest_keypoint(std::span<const Vec3> vertices, const Keypoints& keypoints) {
  std::vector<HandPart> labels;
  labels.reserve(vertices.size());
  for (const auto& v : vertices) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
      const double d = (v - keypoints[k]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    labels.push_back(keypoint_part(best));
  }
  return labels;
}

inline void validate_topology(const MeshTopology& topo) {
  for (const auto& f : topo.faces) {
    for (auto idx : f) {
      if (idx >= topo.num_vertices) throw Error(ErrorCode::ParseError, "face index out of range");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) throw Error(ErrorCode::ParseError, "face repeats a vertex");
  }
  if (!topo.labels.empty() && topo.labels.size() != topo.num_vertices) {
    throw Error(ErrorCode::ParseError, "part label count does not match vertex count");
  }
}

inline MeshTopology parse_topology(const nlohmann::json& j, const std::string& name = "<json>") {
  MeshTopology topo;
  try {
    topo.num_vertices = j.value("num_vertices", kNumVertices);
    for (const auto& f : j.at("faces")) {
      if (!f.is_array() || f.size() != 3) throw Error(ErrorCode::ParseError, name + ": faces must be index triples");
      topo.faces.push_back({f[0].get<std::uint32_t>(), f[1].get<std::uint32_t>(), f[2].get<std::uint32_t>()});
    }
    if (j.contains("part_labels") && !j["part_labels"].is_null()) {
      for (const auto& l : j["part_labels"]) {
        const int code = l.get<int>();
        if (code < 0 || code > 5) throw Error(ErrorCode::ParseError, name + ": part label out of range");
        topo.labels.push_back(static_cast<HandPart>(code));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
  try {
    validate_topology(topo);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, name + ": " + e.what());
  }
  return topo;
}

inline nlohmann::json to_json(const MeshTopology& topo) {
  nlohmann::json j = {{"format", "handbridge.topology"}, {"version", 1}, {"num_vertices", topo.num_vertices}};
  auto faces = nlohmann::json::array();
  for (const auto& f : topo.faces) faces.push_back({f[0], f[1], f[2]});
  j["faces"] = std::move(faces);
  if (!topo.labels.empty() && !topo.labels_approximate) {
    auto labels = nlohmann::json::array();
    for (auto l : topo.labels) labels.push_back(static_cast<int>(l));
    j["part_labels"] = std::move(labels);
  }
  return j;
}

inline MeshTopology load_topology(const fs::path& path) { return parse_topology(detail::read_json_file(path), path.string()); }
inline void save_topology(const fs::path& path, const MeshTopology& topo) { detail::write_json_file(path, to_json(topo)); }

inline constexpr double kNearPlane = 1e-4;
inline constexpr int kSubpixelBits = 8;
inline constexpr std::int64_t kSubpixelScale = 1 << kSubpixelBits;
inline constexpr double kGuardBandPixels = 1 << 20;

/// Per-pixel winning face (-1 when uncovered) and its interpolated 1/z.
struct CoverageMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> face;
  std::vector<double> inv_depth;

  CoverageMap() = default;
  CoverageMap(int w, int h)
      : width(w), height(h),
        face(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1),
        inv_depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}

  bool covered(int x, int y) const { return face[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] >= 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count_if(face.begin(), face.end(), [](auto f) { return f >= 0; })); }
};

/// Projected vertex in 1/256 pixel units.
struct FixedPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
};

inline std::optional<FixedPoint> snap_projection(const CameraModel& cam, const Vec3& p) {
  if (!(p.z() > kNearPlane)) return std::nullopt;
  const PixelCoord uv = project_point(cam, p);
  if (!(std::abs(uv.u) < kGuardBandPixels && std::abs(uv.v) < kGuardBandPixels)) return std::nullopt;
  return FixedPoint{std::llround(uv.u * static_cast<double>(kSubpixelScale)),
                    std::llround(uv.v * static_cast<double>(kSubpixelScale))};
}

namespace detail {

inline std::int64_t edge_function(const FixedPoint& a, const FixedPoint& b, std::int64_t px, std::int64_t py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

/// With positive-area winding in y-down image coordinates, an edge a->b is a
/// top edge when it runs horizontally towards +x and a left edge when it runs
/// towards -y.
inline bool is_top_left(const FixedPoint& a, const FixedPoint& b) {
  const std::int64_t dx = b.x - a.x;
  const std::int64_t dy = b.y - a.y;
  return (dy == 0 && dx > 0) || dy < 0;
}

}  // namespace detail

inline bool face_in_subset(const MeshTopology& topo, const Face& f, PartMask subset) {
  if (subset == kAllParts) return true;
  if (topo.labels.empty()) return false;
  return std::all_of(f.begin(), f.end(), [&](std::uint32_t i) { return (part_bit(topo.labels[i]) & subset) != 0; });
}

inline CoverageMap rasterize_mesh(const CameraModel& cam, std::span<const Vec3> vertices, const MeshTopology& topo,
                                  PartMask subset = kAllParts) {
  if (vertices.size() != topo.num_vertices) throw Error(ErrorCode::EmptyMesh, "vertex count does not match topology");
  CoverageMap cov(cam.width, cam.height);
  std::size_t renderable = 0;
  for (std::size_t fi = 0; fi < topo.faces.size(); ++fi) {
    const Face& face = topo.faces[fi];
    if (!face_in_subset(topo, face, subset)) continue;
    std::array<Vec3, 3> p{vertices[face[0]], vertices[face[1]], vertices[face[2]]};
    if (!(p[0].z() > kNearPlane && p[1].z() > kNearPlane && p[2].z() > kNearPlane)) continue;
    ++renderable;
    std::array<FixedPoint, 3> s;
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      const auto snapped = snap_projection(cam, p[static_cast<std::size_t>(k)]);
      if (!snapped) {
        ok = false;
        break;
      }
      s[static_cast<std::size_t>(k)] = *snapped;
    }
    if (!ok) continue;
    std::array<double, 3> inv_z{1.0 / p[0].z(), 1.0 / p[1].z(), 1.0 / p[2].z()};
    std::int64_t area = detail::edge_function(s[0], s[1], s[2].x, s[2].y);
    if (area == 0) continue;
    if (area < 0) {
      std::swap(s[1], s[2]);
      std::swap(inv_z[1], inv_z[2]);
      area = -area;
    }
    // Edge k is opposite vertex k.
    const std::array<std::pair<int, int>, 3> edges{{{1, 2}, {2, 0}, {0, 1}}};
    std::array<bool, 3> top_left;
    for (std::size_t k = 0; k < 3; ++k) {
      top_left[k] = detail::is_top_left(s[static_cast<std::size_t>(edges[k].first)], s[static_cast<std::size_t>(edges[k].second)]);
    }

    const std::int64_t half = kSubpixelScale / 2;
    const auto min_x = std::min({s[0].x, s[1].x, s[2].x});
    const auto max_x = std::max({s[0].x, s[1].x, s[2].x});
    const auto min_y = std::min({s[0].y, s[1].y, s[2].y});
    const auto max_y = std::max({s[0].y, s[1].y, s[2].y});
    // Pixel x covers centers x*256+128; first/last candidate columns and rows.
    auto ceil_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); };
    auto floor_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    const std::int64_t x0 = std::max<std::int64_t>(0, ceil_div(min_x - half, kSubpixelScale));
    const std::int64_t x1 = std::min<std::int64_t>(cam.width - 1, floor_div(max_x - half, kSubpixelScale));
    const std::int64_t y0 = std::max<std::int64_t>(0, ceil_div(min_y - half, kSubpixelScale));
    const std::int64_t y1 = std::min<std::int64_t>(cam.height - 1, floor_div(max_y - half, kSubpixelScale));
    if (x0 > x1 || y0 > y1) continue;

    std::array<std::int64_t, 3> row, step_x, step_y;
    const std::int64_t px0 = x0 * kSubpixelScale + half;
    const std::int64_t py0 = y0 * kSubpixelScale + half;
    for (std::size_t k = 0; k < 3; ++k) {
      const FixedPoint& a = s[static_cast<std::size_t>(edges[k].first)];
      const FixedPoint& b = s[static_cast<std::size_t>(edges[k].second)];
      row[k] = detail::edge_function(a, b, px0, py0);
      step_x[k] = -(b.y - a.y) * kSubpixelScale;
      step_y[k] = (b.x - a.x) * kSubpixelScale;
    }
    const double inv_area = 1.0 / static_cast<double>(area);
    for (std::int64_t y = y0; y <= y1; ++y) {
      std::array<std::int64_t, 3> w = row;
      for (std::int64_t x = x0; x <= x1; ++x) {
        bool inside = true;
        for (std::size_t k = 0; k < 3; ++k) {
          if (w[k] < 0 || (w[k] == 0 && !top_left[k])) {
            inside = false;
            break;
          }
        }
        if (inside) {
          const double iz = (static_cast<double>(w[0]) * inv_z[0] + static_cast<double>(w[1]) * inv_z[1] +
                             static_cast<double>(w[2]) * inv_z[2]) * inv_area;
          const std::size_t idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x);
          if (cov.face[idx] < 0 || iz > cov.inv_depth[idx]) {
            cov.face[idx] = static_cast<std::int32_t>(fi);
            cov.inv_depth[idx] = iz;
          }
        }
        for (std::size_t k = 0; k < 3; ++k) w[k] += step_x[k];
      }
      for (std::size_t k = 0; k < 3; ++k) row[k] += step_y[k];
    }
  }
  if (renderable == 0) throw Error(ErrorCode::EmptyMesh, "no faces in front of the camera for the selected parts");
  return cov;
}

enum class AugmentMode { None, Full, Partial };
enum class ColorDraw { Frame, Episode };

inline std::string to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::None: return "none";
    case AugmentMode::Full: return "full";
    case AugmentMode::Partial: return "partial";
  }
  return "none";
}

inline AugmentMode parse_augment_mode(const std::string& s) {
  if (s == "none") return AugmentMode::None;
  if (s == "full") return AugmentMode::Full;
  if (s == "partial") return AugmentMode::Partial;
  throw Error(ErrorCode::ConfigError, "unknown augment mode '" + s + "'");
}

struct AugmentConfig {
  AugmentMode mode = AugmentMode::Full;
  std::uint64_t color_seed = 0;
  double hue_min = 0.0, hue_max = 360.0;   // degrees, [0, 360)
  double sat_min = 0.3, sat_max = 1.0;
  double val_min = 0.4, val_max = 1.0;
  ColorDraw per = ColorDraw::Frame;

  void validate() const {
    auto in = [](double lo, double hi, double a, double b) { return a <= lo && lo <= hi && hi <= b; };
    if (!in(hue_min, hue_max, 0.0, 360.0) || !in(sat_min, sat_max, 0.3, 1.0) || !in(val_min, val_max, 0.4, 1.0)) {
      throw Error(ErrorCode::ConfigError, "augment HSV ranges out of bounds");
    }
  }

  PartMask parts() const { return mode == AugmentMode::Partial ? kThumbIndex : kAllParts; }
};

inline Rgb hsv_to_rgb(double hue, double sat, double val) {
  const double h = std::fmod(hue, 360.0) / 60.0;
  const double c = val * sat;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = val - c;
  auto to8 = [m](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v + m, 0.0, 1.0) * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

/// Seed for the color of one frame: the episode seed for per-episode draws,
/// episode seed xor frame index for per-frame draws.
inline std::uint64_t color_seed_for(const AugmentConfig& cfg, std::uint64_t frame_index) {
  return cfg.per == ColorDraw::Episode ? cfg.color_seed : cfg.color_seed ^ frame_index;
}

inline Rgb draw_color(const AugmentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const double h = rng.uniform(cfg.hue_min, cfg.hue_max);
  const double s = rng.uniform(cfg.sat_min, cfg.sat_max);
  const double v = rng.uniform(cfg.val_min, cfg.val_max);
  return hsv_to_rgb(h, s, v);
}

/// Paints covered pixels with one color; everything else is copied as is.
inline Image augment_frame(const Image& img, const CoverageMap& coverage, const AugmentConfig& cfg, std::uint64_t seed) {
  if (cfg.mode == AugmentMode::None) return img;
  if (coverage.width != img.width || coverage.height != img.height) {
    throw Error(ErrorCode::ViewMismatch, "coverage size does not match image size");
  }
  Image out = img;
  const Rgb color = draw_color(cfg, seed);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (coverage.covered(x, y)) out.set(x, y, color);
    }
  }
  return out;
}

struct AugmentStats {
  std::size_t frames = 0;
  std::size_t augmented = 0;
  std::size_t without_mesh = 0;   // passed through, no vertices
  std::size_t empty_render = 0;   // passed through, nothing in front of camera
  std::vector<std::size_t> covered_pixels;

  double augmented_fraction() const { return frames == 0 ? 0.0 : static_cast<double>(augmented) / static_cast<double>(frames); }
};

struct AugmentedEpisode {
  std::vector<Image> frames;
  AugmentStats stats;
};

/// Renders one frame; nullopt when the frame passes through unchanged.
inline std::optional<CoverageMap> frame_coverage(const HandFrame& hand, const CameraModel& cam, const MeshTopology& topo,
                                                 PartMask parts) {
  if (!hand.vertices) return std::nullopt;
  try {
    return rasterize_mesh(cam, *hand.vertices, topo, parts);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyMesh) return std::nullopt;
    throw;
  }
}

inline AugmentedEpisode augment_episode(const std::vector<Image>& frames, const std::vector<HandFrame>& hands,
                                        const CameraModel& cam, const MeshTopology* topology, const AugmentConfig& cfg) {
  if (frames.size() != hands.size()) throw Error(ErrorCode::ViewMismatch, "frame and hand counts differ");
  cfg.validate();
  AugmentedEpisode out;
  out.stats.frames = frames.size();
  if (cfg.mode == AugmentMode::None) {
    out.frames = frames;
    out.stats.covered_pixels.assign(frames.size(), 0);
    return out;
  }
  if (topology == nullptr) throw Error(ErrorCode::MissingTopology, "augmentation requires a mesh topology");
  MeshTopology topo = *topology;
  if (topo.labels.empty() && cfg.mode == AugmentMode::Partial) {
    for (const auto& h : hands) {
      if (h.vertices) {
        topo.labels = label_by_nearest_keypoint(*h.vertices, h.keypoints);
        topo.labels_approximate = true;
        break;
      }
    }
  }
  out.frames.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto cov = frame_coverage(hands[i], cam, topo, cfg.parts());
    if (!cov) {
      (hands[i].vertices ? out.stats.empty_render : out.stats.without_mesh) += 1;
      out.frames.push_back(frames[i]);
      out.stats.covered_pixels.push_back(0);
      continue;
    }
    out.frames.push_back(augment_frame(frames[i], *cov, cfg, color_seed_for(cfg, i)));
    out.stats.covered_pixels.push_back(cov->count());
    ++out.stats.augmented;
  }
  return out;
}

}  // namespace handbridge
