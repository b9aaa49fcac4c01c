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

// Episode data model and on-disk format.
//
// Episode directory:
//   <episode_id>/meta.json       metadata, shapes, payload hashes
//   <episode_id>/timestamps.f32  [N]         little-endian float32
//   <episode_id>/states.f32      [N, 8]      x y z qw qx qy qz gripper
//   <episode_id>/actions.f32     [C, h, 8]   chunk t holds states t+1 .. t+h
//   <episode_id>/views/<view>/NNNNNN.png     RGB8 frames, one per state
// Views without footage are declared in meta.json as "zero_padded" with a
// shape and have no files; they decode to all-zero frames.
//
// Dataset root:
//   manifest.json   episode index, per-embodiment action-head routes, view
//                   shapes, horizon
//   stats.json      per-embodiment normalization statistics

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handbridge/errors.hpp"
#include "handbridge/geometry.hpp"
#include "handbridge/image.hpp"
#include "handbridge/io.hpp"
#include "handbridge/retarget.hpp"

namespace handbridge {

inline constexpr int kEpisodeFormatVersion = 1;
inline constexpr std::size_t kPoseDims = 8;
inline constexpr std::size_t kDefaultHorizon = 16;
inline constexpr double kQuaternionNormTolerance = 1e-6;

inline const std::array<const char*, kPoseDims> kPoseDimNames{"x", "y", "z", "qw", "qx", "qy", "qz", "gripper"};

/// One state or action as stored: position, canonical quaternion, gripper.
using PoseRow = std::array<float, kPoseDims>;

inline PoseRow to_row(const EndEffectorPose& p) {
  const auto q = p.orientation.wxyz();
  return {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()), static_cast<float>(p.position.z()),
          static_cast<float>(q[0]), static_cast<float>(q[1]), static_cast<float>(q[2]), static_cast<float>(q[3]),
          static_cast<float>(p.gripper)};
}

inline bool same_bits(const PoseRow& a, const PoseRow& b) {
  for (std::size_t i = 0; i < kPoseDims; ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

struct ActionChunk {
  std::size_t t = 0;
  std::vector<PoseRow> actions;  // actions[k] == state t + 1 + k
};

/// Chunks for t in [0, len - 1 - h]; sequences shorter than h + 1 give none.
template <typename Row>
std::vector<std::vector<Row>> chunk_windows(std::span<const Row> states, std::size_t horizon) {
  if (horizon < 1) throw Error(ErrorCode::ConfigError, "chunk horizon must be >= 1");
  std::vector<std::vector<Row>> out;
  if (states.size() < horizon + 1) return out;
  for (std::size_t t = 0; t + horizon < states.size(); ++t) {
    out.emplace_back(states.begin() + static_cast<std::ptrdiff_t>(t + 1),
                     states.begin() + static_cast<std::ptrdiff_t>(t + 1 + horizon));
  }
  return out;
}

inline std::vector<ActionChunk> make_chunks(std::span<const PoseRow> states, std::size_t horizon) {
  auto windows = chunk_windows(states, horizon);
  std::vector<ActionChunk> chunks;
  chunks.reserve(windows.size());
  for (std::size_t t = 0; t < windows.size(); ++t) chunks.push_back({t, std::move(windows[t])});
  return chunks;
}

inline std::vector<ActionChunk> make_chunks(const StateTrajectory& traj, std::size_t horizon) {
  std::vector<PoseRow> rows;
  rows.reserve(traj.poses.size());
  for (const auto& p : traj.poses) rows.push_back(to_row(p));
  return make_chunks(rows, horizon);
}

struct ViewStream {
  std::string name;
  int width = 0;
  int height = 0;
  bool zero_padded = false;
  std::vector<Image> frames;  // empty when zero padded

  /// Frame i, or an all-zero frame of the declared shape for padded views.
  Image frame(std::size_t i) const { return zero_padded ? Image(width, height) : frames.at(i); }
};

struct Episode {
  std::string episode_id;
  Embodiment embodiment = Embodiment::HumanHand;
  std::string task_text;
  std::size_t horizon = kDefaultHorizon;
  std::vector<float> timestamps;
  std::vector<PoseRow> states;
  std::vector<ActionChunk> chunks;
  std::vector<ViewStream> views;  // sorted by name

  const ViewStream* view(const std::string& name) const {
    for (const auto& v : views) {
      if (v.name == name) return &v;
    }
    return nullptr;
  }
};

inline Episode make_episode(std::string id, Embodiment embodiment, std::string task, const StateTrajectory& traj,
                            std::size_t horizon, std::vector<ViewStream> views) {
  Episode ep;
  ep.episode_id = std::move(id);
  ep.embodiment = embodiment;
  ep.task_text = std::move(task);
  ep.horizon = horizon;
  for (const auto& p : traj.poses) {
    ep.timestamps.push_back(static_cast<float>(p.timestamp));
    ep.states.push_back(to_row(p));
  }
  ep.chunks = make_chunks(ep.states, horizon);
  std::sort(views.begin(), views.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  ep.views = std::move(views);
  return ep;
}

inline Embodiment parse_embodiment(const std::string& s) {
  if (s == "human") return Embodiment::HumanHand;
  if (s == "robot") return Embodiment::Robot;
  throw Error(ErrorCode::ParseError, "unknown embodiment '" + s + "'");
}

inline std::string frame_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", i);
  return buf;
}

namespace detail {

inline std::vector<float> flatten(std::span<const PoseRow> rows) {
  std::vector<float> out;
  out.reserve(rows.size() * kPoseDims);
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

inline nlohmann::json payload_entry(const std::string& file, std::vector<std::size_t> shape, const std::string& sha) {
  return {{"file", file}, {"dtype", "float32_le"}, {"shape", shape}, {"sha256", sha}};
}

inline void check_version(const nlohmann::json& meta, const std::string& what, const std::string& where) {
  const int version = meta.value("format_version", -1);
  if (version > kEpisodeFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                where + ": " + what + " format version " + std::to_string(version) +
                    " is newer than the supported version " + std::to_string(kEpisodeFormatVersion) +
                    "; upgrade handbridge to read it");
  }
  if (version < 1) {
    throw Error(ErrorCode::VersionMismatch,
                where + ": " + what + " format version " + std::to_string(version) + " is not recognized");
  }
}

}  // namespace detail

/// Serializes the episode into <parent>/<episode_id>. Files are staged in a
/// temporary sibling directory and renamed into place.
inline fs::path write_episode(const fs::path& parent, const Episode& ep) {
  const std::size_t n = ep.states.size();
  if (ep.timestamps.size() != n) throw Error(ErrorCode::ValidationFailure, "timestamp count differs from state count");
  fs::create_directories(parent);
  const fs::path final_dir = parent / ep.episode_id;
  const fs::path stage = parent / (ep.episode_id + ".staging");
  fs::remove_all(stage);
  fs::create_directories(stage);

  nlohmann::json meta;
  meta["format"] = "handbridge.episode";
  meta["format_version"] = kEpisodeFormatVersion;
  meta["episode_id"] = ep.episode_id;
  meta["embodiment"] = to_string(ep.embodiment);
  meta["task_text"] = ep.task_text;
  meta["horizon"] = ep.horizon;
  meta["num_states"] = n;
  meta["num_chunks"] = ep.chunks.size();
  meta["frame"] = "robot_base";
  meta["state_layout"] = kPoseDimNames;

  auto write_payload = [&](const std::string& file, std::span<const float> values) {
    const auto bytes = encode_f32le(values);
    detail::write_bytes_atomic(stage / file, bytes);
    return sha256_hex(bytes);
  };
  nlohmann::json payloads;
  payloads["timestamps"] = detail::payload_entry("timestamps.f32", {n}, write_payload("timestamps.f32", ep.timestamps));
  payloads["states"] = detail::payload_entry("states.f32", {n, kPoseDims}, write_payload("states.f32", detail::flatten(ep.states)));
  std::vector<float> actions;
  for (const auto& c : ep.chunks) {
    if (c.actions.size() != ep.horizon) throw Error(ErrorCode::ValidationFailure, "chunk length differs from horizon");
    const auto flat = detail::flatten(c.actions);
    actions.insert(actions.end(), flat.begin(), flat.end());
  }
  payloads["actions"] = detail::payload_entry("actions.f32", {ep.chunks.size(), ep.horizon, kPoseDims}, write_payload("actions.f32", actions));
  meta["payloads"] = payloads;

  nlohmann::json views = nlohmann::json::object();
  for (const auto& v : ep.views) {
    nlohmann::json jv;
    jv["shape"] = {n, static_cast<std::size_t>(v.height), static_cast<std::size_t>(v.width), std::size_t{3}};
    if (v.zero_padded) {
      jv["kind"] = "zero_padded";
    } else {
      if (v.frames.size() != n) {
        throw Error(ErrorCode::ViewMismatch, "view " + v.name + " has " + std::to_string(v.frames.size()) +
                                                  " frames for " + std::to_string(n) + " states");
      }
      jv["kind"] = "frames";
      jv["dir"] = "views/" + v.name;
      fs::create_directories(stage / "views" / v.name);
      auto files = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i) {
        const Image& img = v.frames[i];
        if (img.width != v.width || img.height != v.height) {
          throw Error(ErrorCode::ViewMismatch, "view " + v.name + " frame " + std::to_string(i) + " has the wrong size");
        }
        const auto bytes = encode_png(img);
        const std::string name = frame_file_name(i);
        detail::write_bytes_atomic(stage / "views" / v.name / name, bytes);
        files.push_back({{"name", name}, {"sha256", sha256_hex(bytes)}});
      }
      jv["files"] = files;
    }
    views[v.name] = jv;
  }
  meta["views"] = views;
  detail::write_json_file(stage / "meta.json", meta);

  fs::remove_all(final_dir);
  fs::rename(stage, final_dir);
  return final_dir;
}

struct Finding {
  std::string episode;  // empty for dataset-level findings
  std::string message;
};

struct ReadOptions {
  bool load_images = true;
  /// When set, hash mismatches are appended here instead of thrown, so the
  /// payload can still be decoded and inspected.
  std::vector<Finding>* integrity = nullptr;
};

inline Episode read_episode(const fs::path& dir, const ReadOptions& opts = {}) {
  const nlohmann::json meta = detail::read_json_file(dir / "meta.json");
  const std::string where = dir.string();
  detail::check_version(meta, "episode", where);
  Episode ep;
  auto check_hash = [&](const std::vector<std::uint8_t>& bytes, const std::string& expected, const fs::path& file) {
    if (sha256_hex(bytes) == expected) return;
    const std::string msg = file.string() + ": content hash does not match meta.json";
    if (!opts.integrity) throw Error(ErrorCode::ChecksumMismatch, msg);
    opts.integrity->push_back({ep.episode_id, "ChecksumMismatch: " + msg});
  };
  try {
    ep.episode_id = meta.at("episode_id").get<std::string>();
    ep.embodiment = parse_embodiment(meta.at("embodiment").get<std::string>());
    ep.task_text = meta.at("task_text").get<std::string>();
    ep.horizon = meta.at("horizon").get<std::size_t>();
    const auto n = meta.at("num_states").get<std::size_t>();
    const auto c = meta.at("num_chunks").get<std::size_t>();

    auto load = [&](const char* key, std::size_t expected) {
      const auto& entry = meta.at("payloads").at(key);
      const fs::path file = dir / entry.at("file").get<std::string>();
      const auto bytes = detail::read_bytes(file);
      check_hash(bytes, entry.at("sha256").get<std::string>(), file);
      auto values = decode_f32le(bytes);
      if (values.size() != expected) {
        throw Error(ErrorCode::ParseError, file.string() + ": expected " + std::to_string(expected) + " values");
      }
      return values;
    };
    ep.timestamps = load("timestamps", n);
    const auto states = load("states", n * kPoseDims);
    for (std::size_t i = 0; i < n; ++i) {
      PoseRow r;
      std::copy_n(states.begin() + static_cast<std::ptrdiff_t>(i * kPoseDims), kPoseDims, r.begin());
      ep.states.push_back(r);
    }
    const auto actions = load("actions", c * ep.horizon * kPoseDims);
    for (std::size_t t = 0; t < c; ++t) {
      ActionChunk chunk{t, {}};
      for (std::size_t k = 0; k < ep.horizon; ++k) {
        PoseRow r;
        std::copy_n(actions.begin() + static_cast<std::ptrdiff_t>((t * ep.horizon + k) * kPoseDims), kPoseDims, r.begin());
        chunk.actions.push_back(r);
      }
      ep.chunks.push_back(std::move(chunk));
    }

    for (const auto& [name, jv] : meta.at("views").items()) {
      ViewStream v;
      v.name = name;
      const auto shape = jv.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 4 || shape[0] != n || shape[3] != 3) {
        throw Error(ErrorCode::ParseError, where + ": view " + name + " has a malformed shape");
      }
      v.height = static_cast<int>(shape[1]);
      v.width = static_cast<int>(shape[2]);
      const std::string kind = jv.at("kind").get<std::string>();
      if (kind == "zero_padded") {
        v.zero_padded = true;
      } else if (kind == "frames") {
        const auto& files = jv.at("files");
        if (files.size() != n) throw Error(ErrorCode::ParseError, where + ": view " + name + " frame count mismatch");
        if (opts.load_images) {
          const fs::path vdir = dir / jv.at("dir").get<std::string>();
          for (const auto& f : files) {
            const fs::path path = vdir / f.at("name").get<std::string>();
            const auto bytes = detail::read_bytes(path);
            check_hash(bytes, f.at("sha256").get<std::string>(), path);
            v.frames.push_back(decode_png(bytes, path.string()));
          }
        }
      } else {
        throw Error(ErrorCode::ParseError, where + ": view " + name + " has unknown kind '" + kind + "'");
      }
      ep.views.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Normalization statistics

/// Streaming per-dimension min/max/mean/variance (Welford, with Chan's merge).
struct DimAccumulator {
  std::size_t count = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    min = std::min(min, x);
    max = std::max(max, x);
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const DimAccumulator& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / n;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / n;
    count += o.count;
    min = std::min(min, o.min);
    max = std::max(max, o.max);
  }

  double stddev() const { return count == 0 ? 0.0 : std::sqrt(std::max(0.0, m2 / static_cast<double>(count))); }
};

struct DimStats {
  double min = 0.0, max = 0.0, mean = 0.0, std = 0.0;
};

struct GroupStats {
  std::array<DimStats, kPoseDims> dims{};
  std::size_t count = 0;
};

struct EmbodimentStats {
  GroupStats state;
  GroupStats action;
};

struct StatsAccumulator {
  std::array<DimAccumulator, kPoseDims> state{};
  std::array<DimAccumulator, kPoseDims> action{};

  void add(const Episode& ep) {
    for (const auto& r : ep.states) {
      for (std::size_t d = 0; d < kPoseDims; ++d) state[d].add(r[d]);
    }
    for (const auto& c : ep.chunks) {
      for (const auto& r : c.actions) {
        for (std::size_t d = 0; d < kPoseDims; ++d) action[d].add(r[d]);
      }
    }
  }

  void merge(const StatsAccumulator& o) {
    for (std::size_t d = 0; d < kPoseDims; ++d) {
      state[d].merge(o.state[d]);
      action[d].merge(o.action[d]);
    }
  }

  EmbodimentStats finish() const {
    auto group = [](const std::array<DimAccumulator, kPoseDims>& acc) {
      GroupStats g;
      g.count = acc[0].count;
      for (std::size_t d = 0; d < kPoseDims; ++d) {
        g.dims[d] = acc[d].count == 0 ? DimStats{} : DimStats{acc[d].min, acc[d].max, acc[d].mean, acc[d].stddev()};
      }
      return g;
    };
    return {group(state), group(action)};
  }
};

/// Statistics over the episodes of one embodiment only.
inline EmbodimentStats compute_stats(std::span<const Episode> episodes, Embodiment embodiment) {
  StatsAccumulator acc;
  std::size_t used = 0;
  for (const auto& ep : episodes) {
    if (ep.embodiment != embodiment) continue;
    acc.add(ep);
    ++used;
  }
  if (used == 0 || acc.state[0].count == 0) {
    throw Error(ErrorCode::EmptySet, "no " + to_string(embodiment) + " data to compute statistics from");
  }
  return acc.finish();
}

enum class NormScheme { MinMaxToUnit, ZScore };

struct Normalized {
  std::array<double, kPoseDims> values{};
  std::vector<std::size_t> constant_dims;  // mapped to 0
};

inline bool is_constant(const DimStats& s, NormScheme scheme) {
  return scheme == NormScheme::MinMaxToUnit ? !(s.max > s.min) : !(s.std > 0.0);
}

inline Normalized normalize(const std::array<double, kPoseDims>& x, const GroupStats& stats, NormScheme scheme) {
  Normalized out;
  for (std::size_t d = 0; d < kPoseDims; ++d) {
    const DimStats& s = stats.dims[d];
    if (is_constant(s, scheme)) {
      out.values[d] = 0.0;
      out.constant_dims.push_back(d);
    } else if (scheme == NormScheme::MinMaxToUnit) {
      out.values[d] = (x[d] - s.min) / (s.max - s.min);
    } else {
      out.values[d] = (x[d] - s.mean) / s.std;
    }
  }
  return out;
}

/// Inverse of normalize. Constant dimensions map back to their min (min-max)
/// or mean (z-score).
inline std::array<double, kPoseDims> denormalize(const std::array<double, kPoseDims>& y, const GroupStats& stats,
                                                 NormScheme scheme) {
  std::array<double, kPoseDims> out{};
  for (std::size_t d = 0; d < kPoseDims; ++d) {
    const DimStats& s = stats.dims[d];
    if (is_constant(s, scheme)) {
      out[d] = scheme == NormScheme::MinMaxToUnit ? s.min : s.mean;
    } else if (scheme == NormScheme::MinMaxToUnit) {
      out[d] = y[d] * (s.max - s.min) + s.min;
    } else {
      out[d] = y[d] * s.std + s.mean;
    }
  }
  return out;
}

inline nlohmann::json to_json(const GroupStats& g) {
  nlohmann::json j;
  auto col = [&](auto field) {
    auto arr = nlohmann::json::array();
    for (const auto& d : g.dims) arr.push_back(field(d));
    return arr;
  };
  j["count"] = g.count;
  j["min"] = col([](const DimStats& d) { return d.min; });
  j["max"] = col([](const DimStats& d) { return d.max; });
  j["mean"] = col([](const DimStats& d) { return d.mean; });
  j["std"] = col([](const DimStats& d) { return d.std; });
  return j;
}

inline GroupStats group_stats_from_json(const nlohmann::json& j) {
  GroupStats g;
  g.count = j.at("count").get<std::size_t>();
  for (std::size_t d = 0; d < kPoseDims; ++d) {
    g.dims[d] = {j.at("min").at(d).get<double>(), j.at("max").at(d).get<double>(), j.at("mean").at(d).get<double>(),
                 j.at("std").at(d).get<double>()};
  }
  return g;
}

using NormalizationStats = std::map<Embodiment, EmbodimentStats>;

inline nlohmann::json to_json(const NormalizationStats& stats) {
  nlohmann::json j = {{"format", "handbridge.stats"}, {"format_version", kEpisodeFormatVersion}, {"dims", kPoseDimNames}};
  nlohmann::json emb = nlohmann::json::object();
  for (const auto& [e, s] : stats) emb[to_string(e)] = {{"state", to_json(s.state)}, {"action", to_json(s.action)}};
  j["embodiments"] = emb;
  return j;
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
  NormalizationStats out;
  for (const auto& [name, s] : j.at("embodiments").items()) {
    out[parse_embodiment(name)] = {group_stats_from_json(s.at("state")), group_stats_from_json(s.at("action"))};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the dataset root
  Embodiment embodiment = Embodiment::HumanHand;
  std::size_t num_states = 0;
  std::size_t num_chunks = 0;
  std::string meta_sha256;
};

struct ViewDecl {
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  fs::path root;
  std::size_t horizon = kDefaultHorizon;
  std::map<Embodiment, std::string> routes{{Embodiment::HumanHand, "human_action_head"}, {Embodiment::Robot, "robot_action_head"}};
  std::map<std::string, ViewDecl> views;
  std::string stats_file = "stats.json";
  std::vector<ManifestEntry> episodes;
};

inline ManifestEntry manifest_entry_for(const fs::path& root, const fs::path& episode_dir, const Episode& ep) {
  const auto meta_bytes = detail::read_bytes(episode_dir / "meta.json");
  return {ep.episode_id, fs::relative(episode_dir, root).generic_string(), ep.embodiment, ep.states.size(), ep.chunks.size(), sha256_hex(meta_bytes)};
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j = {{"format", "handbridge.dataset"}, {"format_version", kEpisodeFormatVersion}, {"horizon", m.horizon}, {"stats", m.stats_file}};
  nlohmann::json routes = nlohmann::json::object();
  for (const auto& [e, r] : m.routes) routes[to_string(e)] = r;
  j["routes"] = routes;
  nlohmann::json views = nlohmann::json::object();
  for (const auto& [name, v] : m.views) views[name] = {{"width", v.width}, {"height", v.height}};
  j["views"] = views;
  auto eps = nlohmann::json::array();
  for (const auto& e : m.episodes) {
    eps.push_back({{"id", e.id}, {"path", e.path}, {"embodiment", to_string(e.embodiment)}, {"num_states", e.num_states},
                   {"num_chunks", e.num_chunks}, {"meta_sha256", e.meta_sha256}});
  }
  j["episodes"] = eps;
  return j;
}

inline DatasetManifest read_manifest(const fs::path& root) {
  const auto j = detail::read_json_file(root / "manifest.json");
  detail::check_version(j, "dataset", (root / "manifest.json").string());
  DatasetManifest m;
  m.root = root;
  try {
    m.horizon = j.at("horizon").get<std::size_t>();
    m.stats_file = j.value("stats", "stats.json");
    m.routes.clear();
    for (const auto& [name, r] : j.at("routes").items()) m.routes[parse_embodiment(name)] = r.get<std::string>();
    for (const auto& [name, v] : j.at("views").items()) m.views[name] = {v.at("width").get<int>(), v.at("height").get<int>()};
    for (const auto& e : j.at("episodes")) {
      m.episodes.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                            parse_embodiment(e.at("embodiment").get<std::string>()), e.at("num_states").get<std::size_t>(),
                            e.at("num_chunks").get<std::size_t>(), e.at("meta_sha256").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, (root / "manifest.json").string() + ": " + e.what());
  }
  return m;
}

inline void write_manifest(const DatasetManifest& m) {
  fs::create_directories(m.root);
  detail::write_json_file(m.root / "manifest.json", to_json(m));
}

// ---------------------------------------------------------------------------
// Robot teleoperation logs
//
// Newline-delimited JSON. First record:
//   {"type":"meta","format":"handbridge.robotlog","version":1,
//    "episode_id":"robot_000","task_text":"pick up the cup"}
// Then one record per control step:
//   {"t":0.0,"p":[x,y,z],"q":[w,x,y,z],"g":0.8,
//    "images":{"top":"frames/top/000000.png","wrist":"frames/wrist/000000.png"}}
// Positions are meters in the robot base frame, the gripper is already in
// [0, 1] (0 closed), image paths are relative to the log file. Both the top
// and the wrist view are mandatory.

inline const std::array<const char*, 2> kRobotViews{"top", "wrist"};

inline Episode import_robot_log(const fs::path& path, const std::map<std::string, ViewDecl>& declared, std::size_t horizon) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open robot log " + path.string());
  const fs::path base = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  std::optional<nlohmann::json> meta;
  StateTrajectory traj;
  traj.embodiment = Embodiment::Robot;
  traj.frame = FrameTag::RobotBase;
  std::map<std::string, std::vector<Image>> images;
  auto fail = [&](const std::string& msg) { return Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(line_no) + ": " + msg); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
    try {
      if (!meta) {
        if (rec.value("type", "") != "meta") throw fail("first record must be the metadata record");
        meta = rec;
        continue;
      }
      EndEffectorPose pose;
      pose.timestamp = rec.at("t").get<double>();
      const auto p = rec.at("p").get<std::vector<double>>();
      const auto q = rec.at("q").get<std::vector<double>>();
      if (p.size() != 3 || q.size() != 4) throw fail("p needs 3 values and q needs 4");
      const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
      if (!(qn > 0.5)) throw fail("orientation quaternion is degenerate");
      pose.position = Vec3(p[0], p[1], p[2]);
      pose.orientation = UnitQuaternion::from_wxyz(q[0], q[1], q[2], q[3]);
      pose.gripper = rec.at("g").get<double>();
      if (!(pose.gripper >= 0.0 && pose.gripper <= 1.0)) throw fail("gripper must be normalized to [0, 1]");
      if (!traj.poses.empty() && !(pose.timestamp > traj.poses.back().timestamp)) throw fail("timestamps must increase");
      const auto& imgs = rec.at("images");
      for (const char* view : kRobotViews) {
        if (!imgs.contains(view)) throw fail(std::string("robot data requires the ") + view + " view");
        Image img = read_png(base / imgs[view].get<std::string>());
        if (auto it = declared.find(view); it != declared.end()) {
          if (img.width != it->second.width || img.height != it->second.height) {
            throw Error(ErrorCode::ViewMismatch, path.string() + " line " + std::to_string(line_no) + ": " + view +
                                                     " image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                                     ", declared " + std::to_string(it->second.width) + "x" + std::to_string(it->second.height));
          }
        }
        images[view].push_back(std::move(img));
      }
      traj.poses.push_back(pose);
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  if (!meta) throw Error(ErrorCode::ParseError, path.string() + ": missing metadata record");
  if (traj.poses.empty()) throw Error(ErrorCode::ParseError, path.string() + ": no control steps");
  std::vector<ViewStream> views;
  for (const char* view : kRobotViews) {
    auto& frames = images[view];
    ViewStream v{view, frames.front().width, frames.front().height, false, std::move(frames)};
    for (const auto& f : v.frames) {
      if (f.width != v.width || f.height != v.height) throw Error(ErrorCode::ViewMismatch, path.string() + ": " + view + " frames change size");
    }
    views.push_back(std::move(v));
  }
  return make_episode(meta->at("episode_id").get<std::string>(), Embodiment::Robot, meta->value("task_text", ""), traj,
                      horizon, std::move(views));
}

// ---------------------------------------------------------------------------
// Validation

/// Re-checks the in-memory invariants of an episode.
inline std::vector<Finding> check_episode(const Episode& ep, const DatasetManifest* manifest = nullptr) {
  std::vector<Finding> out;
  auto add = [&](std::string msg) { out.push_back({ep.episode_id, std::move(msg)}); };
  const std::size_t n = ep.states.size();
  if (ep.timestamps.size() != n) add("timestamp count differs from state count");
  for (std::size_t i = 1; i < ep.timestamps.size(); ++i) {
    if (!(ep.timestamps[i] > ep.timestamps[i - 1])) {
      add("timestamps not increasing at index " + std::to_string(i));
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = ep.states[i];
    const double norm = std::sqrt(double(r[3]) * r[3] + double(r[4]) * r[4] + double(r[5]) * r[5] + double(r[6]) * r[6]);
    if (std::abs(norm - 1.0) > kQuaternionNormTolerance) add("state " + std::to_string(i) + ": quaternion norm " + std::to_string(norm));
    if (r[3] < 0.0f) add("state " + std::to_string(i) + ": quaternion is not sign-canonical");
    if (!(r[7] >= 0.0f && r[7] <= 1.0f)) add("state " + std::to_string(i) + ": gripper outside [0, 1]");
  }
  const std::size_t expected_chunks = n > ep.horizon ? n - ep.horizon : 0;
  if (ep.chunks.size() != expected_chunks) {
    add("chunk count " + std::to_string(ep.chunks.size()) + " differs from expected " + std::to_string(expected_chunks));
  }
  for (std::size_t t = 0; t < ep.chunks.size(); ++t) {
    const auto& c = ep.chunks[t];
    if (c.actions.size() != ep.horizon) {
      add("chunk t=" + std::to_string(t) + ": length differs from horizon");
      continue;
    }
    for (std::size_t k = 0; k < ep.horizon; ++k) {
      if (t + 1 + k >= n || !same_bits(c.actions[k], ep.states[t + 1 + k])) {
        add("chunk t=" + std::to_string(t) + ": action " + std::to_string(k) + " is not state " + std::to_string(t + 1 + k));
        break;
      }
    }
  }
  for (const auto& v : ep.views) {
    if (v.zero_padded) {
      if (!v.frames.empty()) add("view " + v.name + " is zero padded but carries frames");
    } else if (v.frames.size() != n) {
      add("view " + v.name + " has " + std::to_string(v.frames.size()) + " frames for " + std::to_string(n) + " states");
    }
    if (manifest) {
      auto it = manifest->views.find(v.name);
      if (it == manifest->views.end()) {
        add("view " + v.name + " is not declared in the manifest");
      } else if (it->second.width != v.width || it->second.height != v.height) {
        add("view " + v.name + " shape differs from the manifest declaration");
      }
    }
  }
  if (manifest) {
    for (const auto& [name, decl] : manifest->views) {
      if (!ep.view(name)) add("declared view " + name + " is neither present nor zero padded");
    }
    if (!manifest->routes.contains(ep.embodiment)) add("no action-head route for embodiment " + to_string(ep.embodiment));
  }
  return out;
}

/// Full dataset check: manifest, hashes, versions, and every episode invariant.
inline std::vector<Finding> validate_dataset(const fs::path& root) {
  std::vector<Finding> out;
  DatasetManifest manifest;
  try {
    manifest = read_manifest(root);
  } catch (const Error& e) {
    out.push_back({"", e.what()});
    return out;
  }
  for (const auto& entry : manifest.episodes) {
    const fs::path dir = root / entry.path;
    try {
      const auto meta_bytes = detail::read_bytes(dir / "meta.json");
      if (sha256_hex(meta_bytes) != entry.meta_sha256) {
        out.push_back({entry.id, "meta.json hash does not match the manifest"});
      }
      const Episode ep = read_episode(dir, {true, &out});
      if (ep.episode_id != entry.id) out.push_back({entry.id, "episode id differs from manifest entry"});
      if (ep.embodiment != entry.embodiment) out.push_back({entry.id, "embodiment differs from manifest entry"});
      if (ep.horizon != manifest.horizon) out.push_back({entry.id, "horizon differs from manifest"});
      if (ep.chunks.size() != entry.num_chunks || ep.states.size() != entry.num_states) {
        out.push_back({entry.id, "state or chunk count differs from manifest entry"});
      }
      auto findings = check_episode(ep, &manifest);
      out.insert(out.end(), findings.begin(), findings.end());
    } catch (const Error& e) {
      out.push_back({entry.id, e.what()});
    }
  }
  if (fs::exists(root / manifest.stats_file)) {
    try {
      const auto j = detail::read_json_file(root / manifest.stats_file);
      detail::check_version(j, "stats", (root / manifest.stats_file).string());
      stats_from_json(j);
    } catch (const std::exception& e) {
      out.push_back({"", e.what()});
    }
  }
  return out;
}

}  // namespace handbridge
