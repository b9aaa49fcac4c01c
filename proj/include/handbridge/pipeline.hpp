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

// End-to-end pipeline stages behind the command line tool.
//
// Config file (JSON, paths relative to the config file):
//   {"format":"handbridge.config","format_version":1,"seed":7,"jobs":1,
//    "log_level":"info","horizon":16,"task_text":"pick up the block",
//    "paths":{"tracks":["tracks/demo.jsonl"],"frames_dirs":["frames/demo"],
//             "robot_logs":["robot/robot_000.jsonl"],
//             "calibration":"calib/handeye.json","intrinsics":"calib/intrinsics.json",
//             "topology":"mesh/topology.json","chain":"","output":"out"},
//    "retarget":{...},"augment":{...},"mix":{...},
//    "views":{"top":{"width":160,"height":120},"wrist":{"width":160,"height":120}}}
// An empty "chain" selects the built-in arm. frames_dirs entries may be
// empty; otherwise they hold NNNNNN.png where NNNNNN = round(t * fps) of the
// track frame the image belongs to.
//
// Output tree:
//   <output>/dataset/manifest.json, stats.json, schedule.json, episodes/<id>/
//   <output>/augmented/<track>_<mode>/NNNNNN.png
//   <output>/reports/{retarget,augment,mix,inspect}.json
//   <output>/inspect/<episode>_trace.svg, <episode>_overlay.png

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handbridge/augment.hpp"
#include "handbridge/calibration.hpp"
#include "handbridge/dataset.hpp"
#include "handbridge/errors.hpp"
#include "handbridge/hand_model.hpp"
#include "handbridge/image.hpp"
#include "handbridge/io.hpp"
#include "handbridge/kinematics.hpp"
#include "handbridge/mixer.hpp"
#include "handbridge/retarget.hpp"
#include "handbridge/rng.hpp"

namespace handbridge {

inline constexpr int kConfigFormatVersion = 1;

struct PipelineConfig {
  fs::path base_dir;  // directory the config was loaded from; not serialized

  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string log_level = "info";
  std::size_t horizon = kDefaultHorizon;
  std::string task_text;

  struct Paths {
    std::vector<std::string> tracks;
    std::vector<std::string> frames_dirs;
    std::vector<std::string> robot_logs;
    std::string calibration;
    std::string intrinsics;
    std::string topology;
    std::string chain;
    std::string output = "out";
  } paths;

  struct Retarget {
    double gripper_low_pct = 5.0;
    double gripper_high_pct = 95.0;
    std::optional<GripperCalibration> gripper;  // overrides the percentile estimate
    int position_window = 1;
    int orientation_window = 1;
    int max_gap = 5;
    double min_valid_fraction = 0.8;
    FlickerOptions flicker;
    double resample_fps = 30.0;  // 0 keeps the source timing
    double reachable_floor = 0.95;
    IkOptions ik;
  } retarget;

  AugmentConfig augment;

  struct Mix {
    std::size_t batch_size = 32;
    std::optional<double> human_fraction;  // default: proportional, capped to [0.5, 0.9]
    std::size_t n_batches = 0;             // 0: one epoch
    bool human_with_replacement = false;
    bool robot_with_replacement = true;
  } mix;

  std::map<std::string, ViewDecl> views;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  fs::path output_dir() const { return resolve(paths.output); }
  fs::path dataset_dir() const { return output_dir() / "dataset"; }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["format"] = "handbridge.config";
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["log_level"] = c.log_level;
  j["horizon"] = c.horizon;
  j["task_text"] = c.task_text;
  j["paths"] = {{"tracks", c.paths.tracks},         {"frames_dirs", c.paths.frames_dirs},
                {"robot_logs", c.paths.robot_logs}, {"calibration", c.paths.calibration},
                {"intrinsics", c.paths.intrinsics}, {"topology", c.paths.topology},
                {"chain", c.paths.chain},           {"output", c.paths.output}};
  const auto& r = c.retarget;
  nlohmann::json jr = {{"gripper_low_pct", r.gripper_low_pct},
                       {"gripper_high_pct", r.gripper_high_pct},
                       {"position_window", r.position_window},
                       {"orientation_window", r.orientation_window},
                       {"max_gap", r.max_gap},
                       {"min_valid_fraction", r.min_valid_fraction},
                       {"flicker", {{"jump_threshold", r.flicker.jump_threshold}, {"window", r.flicker.window}}},
                       {"resample_fps", r.resample_fps},
                       {"reachable_floor", r.reachable_floor},
                       {"ik",
                        {{"damping", r.ik.damping},
                         {"max_iters", r.ik.max_iters},
                         {"pos_tol", r.ik.pos_tol},
                         {"rot_tol", r.ik.rot_tol},
                         {"max_step", r.ik.max_step},
                         {"max_pos_error", r.ik.max_pos_error},
                         {"max_rot_error", r.ik.max_rot_error},
                         {"restarts", r.ik.restarts}}}};
  jr["gripper"] = r.gripper ? nlohmann::json{{"d_min", r.gripper->d_min}, {"d_max", r.gripper->d_max}} : nlohmann::json(nullptr);
  j["retarget"] = jr;
  const auto& a = c.augment;
  j["augment"] = {{"mode", to_string(a.mode)},
                  {"per", a.per == ColorDraw::Frame ? "frame" : "episode"},
                  {"hue", {a.hue_min, a.hue_max}},
                  {"saturation", {a.sat_min, a.sat_max}},
                  {"value", {a.val_min, a.val_max}}};
  j["mix"] = {{"batch_size", c.mix.batch_size},
              {"human_fraction", c.mix.human_fraction ? nlohmann::json(*c.mix.human_fraction) : nlohmann::json(nullptr)},
              {"n_batches", c.mix.n_batches},
              {"human_with_replacement", c.mix.human_with_replacement},
              {"robot_with_replacement", c.mix.robot_with_replacement}};
  nlohmann::json views = nlohmann::json::object();
  for (const auto& [name, v] : c.views) views[name] = {{"width", v.width}, {"height", v.height}};
  j["views"] = views;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
  PipelineConfig c;
  c.base_dir = base_dir;
  auto reject_unknown = [](const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + where + key + "'");
      }
    }
  };
  try {
    reject_unknown(j, {"format", "format_version", "seed", "jobs", "log_level", "horizon", "task_text", "paths", "retarget", "augment", "mix", "views"}, "");
    if (j.value("format", "handbridge.config") != "handbridge.config") throw Error(ErrorCode::ConfigError, "not a handbridge config file");
    if (j.value("format_version", kConfigFormatVersion) != kConfigFormatVersion) {
      throw Error(ErrorCode::ConfigError, "unsupported config format version");
    }
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.log_level = j.value("log_level", c.log_level);
    c.horizon = j.value("horizon", c.horizon);
    c.task_text = j.value("task_text", c.task_text);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown(p, {"tracks", "frames_dirs", "robot_logs", "calibration", "intrinsics", "topology", "chain", "output"}, "paths.");
      c.paths.tracks = p.value("tracks", c.paths.tracks);
      c.paths.frames_dirs = p.value("frames_dirs", c.paths.frames_dirs);
      c.paths.robot_logs = p.value("robot_logs", c.paths.robot_logs);
      c.paths.calibration = p.value("calibration", c.paths.calibration);
      c.paths.intrinsics = p.value("intrinsics", c.paths.intrinsics);
      c.paths.topology = p.value("topology", c.paths.topology);
      c.paths.chain = p.value("chain", c.paths.chain);
      c.paths.output = p.value("output", c.paths.output);
    }
    if (j.contains("retarget")) {
      const auto& r = j["retarget"];
      reject_unknown(r, {"gripper_low_pct", "gripper_high_pct", "gripper", "position_window", "orientation_window", "max_gap",
                         "min_valid_fraction", "flicker", "resample_fps", "reachable_floor", "ik"}, "retarget.");
      auto& o = c.retarget;
      o.gripper_low_pct = r.value("gripper_low_pct", o.gripper_low_pct);
      o.gripper_high_pct = r.value("gripper_high_pct", o.gripper_high_pct);
      if (r.contains("gripper") && !r["gripper"].is_null()) {
        o.gripper = GripperCalibration{r["gripper"].at("d_min").get<double>(), r["gripper"].at("d_max").get<double>()};
      }
      o.position_window = r.value("position_window", o.position_window);
      o.orientation_window = r.value("orientation_window", o.orientation_window);
      o.max_gap = r.value("max_gap", o.max_gap);
      o.min_valid_fraction = r.value("min_valid_fraction", o.min_valid_fraction);
      o.resample_fps = r.value("resample_fps", o.resample_fps);
      o.reachable_floor = r.value("reachable_floor", o.reachable_floor);
      if (r.contains("flicker")) {
        reject_unknown(r["flicker"], {"jump_threshold", "window"}, "retarget.flicker.");
        o.flicker.jump_threshold = r["flicker"].value("jump_threshold", o.flicker.jump_threshold);
        o.flicker.window = r["flicker"].value("window", o.flicker.window);
      }
      if (r.contains("ik")) {
        const auto& k = r["ik"];
        reject_unknown(k, {"damping", "max_iters", "pos_tol", "rot_tol", "max_step", "max_pos_error", "max_rot_error", "restarts"}, "retarget.ik.");
        o.ik.damping = k.value("damping", o.ik.damping);
        o.ik.max_iters = k.value("max_iters", o.ik.max_iters);
        o.ik.pos_tol = k.value("pos_tol", o.ik.pos_tol);
        o.ik.rot_tol = k.value("rot_tol", o.ik.rot_tol);
        o.ik.max_step = k.value("max_step", o.ik.max_step);
        o.ik.max_pos_error = k.value("max_pos_error", o.ik.max_pos_error);
        o.ik.max_rot_error = k.value("max_rot_error", o.ik.max_rot_error);
        o.ik.restarts = k.value("restarts", o.ik.restarts);
      }
    }
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      reject_unknown(a, {"mode", "per", "hue", "saturation", "value"}, "augment.");
      auto& o = c.augment;
      o.mode = parse_augment_mode(a.value("mode", to_string(o.mode)));
      const std::string per = a.value("per", std::string("frame"));
      if (per != "frame" && per != "episode") throw Error(ErrorCode::ConfigError, "augment.per must be 'frame' or 'episode'");
      o.per = per == "frame" ? ColorDraw::Frame : ColorDraw::Episode;
      auto range = [&](const char* key, double& lo, double& hi) {
        if (!a.contains(key)) return;
        const auto v = a[key].get<std::vector<double>>();
        if (v.size() != 2) throw Error(ErrorCode::ConfigError, std::string("augment.") + key + " needs [min, max]");
        lo = v[0];
        hi = v[1];
      };
      range("hue", o.hue_min, o.hue_max);
      range("saturation", o.sat_min, o.sat_max);
      range("value", o.val_min, o.val_max);
    }
    if (j.contains("mix")) {
      const auto& m = j["mix"];
      reject_unknown(m, {"batch_size", "human_fraction", "n_batches", "human_with_replacement", "robot_with_replacement"}, "mix.");
      c.mix.batch_size = m.value("batch_size", c.mix.batch_size);
      if (m.contains("human_fraction") && !m["human_fraction"].is_null()) c.mix.human_fraction = m["human_fraction"].get<double>();
      c.mix.n_batches = m.value("n_batches", c.mix.n_batches);
      c.mix.human_with_replacement = m.value("human_with_replacement", c.mix.human_with_replacement);
      c.mix.robot_with_replacement = m.value("robot_with_replacement", c.mix.robot_with_replacement);
    }
    if (j.contains("views")) {
      for (const auto& [name, v] : j["views"].items()) c.views[name] = {v.at("width").get<int>(), v.at("height").get<int>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::ConfigError, "config file " + path.string() + " does not exist");
  nlohmann::json j;
  try {
    j = detail::read_json_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline void save_config(const fs::path& path, const PipelineConfig& c) { detail::write_json_file(path, to_json(c)); }

struct RunOptions {
  bool dry_run = false;
  std::function<void(const std::string&)> log;  // progress messages; may be empty
};

struct StageReport {
  nlohmann::json report;
  ExitCode exit = ExitCode::Ok;
};

namespace detail {

inline void say(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

inline void require_file(const PipelineConfig& c, const std::string& p, const std::string& what) {
  if (p.empty()) throw Error(ErrorCode::ConfigError, what + " path is not set");
  if (!fs::exists(c.resolve(p))) throw Error(ErrorCode::ConfigError, what + " " + c.resolve(p).string() + " does not exist");
}

inline void check_config(const PipelineConfig& c) {
  if (c.horizon < 1) throw Error(ErrorCode::ConfigError, "horizon must be >= 1");
  if (c.jobs < 1) throw Error(ErrorCode::ConfigError, "jobs must be >= 1");
  if (!c.paths.frames_dirs.empty() && c.paths.frames_dirs.size() != c.paths.tracks.size()) {
    throw Error(ErrorCode::ConfigError, "frames_dirs must be empty or list one entry per track");
  }
  c.augment.validate();
  for (const char* view : kRobotViews) {
    if (!c.views.contains(view)) throw Error(ErrorCode::ConfigError, std::string("views must declare '") + view + "'");
  }
}

/// Runs f(i) for i in [0, n) on at most `jobs` threads; results keep index order.
template <typename F>
auto parallel_map(std::size_t n, std::size_t jobs, F f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += jobs) {
    std::vector<std::future<R>> batch;
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, f, i));
    }
    for (auto& fut : batch) out.push_back(fut.get());
  }
  return out;
}

inline std::string track_stem(const std::string& path) { return fs::path(path).stem().string(); }

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Image files of a frames directory keyed by their numeric stem.
inline std::map<long, fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigError, "frames directory " + dir.string() + " does not exist");
  std::map<long, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    char* end = nullptr;
    const long idx = std::strtol(stem.c_str(), &end, 10);
    if (end == stem.c_str() || *end != '\0') continue;
    out[idx] = entry.path();
  }
  if (out.empty()) throw Error(ErrorCode::IoError, "frames directory " + dir.string() + " holds no NNNNNN.png files");
  return out;
}

inline long frame_number(double t, double fps) { return std::lround(t * fps); }

template <typename V>
const V& nearest_key(const std::map<long, V>& m, long key) {
  auto hi = m.lower_bound(key);
  if (hi == m.end()) return std::prev(hi)->second;
  if (hi == m.begin() || hi->first == key) return hi->second;
  auto lo = std::prev(hi);
  return (key - lo->first) <= (hi->first - key) ? lo->second : hi->second;
}

/// Source frame closest in time; hands come back in real (unmirrored) coordinates.
inline HandFrame nearest_hand(const HandTrack& track, double t) {
  auto it = std::lower_bound(track.frames.begin(), track.frames.end(), t,
                             [](const HandFrame& f, double v) { return f.timestamp < v; });
  if (it == track.frames.end()) it = std::prev(it);
  else if (it != track.frames.begin() && (t - std::prev(it)->timestamp) <= (it->timestamp - t)) it = std::prev(it);
  HandFrame h = *it;
  if (track.mirrored) mirror_x(h);
  return h;
}

inline std::string gripper_json_source(bool configured) { return configured ? "config" : "percentile"; }

struct HumanTrackResult {
  Episode episode;
  nlohmann::json report;
  bool reachable = true;
};

inline HumanTrackResult process_track(const PipelineConfig& c, std::size_t i, const KinematicChain& chain,
                                      const HandEyeCalibration& calib, const CameraModel& cam,
                                      const std::optional<MeshTopology>& topo) {
  const std::string& track_path = c.paths.tracks[i];
  const std::string stem = track_stem(track_path);
  const ParsedHandTrack parsed = parse_hand_track(c.resolve(track_path).string());
  const FlickerReport cleaned = reject_flicker(parsed.track, c.retarget.flicker);
  if (cleaned.track.frames.empty()) throw Error(ErrorCode::EmptyTrack, track_path + ": no frames left after flicker rejection");
  const HandTrack resampled = c.retarget.resample_fps > 0.0 ? resample_track(cleaned.track, c.retarget.resample_fps) : cleaned.track;

  const bool configured = c.retarget.gripper.has_value();
  GripperCalibration cal;
  try {
    cal = configured ? *c.retarget.gripper : calibrate_gripper(cleaned.track, c.retarget.gripper_low_pct, c.retarget.gripper_high_pct);
  } catch (const Error& e) {
    throw Error(e.code(), track_path + ": " + e.what());
  }
  RetargetResult rr;
  try {
    rr = retarget_track_report(resampled, cal, calib.cam_to_base, {c.retarget.max_gap, c.retarget.min_valid_fraction});
  } catch (const Error& e) {
    throw Error(e.code(), track_path + ": " + e.what());
  }
  StateTrajectory traj = smooth_trajectory(rr.trajectory, c.retarget.position_window, c.retarget.orientation_window);
  const TrajectoryValidation tv = validate_trajectory(chain, traj, c.retarget.ik);

  std::vector<ViewStream> views;
  const ViewDecl top = c.views.at("top");
  const ViewDecl wrist = c.views.at("wrist");
  ViewStream top_view{"top", top.width, top.height, true, {}};
  nlohmann::json augment_report = nullptr;
  const std::string frames_dir = c.paths.frames_dirs.empty() ? std::string() : c.paths.frames_dirs[i];
  if (!frames_dir.empty()) {
    const auto files = list_frames(c.resolve(frames_dir));
    std::vector<Image> frames;
    std::vector<HandFrame> hands;
    for (const auto& pose : traj.poses) {
      const long n = frame_number(pose.timestamp, parsed.track.source_fps);
      Image img = read_png(nearest_key(files, n));
      if (img.width != top.width || img.height != top.height) {
        throw Error(ErrorCode::ViewMismatch, frames_dir + ": frame size " + std::to_string(img.width) + "x" +
                                                 std::to_string(img.height) + " differs from the declared top view");
      }
      frames.push_back(std::move(img));
      hands.push_back(nearest_hand(cleaned.track, pose.timestamp));
    }
    AugmentConfig acfg = c.augment;
    acfg.color_seed = derive_seed(derive_seed(c.seed, "augment"), stem);
    AugmentedEpisode aug = augment_episode(frames, hands, cam, topo ? &*topo : nullptr, acfg);
    top_view.zero_padded = false;
    top_view.frames = std::move(aug.frames);
    augment_report = {{"mode", to_string(acfg.mode)}, {"augmented_frames", aug.stats.augmented},
                      {"frames_without_mesh", aug.stats.without_mesh}, {"empty_renders", aug.stats.empty_render}};
  }
  views.push_back(std::move(top_view));
  views.push_back({"wrist", wrist.width, wrist.height, true, {}});

  HumanTrackResult out;
  out.episode = make_episode("human_" + stem, Embodiment::HumanHand, c.task_text, traj, c.horizon, std::move(views));
  out.reachable = tv.reachable_fraction >= c.retarget.reachable_floor;
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& d : parsed.rejected) rejected.push_back({{"line", d.line}, {"message", d.message}});
  out.report = {{"episode", out.episode.episode_id},
                {"track", track_path},
                {"frames_parsed", parsed.track.frames.size()},
                {"frames_rejected", rejected},
                {"flicker_removed", cleaned.removed_timestamps.size()},
                {"resampled_frames", resampled.frames.size()},
                {"orientation_filled", rr.filled},
                {"dropped_frames", rr.dropped_timestamps.size()},
                {"gripper_calibration", {{"d_min", cal.d_min}, {"d_max", cal.d_max}, {"source", gripper_json_source(configured)}}},
                {"reachable_fraction", finite_or_null(tv.reachable_fraction)},
                {"max_joint_jump", finite_or_null(tv.max_joint_jump)},
                {"states", out.episode.states.size()},
                {"chunks", out.episode.chunks.size()},
                {"augment", augment_report}};
  if (out.episode.chunks.empty()) out.report["warning"] = "trajectory shorter than horizon + 1; no chunks";
  return out;
}

inline KinematicChain chain_for(const PipelineConfig& c) {
  return c.paths.chain.empty() ? default_chain() : load_chain(c.resolve(c.paths.chain).string());
}

inline std::optional<MeshTopology> topology_for(const PipelineConfig& c) {
  if (c.paths.topology.empty()) return std::nullopt;
  return load_topology(c.resolve(c.paths.topology));
}

inline NormalizationStats stats_for(std::span<const Episode> episodes) {
  NormalizationStats stats;
  for (Embodiment e : {Embodiment::HumanHand, Embodiment::Robot}) {
    if (std::any_of(episodes.begin(), episodes.end(), [&](const Episode& ep) { return ep.embodiment == e && !ep.states.empty(); })) {
      stats[e] = compute_stats(episodes, e);
    }
  }
  return stats;
}

inline void write_report(const PipelineConfig& c, const std::string& name, const nlohmann::json& report) {
  fs::create_directories(c.output_dir() / "reports");
  write_json_file(c.output_dir() / "reports" / (name + ".json"), report);
}

}  // namespace detail

/// parse -> clean -> resample -> retarget -> smooth -> IK check -> chunk -> write.
/// Robot logs listed in the config are imported into the same dataset.
inline StageReport cmd_retarget(const PipelineConfig& c, const RunOptions& opts = {}) {
  detail::check_config(c);
  detail::require_file(c, c.paths.calibration, "calibration");
  if (!c.paths.chain.empty()) detail::require_file(c, c.paths.chain, "chain");
  if (c.paths.tracks.empty() && c.paths.robot_logs.empty()) throw Error(ErrorCode::ConfigError, "no tracks or robot logs configured");
  for (const auto& t : c.paths.tracks) detail::require_file(c, t, "track");
  for (const auto& r : c.paths.robot_logs) detail::require_file(c, r, "robot log");
  const bool needs_camera = std::any_of(c.paths.frames_dirs.begin(), c.paths.frames_dirs.end(), [](const auto& d) { return !d.empty(); });
  if (needs_camera) {
    detail::require_file(c, c.paths.intrinsics, "intrinsics");
    if (c.augment.mode != AugmentMode::None && c.paths.topology.empty()) {
      throw Error(ErrorCode::MissingTopology, "augment mode " + to_string(c.augment.mode) + " needs paths.topology");
    }
    if (!c.paths.topology.empty()) detail::require_file(c, c.paths.topology, "topology");
    for (const auto& d : c.paths.frames_dirs) {
      if (!d.empty() && !fs::is_directory(c.resolve(d))) throw Error(ErrorCode::ConfigError, "frames directory " + c.resolve(d).string() + " does not exist");
    }
  }

  const KinematicChain chain = detail::chain_for(c);
  const HandEyeCalibration calib = load_calibration(c.resolve(c.paths.calibration).string());
  const CameraModel cam = needs_camera ? load_intrinsics(c.resolve(c.paths.intrinsics).string()) : CameraModel{};
  const std::optional<MeshTopology> topo = needs_camera ? detail::topology_for(c) : std::nullopt;

  detail::say(opts, "retargeting " + std::to_string(c.paths.tracks.size()) + " track(s) with " + std::to_string(c.jobs) + " job(s)");
  auto human = detail::parallel_map(c.paths.tracks.size(), c.jobs, [&](std::size_t i) {
    return detail::process_track(c, i, chain, calib, cam, topo);
  });
  auto robot = detail::parallel_map(c.paths.robot_logs.size(), c.jobs, [&](std::size_t i) {
    return import_robot_log(c.resolve(c.paths.robot_logs[i]), c.views, c.horizon);
  });

  std::vector<Episode> episodes;
  nlohmann::json tracks = nlohmann::json::array();
  bool all_reachable = true;
  for (auto& h : human) {
    all_reachable = all_reachable && h.reachable;
    tracks.push_back(h.report);
    detail::say(opts, h.episode.episode_id + ": reachable_fraction " + h.report["reachable_fraction"].dump());
    episodes.push_back(std::move(h.episode));
  }
  nlohmann::json robots = nlohmann::json::array();
  for (auto& r : robot) {
    robots.push_back({{"episode", r.episode_id}, {"states", r.states.size()}, {"chunks", r.chunks.size()}});
    episodes.push_back(std::move(r));
  }
  std::map<std::string, int> seen;
  for (const auto& ep : episodes) {
    if (++seen[ep.episode_id] > 1) throw Error(ErrorCode::ConfigError, "duplicate episode id " + ep.episode_id);
  }

  StageReport out;
  out.report = {{"reachable_floor", c.retarget.reachable_floor}, {"tracks", tracks}, {"robot_logs", robots},
                {"ok", all_reachable}, {"dry_run", opts.dry_run}};
  out.exit = all_reachable ? ExitCode::Ok : ExitCode::ValidationFailure;
  if (opts.dry_run) return out;

  const fs::path root = c.dataset_dir();
  const fs::path stage = c.output_dir() / "dataset.staging";
  fs::remove_all(stage);
  DatasetManifest manifest;
  manifest.root = stage;
  manifest.horizon = c.horizon;
  manifest.views = c.views;
  for (const auto& ep : episodes) {
    const fs::path dir = write_episode(stage / "episodes", ep);
    manifest.episodes.push_back(manifest_entry_for(stage, dir, ep));
  }
  write_manifest(manifest);
  detail::write_json_file(stage / manifest.stats_file, to_json(detail::stats_for(episodes)));
  fs::remove_all(root);
  fs::rename(stage, root);
  detail::write_report(c, "retarget", out.report);
  detail::say(opts, "wrote " + std::to_string(episodes.size()) + " episode(s) to " + root.string());
  return out;
}

/// Augments every configured frames directory and writes the result next to
/// the originals' mirror under <output>/augmented/<track>_<mode>/.
inline StageReport cmd_augment(const PipelineConfig& c, const RunOptions& opts = {}) {
  detail::check_config(c);
  if (c.paths.tracks.empty()) throw Error(ErrorCode::ConfigError, "no tracks configured");
  if (c.paths.frames_dirs.size() != c.paths.tracks.size()) throw Error(ErrorCode::ConfigError, "augment needs one frames directory per track");
  for (const auto& t : c.paths.tracks) detail::require_file(c, t, "track");
  detail::require_file(c, c.paths.intrinsics, "intrinsics");
  if (c.augment.mode != AugmentMode::None && c.paths.topology.empty()) {
    throw Error(ErrorCode::MissingTopology, "augment mode " + to_string(c.augment.mode) + " needs paths.topology");
  }
  if (!c.paths.topology.empty()) detail::require_file(c, c.paths.topology, "topology");
  const CameraModel cam = load_intrinsics(c.resolve(c.paths.intrinsics).string());
  const std::optional<MeshTopology> topo = detail::topology_for(c);

  struct Result {
    std::string stem;
    std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> files;  // copies for mode None keep source bytes
    nlohmann::json report;
  };
  auto results = detail::parallel_map(c.paths.tracks.size(), c.jobs, [&](std::size_t i) {
    Result r;
    r.stem = detail::track_stem(c.paths.tracks[i]);
    if (c.paths.frames_dirs[i].empty()) throw Error(ErrorCode::ConfigError, "track " + c.paths.tracks[i] + " has no frames directory");
    const ParsedHandTrack parsed = parse_hand_track(c.resolve(c.paths.tracks[i]).string());
    const auto files = detail::list_frames(c.resolve(c.paths.frames_dirs[i]));
    std::vector<Image> frames;
    std::vector<HandFrame> hands;
    std::vector<fs::path> names;
    for (const auto& [n, path] : files) {
      frames.push_back(read_png(path));
      if (frames.back().width != cam.width || frames.back().height != cam.height) {
        throw Error(ErrorCode::ViewMismatch, path.string() + ": image size differs from the intrinsics");
      }
      hands.push_back(detail::nearest_hand(parsed.track, static_cast<double>(n) / parsed.track.source_fps));
      names.push_back(path);
    }
    AugmentConfig acfg = c.augment;
    acfg.color_seed = derive_seed(derive_seed(c.seed, "augment"), r.stem);
    const AugmentedEpisode aug = augment_episode(frames, hands, cam, topo ? &*topo : nullptr, acfg);

    // Coverage of both variants, for the subset check in the report.
    std::size_t full_total = 0, partial_total = 0;
    bool subset = true;
    if (topo) {
      MeshTopology labelled = *topo;
      for (std::size_t k = 0; k < hands.size(); ++k) {
        if (labelled.labels.empty() && hands[k].vertices) {
          labelled.labels = label_by_nearest_keypoint(*hands[k].vertices, hands[k].keypoints);
          labelled.labels_approximate = true;
        }
        const auto full = frame_coverage(hands[k], cam, labelled, kAllParts);
        const auto part = labelled.labels.empty() ? std::nullopt : frame_coverage(hands[k], cam, labelled, kThumbIndex);
        full_total += full ? full->count() : 0;
        partial_total += part ? part->count() : 0;
        if (part) {
          for (int y = 0; y < part->height && subset; ++y) {
            for (int x = 0; x < part->width; ++x) {
              if (part->covered(x, y) && !(full && full->covered(x, y))) {
                subset = false;
                break;
              }
            }
          }
        }
      }
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto bytes = c.augment.mode == AugmentMode::None ? detail::read_bytes(names[k]) : encode_png(aug.frames[k]);
      r.files.emplace_back(names[k].filename(), bytes);
    }
    r.report = {{"track", c.paths.tracks[i]},
                {"mode", to_string(c.augment.mode)},
                {"frames", aug.stats.frames},
                {"augmented_frames", aug.stats.augmented},
                {"frames_without_mesh", aug.stats.without_mesh},
                {"empty_renders", aug.stats.empty_render},
                {"covered_pixels", aug.stats.covered_pixels},
                {"full_covered_pixels", full_total},
                {"partial_covered_pixels", partial_total},
                {"partial_subset_of_full", subset}};
    return r;
  });

  StageReport out;
  nlohmann::json tracks = nlohmann::json::array();
  for (const auto& r : results) tracks.push_back(r.report);
  out.report = {{"tracks", tracks}, {"dry_run", opts.dry_run}};
  if (opts.dry_run) return out;
  for (const auto& r : results) {
    const fs::path dir = c.output_dir() / "augmented" / (r.stem + "_" + to_string(c.augment.mode));
    const fs::path stage = dir.string() + ".staging";
    fs::remove_all(stage);
    fs::create_directories(stage);
    for (const auto& [name, bytes] : r.files) detail::write_bytes_atomic(stage / name, bytes);
    fs::remove_all(dir);
    fs::rename(stage, dir);
    detail::say(opts, "wrote " + std::to_string(r.files.size()) + " frame(s) to " + dir.string());
  }
  detail::write_report(c, "augment", out.report);
  return out;
}

/// Builds the sample index, refreshes statistics and materializes the schedule.
inline StageReport cmd_mix(const PipelineConfig& c, const RunOptions& opts = {}) {
  const fs::path root = c.dataset_dir();
  if (!fs::exists(root / "manifest.json")) throw Error(ErrorCode::ConfigError, "no dataset at " + root.string() + "; run retarget first");
  const DatasetManifest manifest = read_manifest(root);
  const SampleIndex index = build_index(manifest);
  const std::size_t nh = index.count(Embodiment::HumanHand);
  const std::size_t nr = index.count(Embodiment::Robot);
  MixPlan plan;
  plan.batch_size = c.mix.batch_size;
  plan.human_fraction = c.mix.human_fraction.value_or(default_human_fraction(nh, nr));
  plan.seed = derive_seed(c.seed, "mix");
  plan.human_with_replacement = c.mix.human_with_replacement;
  plan.robot_with_replacement = c.mix.robot_with_replacement;
  plan.validate();
  const BatchSampler sampler(plan, index);
  const std::size_t n_batches = c.mix.n_batches > 0 ? c.mix.n_batches : sampler.epoch_batches();

  std::vector<Episode> episodes;
  for (const auto& e : manifest.episodes) episodes.push_back(read_episode(root / e.path, {false, nullptr}));
  const NormalizationStats stats = detail::stats_for(episodes);
  const Schedule schedule = generate_schedule(plan, index, n_batches, ".", manifest.stats_file);

  StageReport out;
  out.report = {{"human_samples", nh},
                {"robot_samples", nr},
                {"human_fraction", plan.human_fraction},
                {"human_per_batch", plan.human_per_batch()},
                {"robot_per_batch", plan.robot_per_batch()},
                {"batches", n_batches},
                {"dry_run", opts.dry_run}};
  detail::say(opts, "index: " + std::to_string(nh) + " human, " + std::to_string(nr) + " robot chunk(s)");
  if (opts.dry_run) return out;
  detail::write_json_file(root / manifest.stats_file, to_json(stats));
  detail::write_json_file(root / "schedule.json", to_json(schedule));
  detail::write_report(c, "mix", out.report);
  return out;
}

inline StageReport cmd_validate(const fs::path& dataset_root) {
  const auto findings = validate_dataset(dataset_root);
  StageReport out;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : findings) list.push_back({{"episode", f.episode}, {"message", f.message}});
  out.report = {{"dataset", dataset_root.string()}, {"findings", list}, {"clean", findings.empty()}};
  out.exit = findings.empty() ? ExitCode::Ok : ExitCode::ValidationFailure;
  return out;
}

namespace detail {

inline std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys, double x0, double y0, double w,
                                double h, double ymin, double ymax, const char* color) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  const double xmin = xs.empty() ? 0.0 : xs.front();
  const double xmax = xs.empty() ? 1.0 : std::max(xs.back(), xmin + 1e-9);
  const double span = ymax > ymin ? ymax - ymin : 1.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x0 + w * (xs[i] - xmin) / (xmax - xmin), y0 + h - h * (ys[i] - ymin) / span);
    s << buf;
  }
  s << "\"/>\n";
  return s.str();
}

/// Position and gripper traces over time.
inline std::string trace_svg(const Episode& ep) {
  std::vector<double> t;
  std::array<std::vector<double>, 4> series;
  for (std::size_t i = 0; i < ep.states.size(); ++i) {
    t.push_back(ep.timestamps[i]);
    for (int d = 0; d < 3; ++d) series[d].push_back(ep.states[i][d]);
    series[3].push_back(ep.states[i][7]);
  }
  double pmin = 0.0, pmax = 0.0;
  for (int d = 0; d < 3; ++d) {
    for (double v : series[d]) {
      pmin = std::min(pmin, v);
      pmax = std::max(pmax, v);
    }
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n"
    << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n"
    << "<text x=\"10\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" << ep.episode_id << " position (m)</text>\n"
    << "<text x=\"10\" y=\"216\" font-family=\"monospace\" font-size=\"12\">gripper</text>\n"
    << "<rect x=\"40\" y=\"24\" width=\"580\" height=\"160\" fill=\"none\" stroke=\"#999\"/>\n"
    << "<rect x=\"40\" y=\"224\" width=\"580\" height=\"160\" fill=\"none\" stroke=\"#999\"/>\n";
  const char* colors[3] = {"#d62728", "#2ca02c", "#1f77b4"};
  for (int d = 0; d < 3; ++d) s << svg_polyline(t, series[d], 40, 24, 580, 160, pmin, pmax, colors[d]);
  s << svg_polyline(t, series[3], 40, 224, 580, 160, 0.0, 1.0, "#000000");
  s << "</svg>\n";
  return s.str();
}

/// First top-view frame with the end-effector path projected on it.
inline std::optional<Image> overlay_png(const Episode& ep, const CameraModel& cam, const RigidTransform& cam_to_base) {
  const ViewStream* top = ep.view("top");
  if (!top || top->zero_padded || top->frames.empty()) return std::nullopt;
  Image img = top->frames.front();
  const RigidTransform base_to_cam = cam_to_base.inverse();
  for (const auto& r : ep.states) {
    const Vec3 p = base_to_cam.apply(Vec3(r[0], r[1], r[2]));
    if (p.z() <= kMinDepth) continue;
    const PixelCoord px = project_point(cam, p);
    const double g = std::clamp(static_cast<double>(r[7]), 0.0, 1.0);
    const Rgb color{255, static_cast<std::uint8_t>(std::lround(255.0 * g)), 0};
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = static_cast<int>(std::floor(px.u)) + dx;
        const int y = static_cast<int>(std::floor(px.v)) + dy;
        if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.set(x, y, color);
      }
    }
  }
  return img;
}

}  // namespace detail

/// Writes trace plots for every episode and overlay previews for human
/// episodes with footage.
inline StageReport cmd_inspect(const PipelineConfig& c, const RunOptions& opts = {}) {
  const fs::path root = c.dataset_dir();
  if (!fs::exists(root / "manifest.json")) throw Error(ErrorCode::ConfigError, "no dataset at " + root.string() + "; run retarget first");
  const DatasetManifest manifest = read_manifest(root);
  std::optional<CameraModel> cam;
  std::optional<HandEyeCalibration> calib;
  if (!c.paths.intrinsics.empty() && fs::exists(c.resolve(c.paths.intrinsics))) cam = load_intrinsics(c.resolve(c.paths.intrinsics).string());
  if (!c.paths.calibration.empty() && fs::exists(c.resolve(c.paths.calibration))) calib = load_calibration(c.resolve(c.paths.calibration).string());
  const fs::path out_dir = c.output_dir() / "inspect";
  StageReport out;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : manifest.episodes) {
    const Episode ep = read_episode(root / e.path);
    nlohmann::json item = {{"episode", ep.episode_id}, {"trace", ep.episode_id + "_trace.svg"}, {"overlay", nullptr}};
    if (!opts.dry_run) {
      fs::create_directories(out_dir);
      detail::write_text_atomic(out_dir / (ep.episode_id + "_trace.svg"), detail::trace_svg(ep));
    }
    if (cam && calib && ep.embodiment == Embodiment::HumanHand) {
      if (auto img = detail::overlay_png(ep, *cam, calib->cam_to_base)) {
        item["overlay"] = ep.episode_id + "_overlay.png";
        if (!opts.dry_run) write_png(out_dir / (ep.episode_id + "_overlay.png"), *img);
      }
    }
    items.push_back(item);
  }
  out.report = {{"episodes", items}, {"dry_run", opts.dry_run}};
  if (!opts.dry_run) detail::write_report(c, "inspect", out.report);
  return out;
}

}  // namespace handbridge
