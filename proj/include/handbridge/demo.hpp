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

// Self-contained demo input tree: a scripted grasp track with camera frames,
// calibration files, mesh topology, one robot log and a pipeline config.
//
//   <dir>/config.json
//   <dir>/tracks/grasp.jsonl          frames/grasp/NNNNNN.png
//   <dir>/robot/robot_000.jsonl       robot/frames/{top,wrist}/NNNNNN.png
//   <dir>/calib/handeye.json          calib/intrinsics.json
//   <dir>/mesh/topology.json          chain.json

#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "handbridge/calibration.hpp"
#include "handbridge/io.hpp"
#include "handbridge/kinematics.hpp"
#include "handbridge/pipeline.hpp"
#include "handbridge/synthetic.hpp"

namespace handbridge::synthetic {

struct DemoSpec {
  std::uint64_t seed = 7;
  GraspSpec grasp;
  std::size_t robot_frames = 40;
};

inline void write_robot_log(const fs::path& dir, const KinematicChain& chain, const DemoSpec& spec, const CameraModel& cam) {
  fs::create_directories(dir / "frames" / "top");
  fs::create_directories(dir / "frames" / "wrist");
  std::ostringstream log;
  log << nlohmann::json{{"type", "meta"}, {"format", "handbridge.robotlog"}, {"version", 1},
                        {"episode_id", "robot_000"}, {"task_text", "pick up the block"}}.dump()
      << "\n";
  const JointVector q0 = (JointVector() << 0.2, 0.0, 0.45, 0.8, 0.1, 0.0).finished();
  const JointVector q1 = (JointVector() << -0.25, 0.2, 0.3, 1.0, -0.15, 0.2).finished();
  for (std::size_t i = 0; i < spec.robot_frames; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(spec.robot_frames - 1);
    const RigidTransform tool = forward_kinematics(chain, q0 + s * (q1 - q0));
    const auto q = quat_from_matrix(tool.rotation).wxyz();
    const std::string name = frame_file_name(i);
    write_png(dir / "frames" / "top" / name, backdrop(cam.width, cam.height, derive_seed(spec.seed, "robot.top") + i));
    write_png(dir / "frames" / "wrist" / name, backdrop(cam.width, cam.height, derive_seed(spec.seed, "robot.wrist") + i));
    nlohmann::json rec = {{"t", static_cast<double>(i) / 30.0},
                          {"p", {tool.translation.x(), tool.translation.y(), tool.translation.z()}},
                          {"q", {q[0], q[1], q[2], q[3]}},
                          {"g", 1.0 - s},
                          {"images", {{"top", "frames/top/" + name}, {"wrist", "frames/wrist/" + name}}}};
    log << rec.dump() << "\n";
  }
  handbridge::detail::write_text_atomic(dir / "robot_000.jsonl", log.str());
}

/// Writes the demo tree and returns its config (already saved as config.json).
inline PipelineConfig write_demo(const fs::path& dir, const DemoSpec& spec = {}) {
  fs::create_directories(dir);
  const KinematicChain chain = default_chain();
  const RigidTransform cam_to_base = demo_cam_to_base();
  const CameraModel cam = demo_camera();

  const GraspTrack grasp = grasp_track(chain, cam_to_base, spec.grasp);
  fs::create_directories(dir / "tracks");
  write_hand_track((dir / "tracks" / "grasp.jsonl").string(), grasp.track);
  fs::create_directories(dir / "frames" / "grasp");
  for (std::size_t i = 0; i < grasp.track.frames.size(); ++i) {
    write_png(dir / "frames" / "grasp" / frame_file_name(i), backdrop(cam.width, cam.height, derive_seed(spec.seed, "frame") + i));
  }

  fs::create_directories(dir / "calib");
  save_calibration((dir / "calib" / "handeye.json").string(), {cam_to_base, "demo_cam", std::nullopt});
  save_intrinsics((dir / "calib" / "intrinsics.json").string(), cam);
  fs::create_directories(dir / "mesh");
  save_topology(dir / "mesh" / "topology.json", hand_topology());
  handbridge::detail::write_text_atomic(dir / "chain.json", std::string(kDefaultChainJson));
  write_robot_log(dir / "robot", chain, spec, cam);

  PipelineConfig c;
  c.base_dir = dir;
  c.seed = spec.seed;
  c.task_text = "pick up the block";
  c.paths.tracks = {"tracks/grasp.jsonl"};
  c.paths.frames_dirs = {"frames/grasp"};
  c.paths.robot_logs = {"robot/robot_000.jsonl"};
  c.paths.calibration = "calib/handeye.json";
  c.paths.intrinsics = "calib/intrinsics.json";
  c.paths.topology = "mesh/topology.json";
  c.paths.chain = "chain.json";
  c.paths.output = "out";
  c.retarget.reachable_floor = 1.0;
  c.views = {{"top", {cam.width, cam.height}}, {"wrist", {cam.width, cam.height}}};
  c.horizon = 16;
  c.mix.batch_size = 16;
  save_config(dir / "config.json", c);
  return c;
}

}  // namespace handbridge::synthetic
