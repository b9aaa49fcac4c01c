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

// handbridge: command line front end for the pipeline stages.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "handbridge/demo.hpp"
#include "handbridge/pipeline.hpp"

namespace hb = handbridge;

namespace {

int code(hb::ExitCode c) { return static_cast<int>(c); }

void print_report(const hb::StageReport& r) { std::cout << r.report.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("handbridge"));
  CLI::App app{"handbridge: hand tracks to robot-ready co-training datasets"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool dry_run = false;
  std::string log_level;
  app.add_option("--config", config_path, "pipeline config file (JSON)");
  app.add_option("--seed", seed, "global seed, overrides the config");
  app.add_option("--jobs", jobs, "worker threads, overrides the config")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", dry_run, "run all checks, write nothing");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  auto* retarget = app.add_subcommand("retarget", "build episodes from hand tracks and robot logs");
  auto* augment = app.add_subcommand("augment", "recolor the hand in camera frames");
  auto* mix = app.add_subcommand("mix", "compute statistics and the balanced batch schedule");
  auto* inspect = app.add_subcommand("inspect", "write trace plots and overlay previews");
  auto* validate = app.add_subcommand("validate", "re-check every dataset invariant");
  std::string dataset_root;
  validate->add_option("dataset", dataset_root, "dataset root (defaults to <output>/dataset from the config)");
  auto* synth = app.add_subcommand("synth", "write the synthetic demo inputs");
  std::string synth_dir;
  synth->add_option("dir", synth_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(hb::ExitCode::ConfigError);
  }

  try {
    hb::PipelineConfig cfg;
    if (!config_path.empty()) {
      cfg = hb::load_config(config_path);
    } else if (!synth->parsed() && !(validate->parsed() && !dataset_root.empty())) {
      throw hb::Error(hb::ErrorCode::ConfigError, "--config is required for this subcommand");
    }
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (!log_level.empty()) cfg.log_level = log_level;
    const auto level = spdlog::level::from_str(cfg.log_level);
    if (level == spdlog::level::off && cfg.log_level != "off") {
      throw hb::Error(hb::ErrorCode::ConfigError, "unknown log level '" + cfg.log_level + "'");
    }
    spdlog::set_level(level);
    spdlog::set_pattern("[%l] %v");

    hb::RunOptions opts;
    opts.dry_run = dry_run;
    opts.log = [](const std::string& msg) { spdlog::info("{}", msg); };

    hb::StageReport report;
    if (synth->parsed()) {
      hb::synthetic::DemoSpec spec;
      if (seed) spec.seed = *seed;
      if (dry_run) {
        spdlog::info("dry run: would write demo inputs to {}", synth_dir);
        return 0;
      }
      hb::synthetic::write_demo(synth_dir, spec);
      spdlog::info("demo inputs written to {}; next: handbridge --config {}/config.json retarget", synth_dir, synth_dir);
      return 0;
    }
    if (retarget->parsed()) report = hb::cmd_retarget(cfg, opts);
    if (augment->parsed()) report = hb::cmd_augment(cfg, opts);
    if (mix->parsed()) report = hb::cmd_mix(cfg, opts);
    if (inspect->parsed()) report = hb::cmd_inspect(cfg, opts);
    if (validate->parsed()) {
      report = hb::cmd_validate(dataset_root.empty() ? cfg.dataset_dir() : hb::fs::path(dataset_root));
      for (const auto& f : report.report["findings"]) {
        spdlog::warn("{}: {}", f["episode"].get<std::string>(), f["message"].get<std::string>());
      }
    }
    print_report(report);
    if (report.exit != hb::ExitCode::Ok) spdlog::error("stage finished with validation failures");
    return code(report.exit);
  } catch (const hb::Error& e) {
    spdlog::error("{}: {}", hb::to_string(e.code()), e.what());
    return code(hb::exit_code_for(e.code()));
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("IoError: {}", e.what());
    return code(hb::ExitCode::InputDataError);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return code(hb::ExitCode::InputDataError);
  }
}
