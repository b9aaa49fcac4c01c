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

#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "handbridge/mixer.hpp"

namespace hb = handbridge;
namespace fs = std::filesystem;

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

hb::DatasetManifest manifest(const std::vector<std::pair<hb::Embodiment, std::size_t>>& episodes) {
  hb::DatasetManifest m;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    hb::ManifestEntry e;
    e.id = (episodes[i].first == hb::Embodiment::Robot ? "robot_" : "human_") + std::to_string(i);
    e.embodiment = episodes[i].first;
    e.num_chunks = episodes[i].second;
    e.num_states = e.num_chunks + m.horizon;
    m.episodes.push_back(e);
  }
  return m;
}

const auto H = hb::Embodiment::HumanHand;
const auto R = hb::Embodiment::Robot;

}  // namespace

TEST(BuildIndex, CountsChunkPositions) {
  const auto index = hb::build_index(manifest({{H, 10}, {H, 10}, {R, 5}}));
  EXPECT_EQ(index.count(H), 20u);
  EXPECT_EQ(index.count(R), 5u);
  EXPECT_EQ(index.episode_ids.size(), 3u);
}

TEST(BuildIndex, MissingSourceIsEmptyEmbodiment) {
  EXPECT_EQ(code_of([] { hb::build_index(manifest({{H, 10}})); }), hb::ErrorCode::EmptyEmbodiment);
  EXPECT_EQ(code_of([] { hb::build_index(manifest({})); }), hb::ErrorCode::EmptyEmbodiment);
  EXPECT_EQ(code_of([] { hb::build_index(manifest({{H, 10}, {R, 0}})); }), hb::ErrorCode::EmptyEmbodiment);
}

TEST(MixPlan, SplitExamplesAndValidation) {
  hb::MixPlan p;
  p.batch_size = 32;
  p.human_fraction = 0.5;
  EXPECT_EQ(p.human_per_batch(), 16u);
  EXPECT_EQ(p.robot_per_batch(), 16u);
  p.batch_size = 10;
  p.human_fraction = 0.9;
  EXPECT_EQ(p.human_per_batch(), 9u);
  EXPECT_EQ(p.robot_per_batch(), 1u);
  p.human_fraction = 0.95;
  EXPECT_NO_THROW(p.validate());
  p.batch_size = 1;
  p.human_fraction = 0.5;
  EXPECT_EQ(code_of([&] { p.validate(); }), hb::ErrorCode::ConfigError);
  p.batch_size = 10;
  p.human_fraction = 0.05;
  EXPECT_EQ(code_of([&] { p.validate(); }), hb::ErrorCode::ConfigError);
  p.human_fraction = 1.0;
  EXPECT_EQ(code_of([&] { p.validate(); }), hb::ErrorCode::ConfigError);
}

TEST(MixPlan, DefaultFractionIsProportionalAndCapped) {
  EXPECT_EQ(hb::default_human_fraction(50, 50), 0.5);
  EXPECT_EQ(hb::default_human_fraction(10, 90), 0.5);
  EXPECT_EQ(hb::default_human_fraction(70, 30), 0.7);
  EXPECT_EQ(hb::default_human_fraction(990, 10), 0.9);
}

TEST(NextBatch, ExactSplitBothSourcesAndRoutes) {
  const auto index = hb::build_index(manifest({{H, 40}, {H, 17}, {R, 6}, {R, 3}}));
  for (double rho : {0.5, 0.6, 0.75, 0.9}) {
    hb::MixPlan plan;
    plan.batch_size = 20;
    plan.human_fraction = rho;
    plan.seed = 99;
    const auto schedule = hb::generate_schedule(plan, index, 300);
    for (const auto& batch : schedule.batches) {
      ASSERT_EQ(batch.size(), 20u);
      std::size_t h = 0;
      for (const auto& p : batch) {
        if (p.embodiment == H) {
          ++h;
          EXPECT_EQ(p.route, "human_action_head");
          EXPECT_EQ(p.episode_id.rfind("human_", 0), 0u);
        } else {
          EXPECT_EQ(p.route, "robot_action_head");
          EXPECT_EQ(p.episode_id.rfind("robot_", 0), 0u);
        }
        const std::size_t chunks = p.episode_id == "human_0" ? 40 : p.episode_id == "human_1" ? 17 : p.episode_id == "robot_2" ? 6 : 3;
        EXPECT_LT(p.t, chunks);
      }
      EXPECT_EQ(h, plan.human_per_batch());
      EXPECT_GE(h, 1u);
      EXPECT_GE(20u - h, 1u);
    }
  }
}

TEST(NextBatch, DeterministicAndOrderIndependent) {
  const auto index = hb::build_index(manifest({{H, 30}, {R, 4}}));
  hb::MixPlan plan;
  plan.batch_size = 8;
  plan.seed = 7;
  const auto a = hb::generate_schedule(plan, index, 50);
  const auto b = hb::generate_schedule(plan, index, 50);
  EXPECT_EQ(a.batches, b.batches);
  hb::BatchSampler sampler(plan, index);
  for (std::size_t k = 50; k-- > 0;) EXPECT_EQ(sampler.next_batch(k), a.batches[k]);
  EXPECT_EQ(hb::next_batch(plan, index, 13), a.batches[13]);
  plan.seed = 8;
  EXPECT_NE(hb::generate_schedule(plan, index, 50).batches, a.batches);
}

TEST(NextBatch, HumanPassesAreWithoutReplacement) {
  const auto index = hb::build_index(manifest({{H, 25}, {H, 23}, {R, 2}}));
  hb::MixPlan plan;
  plan.batch_size = 16;
  plan.human_fraction = 0.75;
  hb::BatchSampler sampler(plan, index);
  EXPECT_EQ(sampler.epoch_batches(), 4u);
  // 48 human chunks, 12 per batch: each 4-batch block covers every chunk once.
  for (std::size_t pass = 0; pass < 3; ++pass) {
    std::multiset<std::pair<std::string, std::size_t>> seen;
    for (std::size_t b = 4 * pass; b < 4 * pass + 4; ++b) {
      for (const auto& p : sampler.next_batch(b)) {
        if (p.embodiment == H) seen.insert({p.episode_id, p.t});
      }
    }
    EXPECT_EQ(seen.size(), 48u);
    EXPECT_EQ((std::set<std::pair<std::string, std::size_t>>(seen.begin(), seen.end()).size()), 48u);
  }
}

TEST(NextBatch, RobotDrawsCoverScarceSourceUniformly) {
  const auto index = hb::build_index(manifest({{H, 100}, {R, 5}}));
  hb::MixPlan plan;
  plan.batch_size = 10;
  plan.human_fraction = 0.5;
  plan.seed = 3;
  const auto s = hb::generate_schedule(plan, index, 2000);
  std::map<std::size_t, std::size_t> counts;
  for (const auto& batch : s.batches) {
    for (const auto& p : batch) {
      if (p.embodiment == R) ++counts[p.t];
    }
  }
  ASSERT_EQ(counts.size(), 5u);
  // 10,000 draws over 5 chunks: expected 2000 each, sd about 40.
  for (const auto& [t, c] : counts) EXPECT_NEAR(static_cast<double>(c), 2000.0, 200.0);
}

TEST(Schedule, FrequenciesOverTenThousandBatches) {
  const auto index = hb::build_index(manifest({{H, 500}, {R, 20}}));
  for (double rho : {0.5, 0.75, 0.875}) {
    hb::MixPlan plan;
    plan.batch_size = 32;
    plan.human_fraction = rho;
    plan.seed = 11;
    const auto s = hb::generate_schedule(plan, index, 10000);
    std::size_t human = 0, total = 0;
    for (const auto& batch : s.batches) {
      for (const auto& p : batch) {
        human += p.embodiment == H;
        ++total;
      }
    }
    EXPECT_NEAR(static_cast<double>(human) / static_cast<double>(total), rho, 0.001 * rho);
  }
}

TEST(Schedule, FileReplaysThroughNextBatch) {
  const auto index = hb::build_index(manifest({{H, 12}, {H, 9}, {R, 4}}));
  hb::MixPlan plan;
  plan.batch_size = 6;
  plan.human_fraction = 2.0 / 3.0;
  plan.seed = 2024;
  const fs::path dir = fs::temp_directory_path() / "hb_mixer";
  fs::create_directories(dir);
  hb::emit_training_manifest(plan, index, 40, dir / "schedule.json", "dataset", "stats.json");
  const auto j = nlohmann::json::parse(std::ifstream(dir / "schedule.json"));
  EXPECT_EQ(j["format"], "handbridge.schedule");
  const auto s = hb::schedule_from_json(j);
  EXPECT_EQ(s.dataset, "dataset");
  EXPECT_EQ(s.stats, "stats.json");
  EXPECT_EQ(s.routes.at(R), "robot_action_head");
  ASSERT_EQ(s.batches.size(), 40u);
  hb::BatchSampler replay(s.plan, index);
  for (std::size_t b = 0; b < 40; ++b) EXPECT_EQ(replay.next_batch(b), s.batches[b]);
  // Serializing the replay gives the same bytes.
  std::ifstream in(dir / "schedule.json");
  const std::string on_disk((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(nlohmann::json::parse(on_disk), hb::to_json(hb::generate_schedule(s.plan, index, 40, "dataset", "stats.json")));
}

TEST(Schedule, ZeroBatchesIsValidEmptyFile) {
  const auto index = hb::build_index(manifest({{H, 3}, {R, 3}}));
  const fs::path path = fs::temp_directory_path() / "hb_mixer_empty.json";
  hb::emit_training_manifest({}, index, 0, path);
  const auto s = hb::schedule_from_json(nlohmann::json::parse(std::ifstream(path)));
  EXPECT_TRUE(s.batches.empty());
  EXPECT_EQ(s.plan.batch_size, 32u);
}
