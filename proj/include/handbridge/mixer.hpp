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

// Balanced human/robot batch composition.
//
// Every batch holds exactly floor(rho * B) human pointers and the rest robot
// pointers. Human samples walk a fresh permutation of the human index per
// pass; robot samples are drawn with replacement. Batch b depends only on
// (seed, plan, index, b).
//
// Schedule file (JSON):
//   {"format":"handbridge.schedule","format_version":1,
//    "dataset":"<root>","stats":"stats.json","seed":7,
//    "batch_size":32,"human_fraction":0.75,"human_per_batch":24,
//    "routes":{"human":"human_action_head","robot":"robot_action_head"},
//    "batches":[[{"episode":"human_000","t":3,"embodiment":"human",
//                 "route":"human_action_head"}, ...], ...]}

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "handbridge/dataset.hpp"
#include "handbridge/errors.hpp"
#include "handbridge/io.hpp"
#include "handbridge/rng.hpp"

namespace handbridge {

struct SamplePointer {
  std::string episode_id;
  std::size_t t = 0;
  Embodiment embodiment = Embodiment::HumanHand;
  std::string route;

  bool operator==(const SamplePointer&) const = default;
};

struct MixPlan {
  std::size_t batch_size = 32;
  double human_fraction = 0.75;
  std::uint64_t seed = 0;
  std::size_t epoch_batches = 0;  // 0: one pass over the human index
  bool human_with_replacement = false;
  bool robot_with_replacement = true;

  std::size_t human_per_batch() const {
    return static_cast<std::size_t>(std::floor(human_fraction * static_cast<double>(batch_size) + 1e-9));
  }
  std::size_t robot_per_batch() const { return batch_size - human_per_batch(); }

  void validate() const {
    if (!(human_fraction > 0.0 && human_fraction < 1.0)) {
      throw Error(ErrorCode::ConfigError, "human_fraction must lie in (0, 1)");
    }
    const std::size_t h = human_per_batch();
    if (h < 1 || h >= batch_size) {
      throw Error(ErrorCode::ConfigError, "batch_size " + std::to_string(batch_size) + " with human_fraction " +
                                              std::to_string(human_fraction) + " leaves one source without samples");
    }
  }
};

/// Proportional share of human chunks, capped to [0.5, 0.9].
inline double default_human_fraction(std::size_t human_samples, std::size_t robot_samples) {
  const std::size_t total = human_samples + robot_samples;
  if (total == 0) return 0.5;
  return std::clamp(static_cast<double>(human_samples) / static_cast<double>(total), 0.5, 0.9);
}

struct SourceIndex {
  struct Entry {
    std::size_t episode = 0;  // position in episode_ids
    std::size_t t = 0;
  };
  std::vector<Entry> entries;
};

struct SampleIndex {
  std::vector<std::string> episode_ids;
  std::map<Embodiment, std::string> routes;
  std::map<Embodiment, SourceIndex> sources;

  std::size_t count(Embodiment e) const {
    auto it = sources.find(e);
    return it == sources.end() ? 0 : it->second.entries.size();
  }
};

/// Enumerates every (episode, t) chunk position per embodiment, in manifest order.
inline SampleIndex build_index(const DatasetManifest& manifest) {
  SampleIndex index;
  index.routes = manifest.routes;
  index.sources[Embodiment::HumanHand];
  index.sources[Embodiment::Robot];
  for (const auto& e : manifest.episodes) {
    const std::size_t ep = index.episode_ids.size();
    index.episode_ids.push_back(e.id);
    auto& src = index.sources[e.embodiment].entries;
    for (std::size_t t = 0; t < e.num_chunks; ++t) src.push_back({ep, t});
  }
  for (Embodiment e : {Embodiment::HumanHand, Embodiment::Robot}) {
    if (index.count(e) == 0) {
      throw Error(ErrorCode::EmptyEmbodiment, "no " + to_string(e) + " chunks in the dataset; mixing needs both sources");
    }
    if (!index.routes.contains(e)) throw Error(ErrorCode::EmptyEmbodiment, "no action-head route for " + to_string(e));
  }
  return index;
}

/// Stateless batch generator. Permutations of the human index are cached per
/// pass; results do not depend on the order in which batches are requested.
class BatchSampler {
 public:
  BatchSampler(MixPlan plan, const SampleIndex& index) : plan_(plan), index_(&index) {
    plan_.validate();
    for (Embodiment e : {Embodiment::HumanHand, Embodiment::Robot}) {
      if (index.count(e) == 0) throw Error(ErrorCode::EmptyEmbodiment, "no " + to_string(e) + " samples");
    }
  }

  const MixPlan& plan() const { return plan_; }

  /// Batches in one epoch.
  std::size_t epoch_batches() const {
    if (plan_.epoch_batches > 0) return plan_.epoch_batches;
    const std::size_t n = index_->count(Embodiment::HumanHand);
    const std::size_t per = plan_.human_per_batch();
    return (n + per - 1) / per;
  }

  std::vector<SamplePointer> next_batch(std::size_t b) {
    std::vector<SamplePointer> out;
    out.reserve(plan_.batch_size);
    draw(Embodiment::HumanHand, plan_.human_per_batch(), plan_.human_with_replacement, b, out);
    draw(Embodiment::Robot, plan_.robot_per_batch(), plan_.robot_with_replacement, b, out);
    Rng rng(derive_seed(derive_seed(plan_.seed, "shuffle"), b));
    rng.shuffle(std::span<SamplePointer>(out));
    return out;
  }

 private:
  void draw(Embodiment e, std::size_t count, bool with_replacement, std::size_t b, std::vector<SamplePointer>& out) {
    const auto& entries = index_->sources.at(e).entries;
    const std::string& route = index_->routes.at(e);
    const std::string label = to_string(e);
    auto push = [&](std::size_t k) {
      const auto& entry = entries[k];
      out.push_back({index_->episode_ids[entry.episode], entry.t, e, route});
    };
    if (with_replacement) {
      Rng rng(derive_seed(derive_seed(plan_.seed, label), b));
      for (std::size_t i = 0; i < count; ++i) push(static_cast<std::size_t>(rng.below(entries.size())));
      return;
    }
    const std::size_t n = entries.size();
    const std::uint64_t start = static_cast<std::uint64_t>(b) * count;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t pos = start + i;
      push(permutation(e, pos / n)[pos % n]);
    }
  }

  const std::vector<std::size_t>& permutation(Embodiment e, std::uint64_t pass) {
    auto& cache = perms_[e];
    auto it = cache.find(pass);
    if (it != cache.end()) return it->second;
    if (cache.size() > 4) cache.clear();
    std::vector<std::size_t> perm(index_->count(e));
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(derive_seed(plan_.seed, to_string(e) + ".pass"), pass));
    rng.shuffle(std::span<std::size_t>(perm));
    return cache.emplace(pass, std::move(perm)).first->second;
  }

  MixPlan plan_;
  const SampleIndex* index_;
  std::map<Embodiment, std::map<std::uint64_t, std::vector<std::size_t>>> perms_;
};

inline std::vector<SamplePointer> next_batch(const MixPlan& plan, const SampleIndex& index, std::size_t b) {
  BatchSampler sampler(plan, index);
  return sampler.next_batch(b);
}

struct Schedule {
  MixPlan plan;
  std::string dataset;
  std::string stats;
  std::map<Embodiment, std::string> routes;
  std::vector<std::vector<SamplePointer>> batches;
};

inline Schedule generate_schedule(const MixPlan& plan, const SampleIndex& index, std::size_t n_batches,
                                  std::string dataset = "", std::string stats = "stats.json") {
  BatchSampler sampler(plan, index);
  Schedule s{plan, std::move(dataset), std::move(stats), index.routes, {}};
  s.batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) s.batches.push_back(sampler.next_batch(b));
  return s;
}

inline nlohmann::json to_json(const Schedule& s) {
  nlohmann::json j = {{"format", "handbridge.schedule"},
                      {"format_version", kEpisodeFormatVersion},
                      {"dataset", s.dataset},
                      {"stats", s.stats},
                      {"seed", s.plan.seed},
                      {"batch_size", s.plan.batch_size},
                      {"human_fraction", s.plan.human_fraction},
                      {"human_per_batch", s.plan.human_per_batch()},
                      {"human_with_replacement", s.plan.human_with_replacement},
                      {"robot_with_replacement", s.plan.robot_with_replacement}};
  nlohmann::json routes = nlohmann::json::object();
  for (const auto& [e, r] : s.routes) routes[to_string(e)] = r;
  j["routes"] = routes;
  auto batches = nlohmann::json::array();
  for (const auto& batch : s.batches) {
    auto jb = nlohmann::json::array();
    for (const auto& p : batch) {
      jb.push_back({{"episode", p.episode_id}, {"t", p.t}, {"embodiment", to_string(p.embodiment)}, {"route", p.route}});
    }
    batches.push_back(std::move(jb));
  }
  j["batches"] = std::move(batches);
  return j;
}

inline Schedule schedule_from_json(const nlohmann::json& j) {
  Schedule s;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kEpisodeFormatVersion) {
      throw Error(ErrorCode::VersionMismatch, "schedule format version " + std::to_string(version) + " is not supported");
    }
    s.dataset = j.at("dataset").get<std::string>();
    s.stats = j.at("stats").get<std::string>();
    s.plan.seed = j.at("seed").get<std::uint64_t>();
    s.plan.batch_size = j.at("batch_size").get<std::size_t>();
    s.plan.human_fraction = j.at("human_fraction").get<double>();
    s.plan.human_with_replacement = j.at("human_with_replacement").get<bool>();
    s.plan.robot_with_replacement = j.at("robot_with_replacement").get<bool>();
    for (const auto& [name, r] : j.at("routes").items()) s.routes[parse_embodiment(name)] = r.get<std::string>();
    for (const auto& jb : j.at("batches")) {
      std::vector<SamplePointer> batch;
      for (const auto& p : jb) {
        batch.push_back({p.at("episode").get<std::string>(), p.at("t").get<std::size_t>(),
                         parse_embodiment(p.at("embodiment").get<std::string>()), p.at("route").get<std::string>()});
      }
      s.batches.push_back(std::move(batch));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("schedule: ") + e.what());
  }
  return s;
}

/// Materializes n_batches into a schedule file an external trainer can replay.
inline Schedule emit_training_manifest(const MixPlan& plan, const SampleIndex& index, std::size_t n_batches,
                                       const fs::path& path, const std::string& dataset = "",
                                       const std::string& stats = "stats.json") {
  Schedule s = generate_schedule(plan, index, n_batches, dataset, stats);
  detail::write_json_file(path, to_json(s));
  return s;
}

}  // namespace handbridge
