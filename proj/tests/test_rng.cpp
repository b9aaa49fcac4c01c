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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "handbridge/rng.hpp"

namespace hb = handbridge;

TEST(Rng, SameSeedSameStream) {
  hb::Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

// Reference values of splitmix64 from its published C implementation.
TEST(Rng, SplitmixReference) {
  std::uint64_t state = 1234567;
  auto next = [&state] {
    const std::uint64_t out = hb::splitmix64(state);
    state += 0x9E3779B97F4A7C15ULL;
    return out;
  };
  EXPECT_EQ(next(), 6457827717110365317ULL);
  EXPECT_EQ(next(), 3203168211198807973ULL);
  EXPECT_EQ(next(), 9817491932198370423ULL);
}

TEST(Rng, UniformRangeAndMean) {
  hb::Rng rng(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, BelowIsUnbiasedEnough) {
  hb::Rng rng(2);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[rng.below(7)]++;
  for (int c : counts) EXPECT_NEAR(c, n / 7, 400);
}

TEST(Rng, NormalMoments) {
  hb::Rng rng(3);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  hb::Rng rng(4);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, DerivedSeedsDistinct) {
  std::set<std::uint64_t> seen;
  for (const char* label : {"augment", "mix", "robot", "human", "shuffle"}) seen.insert(hb::derive_seed(7, label));
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(hb::derive_seed(7, i));
  EXPECT_EQ(seen.size(), 1005u);
  EXPECT_EQ(hb::derive_seed(7, "mix"), hb::derive_seed(7, "mix"));
  EXPECT_NE(hb::derive_seed(7, "mix"), hb::derive_seed(8, "mix"));
}
