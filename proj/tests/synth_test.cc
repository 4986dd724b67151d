// Copyright 2026 The MVR Authors.
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

#include "mvr/synth.h"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "mvr/dataset.h"
#include "mvr/error.h"

namespace mvr {
namespace {

WorldConfig small_world(std::uint64_t seed = 7) {
  WorldConfig c;
  c.topics = 6;
  c.items_per_topic = 50;
  c.dim = 8;
  c.users = 60;
  c.days = 5;
  c.profile_dim = 4;
  c.seed = seed;
  return c;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  return dot(a, b) / (norm(a) * norm(b));
}

// Mean cosine over sampled within-topic and cross-topic pairs.
std::pair<double, double> cosine_gap(const World& w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, w.items.size() - 1);
  double within = 0, cross = 0;
  int nw = 0, nc = 0;
  while (nw < 2000 || nc < 2000) {
    const auto& a = w.items[pick(rng)];
    const auto& b = w.items[pick(rng)];
    if (a.item_id == b.item_id) continue;
    const double c = cosine(a.features[0], b.features[0]);
    if (a.topic_id == b.topic_id) {
      within += c;
      ++nw;
    } else {
      cross += c;
      ++nc;
    }
  }
  return {within / nw, cross / nc};
}

TEST(WorldTest, DeterministicPerSeed) {
  std::ostringstream a, b, c;
  write_world(gen_world(small_world(1)), a);
  write_world(gen_world(small_world(1)), b);
  write_world(gen_world(small_world(2)), c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(WorldTest, ShapeAndInvariants) {
  const World w = gen_world(small_world());
  EXPECT_EQ(w.items.size(), 6u * 50u);
  for (const auto& it : w.items) {
    EXPECT_GE(it.labels.size(), 1u);
    EXPECT_LE(it.labels.size(), 3u);
    EXPECT_EQ(it.labels.front(), it.topic_id);
    EXPECT_EQ(std::set<std::uint32_t>(it.labels.begin(), it.labels.end()).size(),
              it.labels.size());
  }
  for (const auto& u : w.users) {
    double total = 0;
    for (double p : u.mixture_weights) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_GE(u.mixture_topics.size(), 2u);
    EXPECT_LE(u.mixture_topics.size(), 5u);
    for (auto t : u.followed_topics) EXPECT_LT(t, 6u);
  }
}

TEST(WorldTest, ZipfPopularityWithinTopic) {
  const World w = gen_world(small_world());
  auto items = w.topic_items(2);
  EXPECT_NEAR(items[0].popularity / items[9].popularity, 10.0, 1e-9);
  double total = 0;
  for (const auto& it : items) total += it.popularity;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(WorldTest, WithinTopicCosineExceedsCrossTopic) {
  const auto [within, cross] = cosine_gap(gen_world(small_world()), 3);
  EXPECT_GT(within, cross + 0.2);
}

TEST(WorldTest, NoiseShrinksTheCosineGap) {
  double last = 2.0;
  for (double sigma : {0.3, 0.8, 1.5}) {
    WorldConfig c = small_world();
    c.noise_sigma = sigma;
    const auto [within, cross] = cosine_gap(gen_world(c), 3);
    EXPECT_LT(within - cross, last);
    last = within - cross;
  }
}

TEST(WorldTest, ConfigValidation) {
  WorldConfig c = small_world();
  c.days = 1;
  EXPECT_THROW(gen_world(c), ConfigError);
  c = small_world();
  c.topics = 0;
  EXPECT_THROW(gen_world(c), ConfigError);
}

TEST(EngagementTest, SingleInterestUserStaysOnTopic) {
  const World w = gen_world(small_world());
  SyntheticUser u = w.users[0];
  u.mixture_topics = {4};
  u.mixture_weights = {1.0};
  for (std::uint32_t day = 1; day <= 5; ++day) {
    for (const auto& e : gen_engagements(w, u, day)) {
      EXPECT_EQ(w.item(e.item_id).topic_id, 4u);
      EXPECT_EQ(e.day, day);
    }
  }
}

TEST(EngagementTest, InvalidFractionNearConfiguredRate) {
  WorldConfig c = small_world();
  c.users = 500;
  c.days = 10;
  const Logs logs = gen_logs(gen_world(c));
  std::size_t invalid = 0;
  for (const auto& e : logs.organic) invalid += !e.valid;
  const double n = double(logs.organic.size());
  ASSERT_GT(n, 5000);
  // Binomial standard error at p = 0.05 is well under the 2 point tolerance.
  EXPECT_NEAR(invalid / n, 0.05, 0.02);
}

TEST(EngagementTest, NonCoreUsersAreCapped) {
  const World w = gen_world(small_world());
  for (const auto& u : w.users) {
    if (u.activity != Activity::kNonCore) continue;
    for (std::uint32_t day = 1; day <= 5; ++day) {
      EXPECT_LE(gen_engagements(w, u, day).size(), w.config.non_core_per_day);
    }
  }
}

TEST(EngagementTest, DayOutOfRangeThrows) {
  const World w = gen_world(small_world());
  EXPECT_THROW(gen_engagements(w, w.users[0], 0), ConfigError);
  EXPECT_THROW(gen_engagements(w, w.users[0], 6), ConfigError);
}

TEST(ExplicitLogTest, SourceTopicIsAlwaysFollowed) {
  const World w = gen_world(small_world());
  const Logs logs = gen_logs(w);
  ASSERT_FALSE(logs.explicit_log.empty());
  for (const auto& e : logs.explicit_log) {
    ASSERT_TRUE(e.source_topic.has_value());
    const auto& f = w.users[e.user_id].followed_topics;
    EXPECT_NE(std::find(f.begin(), f.end(), *e.source_topic), f.end());
    EXPECT_EQ(w.item(e.item_id).topic_id, *e.source_topic);
  }
}

TEST(ExplicitLogTest, SingleFollowAttributesEverything) {
  const World w = gen_world(small_world());
  SyntheticUser u = w.users[0];
  u.followed_topics = {3};
  for (std::uint32_t day = 1; day <= 5; ++day) {
    for (const auto& e : gen_explicit_log(w, u, day)) EXPECT_EQ(*e.source_topic, 3u);
  }
  u.followed_topics.clear();
  EXPECT_TRUE(gen_explicit_log(w, u, 1).empty());
}

TEST(ExplicitLogTest, EngagementRatesFollowMixtureMembership) {
  WorldConfig c = small_world();
  c.days = 100;
  const World w = gen_world(c);
  SyntheticUser u = w.users[0];
  u.mixture_topics = {0};
  u.mixture_weights = {1.0};
  u.followed_topics = {0, 1};
  std::map<std::uint32_t, int> engaged;
  for (std::uint32_t day = 1; day <= 100; ++day) {
    for (const auto& e : gen_explicit_log(w, u, day)) ++engaged[*e.source_topic];
  }
  // 400 impressions split evenly between the two topics.
  EXPECT_NEAR(engaged[0] / 200.0, c.engage_in_mixture, 0.1);
  EXPECT_NEAR(engaged[1] / 200.0, c.engage_base_rate, 0.06);
}

TEST(ItemInterestTest, RelabelsFromItemLabels) {
  WorldConfig c = small_world();
  World w = gen_world(c);
  w.items[0].labels = {0};
  w.items[1].labels = {1, 4};
  std::vector<TrainingExample> ex(4000);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ex[i].target_item = i % 2;
    ex[i].source_topic = 5;
  }
  const auto out = make_item_interest_examples(ex, w, 3);
  int first = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 2 == 0) {
      EXPECT_EQ(*out[i].source_topic, 0u);
    } else {
      EXPECT_TRUE(*out[i].source_topic == 1u || *out[i].source_topic == 4u);
      first += *out[i].source_topic == 1u;
    }
  }
  EXPECT_NEAR(first / 2000.0, 0.5, 0.05);
}

TEST(SplitTest, DaysSplitAtTheLastDay) {
  WorldConfig c = small_world();
  c.days = 15;
  const Logs logs = gen_logs(gen_world(c));
  const auto split = split_train_eval(logs.organic, 15);
  std::set<std::uint32_t> train_days, eval_days;
  for (const auto& e : split.train) train_days.insert(e.day);
  for (const auto& e : split.eval) eval_days.insert(e.day);
  EXPECT_EQ(*train_days.begin(), 1u);
  EXPECT_EQ(*train_days.rbegin(), 14u);
  EXPECT_EQ(eval_days, std::set<std::uint32_t>{15});
  EXPECT_EQ(split.train.size() + split.eval.size(), logs.organic.size());
}

TEST(DatasetTest, ExamplesUsePrecedingHistoryOnly) {
  const World w = gen_world(small_world());
  const Logs logs = gen_logs(w);
  DatasetOptions opt;
  opt.max_seq_len = 6;
  const Dataset ds = build_dataset(w, logs, opt);
  ASSERT_FALSE(ds.implicit_train.empty());
  for (const auto& ex : ds.implicit_train) {
    EXPECT_LE(ex.seq.size(), 6u);
    EXPECT_GE(ex.seq.size(), 1u);
    const auto& target = ex.seq.timeline->items[ex.seq.end];
    EXPECT_EQ(target.item_id, ex.target_item);
    EXPECT_TRUE(target.valid);
    EXPECT_LT(target.timestamp / 1000000, 5);
  }
  std::set<std::uint64_t> eval_users;
  for (const auto& r : ds.eval) {
    EXPECT_TRUE(eval_users.insert(r.user_id).second);
    for (const auto& it : r.seq.items()) EXPECT_LT(it.timestamp / 1000000, 5);
  }
  // Users without a valid day-5 engagement have no eval record.
  for (const auto& u : w.users) {
    bool any = false;
    for (const auto& e : logs.organic) any |= e.user_id == u.user_id && e.day == 5 && e.valid;
    EXPECT_EQ(any, eval_users.count(u.user_id) == 1);
  }
  for (const auto& ex : ds.explicit_train) EXPECT_TRUE(ex.source_topic.has_value());
  EXPECT_EQ(ds.catalog.size(), w.items.size());
}

TEST(DatasetTest, MissingFeatureItemsAreInvalidWithEmptySlot) {
  const World w = gen_world(small_world());
  Engagement e;
  e.item_id = 3;
  e.valid = false;
  auto s = to_sequence_item(w, e, 0);
  EXPECT_TRUE(s.features[0].empty());
  EXPECT_FALSE(derive_validity(s));
  e.positive_action = false;
  s = to_sequence_item(w, e, 0);
  EXPECT_FALSE(s.features[0].empty());
  EXPECT_FALSE(derive_validity(s));
}

TEST(PersistenceTest, WorldAndLogsRoundTrip) {
  const World w = gen_world(small_world());
  std::stringstream ws;
  write_world(w, ws);
  const World back = read_world(ws);
  std::ostringstream again;
  write_world(back, again);
  EXPECT_EQ(ws.str(), again.str());
  EXPECT_EQ(back.items[5].features, w.items[5].features);

  const Logs logs = gen_logs(w);
  std::stringstream ls;
  write_engagements(w.config, logs.explicit_log, ls);
  const auto records = read_engagements(ls);
  ASSERT_EQ(records.size(), logs.explicit_log.size());
  EXPECT_EQ(records.front().source_topic, logs.explicit_log.front().source_topic);
}

TEST(PersistenceTest, RejectsBadFiles) {
  std::stringstream empty;
  EXPECT_THROW(read_world(empty), FormatError);
  std::stringstream wrong("{\"header\":{\"kind\":\"engagements\",\"seed\":1,\"config\":{}}}\n");
  EXPECT_THROW(read_world(wrong), FormatError);
  std::stringstream unknown("{\"header\":{\"kind\":\"world\",\"seed\":1,\"config\":{\"bogus\":1}}}\n");
  EXPECT_THROW(read_world(unknown), FormatError);
}

}  // namespace
}  // namespace mvr
