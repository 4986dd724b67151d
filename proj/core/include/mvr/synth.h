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

// Synthetic multi-interest world: topic-anchored items with Zipf popularity,
// users as topic mixtures, organic engagement logs and source-attributed
// logs from a follow-based retriever.

#ifndef MVR_SYNTH_H_
#define MVR_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvr/interest.h"
#include "mvr/tensor.h"

namespace mvr {

struct WorldConfig {
  std::size_t topics = 32;
  std::size_t items_per_topic = 1000;
  std::size_t dim = 32;
  std::size_t users = 2000;
  std::size_t interests_min = 2;
  std::size_t interests_max = 5;
  // Organic engagements per day for core users; non-core users get at most
  // non_core_per_day.
  std::size_t seq_per_day_min = 2;
  std::size_t seq_per_day_max = 5;
  std::size_t non_core_per_day = 1;
  double core_fraction = 0.8;
  std::size_t days = 15;
  // Per-item feature noise relative to the unit anchor.
  double noise_sigma = 0.6;
  double zipf_exponent = 1.0;
  std::size_t max_labels = 3;
  double invalid_rate = 0.05;
  // Chance that each mixture topic is followed, and that one extra topic
  // outside the mixture is followed.
  double follow_rate = 0.6;
  double forgotten_follow_rate = 0.3;
  std::size_t explicit_impressions_per_day = 4;
  double engage_in_mixture = 0.7;
  double engage_base_rate = 0.1;
  std::size_t profile_dim = 16;
  bool popularity_feature = true;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  // Widths of the item feature slots: content, then popularity if enabled.
  std::vector<std::size_t> feature_dims() const;
  std::size_t num_items() const { return topics * items_per_topic; }

  bool operator==(const WorldConfig&) const = default;
};

struct SyntheticItem {
  std::uint64_t item_id = 0;
  std::uint32_t topic_id = 0;
  // Primary topic first; 1 to max_labels distinct labels.
  std::vector<std::uint32_t> labels;
  FeatureFields features;
  double popularity = 0.0;  // Normalized within the topic.
};

enum class Activity { kCore, kNonCore };

struct SyntheticUser {
  std::uint64_t user_id = 0;
  std::vector<std::uint32_t> mixture_topics;
  std::vector<double> mixture_weights;  // Sums to 1.
  std::vector<std::uint32_t> followed_topics;
  Activity activity = Activity::kCore;
  std::vector<double> profile;

  double weight_of(std::uint32_t topic) const;
};

struct World {
  WorldConfig config;
  Tensor anchors;  // [T x d], unit rows.
  std::vector<SyntheticItem> items;
  std::vector<SyntheticUser> users;
  // Cumulative Zipf mass over popularity ranks within a topic.
  std::vector<double> popularity_cdf;

  const SyntheticItem& item(std::uint64_t id) const;
  // Item rows of one topic, in popularity rank order.
  std::span<const SyntheticItem> topic_items(std::uint32_t topic) const;
};

World gen_world(const WorldConfig& config);

struct Engagement {
  std::uint64_t user_id = 0;
  std::uint32_t day = 0;  // 1-based.
  std::uint64_t item_id = 0;
  bool positive_action = true;
  bool valid = true;
  std::optional<std::uint32_t> source_topic;
};

// A user's organic engagements for one day. Invalid entries are either a
// negative action or a missing feature (valid=false, positive action).
std::vector<Engagement> gen_engagements(const World& world,
                                        const SyntheticUser& user,
                                        std::uint32_t day);

// Engagements produced by the follow-based retriever: a followed topic is
// sampled, an item from it is surfaced, and engagement is recorded with the
// topic that sourced the impression.
std::vector<Engagement> gen_explicit_log(const World& world,
                                         const SyntheticUser& user,
                                         std::uint32_t day);

struct Logs {
  std::vector<Engagement> organic;
  std::vector<Engagement> explicit_log;
};

// All users, days 1..days, ordered by (user, day, emission).
Logs gen_logs(const World& world);

// Sequence item for an engagement; missing features are left empty.
SequenceItem to_sequence_item(const World& world, const Engagement& e,
                              std::int64_t timestamp);

// JSONL persistence. Every file starts with a header line carrying the
// generating config and seed. Throws FormatError on malformed input.
void write_world(const World& world, std::ostream& out);
World read_world(std::istream& in);
void write_engagements(const WorldConfig& config,
                       std::span<const Engagement> records,
                       std::ostream& out);
std::vector<Engagement> read_engagements(std::istream& in);

void save_world(const World& world, const std::string& path);
World load_world(const std::string& path);
void save_engagements(const WorldConfig& config,
                      std::span<const Engagement> records,
                      const std::string& path);
std::vector<Engagement> load_engagements(const std::string& path);

}  // namespace mvr

#endif  // MVR_SYNTH_H_
