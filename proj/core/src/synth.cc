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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "config_json.h"
#include "mvr/error.h"

namespace mvr {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kAnchorStream = 0x616e;
constexpr std::uint64_t kItemStream = 0x6974;
constexpr std::uint64_t kUserStream = 0x7573;
constexpr std::uint64_t kProfileStream = 0x7072;
constexpr std::uint64_t kOrganicStream = 0x6f72;
constexpr std::uint64_t kExplicitStream = 0x6578;

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Cumulative Zipf mass over popularity ranks.
std::vector<double> rank_cdf(const WorldConfig& c) {
  std::vector<double> cdf(c.items_per_topic);
  double acc = 0.0;
  for (std::size_t r = 0; r < c.items_per_topic; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -c.zipf_exponent);
    cdf[r] = acc;
  }
  for (double& v : cdf) v /= acc;
  return cdf;
}

std::size_t sample_rank(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()),
                               cdf.size() - 1);
}

std::uint32_t sample_topic(const SyntheticUser& user, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(user.mixture_weights.begin(),
                                               user.mixture_weights.end());
  return user.mixture_topics[pick(rng)];
}

// Z-scored log popularity of each rank; identical for every topic.
std::vector<double> popularity_feature(const std::vector<double>& cdf) {
  std::vector<double> logs(cdf.size());
  for (std::size_t r = 0; r < cdf.size(); ++r) {
    logs[r] = std::log(cdf[r] - (r ? cdf[r - 1] : 0.0));
  }
  const double mean =
      std::accumulate(logs.begin(), logs.end(), 0.0) / double(logs.size());
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(logs.size()));
  for (double& v : logs) v = sd > 0 ? (v - mean) / sd : 0.0;
  return logs;
}

}  // namespace

void WorldConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("world.") + name + " must be positive");
  };
  positive(topics, "topics");
  positive(items_per_topic, "items_per_topic");
  positive(dim, "dim");
  positive(users, "users");
  positive(interests_min, "interests_min");
  positive(profile_dim, "profile_dim");
  positive(max_labels, "max_labels");
  if (interests_max < interests_min) {
    throw ConfigError("world.interests_max < interests_min");
  }
  if (interests_min > topics) {
    throw ConfigError("world.interests_min exceeds the topic count");
  }
  if (seq_per_day_max < seq_per_day_min) {
    throw ConfigError("world.seq_per_day_max < seq_per_day_min");
  }
  if (days < 2) throw ConfigError("world.days must be at least 2");
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string("world.") + name + " must be in [0, 1]");
    }
  };
  prob(core_fraction, "core_fraction");
  prob(invalid_rate, "invalid_rate");
  prob(follow_rate, "follow_rate");
  prob(forgotten_follow_rate, "forgotten_follow_rate");
  prob(engage_in_mixture, "engage_in_mixture");
  prob(engage_base_rate, "engage_base_rate");
  if (!(noise_sigma >= 0.0)) throw ConfigError("world.noise_sigma must be >= 0");
  if (!(zipf_exponent >= 0.0)) throw ConfigError("world.zipf_exponent must be >= 0");
}

std::vector<std::size_t> WorldConfig::feature_dims() const {
  if (popularity_feature) return {dim, 1};
  return {dim};
}

double SyntheticUser::weight_of(std::uint32_t topic) const {
  for (std::size_t i = 0; i < mixture_topics.size(); ++i) {
    if (mixture_topics[i] == topic) return mixture_weights[i];
  }
  return 0.0;
}

const SyntheticItem& World::item(std::uint64_t id) const {
  if (id >= items.size() || items[id].item_id != id) {
    throw ConfigError("unknown item id " + std::to_string(id));
  }
  return items[id];
}

std::span<const SyntheticItem> World::topic_items(std::uint32_t topic) const {
  if (topic >= config.topics) {
    throw UnknownTopicError("topic " + std::to_string(topic));
  }
  return std::span<const SyntheticItem>(items).subspan(
      topic * config.items_per_topic, config.items_per_topic);
}

World gen_world(const WorldConfig& config) {
  config.validate();
  World w;
  w.config = config;
  const std::size_t t_count = config.topics, d = config.dim;

  Rng anchor_rng(derive_seed(config.seed, kAnchorStream));
  w.anchors = Tensor::gaussian({t_count, d}, 1.0, anchor_rng);
  for (std::size_t t = 0; t < t_count; ++t) l2_normalize_inplace(w.anchors.row(t));

  w.popularity_cdf = rank_cdf(config);
  const auto& cdf = w.popularity_cdf;
  const auto pop_feature = popularity_feature(cdf);
  const double noise = config.noise_sigma / std::sqrt(double(d));
  w.items.reserve(config.num_items());
  for (std::uint32_t t = 0; t < t_count; ++t) {
    Rng rng(derive_seed(config.seed, kItemStream, t));
    std::normal_distribution<double> gauss(0.0, noise);
    for (std::size_t r = 0; r < config.items_per_topic; ++r) {
      SyntheticItem it;
      it.item_id = w.items.size();
      it.topic_id = t;
      it.popularity = cdf[r] - (r ? cdf[r - 1] : 0.0);
      std::vector<double> content(d);
      for (std::size_t c = 0; c < d; ++c) content[c] = w.anchors(t, c) + gauss(rng);
      it.features.push_back(std::move(content));
      if (config.popularity_feature) it.features.push_back({pop_feature[r]});
      it.labels.push_back(t);
      const std::size_t extra =
          std::min(uniform_int(rng, 0, config.max_labels - 1), t_count - 1);
      while (it.labels.size() < extra + 1) {
        const auto other = static_cast<std::uint32_t>(uniform_int(rng, 0, t_count - 1));
        if (std::find(it.labels.begin(), it.labels.end(), other) == it.labels.end()) {
          it.labels.push_back(other);
        }
      }
      w.items.push_back(std::move(it));
    }
  }

  // Each topic maps to a random direction of the profile space; a profile is
  // the mixture of those directions plus noise.
  Rng profile_rng(derive_seed(config.seed, kProfileStream));
  const Tensor topic_profiles =
      Tensor::gaussian({t_count, config.profile_dim}, 1.0, profile_rng);
  w.users.reserve(config.users);
  for (std::uint64_t u = 0; u < config.users; ++u) {
    Rng rng(derive_seed(config.seed, kUserStream, u));
    SyntheticUser user;
    user.user_id = u;
    const std::size_t m = uniform_int(
        rng, config.interests_min, std::min(config.interests_max, t_count));
    std::vector<std::uint32_t> all(t_count);
    std::iota(all.begin(), all.end(), 0u);
    std::shuffle(all.begin(), all.end(), rng);
    user.mixture_topics.assign(all.begin(), all.begin() + std::ptrdiff_t(m));
    std::gamma_distribution<double> gamma(1.0, 1.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      user.mixture_weights.push_back(gamma(rng));
      total += user.mixture_weights.back();
    }
    for (double& v : user.mixture_weights) v /= total;
    for (std::uint32_t t : user.mixture_topics) {
      if (uniform01(rng) < config.follow_rate) user.followed_topics.push_back(t);
    }
    if (m < t_count && uniform01(rng) < config.forgotten_follow_rate) {
      user.followed_topics.push_back(all[uniform_int(rng, m, t_count - 1)]);
    }
    user.activity = uniform01(rng) < config.core_fraction ? Activity::kCore
                                                          : Activity::kNonCore;
    std::normal_distribution<double> gauss(0.0, 0.3);
    user.profile.assign(config.profile_dim, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      auto row = topic_profiles.row(user.mixture_topics[i]);
      for (std::size_t c = 0; c < config.profile_dim; ++c) {
        user.profile[c] += user.mixture_weights[i] * row[c];
      }
    }
    for (double& v : user.profile) v += gauss(rng);
    w.users.push_back(std::move(user));
  }
  return w;
}

std::vector<Engagement> gen_engagements(const World& world,
                                        const SyntheticUser& user,
                                        std::uint32_t day) {
  const WorldConfig& c = world.config;
  if (day == 0 || day > c.days) {
    throw ConfigError("day " + std::to_string(day) + " outside 1.." +
                      std::to_string(c.days));
  }
  Rng rng(derive_seed(c.seed, kOrganicStream, user.user_id, day));
  const std::size_t n = user.activity == Activity::kCore
                            ? uniform_int(rng, c.seq_per_day_min, c.seq_per_day_max)
                            : uniform_int(rng, 0, c.non_core_per_day);
  const auto& cdf = world.popularity_cdf;
  std::vector<Engagement> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t topic = sample_topic(user, rng);
    const std::size_t rank = sample_rank(cdf, rng);
    Engagement e;
    e.user_id = user.user_id;
    e.day = day;
    e.item_id = world.topic_items(topic)[rank].item_id;
    if (uniform01(rng) < c.invalid_rate) {
      e.valid = false;
      // Half negative actions, half missing features.
      e.positive_action = uniform01(rng) < 0.5;
    }
    out.push_back(e);
  }
  return out;
}

std::vector<Engagement> gen_explicit_log(const World& world,
                                         const SyntheticUser& user,
                                         std::uint32_t day) {
  const WorldConfig& c = world.config;
  if (day == 0 || day > c.days) {
    throw ConfigError("day " + std::to_string(day) + " outside 1.." +
                      std::to_string(c.days));
  }
  std::vector<Engagement> out;
  if (user.followed_topics.empty()) return out;
  Rng rng(derive_seed(c.seed, kExplicitStream, user.user_id, day));
  const auto& cdf = world.popularity_cdf;
  for (std::size_t i = 0; i < c.explicit_impressions_per_day; ++i) {
    const std::uint32_t topic =
        user.followed_topics[uniform_int(rng, 0, user.followed_topics.size() - 1)];
    const std::size_t rank = sample_rank(cdf, rng);
    const double p = user.weight_of(topic) > 0.0 ? c.engage_in_mixture
                                                 : c.engage_base_rate;
    if (uniform01(rng) >= p) continue;
    Engagement e;
    e.user_id = user.user_id;
    e.day = day;
    e.item_id = world.topic_items(topic)[rank].item_id;
    e.source_topic = topic;
    out.push_back(e);
  }
  return out;
}

Logs gen_logs(const World& world) {
  Logs logs;
  for (const auto& user : world.users) {
    for (std::uint32_t day = 1; day <= world.config.days; ++day) {
      auto organic = gen_engagements(world, user, day);
      logs.organic.insert(logs.organic.end(), organic.begin(), organic.end());
      auto expl = gen_explicit_log(world, user, day);
      logs.explicit_log.insert(logs.explicit_log.end(), expl.begin(), expl.end());
    }
  }
  return logs;
}

SequenceItem to_sequence_item(const World& world, const Engagement& e,
                              std::int64_t timestamp) {
  SequenceItem s;
  s.item_id = e.item_id;
  s.timestamp = timestamp;
  s.positive_action = e.positive_action;
  s.valid = e.valid;
  s.features = world.item(e.item_id).features;
  if (!e.valid && e.positive_action) s.features.front().clear();
  return s;
}

namespace {

nlohmann::json header(const char* kind, const WorldConfig& c) {
  return {{"header", {{"kind", kind}, {"seed", c.seed}, {"config", to_json(c)}}}};
}

WorldConfig read_header(std::istream& in, const char* kind) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header line");
  try {
    const auto h = nlohmann::json::parse(line).at("header");
    if (h.at("kind").get<std::string>() != kind) {
      throw FormatError("expected a " + std::string(kind) + " file, got " +
                        h.at("kind").get<std::string>());
    }
    return world_config_from_json(h.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad header config: ") + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return in;
}

}  // namespace

void write_world(const World& world, std::ostream& out) {
  out << header("world", world.config).dump() << '\n';
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : world.items) {
    std::vector<double> flat;
    for (const auto& f : it.features) flat.insert(flat.end(), f.begin(), f.end());
    items.push_back({{"id", it.item_id},
                     {"topic", it.topic_id},
                     {"labels", it.labels},
                     {"popularity", it.popularity},
                     {"features", flat}});
  }
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : world.users) {
    users.push_back({{"id", u.user_id},
                     {"mixture_topics", u.mixture_topics},
                     {"mixture_weights", u.mixture_weights},
                     {"followed_topics", u.followed_topics},
                     {"core", u.activity == Activity::kCore},
                     {"profile", u.profile}});
  }
  const nlohmann::json body = {{"anchors", world.anchors.storage()},
                               {"items", std::move(items)},
                               {"users", std::move(users)}};
  out << body.dump() << '\n';
}

World read_world(std::istream& in) {
  World w;
  w.config = read_header(in, "world");
  w.popularity_cdf = rank_cdf(w.config);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("world file has no body");
  try {
    const auto body = nlohmann::json::parse(line);
    const auto& c = w.config;
    w.anchors = Tensor({c.topics, c.dim}, body.at("anchors").get<std::vector<double>>());
    const auto dims = c.feature_dims();
    for (const auto& j : body.at("items")) {
      SyntheticItem it;
      it.item_id = j.at("id").get<std::uint64_t>();
      it.topic_id = j.at("topic").get<std::uint32_t>();
      it.labels = j.at("labels").get<std::vector<std::uint32_t>>();
      it.popularity = j.at("popularity").get<double>();
      const auto flat = j.at("features").get<std::vector<double>>();
      std::size_t off = 0;
      for (std::size_t d : dims) {
        if (off + d > flat.size()) throw FormatError("item feature width");
        it.features.emplace_back(flat.begin() + std::ptrdiff_t(off),
                                 flat.begin() + std::ptrdiff_t(off + d));
        off += d;
      }
      if (off != flat.size()) throw FormatError("item feature width");
      if (it.item_id != w.items.size()) throw FormatError("item ids out of order");
      w.items.push_back(std::move(it));
    }
    for (const auto& j : body.at("users")) {
      SyntheticUser u;
      u.user_id = j.at("id").get<std::uint64_t>();
      u.mixture_topics = j.at("mixture_topics").get<std::vector<std::uint32_t>>();
      u.mixture_weights = j.at("mixture_weights").get<std::vector<double>>();
      u.followed_topics = j.at("followed_topics").get<std::vector<std::uint32_t>>();
      u.activity = j.at("core").get<bool>() ? Activity::kCore : Activity::kNonCore;
      u.profile = j.at("profile").get<std::vector<double>>();
      w.users.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad world body: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("bad world body: ") + e.what());
  }
  if (w.items.size() != w.config.num_items() || w.users.size() != w.config.users) {
    throw FormatError("world body does not match its header config");
  }
  return w;
}

void write_engagements(const WorldConfig& config,
                       std::span<const Engagement> records,
                       std::ostream& out) {
  out << header("engagements", config).dump() << '\n';
  for (const auto& e : records) {
    nlohmann::json j = {{"user_id", e.user_id},
                        {"day", e.day},
                        {"item_id", e.item_id},
                        {"action", e.positive_action ? 1 : -1},
                        {"valid", e.valid}};
    if (e.source_topic) j["source_topic"] = *e.source_topic;
    out << j.dump() << '\n';
  }
}

std::vector<Engagement> read_engagements(std::istream& in) {
  read_header(in, "engagements");
  std::vector<Engagement> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Engagement e;
      e.user_id = j.at("user_id").get<std::uint64_t>();
      e.day = j.at("day").get<std::uint32_t>();
      e.item_id = j.at("item_id").get<std::uint64_t>();
      e.positive_action = j.at("action").get<int>() > 0;
      e.valid = j.at("valid").get<bool>();
      if (j.contains("source_topic")) {
        e.source_topic = j.at("source_topic").get<std::uint32_t>();
      }
      out.push_back(e);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_world(const World& world, const std::string& path) {
  auto out = open_out(path);
  write_world(world, out);
}

World load_world(const std::string& path) {
  auto in = open_in(path);
  return read_world(in);
}

void save_engagements(const WorldConfig& config,
                      std::span<const Engagement> records,
                      const std::string& path) {
  auto out = open_out(path);
  write_engagements(config, records, out);
}

std::vector<Engagement> load_engagements(const std::string& path) {
  auto in = open_in(path);
  return read_engagements(in);
}

}  // namespace mvr
