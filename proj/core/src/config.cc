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

#include "mvr/config.h"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "config_json.h"
#include "mvr/error.h"

namespace mvr {
namespace {

using nlohmann::json;

// Reads the visited fields out of a JSON object and rejects leftovers.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + " must be an object");
  }

  template <class T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(section_ + "." + key + ": wrong type");
    }
  }

  template <class E, class ToStr, class Parse>
  void named(const char* key, E& out, ToStr, Parse parse) {
    std::string name;
    (*this)(key, name);
    if (name.empty()) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Reader sub(*it, section_ + "." + key);
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key " + section_ + "." + it.key());
      }
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <class T>
  void operator()(const char* key, const T& v) {
    j[key] = v;
  }

  template <class E, class ToStr, class Parse>
  void named(const char* key, const E& v, ToStr to_str, Parse) {
    j[key] = to_str(v);
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    Writer sub;
    fn(sub);
    j[key] = std::move(sub.j);
  }

  json j = json::object();
};

std::string frequency_name(FrequencyEstimator::Mode m) {
  return m == FrequencyEstimator::Mode::kExact ? "exact" : "streaming";
}

FrequencyEstimator::Mode parse_frequency(const std::string& s) {
  if (s == "exact") return FrequencyEstimator::Mode::kExact;
  if (s == "streaming") return FrequencyEstimator::Mode::kStreaming;
  throw ConfigError("unknown frequency estimator '" + s + "'");
}

template <class V, class C>
void visit_world(V& v, C& c, bool with_seed) {
  v("topics", c.topics);
  v("items_per_topic", c.items_per_topic);
  v("dim", c.dim);
  v("users", c.users);
  v("interests_min", c.interests_min);
  v("interests_max", c.interests_max);
  v("seq_per_day_min", c.seq_per_day_min);
  v("seq_per_day_max", c.seq_per_day_max);
  v("non_core_per_day", c.non_core_per_day);
  v("core_fraction", c.core_fraction);
  v("days", c.days);
  v("noise_sigma", c.noise_sigma);
  v("zipf_exponent", c.zipf_exponent);
  v("max_labels", c.max_labels);
  v("invalid_rate", c.invalid_rate);
  v("follow_rate", c.follow_rate);
  v("forgotten_follow_rate", c.forgotten_follow_rate);
  v("explicit_impressions_per_day", c.explicit_impressions_per_day);
  v("engage_in_mixture", c.engage_in_mixture);
  v("engage_base_rate", c.engage_base_rate);
  v("profile_dim", c.profile_dim);
  v("popularity_feature", c.popularity_feature);
  if (with_seed) v("seed", c.seed);
}

template <class V, class C>
void visit_interest(V& v, C& c) {
  v.named("mode", c.mode, [](InterestMode m) { return to_string(m); },
          parse_interest_mode);
  v("k", c.k);
  v("routing_steps", c.routing_steps);
  v("use_vafpi", c.use_vafpi);
  v("use_sar", c.use_sar);
  v("dim", c.dim);
  v("summary_hidden", c.summary_hidden);
  v("max_seq_len", c.max_seq_len);
  v("gaussian_init_stddev", c.gaussian_init_stddev);
  v("token_init_stddev", c.token_init_stddev);
}

// Input widths come from the world; only the architecture is configurable.
template <class V, class C>
void visit_tower(V& v, C& c) {
  v("hidden", c.hidden);
  v("dim", c.dim);
  v("final_bias_init", c.final_bias_init);
}

template <class V, class C>
void visit_trainer(V& v, C& c, DatasetOptions& data) {
  v("batch_size", c.batch_size);
  v("learning_rate", c.learning_rate);
  v("momentum", c.momentum);
  v("epochs", c.epochs);
  v.named("association", c.loss.association,
          [](Association a) { return to_string(a); }, parse_association);
  v("gumbel_temperature", c.loss.gumbel_temperature);
  v("logit_scale", c.loss.logit_scale);
  v("logq_correction", c.logq_correction);
  v.named("frequency", c.frequency, frequency_name, parse_frequency);
  v("streaming_alpha", c.streaming_alpha);
  v("streaming_buckets", c.streaming_buckets);
  v("max_examples_per_user", data.max_examples_per_user);
}

template <class V, class C>
void visit_index(V& v, C& c) {
  v("m", c.m);
  v("ef_construction", c.ef_construction);
  v("ef_search", c.ef_search);
}

template <class V, class C>
void visit_serving(V& v, C& c) {
  v("total_budget", c.total_budget);
  v("k_ex", c.k_ex);
  v("implicit_share", c.implicit_share);
}

template <class V, class C>
void visit_eval(V& v, C& c) {
  v("k_rank", c.k_rank);
  v("coverage_n", c.coverage_n);
  v("coverage_threshold", c.coverage_threshold);
  v("max_users", c.max_users);
  v.section("ablation", [&](auto& s) {
    s("vafpi", c.ablation.vafpi);
    s("sar", c.ablation.sar);
    s("k", c.ablation.k);
    s("seeds", c.ablation.seeds);
  });
}

template <class V, class C>
void visit_run(V& v, C& c, DatasetOptions& data) {
  v.section("world", [&](auto& s) { visit_world(s, c.world, false); });
  v.section("model_implicit", [&](auto& s) {
    s.section("interest", [&](auto& t) { visit_interest(t, c.model_implicit.interest); });
    s.section("tower", [&](auto& t) { visit_tower(t, c.model_implicit.tower); });
  });
  v.section("model_explicit", [&](auto& s) {
    s.section("tower", [&](auto& t) { visit_tower(t, c.model_explicit.tower); });
  });
  v.section("trainer", [&](auto& s) { visit_trainer(s, c.trainer, data); });
  v.section("index", [&](auto& s) { visit_index(s, c.index); });
  v.section("serving", [&](auto& s) { visit_serving(s, c.serving); });
  v.section("eval", [&](auto& s) { visit_eval(s, c.eval); });
}

}  // namespace

json to_json(const WorldConfig& c) {
  Writer w;
  visit_world(w, c, true);
  return w.j;
}

WorldConfig world_config_from_json(const json& j, WorldConfig base) {
  Reader r(j, "world");
  visit_world(r, base, true);
  r.finish();
  return base;
}

void RunConfig::resolve() {
  world.seed = derive_seed(seed, 1);
  trainer.seed = derive_seed(seed, 2);
  index.seed = derive_seed(seed, 3);
  serving.seed = derive_seed(seed, 4);

  const auto dims = world.feature_dims();
  std::size_t width = 0;
  for (std::size_t d : dims) width += d;
  auto& interest = model_implicit.interest;
  interest.feature_dims = dims;
  // The two named modes pin both toggles; only capsule reads them.
  if (interest.mode == InterestMode::kDcm || interest.mode == InterestMode::kMind) {
    interest.use_vafpi = interest.use_sar = interest.mode == InterestMode::kDcm;
  }
  data.max_seq_len = interest.max_seq_len;

  auto& it = model_implicit.tower;
  it.profile_dim = world.profile_dim;
  it.item_feature_dim = width;
  it.condition_dim = interest.dim;
  it.num_topics = 0;

  auto& et = model_explicit.tower;
  et.profile_dim = world.profile_dim;
  et.item_feature_dim = width;
  et.num_topics = world.topics;
}

void RunConfig::validate() const {
  world.validate();
  model_implicit.interest.validate();
  model_implicit.tower.validate();
  model_explicit.tower.validate();
  trainer.validate();
  index.validate();
  serving.validate();
  eval.validate();
  if (serving.k_ex > world.topics) {
    throw ConfigError("serving.k_ex exceeds the topic count");
  }
}

RunConfig default_run_config() {
  RunConfig c;
  c.model_implicit.interest.k = 7;
  c.serving.k_ex = 5;
  c.world.days = 15;
  c.trainer.batch_size = 256;
  c.resolve();
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("seed")) throw ConfigError("config needs a top-level seed");
  RunConfig c = default_run_config();
  Reader r(j, "config");
  r("seed", c.seed);
  visit_run(r, c, c.data);
  r.finish();
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string to_json_string(const RunConfig& config) {
  Writer w;
  w("seed", config.seed);
  RunConfig copy = config;
  visit_run(w, copy, copy.data);
  // Resolved values that are not configurable directly.
  w.j["resolved"] = {
      {"world_seed", config.world.seed},
      {"trainer_seed", config.trainer.seed},
      {"index_seed", config.index.seed},
      {"serving_seed", config.serving.seed},
      {"feature_dims", config.model_implicit.interest.feature_dims},
      {"item_feature_dim", config.model_implicit.tower.item_feature_dim},
      {"profile_dim", config.model_implicit.tower.profile_dim},
      {"num_topics", config.model_explicit.tower.num_topics},
      {"max_seq_len", config.data.max_seq_len},
  };
  return w.j.dump(2);
}

}  // namespace mvr
