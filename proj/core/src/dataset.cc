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

#include "mvr/dataset.h"

#include <algorithm>
#include <random>

#include "mvr/error.h"

namespace mvr {

TrainEvalSplit split_train_eval(std::span<const Engagement> records,
                                std::uint32_t days) {
  if (days < 2) throw ConfigError("split needs at least 2 days");
  TrainEvalSplit out;
  for (const auto& e : records) {
    if (e.day == days) {
      out.eval.push_back(e);
    } else if (e.day >= 1 && e.day < days) {
      out.train.push_back(e);
    } else {
      throw ConfigError("engagement day " + std::to_string(e.day) +
                        " outside 1.." + std::to_string(days));
    }
  }
  return out;
}

ItemCatalog make_catalog(const World& world) {
  ItemCatalog c;
  const auto dims = world.config.feature_dims();
  std::size_t width = 0;
  for (std::size_t d : dims) width += d;
  c.features = Tensor::matrix(world.items.size(), width);
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    const auto& it = world.items[i];
    c.ids.push_back(it.item_id);
    c.topics.push_back(it.labels);
    const auto row = concat_features(it.features, dims);
    std::copy(row.begin(), row.end(), c.features.row(i).begin());
  }
  c.rebuild_index();
  return c;
}

namespace {

// Logs are grouped by user; returns [begin, end) per user id.
std::vector<std::pair<std::size_t, std::size_t>> user_ranges(
    std::span<const Engagement> records, std::size_t users) {
  std::vector<std::pair<std::size_t, std::size_t>> out(users, {0, 0});
  std::size_t i = 0;
  while (i < records.size()) {
    const std::uint64_t u = records[i].user_id;
    if (u >= users) throw ConfigError("engagement for unknown user " + std::to_string(u));
    std::size_t j = i;
    while (j < records.size() && records[j].user_id == u) ++j;
    if (out[u].second != 0) throw ConfigError("engagements are not grouped by user");
    out[u] = {i, j};
    i = j;
  }
  return out;
}

}  // namespace

Dataset build_dataset(const World& world, const Logs& logs,
                      const DatasetOptions& options) {
  if (options.max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  const std::uint32_t days = static_cast<std::uint32_t>(world.config.days);
  Dataset ds;
  ds.catalog = make_catalog(world);
  const std::size_t n_users = world.users.size();
  const auto organic = user_ranges(logs.organic, n_users);
  const auto expl = user_ranges(logs.explicit_log, n_users);

  for (std::size_t u = 0; u < n_users; ++u) {
    const auto& su = world.users[u];
    auto features = std::make_shared<UserFeatures>();
    features->profile = su.profile;
    features->followed_topics = su.followed_topics;
    ds.users.push_back(features);

    // Full organic timeline; training windows and the eval history are views.
    auto timeline = std::make_shared<EngagementSequence>();
    std::size_t history_end = 0;
    for (std::size_t i = organic[u].first; i < organic[u].second; ++i) {
      const Engagement& e = logs.organic[i];
      timeline->items.push_back(
          to_sequence_item(world, e, std::int64_t(e.day) * 1000000 +
                                         std::int64_t(timeline->items.size())));
      if (e.day < days) history_end = timeline->items.size();
    }
    auto history = std::make_shared<EngagementSequence>();
    history->items.assign(timeline->items.begin(),
                          timeline->items.begin() + std::ptrdiff_t(history_end));
    ds.histories.push_back(history);
    std::shared_ptr<const EngagementSequence> shared = timeline;

    auto window = [&](std::size_t end) {
      SequenceView v;
      v.timeline = shared;
      v.end = end;
      v.begin = end > options.max_seq_len ? end - options.max_seq_len : 0;
      return v;
    };
    auto has_valid = [&](const SequenceView& v) {
      for (const auto& it : v.items()) {
        if (it.valid) return true;
      }
      return false;
    };

    std::vector<TrainingExample> mine;
    for (std::size_t p = 0; p < history_end; ++p) {
      if (!timeline->items[p].valid) continue;
      SequenceView v = window(p);
      if (!has_valid(v)) continue;
      mine.push_back(TrainingExample{u, features, v, timeline->items[p].item_id,
                                     std::nullopt});
    }
    if (options.max_examples_per_user && mine.size() > options.max_examples_per_user) {
      mine.erase(mine.begin(),
                 mine.end() - std::ptrdiff_t(options.max_examples_per_user));
    }
    ds.implicit_train.insert(ds.implicit_train.end(), mine.begin(), mine.end());

    const SequenceView eval_view = window(history_end);
    for (std::size_t p = history_end; p < timeline->items.size(); ++p) {
      if (!timeline->items[p].valid) continue;
      ds.eval.push_back(EvalRecord{u, features, eval_view,
                                   timeline->items[p].item_id, std::nullopt});
      break;
    }

    bool have_explicit_eval = false;
    for (std::size_t i = expl[u].first; i < expl[u].second; ++i) {
      const Engagement& e = logs.explicit_log[i];
      if (!e.source_topic) throw ConfigError("explicit engagement without a source topic");
      if (e.day < days) {
        ds.explicit_train.push_back(
            TrainingExample{u, features, SequenceView{}, e.item_id, e.source_topic});
      } else if (!have_explicit_eval) {
        ds.explicit_eval.push_back(
            EvalRecord{u, features, eval_view, e.item_id, e.source_topic});
        have_explicit_eval = true;
      }
    }
  }
  return ds;
}

std::vector<TrainingExample> make_item_interest_examples(
    std::span<const TrainingExample> examples, const World& world,
    std::uint64_t seed) {
  std::vector<TrainingExample> out(examples.begin(), examples.end());
  Rng rng(derive_seed(seed, 0x6969));
  for (auto& ex : out) {
    const auto& labels = world.item(ex.target_item).labels;
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    ex.source_topic = labels[pick(rng)];
  }
  return out;
}

}  // namespace mvr
