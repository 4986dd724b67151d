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

#include "mvr/models.h"

#include <algorithm>

#include "mvr/error.h"

namespace mvr {

void ItemCatalog::rebuild_index() {
  index.clear();
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) {
      throw ConfigError("duplicate item id " + std::to_string(ids[i]));
    }
  }
}

std::size_t ItemCatalog::row(std::uint64_t id) const {
  auto it = index.find(id);
  if (it == index.end()) {
    throw ConfigError("unknown item id " + std::to_string(id));
  }
  return it->second;
}

Tensor ItemCatalog::gather(std::span<const std::uint64_t> item_ids) const {
  const std::size_t f = features.cols();
  Tensor out = Tensor::matrix(item_ids.size(), f);
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    auto src = features.row(row(item_ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

ad::Var RetrievalModel::forward_items(const ad::Binder& bind,
                                      const Tensor& features) const {
  return tower_.item_tower(bind, bind.tape.constant(features));
}

Tensor RetrievalModel::item_embeddings(const ParamStore& params,
                                       const Tensor& features) const {
  constexpr std::size_t kChunk = 4096;
  const std::size_t n = features.rows(), f = features.cols();
  Tensor out = Tensor::matrix(n, tower_.config().dim);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t len = std::min(kChunk, n - begin);
    Tensor chunk = Tensor::matrix(len, f);
    std::copy(features.data().begin() + std::ptrdiff_t(begin * f),
              features.data().begin() + std::ptrdiff_t((begin + len) * f),
              chunk.data().begin());
    const Tensor emb = tower_.item_embeddings(chunk, params);
    std::copy(emb.data().begin(), emb.data().end(),
              out.data().begin() + std::ptrdiff_t(begin * emb.cols()));
  }
  return out;
}

Tensor RetrievalModel::profile_rows(
    std::span<const TrainingExample* const> batch, std::size_t dim) {
  Tensor out = Tensor::matrix(batch.size(), dim);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& p = batch[b]->user->profile;
    if (p.size() != dim) {
      throw DimensionError("profile dim " + std::to_string(p.size()) +
                           ", expected " + std::to_string(dim));
    }
    std::copy(p.begin(), p.end(), out.row(b).begin());
  }
  return out;
}

namespace {

TowerConfig implicit_tower(ImplicitModelConfig& c) {
  c.tower.condition_dim = c.interest.dim;
  c.tower.num_topics = 0;
  return c.tower;
}

}  // namespace

ImplicitModel::ImplicitModel(ImplicitModelConfig config)
    : RetrievalModel(TwoTower(implicit_tower(config), "implicit/tower")),
      config_(config),
      interest_(config.interest, "implicit/interest") {}

void ImplicitModel::init_params(ParamStore& params, Rng& rng) const {
  interest_.init_params(params, rng);
  tower_.init_params(params, rng);
}

ModelForward ImplicitModel::forward_users(
    const ad::Binder& bind, std::span<const TrainingExample* const> batch,
    Rng& rng, RoutingCache* cache) const {
  std::vector<SequenceView> views;
  views.reserve(batch.size());
  for (const auto* ex : batch) views.push_back(ex->seq);
  auto cond = bind.trainable
                  ? interest_.conditions(bind.tape, *bind.trainable, views, rng,
                                         cache)
                  : interest_.conditions_frozen(bind.tape, bind.store, views,
                                                rng, cache);
  ModelForward out;
  out.k = static_cast<std::size_t>(config_.interest.k);
  ad::Var profiles = bind.tape.constant(
      profile_rows(batch, config_.tower.profile_dim));
  out.user_rows = tower_.user_tower(bind, profiles, cond.rows, out.k);
  out.active.resize(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out.active[b].resize(out.k);
    for (std::size_t j = 0; j < out.k; ++j) {
      out.active[b][j] = cond.importances[b][j] > 0.0;
    }
  }
  return out;
}

UserEmbeddingSet ImplicitModel::user_embeddings(const ParamStore& params,
                                                const UserFeatures& user,
                                                const SequenceView& seq,
                                                Rng& rng) const {
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  TrainingExample ex;
  ex.user = std::shared_ptr<const UserFeatures>(&user, [](const UserFeatures*) {});
  ex.seq = seq;
  const TrainingExample* batch[] = {&ex};
  auto cond = interest_.conditions_frozen(tape, params,
                                          std::span<const SequenceView>(&seq, 1),
                                          rng);
  ad::Var profiles = tape.constant(profile_rows(batch, config_.tower.profile_dim));
  const std::size_t k = static_cast<std::size_t>(config_.interest.k);
  UserEmbeddingSet out;
  out.embeddings = tower_.user_tower(bind, profiles, cond.rows, k).value();
  out.budgets.assign(k, 0);
  out.source = SourceKind::kImplicit;
  out.condition_meta = cond.importances[0];
  return out;
}

ExplicitModel::ExplicitModel(ExplicitModelConfig config)
    : RetrievalModel(TwoTower(config.tower, "explicit/tower")),
      config_(std::move(config)) {
  if (config_.tower.num_topics == 0) {
    throw ConfigError("explicit model needs a topic vocabulary");
  }
}

void ExplicitModel::init_params(ParamStore& params, Rng& rng) const {
  tower_.init_params(params, rng);
}

ModelForward ExplicitModel::forward_users(
    const ad::Binder& bind, std::span<const TrainingExample* const> batch,
    Rng&, RoutingCache*) const {
  std::vector<std::uint32_t> topics;
  topics.reserve(batch.size());
  for (const auto* ex : batch) {
    if (!ex->source_topic) {
      throw ConfigError("explicit example without a source topic");
    }
    topics.push_back(*ex->source_topic);
  }
  ModelForward out;
  out.k = 1;
  ad::Var profiles = bind.tape.constant(
      profile_rows(batch, config_.tower.profile_dim));
  out.user_rows = tower_.user_tower(
      bind, profiles, tower_.embed_conditions(bind, topics), 1);
  out.active.assign(batch.size(), std::vector<bool>{true});
  return out;
}

UserEmbeddingSet ExplicitModel::user_embeddings(
    const ParamStore& params, const UserFeatures& user,
    const std::vector<std::uint32_t>& topics) const {
  UserEmbeddingSet out;
  out.source = SourceKind::kExplicit;
  if (topics.empty()) {
    out.embeddings = Tensor::matrix(0, config_.tower.dim);
    return out;
  }
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  Tensor profiles = Tensor::matrix(1, user.profile.size());
  std::copy(user.profile.begin(), user.profile.end(), profiles.data().begin());
  // One copy of the profile per topic, each crossed with its condition.
  ad::Var conds = tower_.embed_conditions(bind, topics);
  out.embeddings = tower_
                       .user_tower(bind,
                                   ad::repeat_rows(tape.constant(profiles),
                                                   topics.size()),
                                   conds, 1)
                       .value();
  out.budgets.assign(topics.size(), 0);
  out.condition_meta.assign(topics.begin(), topics.end());
  return out;
}

}  // namespace mvr
