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

// The two retrieval models: implicit (conditions mined from the sequence)
// and explicit (conditions looked up from followed topics).

#ifndef MVR_MODELS_H_
#define MVR_MODELS_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/autodiff.h"
#include "mvr/interest.h"
#include "mvr/tower.h"

namespace mvr {

// Item features and topic labels addressed by item id.
struct ItemCatalog {
  std::vector<std::uint64_t> ids;
  Tensor features;  // [M x F]
  std::vector<std::vector<std::uint32_t>> topics;
  std::unordered_map<std::uint64_t, std::size_t> index;

  std::size_t size() const { return ids.size(); }
  void rebuild_index();
  // Throws ConfigError for an unknown id.
  std::size_t row(std::uint64_t id) const;
  Tensor gather(std::span<const std::uint64_t> item_ids) const;
};

struct TrainingExample {
  std::uint64_t user_id = 0;
  std::shared_ptr<const UserFeatures> user;
  SequenceView seq;
  std::uint64_t target_item = 0;
  std::optional<std::uint32_t> source_topic;
};

struct ModelForward {
  ad::Var user_rows;  // [B*K x d]
  std::size_t k = 1;
  // active[b][j] is false for conditions that carry no evidence (zero
  // routing mass); they take no part in association.
  std::vector<std::vector<bool>> active;
};

class RetrievalModel {
 public:
  virtual ~RetrievalModel() = default;

  virtual std::string kind() const = 0;
  virtual void init_params(ParamStore& params, Rng& rng) const = 0;
  // `cache` records or replays routing decisions (implicit model only).
  virtual ModelForward forward_users(
      const ad::Binder& bind, std::span<const TrainingExample* const> batch,
      Rng& rng, RoutingCache* cache = nullptr) const = 0;

  const TwoTower& tower() const { return tower_; }
  ad::Var forward_items(const ad::Binder& bind, const Tensor& features) const;
  // Embeds every catalog row, in chunks.
  Tensor item_embeddings(const ParamStore& params,
                         const Tensor& features) const;

 protected:
  explicit RetrievalModel(TwoTower tower) : tower_(std::move(tower)) {}
  static Tensor profile_rows(std::span<const TrainingExample* const> batch,
                             std::size_t dim);

  TwoTower tower_;
};

struct ImplicitModelConfig {
  InterestModelConfig interest;
  TowerConfig tower;
};

class ImplicitModel : public RetrievalModel {
 public:
  explicit ImplicitModel(ImplicitModelConfig config);

  std::string kind() const override { return "implicit"; }
  const ImplicitModelConfig& config() const { return config_; }
  const InterestModel& interest() const { return interest_; }

  void init_params(ParamStore& params, Rng& rng) const override;
  ModelForward forward_users(const ad::Binder& bind,
                             std::span<const TrainingExample* const> batch,
                             Rng& rng,
                             RoutingCache* cache = nullptr) const override;

  // One embedding per condition; condition_meta holds the importances.
  // Zero-importance rows are kept; callers drop them.
  UserEmbeddingSet user_embeddings(const ParamStore& params,
                                   const UserFeatures& user,
                                   const SequenceView& seq, Rng& rng) const;

 private:
  ImplicitModelConfig config_;
  InterestModel interest_;
};

struct ExplicitModelConfig {
  TowerConfig tower;
};

class ExplicitModel : public RetrievalModel {
 public:
  explicit ExplicitModel(ExplicitModelConfig config);

  std::string kind() const override { return "explicit"; }
  const ExplicitModelConfig& config() const { return config_; }

  void init_params(ParamStore& params, Rng& rng) const override;
  // One condition per example: its source topic.
  ModelForward forward_users(const ad::Binder& bind,
                             std::span<const TrainingExample* const> batch,
                             Rng& rng,
                             RoutingCache* cache = nullptr) const override;

  // condition_meta holds the topic ids. Throws UnknownTopicError.
  UserEmbeddingSet user_embeddings(
      const ParamStore& params, const UserFeatures& user,
      const std::vector<std::uint32_t>& topics) const;

 private:
  ExplicitModelConfig config_;
};

}  // namespace mvr

#endif  // MVR_MODELS_H_
