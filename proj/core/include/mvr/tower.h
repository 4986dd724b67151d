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

// User and item towers. The user tower crosses the profile with one condition
// vector at a time; the item tower sees item features only, so the two never
// share activations before the final dot product.

#ifndef MVR_TOWER_H_
#define MVR_TOWER_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvr/autodiff.h"
#include "mvr/tensor.h"

namespace mvr {

struct UserFeatures {
  std::vector<double> profile;
  std::vector<std::uint32_t> followed_topics;
};

enum class SourceKind { kImplicit, kExplicit };

struct UserEmbeddingSet {
  Tensor embeddings;  // [K x d], unit-norm rows
  std::vector<std::size_t> budgets;
  SourceKind source = SourceKind::kImplicit;
  // Centroid importance (implicit) or topic id (explicit), one per row.
  std::vector<double> condition_meta;

  std::size_t size() const { return embeddings.rows(); }
};

struct TowerConfig {
  std::size_t profile_dim = 16;
  std::size_t condition_dim = 64;
  std::size_t item_feature_dim = 65;
  std::size_t hidden = 256;
  std::size_t dim = 64;
  // Rows of the condition embedding table; 0 when conditions come from
  // elsewhere (implicit centroids).
  std::size_t num_topics = 0;
  double final_bias_init = 0.01;

  void validate() const;
};

class TwoTower {
 public:
  explicit TwoTower(TowerConfig config, std::string prefix = "tower");

  const TowerConfig& config() const { return config_; }
  void init_params(ParamStore& params, Rng& rng) const;
  std::vector<std::string> param_names() const;

  // Row `topic` of the condition table. Throws UnknownTopicError.
  Tensor embed_condition(std::uint32_t topic, const ParamStore& params) const;
  ad::Var embed_conditions(const ad::Binder& bind,
                           const std::vector<std::uint32_t>& topics) const;

  // profiles [B x d_u], conditions [B*K x d_c] -> [B*K x d]. Row b*K + j is
  // the embedding of example b under condition j.
  ad::Var user_tower(const ad::Binder& bind, ad::Var profiles,
                     ad::Var conditions, std::size_t k) const;
  // features [N x F] -> [N x d].
  ad::Var item_tower(const ad::Binder& bind, ad::Var features) const;

  UserEmbeddingSet user_embeddings(const UserFeatures& user,
                                   const Tensor& conditions,
                                   const ParamStore& params) const;
  Tensor item_embeddings(const Tensor& features,
                         const ParamStore& params) const;

 private:
  std::string name(const std::string& suffix) const;
  ad::Var mlp(const ad::Binder& bind, const std::string& tag,
              ad::Var input) const;

  TowerConfig config_;
  std::string prefix_;
};

}  // namespace mvr

#endif  // MVR_TOWER_H_
