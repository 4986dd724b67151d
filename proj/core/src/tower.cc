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

#include "mvr/tower.h"

#include <algorithm>
#include <cmath>

#include "mvr/error.h"

namespace mvr {

void TowerConfig::validate() const {
  if (condition_dim == 0 || item_feature_dim == 0 || hidden == 0 || dim == 0) {
    throw ConfigError("tower dims must be positive");
  }
}

TwoTower::TwoTower(TowerConfig config, std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)) {
  config_.validate();
}

std::string TwoTower::name(const std::string& suffix) const {
  return prefix_ + "/" + suffix;
}

std::vector<std::string> TwoTower::param_names() const {
  std::vector<std::string> names;
  for (const char* tag : {"user", "item"}) {
    for (const char* p : {"w1", "b1", "w2", "b2"}) {
      names.push_back(name(std::string(tag) + "_" + p));
    }
  }
  if (config_.num_topics > 0) names.push_back(name("topics"));
  return names;
}

void TwoTower::init_params(ParamStore& params, Rng& rng) const {
  const std::size_t h = config_.hidden, d = config_.dim;
  auto add_mlp = [&](const std::string& tag, std::size_t in) {
    params.add(name(tag + "_w1"),
               Tensor::gaussian({in, h}, 1.0 / std::sqrt(double(in)), rng));
    params.add(name(tag + "_b1"), Tensor({h}, 0.0));
    params.add(name(tag + "_w2"),
               Tensor::gaussian({h, d}, 1.0 / std::sqrt(double(h)), rng));
    params.add(name(tag + "_b2"), Tensor({d}, config_.final_bias_init));
  };
  add_mlp("user", config_.profile_dim + config_.condition_dim);
  add_mlp("item", config_.item_feature_dim);
  if (config_.num_topics > 0) {
    params.add(name("topics"),
               Tensor::gaussian({config_.num_topics, config_.condition_dim},
                                1.0 / std::sqrt(double(config_.condition_dim)),
                                rng));
  }
}

Tensor TwoTower::embed_condition(std::uint32_t topic,
                                 const ParamStore& params) const {
  if (topic >= config_.num_topics) {
    throw UnknownTopicError("topic " + std::to_string(topic) +
                            " outside vocabulary of " +
                            std::to_string(config_.num_topics));
  }
  auto row = params.value(name("topics")).row(topic);
  return Tensor::vector(std::vector<double>(row.begin(), row.end()));
}

ad::Var TwoTower::embed_conditions(
    const ad::Binder& bind, const std::vector<std::uint32_t>& topics) const {
  for (std::uint32_t t : topics) {
    if (t >= config_.num_topics) {
      throw UnknownTopicError("topic " + std::to_string(t) +
                              " outside vocabulary of " +
                              std::to_string(config_.num_topics));
    }
  }
  std::vector<std::size_t> rows(topics.begin(), topics.end());
  return ad::gather_rows(bind(name("topics")), rows);
}

ad::Var TwoTower::mlp(const ad::Binder& bind, const std::string& tag,
                      ad::Var input) const {
  ad::Var h = ad::gelu(ad::add_row(ad::matmul(input, bind(name(tag + "_w1"))),
                                   bind(name(tag + "_b1"))));
  ad::Var out = ad::add_row(ad::matmul(h, bind(name(tag + "_w2"))),
                            bind(name(tag + "_b2")));
  return ad::l2_normalize_rows(out);
}

ad::Var TwoTower::user_tower(const ad::Binder& bind, ad::Var profiles,
                             ad::Var conditions, std::size_t k) const {
  if (k == 0) throw ConfigError("user tower needs at least one condition");
  if (profiles.value().cols() != config_.profile_dim) {
    throw DimensionError("profile dim " +
                         std::to_string(profiles.value().cols()) +
                         ", expected " + std::to_string(config_.profile_dim));
  }
  if (conditions.value().cols() != config_.condition_dim ||
      conditions.value().rows() != profiles.value().rows() * k) {
    throw DimensionError("conditions " + conditions.value().shape_string() +
                         " do not match " +
                         std::to_string(profiles.value().rows()) + " x " +
                         std::to_string(k) + " conditions of dim " +
                         std::to_string(config_.condition_dim));
  }
  return mlp(bind, "user",
             ad::concat_cols(ad::repeat_rows(profiles, k), conditions));
}

ad::Var TwoTower::item_tower(const ad::Binder& bind, ad::Var features) const {
  if (features.value().cols() != config_.item_feature_dim) {
    throw DimensionError("item feature dim " +
                         std::to_string(features.value().cols()) +
                         ", expected " +
                         std::to_string(config_.item_feature_dim));
  }
  return mlp(bind, "item", features);
}

UserEmbeddingSet TwoTower::user_embeddings(const UserFeatures& user,
                                           const Tensor& conditions,
                                           const ParamStore& params) const {
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  Tensor profile = Tensor::matrix(1, user.profile.size());
  std::copy(user.profile.begin(), user.profile.end(), profile.data().begin());
  Tensor cond = conditions.rank() == 1
                    ? Tensor::matrix(1, conditions.size())
                    : conditions;
  if (conditions.rank() == 1) {
    std::copy(conditions.data().begin(), conditions.data().end(),
              cond.data().begin());
  }
  UserEmbeddingSet out;
  out.embeddings = user_tower(bind, tape.constant(std::move(profile)),
                              tape.constant(cond), cond.rows())
                       .value();
  out.budgets.assign(out.embeddings.rows(), 0);
  return out;
}

Tensor TwoTower::item_embeddings(const Tensor& features,
                                 const ParamStore& params) const {
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  Tensor f = features;
  if (f.rank() == 1) f = Tensor({1, features.size()}, features.storage());
  return item_tower(bind, tape.constant(std::move(f))).value();
}

}  // namespace mvr
