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

// Implicit interest conditions mined from a user's engagement sequence.
//
// The deployed method clusters summarized sequence items with capsule-style
// routing, seeded by validity-aware farthest point initialization and using
// single-assignment routing. Capsule routing with Gaussian seeding and a
// bilinear map (mind), multi-head self-attention and learnable interest
// tokens are provided as baselines.

#ifndef MVR_INTEREST_H_
#define MVR_INTEREST_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvr/autodiff.h"
#include "mvr/tensor.h"

namespace mvr {

// One entry per feature slot. An empty entry means the feature is missing;
// it is zero-filled and the item is marked invalid.
using FeatureFields = std::vector<std::vector<double>>;

struct SequenceItem {
  std::uint64_t item_id = 0;
  FeatureFields features;
  bool positive_action = true;
  std::int64_t timestamp = 0;
  bool valid = true;
};

struct EngagementSequence {
  std::vector<SequenceItem> items;

  std::size_t size() const { return items.size(); }
  std::size_t num_valid() const;
  // Throws ConfigError when the length exceeds max_len, timestamps decrease,
  // or an item with a missing feature / negative action is flagged valid.
  void validate(std::size_t max_len) const;
};

// True when the item has every feature present and a positive action.
bool derive_validity(const SequenceItem& item);

// A window [begin, end) into a shared timeline. Training examples drawn from
// the same user share one timeline instead of copying their history.
struct SequenceView {
  std::shared_ptr<const EngagementSequence> timeline;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::span<const SequenceItem> items() const;
  std::size_t size() const { return end - begin; }
  EngagementSequence materialize() const;
  static SequenceView whole(std::shared_ptr<const EngagementSequence> seq);
};

// Concatenates feature slots into one row, zero-filling missing slots.
// Throws DimensionError when a present slot has the wrong width.
std::vector<double> concat_features(const FeatureFields& fields,
                                    std::span<const std::size_t> dims);

struct ItemEmbeddingMatrix {
  Tensor embeddings;  // [L x d]
  std::vector<bool> valid;

  std::size_t size() const { return valid.size(); }
  std::size_t num_valid() const;
};

struct CentroidSet {
  Tensor centroids;                 // [K x d]
  std::vector<double> importances;  // column sums of routing_weights
  Tensor routing_weights;           // [L x K]
};

enum class InterestMode {
  kDcm,
  kMind,
  // Dynamic routing with independent init/routing toggles and no bilinear
  // map; used for the mixed cells of the ablation grid.
  kCapsule,
  kSelfAttention,
  kInterestToken,
};

std::string to_string(InterestMode mode);
InterestMode parse_interest_mode(const std::string& name);

struct InterestModelConfig {
  InterestMode mode = InterestMode::kDcm;
  int k = 7;
  int routing_steps = 3;
  bool use_vafpi = true;
  bool use_sar = true;
  std::size_t dim = 64;
  std::vector<std::size_t> feature_dims = {64, 1};
  std::size_t summary_hidden = 64;
  std::size_t max_seq_len = 128;
  double gaussian_init_stddev = 0.1;
  // Unit-scale tokens start with distinct attention patterns; at 0.1 every
  // token attends near-uniformly and the K outputs can stay tied.
  double token_init_stddev = 1.0;

  bool is_routing() const;
  std::size_t feature_width() const;
  // Enforces the mode/toggle pairing (dcm needs both toggles, mind neither).
  void validate() const;

  static InterestModelConfig preset(InterestMode mode, int k, std::size_t dim,
                                    std::vector<std::size_t> feature_dims);
};

// First centroid is a uniformly random valid item; each next one is the
// valid, not yet chosen item minimizing its max similarity to the chosen
// centroids (ties to the lowest index). When valid items run out the sweep
// restarts over all valid items. Invalid items are never chosen.
Tensor vafpi_init(const ItemEmbeddingMatrix& items, int k, Rng& rng);
std::vector<std::size_t> vafpi_select(const ItemEmbeddingMatrix& items, int k,
                                      Rng& rng);

Tensor gaussian_init(int k, std::size_t dim, double stddev, Rng& rng);

// b_ij = softmax_j(c_j^T S e_i); S may be null (identity). Invalid rows are 0.
Tensor route_soft(const ItemEmbeddingMatrix& items, const Tensor& centroids,
                  const Tensor* bilinear = nullptr);

// Softmax over c_j^T e_i with every non-argmax entry zeroed and no
// renormalization. Ties go to the lowest centroid index.
Tensor route_single_assignment(const ItemEmbeddingMatrix& items,
                               const Tensor& centroids);

// c_j = squash(sum_i b_ij S e_i).
Tensor update_centroids(const Tensor& weights,
                        const ItemEmbeddingMatrix& items,
                        const Tensor* bilinear = nullptr);

// Mean pairwise cosine of the L2-normalized rows. Zero rows count as
// orthogonal to everything. Throws UndefinedMetricError when K < 2.
double centroid_divergence(const Tensor& centroids);

struct RoutingTrace {
  std::vector<Tensor> centroids;  // after init and after every update
};

struct ClusterResult {
  CentroidSet set;
  // Routing weights of the last update; the differentiable centroids are
  // squash(update_weights^T * items).
  Tensor update_weights;
};

// Initialization, routing_steps alternations of routing and update, then a
// final routing pass for the importances. `items` must already be projected
// by the bilinear map when one is used.
ClusterResult cluster_items(const ItemEmbeddingMatrix& items,
                            const InterestModelConfig& config, Rng& rng,
                            RoutingTrace* trace = nullptr);

// Routing decisions of a batch. Routing weights are constants of the
// differentiable graph; replaying them lets finite-difference checks hold
// the stop-gradient quantities fixed.
struct RoutingCache {
  std::vector<Tensor> update_weights;
  std::vector<std::vector<double>> importances;
  bool filled() const { return !update_weights.empty(); }
};

class InterestModel {
 public:
  explicit InterestModel(InterestModelConfig config,
                         std::string prefix = "interest");

  const InterestModelConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  void init_params(ParamStore& params, Rng& rng) const;

  // [L x F] zero-filled feature rows plus the per-item validity.
  Tensor feature_rows(std::span<const SequenceItem> items,
                      std::vector<bool>* valid) const;

  // e_i = W2^T GELU(W1^T concat(f_i1..f_iN)).
  ItemEmbeddingMatrix summarize_items(const EngagementSequence& seq,
                                      const ParamStore& params) const;
  ad::Var summarize(ad::Tape& tape, ParamStore& params,
                    const Tensor& features) const;

  // Routing modes only. Throws EmptySequenceError without a valid item.
  CentroidSet run_dcm(const EngagementSequence& seq, const ParamStore& params,
                      Rng& rng, RoutingTrace* trace = nullptr) const;

  Tensor self_attention_conditions(const EngagementSequence& seq,
                                   const ParamStore& params) const;
  Tensor interest_token_conditions(const EngagementSequence& seq,
                                   const ParamStore& params) const;

  struct BatchConditions {
    ad::Var rows;  // [B*K x d], K rows per example
    std::vector<std::vector<double>> importances;
  };
  // A non-null empty cache records the routing; a filled one is replayed.
  BatchConditions conditions(ad::Tape& tape, ParamStore& params,
                             std::span<const SequenceView> sequences,
                             Rng& rng, RoutingCache* cache = nullptr) const;
  // Same graph with every parameter bound as a constant.
  BatchConditions conditions_frozen(ad::Tape& tape, const ParamStore& params,
                                    std::span<const SequenceView> sequences,
                                    Rng& rng,
                                    RoutingCache* cache = nullptr) const;

  std::vector<std::string> param_names() const;

 private:
  std::string name(const std::string& suffix) const;
  ad::Var summarize_impl(const ad::Binder& bind, const Tensor& features) const;
  ad::Var attention_block(const ad::Binder& bind, ad::Var items,
                          const std::vector<bool>& valid) const;
  BatchConditions build_conditions(const ad::Binder& bind,
                                   std::span<const SequenceView> sequences,
                                   Rng& rng, RoutingCache* cache) const;

  InterestModelConfig config_;
  std::string prefix_;
};

}  // namespace mvr

#endif  // MVR_INTEREST_H_
