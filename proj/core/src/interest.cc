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

#include "mvr/interest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvr/error.h"

namespace mvr {

std::size_t EngagementSequence::num_valid() const {
  return static_cast<std::size_t>(std::count_if(
      items.begin(), items.end(), [](const SequenceItem& i) { return i.valid; }));
}

bool derive_validity(const SequenceItem& item) {
  if (!item.positive_action) return false;
  return std::none_of(item.features.begin(), item.features.end(),
                      [](const std::vector<double>& f) { return f.empty(); });
}

void EngagementSequence::validate(std::size_t max_len) const {
  if (items.size() > max_len) {
    throw ConfigError("sequence length " + std::to_string(items.size()) +
                      " exceeds max_seq_len " + std::to_string(max_len));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0 && items[i].timestamp < items[i - 1].timestamp) {
      throw ConfigError("sequence timestamps decrease at position " +
                        std::to_string(i));
    }
    if (items[i].valid && !derive_validity(items[i])) {
      throw ConfigError("item at position " + std::to_string(i) +
                        " is flagged valid but has a missing feature or a "
                        "negative action");
    }
  }
}

std::span<const SequenceItem> SequenceView::items() const {
  if (!timeline) return {};
  return std::span<const SequenceItem>(timeline->items).subspan(begin, size());
}

EngagementSequence SequenceView::materialize() const {
  auto s = items();
  return EngagementSequence{std::vector<SequenceItem>(s.begin(), s.end())};
}

SequenceView SequenceView::whole(std::shared_ptr<const EngagementSequence> seq) {
  const std::size_t n = seq->size();
  return SequenceView{std::move(seq), 0, n};
}

std::vector<double> concat_features(const FeatureFields& fields,
                                    std::span<const std::size_t> dims) {
  if (fields.size() != dims.size()) {
    throw DimensionError("expected " + std::to_string(dims.size()) +
                         " feature slots, got " +
                         std::to_string(fields.size()));
  }
  std::vector<double> out;
  out.reserve(std::accumulate(dims.begin(), dims.end(), std::size_t{0}));
  for (std::size_t s = 0; s < dims.size(); ++s) {
    if (fields[s].empty()) {
      out.insert(out.end(), dims[s], 0.0);
      continue;
    }
    if (fields[s].size() != dims[s]) {
      throw DimensionError("feature slot " + std::to_string(s) + " has width " +
                           std::to_string(fields[s].size()) + ", expected " +
                           std::to_string(dims[s]));
    }
    out.insert(out.end(), fields[s].begin(), fields[s].end());
  }
  return out;
}

std::size_t ItemEmbeddingMatrix::num_valid() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

std::string to_string(InterestMode mode) {
  switch (mode) {
    case InterestMode::kDcm:
      return "dcm";
    case InterestMode::kMind:
      return "mind";
    case InterestMode::kCapsule:
      return "capsule";
    case InterestMode::kSelfAttention:
      return "self_attention";
    case InterestMode::kInterestToken:
      return "interest_token";
  }
  return "unknown";
}

InterestMode parse_interest_mode(const std::string& name) {
  for (InterestMode m :
       {InterestMode::kDcm, InterestMode::kMind, InterestMode::kCapsule,
        InterestMode::kSelfAttention, InterestMode::kInterestToken}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown interest mode '" + name + "'");
}

bool InterestModelConfig::is_routing() const {
  return mode == InterestMode::kDcm || mode == InterestMode::kMind ||
         mode == InterestMode::kCapsule;
}

std::size_t InterestModelConfig::feature_width() const {
  return std::accumulate(feature_dims.begin(), feature_dims.end(),
                         std::size_t{0});
}

void InterestModelConfig::validate() const {
  if (k < 1) throw ConfigError("K must be at least 1");
  if (routing_steps < 1) throw ConfigError("routing_steps must be at least 1");
  if (dim == 0 || summary_hidden == 0) {
    throw ConfigError("embedding and hidden dims must be positive");
  }
  if (feature_dims.empty() || feature_width() == 0) {
    throw ConfigError("at least one non-empty feature slot is required");
  }
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  if (mode == InterestMode::kDcm && !(use_vafpi && use_sar)) {
    throw ConfigError("dcm mode requires use_vafpi and use_sar");
  }
  if (mode == InterestMode::kMind && (use_vafpi || use_sar)) {
    throw ConfigError("mind mode requires use_vafpi = use_sar = false");
  }
  if (!(gaussian_init_stddev > 0.0) || !(token_init_stddev > 0.0)) {
    throw ConfigError("init stddevs must be positive");
  }
}

InterestModelConfig InterestModelConfig::preset(
    InterestMode mode, int k, std::size_t dim,
    std::vector<std::size_t> feature_dims) {
  InterestModelConfig c;
  c.mode = mode;
  c.k = k;
  c.dim = dim;
  c.summary_hidden = dim;
  c.feature_dims = std::move(feature_dims);
  c.use_vafpi = mode == InterestMode::kDcm;
  c.use_sar = mode == InterestMode::kDcm;
  return c;
}

std::vector<std::size_t> vafpi_select(const ItemEmbeddingMatrix& items, int k,
                                      Rng& rng) {
  if (k < 1) throw ConfigError("K must be at least 1");
  std::vector<std::size_t> valid_ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items.valid[i]) valid_ids.push_back(i);
  }
  if (valid_ids.empty()) {
    throw EmptySequenceError("farthest point init needs a valid item");
  }
  std::uniform_int_distribution<std::size_t> pick(0, valid_ids.size() - 1);
  std::vector<std::size_t> chosen = {valid_ids[pick(rng)]};
  std::vector<bool> taken(items.size(), false);
  taken[chosen[0]] = true;
  // max_j c_j^T e_i over the chosen centroids, maintained incrementally.
  std::vector<double> max_sim(items.size(),
                              -std::numeric_limits<double>::infinity());
  const Tensor& e = items.embeddings;
  auto absorb = [&](std::size_t c) {
    for (std::size_t i : valid_ids) {
      max_sim[i] = std::max(max_sim[i], dot(e.row(c), e.row(i)));
    }
  };
  absorb(chosen[0]);
  while (chosen.size() < static_cast<std::size_t>(k)) {
    if (std::all_of(valid_ids.begin(), valid_ids.end(),
                    [&](std::size_t i) { return taken[i]; })) {
      std::fill(taken.begin(), taken.end(), false);
    }
    std::size_t best = items.size();
    for (std::size_t i : valid_ids) {
      if (taken[i]) continue;
      if (best == items.size() || max_sim[i] < max_sim[best]) best = i;
    }
    chosen.push_back(best);
    taken[best] = true;
    absorb(best);
  }
  return chosen;
}

Tensor vafpi_init(const ItemEmbeddingMatrix& items, int k, Rng& rng) {
  const auto ids = vafpi_select(items, k, rng);
  Tensor c = Tensor::matrix(ids.size(), items.embeddings.cols());
  for (std::size_t j = 0; j < ids.size(); ++j) {
    auto src = items.embeddings.row(ids[j]);
    std::copy(src.begin(), src.end(), c.row(j).begin());
  }
  return c;
}

Tensor gaussian_init(int k, std::size_t dim, double stddev, Rng& rng) {
  if (k < 1) throw ConfigError("K must be at least 1");
  return Tensor::gaussian({static_cast<std::size_t>(k), dim}, stddev, rng);
}

namespace {

void check_routing_shapes(const ItemEmbeddingMatrix& items,
                          const Tensor& centroids, const Tensor* bilinear) {
  const std::size_t d = items.embeddings.cols();
  if (items.embeddings.rows() != items.valid.size() && items.size() > 0) {
    throw DimensionError("embedding rows do not match validity mask");
  }
  if (centroids.cols() != d) {
    throw DimensionError("centroid dim " + std::to_string(centroids.cols()) +
                         " vs item dim " + std::to_string(d));
  }
  if (bilinear && (bilinear->rows() != d || bilinear->cols() != d)) {
    throw DimensionError("bilinear map must be d x d");
  }
}

// Rows are S e_i (or e_i without a map).
Tensor project(const Tensor& e, const Tensor* bilinear) {
  return bilinear ? matmul_nt(e, *bilinear) : e;
}

}  // namespace

Tensor route_soft(const ItemEmbeddingMatrix& items, const Tensor& centroids,
                  const Tensor* bilinear) {
  check_routing_shapes(items, centroids, bilinear);
  const Tensor p = project(items.embeddings, bilinear);
  const std::size_t l = items.size(), k = centroids.rows();
  Tensor w = Tensor::matrix(l, k);
  for (std::size_t i = 0; i < l; ++i) {
    if (!items.valid[i]) continue;
    auto row = w.row(i);
    for (std::size_t j = 0; j < k; ++j) row[j] = dot(centroids.row(j), p.row(i));
    softmax_inplace(row);
  }
  return w;
}

Tensor route_single_assignment(const ItemEmbeddingMatrix& items,
                               const Tensor& centroids) {
  check_routing_shapes(items, centroids, nullptr);
  const std::size_t l = items.size(), k = centroids.rows();
  Tensor w = Tensor::matrix(l, k);
  std::vector<double> logits(k);
  for (std::size_t i = 0; i < l; ++i) {
    if (!items.valid[i]) continue;
    for (std::size_t j = 0; j < k; ++j) {
      logits[j] = dot(centroids.row(j), items.embeddings.row(i));
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    softmax_inplace(logits);
    w(i, best) = logits[best];
  }
  return w;
}

Tensor update_centroids(const Tensor& weights, const ItemEmbeddingMatrix& items,
                        const Tensor* bilinear) {
  if (weights.rows() != items.size() && items.size() > 0) {
    throw DimensionError("routing weights rows do not match item count");
  }
  const std::size_t d = items.embeddings.cols();
  if (bilinear && (bilinear->rows() != d || bilinear->cols() != d)) {
    throw DimensionError("bilinear map must be d x d");
  }
  Tensor c = matmul_tn(weights, project(items.embeddings, bilinear));
  return squash(c);
}

double centroid_divergence(const Tensor& centroids) {
  const std::size_t k = centroids.rows();
  if (k < 2) throw UndefinedMetricError("divergence needs at least 2 centroids");
  std::vector<double> norms(k);
  for (std::size_t j = 0; j < k; ++j) norms[j] = norm(centroids.row(j));
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b, ++pairs) {
      if (norms[a] <= kNormEpsilon || norms[b] <= kNormEpsilon) continue;
      total += dot(centroids.row(a), centroids.row(b)) / (norms[a] * norms[b]);
    }
  }
  return total / static_cast<double>(pairs);
}

ClusterResult cluster_items(const ItemEmbeddingMatrix& items,
                            const InterestModelConfig& config, Rng& rng,
                            RoutingTrace* trace) {
  if (items.num_valid() == 0) {
    throw EmptySequenceError("clustering needs at least one valid item");
  }
  Tensor c = config.use_vafpi
                 ? vafpi_init(items, config.k, rng)
                 : gaussian_init(config.k, items.embeddings.cols(),
                                 config.gaussian_init_stddev, rng);
  if (trace) trace->centroids.push_back(c);
  auto route = [&](const Tensor& cent) {
    return config.use_sar ? route_single_assignment(items, cent)
                          : route_soft(items, cent);
  };
  Tensor w;
  for (int r = 0; r < config.routing_steps; ++r) {
    w = route(c);
    c = update_centroids(w, items);
    if (trace) trace->centroids.push_back(c);
  }
  ClusterResult out;
  out.set.routing_weights = route(c);
  out.set.importances.assign(c.rows(), 0.0);
  for (std::size_t i = 0; i < out.set.routing_weights.rows(); ++i) {
    auto row = out.set.routing_weights.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out.set.importances[j] += row[j];
  }
  out.set.centroids = std::move(c);
  out.update_weights = std::move(w);
  return out;
}

InterestModel::InterestModel(InterestModelConfig config, std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)) {
  config_.validate();
}

std::string InterestModel::name(const std::string& suffix) const {
  return prefix_ + "/" + suffix;
}

std::vector<std::string> InterestModel::param_names() const {
  std::vector<std::string> names = {name("sum_w1"), name("sum_w2")};
  switch (config_.mode) {
    case InterestMode::kMind:
      names.push_back(name("bilinear"));
      break;
    case InterestMode::kSelfAttention:
      for (int h = 0; h < config_.k; ++h) {
        for (const char* p : {"sa_q", "sa_k", "sa_v"}) {
          names.push_back(name(p + std::to_string(h)));
        }
      }
      break;
    case InterestMode::kInterestToken:
      names.push_back(name("tokens"));
      names.push_back(name("it_k"));
      names.push_back(name("it_v"));
      break;
    default:
      break;
  }
  return names;
}

void InterestModel::init_params(ParamStore& params, Rng& rng) const {
  const std::size_t f = config_.feature_width(), h = config_.summary_hidden,
                    d = config_.dim;
  params.add(name("sum_w1"),
             Tensor::gaussian({f, h}, 1.0 / std::sqrt(double(f)), rng));
  params.add(name("sum_w2"),
             Tensor::gaussian({h, d}, 1.0 / std::sqrt(double(h)), rng));
  const double proj = 1.0 / std::sqrt(double(d));
  switch (config_.mode) {
    case InterestMode::kMind:
      params.add(name("bilinear"), Tensor::identity(d));
      break;
    case InterestMode::kSelfAttention:
      for (int hd = 0; hd < config_.k; ++hd) {
        for (const char* p : {"sa_q", "sa_k", "sa_v"}) {
          params.add(name(p + std::to_string(hd)),
                     Tensor::gaussian({d, d}, proj, rng));
        }
      }
      break;
    case InterestMode::kInterestToken:
      params.add(name("tokens"),
                 Tensor::gaussian({static_cast<std::size_t>(config_.k), d},
                                  config_.token_init_stddev, rng));
      params.add(name("it_k"), Tensor::gaussian({d, d}, proj, rng));
      params.add(name("it_v"), Tensor::gaussian({d, d}, proj, rng));
      break;
    default:
      break;
  }
}

Tensor InterestModel::feature_rows(std::span<const SequenceItem> items,
                                   std::vector<bool>* valid) const {
  const std::size_t f = config_.feature_width();
  Tensor x = Tensor::matrix(items.size(), f);
  if (valid) valid->assign(items.size(), false);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto row = concat_features(items[i].features, config_.feature_dims);
    std::copy(row.begin(), row.end(), x.row(i).begin());
    if (valid) (*valid)[i] = items[i].valid && derive_validity(items[i]);
  }
  return x;
}

ad::Var InterestModel::summarize_impl(const ad::Binder& bind,
                                      const Tensor& features) const {
  ad::Var x = bind.tape.constant(features);
  ad::Var hidden = ad::gelu(ad::matmul(x, bind(name("sum_w1"))));
  return ad::matmul(hidden, bind(name("sum_w2")));
}

ad::Var InterestModel::summarize(ad::Tape& tape, ParamStore& params,
                                 const Tensor& features) const {
  return summarize_impl(ad::Binder::train(tape, params), features);
}

ItemEmbeddingMatrix InterestModel::summarize_items(
    const EngagementSequence& seq, const ParamStore& params) const {
  ItemEmbeddingMatrix out;
  const Tensor x = feature_rows(seq.items, &out.valid);
  const Tensor hidden = gelu(matmul(x, params.value(name("sum_w1"))));
  out.embeddings = matmul(hidden, params.value(name("sum_w2")));
  return out;
}

CentroidSet InterestModel::run_dcm(const EngagementSequence& seq,
                                   const ParamStore& params, Rng& rng,
                                   RoutingTrace* trace) const {
  if (!config_.is_routing()) {
    throw ConfigError("run_dcm needs a routing mode, got " +
                      to_string(config_.mode));
  }
  ItemEmbeddingMatrix items = summarize_items(seq, params);
  if (config_.mode == InterestMode::kMind) {
    items.embeddings =
        matmul_nt(items.embeddings, params.value(name("bilinear")));
  }
  return cluster_items(items, config_, rng, trace).set;
}

ad::Var InterestModel::attention_block(const ad::Binder& bind, ad::Var items,
                                       const std::vector<bool>& valid) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(double(config_.dim));
  if (config_.mode == InterestMode::kSelfAttention) {
    std::vector<ad::Var> heads;
    for (int h = 0; h < config_.k; ++h) {
      const std::string s = std::to_string(h);
      ad::Var q = ad::matmul(items, bind(name("sa_q" + s)));
      ad::Var k = ad::matmul(items, bind(name("sa_k" + s)));
      ad::Var v = ad::matmul(items, bind(name("sa_v" + s)));
      ad::Var att = ad::masked_softmax_rows(
          ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d), valid);
      heads.push_back(ad::mean_rows(ad::matmul(att, v), valid));
    }
    return ad::stack_rows(heads);
  }
  ad::Var k = ad::matmul(items, bind(name("it_k")));
  ad::Var v = ad::matmul(items, bind(name("it_v")));
  ad::Var att = ad::masked_softmax_rows(
      ad::scale(ad::matmul(bind(name("tokens")), ad::transpose(k)), inv_sqrt_d),
      valid);
  return ad::matmul(att, v);
}

Tensor InterestModel::self_attention_conditions(
    const EngagementSequence& seq, const ParamStore& params) const {
  if (config_.mode != InterestMode::kSelfAttention) {
    throw ConfigError("model is not in self_attention mode");
  }
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  std::vector<bool> valid;
  const Tensor x = feature_rows(seq.items, &valid);
  return attention_block(bind, summarize_impl(bind, x), valid).value();
}

Tensor InterestModel::interest_token_conditions(
    const EngagementSequence& seq, const ParamStore& params) const {
  if (config_.mode != InterestMode::kInterestToken) {
    throw ConfigError("model is not in interest_token mode");
  }
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, params);
  std::vector<bool> valid;
  const Tensor x = feature_rows(seq.items, &valid);
  return attention_block(bind, summarize_impl(bind, x), valid).value();
}

InterestModel::BatchConditions InterestModel::build_conditions(
    const ad::Binder& bind, std::span<const SequenceView> sequences, Rng& rng,
    RoutingCache* cache) const {
  const std::size_t k = static_cast<std::size_t>(config_.k);
  const std::size_t f = config_.feature_width(), d = config_.dim;
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();

  Tensor x = Tensor::matrix(total, f);
  std::vector<std::vector<bool>> valid(sequences.size());
  std::vector<std::size_t> offsets(sequences.size());
  std::size_t off = 0;
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    offsets[b] = off;
    const Tensor rows = feature_rows(sequences[b].items(), &valid[b]);
    std::copy(rows.data().begin(), rows.data().end(),
              x.data().begin() + static_cast<std::ptrdiff_t>(off * f));
    off += sequences[b].size();
  }
  ad::Var e = summarize_impl(bind, x);

  BatchConditions out;
  out.importances.assign(sequences.size(), std::vector<double>(k, 0.0));

  if (config_.is_routing()) {
    const bool mind = config_.mode == InterestMode::kMind;
    ad::Var s_map;
    Tensor projected;
    if (mind) {
      s_map = bind(name("bilinear"));
      projected = matmul_nt(e.value(), s_map.value());
    }
    const Tensor& routed = mind ? projected : e.value();
    const bool replay = cache && cache->filled();
    if (replay && cache->update_weights.size() != sequences.size()) {
      throw ConfigError("routing cache does not match the batch");
    }
    std::vector<ad::Segment> segments;
    segments.reserve(sequences.size());
    for (std::size_t b = 0; b < sequences.size(); ++b) {
      const std::size_t len = sequences[b].size();
      if (replay) {
        out.importances[b] = cache->importances[b];
        segments.push_back({offsets[b], cache->update_weights[b]});
        continue;
      }
      ItemEmbeddingMatrix items;
      items.valid = valid[b];
      items.embeddings = Tensor::matrix(len, d);
      std::copy(routed.data().begin() + static_cast<std::ptrdiff_t>(offsets[b] * d),
                routed.data().begin() +
                    static_cast<std::ptrdiff_t>((offsets[b] + len) * d),
                items.embeddings.data().begin());
      if (items.num_valid() == 0) {
        // No evidence: K zero conditions, all inactive.
        segments.push_back({offsets[b], Tensor::matrix(len, k)});
        continue;
      }
      ClusterResult r = cluster_items(items, config_, rng);
      out.importances[b] = r.set.importances;
      segments.push_back({offsets[b], std::move(r.update_weights)});
    }
    if (cache && !replay) {
      for (const auto& s : segments) cache->update_weights.push_back(s.weights);
      cache->importances = out.importances;
    }
    ad::Var sums = ad::segment_weighted_sum(e, std::move(segments));
    if (mind) sums = ad::matmul(sums, ad::transpose(s_map));
    out.rows = ad::squash_rows(sums);
    return out;
  }

  std::vector<ad::Var> blocks;
  blocks.reserve(sequences.size());
  for (std::size_t b = 0; b < sequences.size(); ++b) {
    ad::Var items = ad::slice_rows(e, offsets[b], sequences[b].size());
    blocks.push_back(attention_block(bind, items, valid[b]));
    if (std::find(valid[b].begin(), valid[b].end(), true) != valid[b].end()) {
      out.importances[b].assign(k, 1.0);
    }
  }
  out.rows = ad::stack_rows(blocks);
  return out;
}

InterestModel::BatchConditions InterestModel::conditions(
    ad::Tape& tape, ParamStore& params, std::span<const SequenceView> sequences,
    Rng& rng, RoutingCache* cache) const {
  return build_conditions(ad::Binder::train(tape, params), sequences, rng,
                          cache);
}

InterestModel::BatchConditions InterestModel::conditions_frozen(
    ad::Tape& tape, const ParamStore& params,
    std::span<const SequenceView> sequences, Rng& rng,
    RoutingCache* cache) const {
  return build_conditions(ad::Binder::frozen(tape, params), sequences, rng,
                          cache);
}

}  // namespace mvr
