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

#include "mvr/serving.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "mvr/error.h"

namespace mvr {

std::vector<std::size_t> allocate_budgets(std::span<const double> importances,
                                          std::size_t total) {
  double sum = 0.0;
  for (double w : importances) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw DegenerateImportanceError("importances must be finite and >= 0");
    }
    sum += w;
  }
  if (!(sum > 0.0)) {
    throw DegenerateImportanceError("all importances are zero");
  }
  const std::size_t k = importances.size();
  std::vector<std::size_t> out(k);
  std::vector<double> frac(k);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double share = importances[j] / sum * double(total);
    out[j] = static_cast<std::size_t>(std::floor(share));
    frac[j] = share - double(out[j]);
    assigned += out[j];
  }
  // Rounding can overshoot by one in pathological cases; trim from the
  // smallest fractions.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; ++i) {
    const std::size_t j = order[i % k];
    if (importances[j] > 0.0) {
      ++out[j];
      ++assigned;
    }
  }
  for (std::size_t i = k; assigned > total; --i) {
    const std::size_t j = order[(i - 1) % k];
    if (out[j] > 0) {
      --out[j];
      --assigned;
    }
  }
  return out;
}

std::vector<std::size_t> explicit_budgets(std::size_t k_ex, std::size_t total) {
  if (k_ex == 0) throw ConfigError("k_ex must be at least 1");
  std::vector<std::size_t> out(k_ex, total / k_ex);
  for (std::size_t j = 0; j < total % k_ex; ++j) ++out[j];
  return out;
}

CandidateList relevance_filter(const CandidateList& candidates,
                               std::uint32_t topic,
                               const IndexedCorpus& corpus) {
  CandidateList out;
  for (const auto& c : candidates) {
    if (corpus.has_label(corpus.row_of(c.item_id), topic)) out.push_back(c);
  }
  return out;
}

CandidateList round_robin_merge(std::span<const CandidateList> lists) {
  CandidateList out;
  std::unordered_set<std::uint64_t> emitted;
  std::vector<std::size_t> pos(lists.size(), 0);
  bool any = true;
  while (any) {
    any = false;
    for (std::size_t l = 0; l < lists.size(); ++l) {
      const auto& list = lists[l];
      while (pos[l] < list.size() && emitted.count(list[pos[l]].item_id)) ++pos[l];
      if (pos[l] == list.size()) continue;
      out.push_back(list[pos[l]]);
      emitted.insert(list[pos[l]].item_id);
      ++pos[l];
      any = true;
    }
  }
  return out;
}

OverlapStats candidate_overlap(const CandidateList& a, const CandidateList& b) {
  std::unordered_set<std::uint64_t> sa, sb;
  for (const auto& c : a) sa.insert(c.item_id);
  for (const auto& c : b) sb.insert(c.item_id);
  if (sa.empty() || sb.empty()) return {};
  std::size_t inter = 0;
  for (auto id : sa) inter += sb.count(id);
  const double uni = double(sa.size() + sb.size() - inter);
  return {double(inter) / uni, double(inter) / double(std::min(sa.size(), sb.size()))};
}

void ServingConfig::validate() const {
  if (total_budget == 0) throw ConfigError("serving.total_budget must be positive");
  if (k_ex == 0) throw ConfigError("serving.k_ex must be positive");
  if (!(implicit_share >= 0.0 && implicit_share <= 1.0)) {
    throw ConfigError("serving.implicit_share must be in [0, 1]");
  }
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void byte(unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

std::uint64_t request_hash(const RetrievalRequest& r) {
  Fnv f;
  f.u64(r.user_id);
  f.u64(r.user.profile.size());
  for (double v : r.user.profile) f.f64(v);
  f.u64(r.user.followed_topics.size());
  for (auto t : r.user.followed_topics) f.u64(t);
  f.u64(r.sequence.size());
  for (const auto& it : r.sequence.items) {
    f.u64(it.item_id);
    f.u64(static_cast<std::uint64_t>(it.timestamp));
    f.byte(static_cast<unsigned char>(it.positive_action) |
           static_cast<unsigned char>(it.valid << 1));
    for (const auto& field : it.features) {
      f.u64(field.size());
      for (double v : field) f.f64(v);
    }
  }
  f.u64(r.total_budget);
  f.u64(r.k_ex);
  return f.h;
}

Retriever::Retriever(const ImplicitModel& implicit_model,
                     const ParamStore& implicit_params,
                     const HnswIndex& implicit_index,
                     const ExplicitModel& explicit_model,
                     const ParamStore& explicit_params,
                     const HnswIndex& explicit_index, ServingConfig config)
    : implicit_model_(implicit_model),
      implicit_params_(implicit_params),
      implicit_index_(implicit_index),
      explicit_model_(explicit_model),
      explicit_params_(explicit_params),
      explicit_index_(explicit_index),
      config_(config) {
  config_.validate();
  if (implicit_model.tower().config().dim != implicit_index.corpus().dim() ||
      explicit_model.tower().config().dim != explicit_index.corpus().dim()) {
    throw ConfigError("index dim does not match the tower output dim");
  }
  for (const auto& name : implicit_model.tower().param_names()) {
    if (!implicit_params.contains(name)) throw ConfigError("implicit model is missing " + name);
  }
  for (const auto& name : explicit_model.tower().param_names()) {
    if (!explicit_params.contains(name)) throw ConfigError("explicit model is missing " + name);
  }
}

CandidateList Retriever::fetch(const HnswIndex& index, std::span<const double> query,
                               std::size_t budget, SourceKind source,
                               std::uint32_t source_index) const {
  CandidateList out;
  if (budget == 0) return out;
  const auto hits =
      index.query(query, budget, std::max(index.config().ef_search, budget));
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.item_id, h.score, source, source_index});
  return out;
}

RetrievalResult Retriever::retrieve(const RetrievalRequest& req) const {
  const std::size_t total = req.total_budget ? req.total_budget : config_.total_budget;
  const std::size_t k_ex = req.k_ex ? req.k_ex : config_.k_ex;
  Rng rng(derive_seed(config_.seed, request_hash(req)));
  RetrievalResult res;

  UserEmbeddingSet implicit_set;
  bool run_implicit = false;
  if (req.sequence.num_valid() > 0) {
    auto seq = std::make_shared<const EngagementSequence>(req.sequence);
    implicit_set = implicit_model_.user_embeddings(implicit_params_, req.user,
                                                   SequenceView::whole(seq), rng);
    res.importances = implicit_set.condition_meta;
    run_implicit = std::any_of(res.importances.begin(), res.importances.end(),
                               [](double w) { return w > 0.0; });
  }

  std::vector<std::uint32_t> topics = req.user.followed_topics;
  std::sort(topics.begin(), topics.end());
  topics.erase(std::unique(topics.begin(), topics.end()), topics.end());
  std::shuffle(topics.begin(), topics.end(), rng);
  if (topics.size() > k_ex) topics.resize(k_ex);
  res.sampled_topics = topics;
  const bool run_explicit = !topics.empty();
  UserEmbeddingSet explicit_set;
  if (run_explicit) {
    explicit_set = explicit_model_.user_embeddings(explicit_params_, req.user, topics);
  }

  std::size_t implicit_total = 0, explicit_total = 0;
  if (run_implicit && run_explicit) {
    implicit_total = static_cast<std::size_t>(
        std::llround(config_.implicit_share * double(total)));
    explicit_total = total - implicit_total;
  } else if (run_implicit) {
    implicit_total = total;
  } else if (run_explicit) {
    explicit_total = total;
  }

  if (run_implicit) {
    res.implicit_budgets = allocate_budgets(res.importances, implicit_total);
    std::vector<std::size_t> order(res.importances.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return res.importances[a] > res.importances[b];
    });
    for (std::size_t j : order) {
      if (res.implicit_budgets[j] == 0) continue;
      res.implicit_lists.push_back(fetch(implicit_index_, implicit_set.embeddings.row(j),
                                         res.implicit_budgets[j], SourceKind::kImplicit,
                                         static_cast<std::uint32_t>(j)));
    }
  }
  if (run_explicit) {
    res.explicit_budget_split = explicit_budgets(topics.size(), explicit_total);
    for (std::size_t j = 0; j < topics.size(); ++j) {
      res.explicit_lists.push_back(relevance_filter(
          fetch(explicit_index_, explicit_set.embeddings.row(j),
                res.explicit_budget_split[j], SourceKind::kExplicit, topics[j]),
          topics[j], explicit_index_.corpus()));
    }
  }

  std::vector<CandidateList> lists = res.implicit_lists;
  lists.insert(lists.end(), res.explicit_lists.begin(), res.explicit_lists.end());
  res.merged = round_robin_merge(lists);
  CandidateList imp, exp;
  for (const auto& l : res.implicit_lists) imp.insert(imp.end(), l.begin(), l.end());
  for (const auto& l : res.explicit_lists) exp.insert(exp.end(), l.begin(), l.end());
  res.overlap = candidate_overlap(imp, exp);
  return res;
}

}  // namespace mvr
