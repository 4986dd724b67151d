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

// Request-time retrieval: per-embedding budgets, ANN fetches, the explicit
// topic filter and a deduplicating round-robin merge.

#ifndef MVR_SERVING_H_
#define MVR_SERVING_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvr/ann.h"
#include "mvr/autodiff.h"
#include "mvr/models.h"

namespace mvr {

struct Candidate {
  std::uint64_t item_id = 0;
  double score = 0.0;
  SourceKind source = SourceKind::kImplicit;
  // Condition index for implicit candidates, topic id for explicit ones.
  std::uint32_t source_index = 0;

  bool operator==(const Candidate&) const = default;
};

using CandidateList = std::vector<Candidate>;

// Largest-remainder split of `total` proportional to the importances.
// Remainder ties go to the lowest index; zero importances get nothing.
// Throws DegenerateImportanceError when no importance is positive.
std::vector<std::size_t> allocate_budgets(std::span<const double> importances,
                                          std::size_t total);

// Equal split with the remainder to the lowest indices.
std::vector<std::size_t> explicit_budgets(std::size_t k_ex, std::size_t total);

// Keeps candidates whose item carries `topic`, in order.
CandidateList relevance_filter(const CandidateList& candidates,
                               std::uint32_t topic,
                               const IndexedCorpus& corpus);

// Cycles over the lists; each turn emits the list's next item not yet
// emitted, skipping duplicates, until every list is exhausted.
CandidateList round_robin_merge(std::span<const CandidateList> lists);

struct OverlapStats {
  double jaccard = 0.0;
  double intersection_over_min = 0.0;
};

// Both 0 when either side is empty.
OverlapStats candidate_overlap(const CandidateList& a, const CandidateList& b);

struct ServingConfig {
  std::size_t total_budget = 1000;
  std::size_t k_ex = 5;
  // Fraction of the budget for the implicit branch when both branches run.
  double implicit_share = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RetrievalRequest {
  std::uint64_t user_id = 0;
  UserFeatures user;
  EngagementSequence sequence;
  // 0 falls back to the configured total.
  std::size_t total_budget = 0;
  std::size_t k_ex = 0;
};

struct RetrievalResult {
  CandidateList merged;
  // In merge order.
  std::vector<CandidateList> implicit_lists;
  std::vector<CandidateList> explicit_lists;
  std::vector<std::size_t> implicit_budgets;
  std::vector<std::size_t> explicit_budget_split;
  std::vector<double> importances;
  std::vector<std::uint32_t> sampled_topics;
  OverlapStats overlap;
};

// FNV-1a over the request content; seeds the per-request randomness.
std::uint64_t request_hash(const RetrievalRequest& request);

// Immutable after construction; retrieve() is safe to call concurrently.
// Each model has its own item tower, so each branch searches its own index.
class Retriever {
 public:
  // Throws ConfigError when an index dimension does not match its tower or
  // a model lacks parameters.
  Retriever(const ImplicitModel& implicit_model, const ParamStore& implicit_params,
            const HnswIndex& implicit_index, const ExplicitModel& explicit_model,
            const ParamStore& explicit_params, const HnswIndex& explicit_index,
            ServingConfig config);

  // Throws UnknownTopicError for a followed topic outside the vocabulary.
  RetrievalResult retrieve(const RetrievalRequest& request) const;

  const ServingConfig& config() const { return config_; }

 private:
  CandidateList fetch(const HnswIndex& index, std::span<const double> query,
                      std::size_t budget, SourceKind source,
                      std::uint32_t source_index) const;

  const ImplicitModel& implicit_model_;
  const ParamStore& implicit_params_;
  const HnswIndex& implicit_index_;
  const ExplicitModel& explicit_model_;
  const ParamStore& explicit_params_;
  const HnswIndex& explicit_index_;
  ServingConfig config_;
};

}  // namespace mvr

#endif  // MVR_SERVING_H_
