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

// Offline metrics: hit rate under max-over-embeddings scoring, interest
// coverage, embedding collapse and candidate overlap, plus CSV/JSON output.

#ifndef MVR_EVAL_H_
#define MVR_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvr/ann.h"
#include "mvr/serving.h"
#include "mvr/synth.h"
#include "mvr/tensor.h"

namespace mvr {

// max_j <u_j, x>.
double max_score(const Tensor& user_set, std::span<const double> item);

// 1 + the number of corpus items (other than the positive's own id) whose
// max score is >= the positive's. Ties therefore count against the
// positive. `mask`, when given, restricts the corpus to rows with a
// non-zero entry. Throws UndefinedMetricError on an empty corpus.
std::size_t positive_rank(const Tensor& user_set,
                          std::span<const double> positive_embedding,
                          std::uint64_t positive_id, const IndexedCorpus& corpus,
                          const std::vector<char>* mask = nullptr);

// Fraction of ranks <= k. Throws UndefinedMetricError on no ranks.
double hit_rate(std::span<const std::size_t> ranks, std::size_t k);

// Fraction of the mixture topics with weight >= threshold whose topic has
// at least one item among the first n candidates.
double interest_coverage(std::span<const std::uint64_t> candidates,
                         const SyntheticUser& user, const World& world,
                         std::size_t n, double threshold = 0.1);

// Mean pairwise cosine of one embedding set. Throws UndefinedMetricError
// when it has fewer than two rows.
double pairwise_cosine(const Tensor& set);
// Mean of pairwise_cosine over users.
double collapse_metric(std::span<const Tensor> sets);

struct OverlapReport {
  double jaccard = 0.0;
  double intersection_over_min = 0.0;
  std::size_t users = 0;  // users where both branches produced candidates
};

OverlapReport overlap_report(std::span<const CandidateList> implicit_lists,
                             std::span<const CandidateList> explicit_lists);

// Offline stand-in for serving: per-row top lists sized by
// allocate_budgets(importances, n), merged round robin in descending
// importance order. Rows with zero importance fetch nothing.
std::vector<std::uint64_t> offline_candidates(const Tensor& user_set,
                                              std::span<const double> importances,
                                              const IndexedCorpus& corpus,
                                              std::size_t n);

// Classical multidimensional scaling of the rows into `dims` coordinates
// from their Euclidean distances.
Tensor classical_mds(const Tensor& points, std::size_t dims = 2);

struct MetricRow {
  std::string metric;
  std::string name;
  double value = 0.0;
  std::uint64_t seed = 0;
};

// Header "metric,name,value,seed".
void write_metrics_csv(std::span<const MetricRow> rows, std::ostream& out);
void write_metrics_csv(std::span<const MetricRow> rows, const std::string& path);
// {"<metric>": {"<name>": {"mean": .., "n": .., "values": [..]}}}
std::string metrics_summary_json(std::span<const MetricRow> rows);

struct AblationCell {
  bool use_vafpi = true;
  bool use_sar = true;
  int k = 7;

  std::string name() const;
};

struct AblationSpec {
  std::vector<bool> vafpi = {true, false};
  std::vector<bool> sar = {true, false};
  std::vector<int> k = {2, 4, 7};
  std::vector<std::uint64_t> seeds = {0};

  std::vector<AblationCell> cells() const;
  void validate() const;
};

struct EvalConfig {
  std::vector<std::size_t> k_rank = {100, 1000};
  std::size_t coverage_n = 100;
  double coverage_threshold = 0.1;
  // Caps evaluated records; 0 uses all.
  std::size_t max_users = 0;
  AblationSpec ablation;

  void validate() const;
};

}  // namespace mvr

#endif  // MVR_EVAL_H_
