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

// Glue that runs whole pipelines: data, training of both models, corpus
// construction, offline evaluation and the ablation grid.

#ifndef MVR_EXPERIMENT_H_
#define MVR_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mvr/config.h"

namespace mvr {

struct PreparedData {
  World world;
  Logs logs;
  Dataset data;
};

PreparedData prepare_data(const WorldConfig& world, const DatasetOptions& options);

struct ImplicitRun {
  ImplicitModel model;
  ParamStore params;
  TrainResult result;
};

struct ExplicitRun {
  ExplicitModel model;
  ParamStore params;
  TrainResult result;
};

// Parameters are initialized from a seed derived from config.seed, so two
// runs that differ only in the model see identical data order.
ImplicitRun train_implicit(const ImplicitModelConfig& model,
                           const TrainerConfig& trainer, const Dataset& data,
                           const EpochCallback& on_epoch = {});
ExplicitRun train_explicit(const ExplicitModelConfig& model,
                           const TrainerConfig& trainer, const Dataset& data,
                           const std::vector<TrainingExample>& examples,
                           const EpochCallback& on_epoch = {});

// Every catalog item embedded by the model's item tower, with topic labels.
IndexedCorpus make_corpus(const RetrievalModel& model, const ParamStore& params,
                          const ItemCatalog& catalog);

struct UserSet {
  Tensor embeddings;                // rows with positive importance
  std::vector<double> importances;  // same length
  Tensor all_rows;                  // every condition, for collapse
};

// Implicit embedding set of one record. Zero-importance rows are dropped
// unless every row has zero importance. Throws EmptySequenceError when the
// history has no valid item.
UserSet implicit_user_set(const ImplicitModel& model, const ParamStore& params,
                          const EvalRecord& record, std::uint64_t seed);

struct EvalOptions {
  std::vector<std::size_t> k_rank = {100, 1000};
  std::size_t coverage_n = 100;
  double coverage_threshold = 0.1;
  std::size_t max_users = 0;
  std::uint64_t seed = 0;
  // Records to keep; null keeps all.
  std::function<bool(const EvalRecord&)> record_filter;
  // Corpus restriction for ranking; null ranks against the whole corpus.
  const std::vector<char>* corpus_mask = nullptr;
  bool compute_coverage = true;
};

EvalOptions eval_options(const EvalConfig& config, std::uint64_t seed);

struct EvalResult {
  std::vector<std::size_t> ranks;
  std::map<std::size_t, double> hit_rate;
  // Mean interest coverage over scored records; NaN when not computed.
  double coverage = 0.0;
  // Mean pairwise cosine of the full condition sets; NaN when K < 2.
  double collapse = 0.0;
  std::vector<std::uint64_t> user_ids;       // one per rank
  std::vector<double> per_user_coverage;     // one per rank
  std::size_t skipped = 0;                   // records without valid history
};

// Implicit model over dataset.eval.
EvalResult evaluate_implicit(const ImplicitModel& model, const ParamStore& params,
                             const PreparedData& prepared,
                             const IndexedCorpus& corpus, const EvalOptions& options);

// Explicit model over dataset.explicit_eval: each record is conditioned on
// its source topic and ranked against the items labeled with that topic.
EvalResult evaluate_explicit_filtered(const ExplicitModel& model,
                                      const ParamStore& params,
                                      const PreparedData& prepared,
                                      const IndexedCorpus& corpus,
                                      const EvalOptions& options);

std::vector<MetricRow> metric_rows(const EvalResult& result, const std::string& name,
                                   std::uint64_t seed);

// Maps an ablation cell onto an interest config: both toggles on is DCM,
// anything else is capsule routing with the requested toggles.
InterestModelConfig ablation_interest(const InterestModelConfig& base,
                                      const AblationCell& cell);

// Trains and evaluates every cell for every seed on identical data per seed.
// A cell that throws is logged and recorded with a "failed" metric; the
// rest of the grid still runs.
std::vector<MetricRow> run_ablation(const RunConfig& config);

// Centroid positions across routing steps for one sequence, projected to 2D
// by classical MDS. CSV columns: step,centroid,x,y.
void write_divergence_trajectory(const ImplicitModel& model, const ParamStore& params,
                                 const EngagementSequence& seq, std::uint64_t seed,
                                 const std::string& path);

}  // namespace mvr

#endif  // MVR_EXPERIMENT_H_
