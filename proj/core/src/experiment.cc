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

#include "mvr/experiment.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "mvr/error.h"
#include "mvr/log.h"

namespace mvr {
namespace {

constexpr std::uint64_t kInitTag = 0x696e;
constexpr std::uint64_t kEvalTag = 0x6576;

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

EvalResult finish_eval(EvalResult r, const EvalOptions& options,
                       const std::vector<Tensor>& collapse_sets) {
  if (r.ranks.empty()) throw UndefinedMetricError("no evaluable records");
  for (std::size_t k : options.k_rank) r.hit_rate[k] = hit_rate(r.ranks, k);
  r.coverage = options.compute_coverage ? mean(r.per_user_coverage)
                                        : std::numeric_limits<double>::quiet_NaN();
  r.collapse = collapse_sets.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : collapse_metric(collapse_sets);
  return r;
}

}  // namespace

PreparedData prepare_data(const WorldConfig& world, const DatasetOptions& options) {
  PreparedData p;
  p.world = gen_world(world);
  p.logs = gen_logs(p.world);
  p.data = build_dataset(p.world, p.logs, options);
  return p;
}

ImplicitRun train_implicit(const ImplicitModelConfig& model,
                           const TrainerConfig& trainer, const Dataset& data,
                           const EpochCallback& on_epoch) {
  ImplicitRun run{ImplicitModel(model), {}, {}};
  Rng rng(derive_seed(trainer.seed, kInitTag));
  run.model.init_params(run.params, rng);
  run.result = train(run.model, run.params, data.catalog, data.implicit_train, trainer,
                     on_epoch);
  return run;
}

ExplicitRun train_explicit(const ExplicitModelConfig& model,
                           const TrainerConfig& trainer, const Dataset& data,
                           const std::vector<TrainingExample>& examples,
                           const EpochCallback& on_epoch) {
  ExplicitRun run{ExplicitModel(model), {}, {}};
  Rng rng(derive_seed(trainer.seed, kInitTag));
  run.model.init_params(run.params, rng);
  run.result = train(run.model, run.params, data.catalog, examples, trainer, on_epoch);
  return run;
}

IndexedCorpus make_corpus(const RetrievalModel& model, const ParamStore& params,
                          const ItemCatalog& catalog) {
  IndexedCorpus c;
  c.item_ids = catalog.ids;
  c.embeddings = model.item_embeddings(params, catalog.features);
  c.topic_labels = catalog.topics;
  c.build_lookup();
  return c;
}

UserSet implicit_user_set(const ImplicitModel& model, const ParamStore& params,
                          const EvalRecord& record, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kEvalTag, record.user_id));
  const auto set = model.user_embeddings(params, *record.user, record.seq, rng);
  UserSet out;
  out.all_rows = set.embeddings;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < set.condition_meta.size(); ++j) {
    if (set.condition_meta[j] > 0.0) keep.push_back(j);
  }
  if (keep.empty()) {
    out.embeddings = set.embeddings;
    out.importances.assign(set.size(), 1.0);
    return out;
  }
  out.embeddings = Tensor::matrix(keep.size(), set.embeddings.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    auto src = set.embeddings.row(keep[r]);
    std::copy(src.begin(), src.end(), out.embeddings.row(r).begin());
    out.importances.push_back(set.condition_meta[keep[r]]);
  }
  return out;
}

EvalOptions eval_options(const EvalConfig& config, std::uint64_t seed) {
  EvalOptions o;
  o.k_rank = config.k_rank;
  o.coverage_n = config.coverage_n;
  o.coverage_threshold = config.coverage_threshold;
  o.max_users = config.max_users;
  o.seed = seed;
  return o;
}

EvalResult evaluate_implicit(const ImplicitModel& model, const ParamStore& params,
                             const PreparedData& prepared, const IndexedCorpus& corpus,
                             const EvalOptions& options) {
  EvalResult r;
  std::vector<Tensor> collapse_sets;
  std::size_t used = 0;
  for (const auto& rec : prepared.data.eval) {
    if (options.max_users && used >= options.max_users) break;
    if (options.record_filter && !options.record_filter(rec)) continue;
    ++used;
    std::optional<UserSet> set;
    try {
      set = implicit_user_set(model, params, rec, options.seed);
    } catch (const EmptySequenceError&) {
      ++r.skipped;
      continue;
    }
    const auto pos = corpus.embeddings.row(corpus.row_of(rec.positive));
    r.ranks.push_back(
        positive_rank(set->embeddings, pos, rec.positive, corpus, options.corpus_mask));
    r.user_ids.push_back(rec.user_id);
    if (set->all_rows.rows() >= 2) collapse_sets.push_back(set->all_rows);
    if (options.compute_coverage) {
      const auto cands =
          offline_candidates(set->embeddings, set->importances, corpus, options.coverage_n);
      r.per_user_coverage.push_back(interest_coverage(cands, prepared.world.users[rec.user_id],
                                                      prepared.world, options.coverage_n,
                                                      options.coverage_threshold));
    }
  }
  return finish_eval(std::move(r), options, collapse_sets);
}

EvalResult evaluate_explicit_filtered(const ExplicitModel& model,
                                      const ParamStore& params,
                                      const PreparedData& prepared,
                                      const IndexedCorpus& corpus,
                                      const EvalOptions& options) {
  EvalResult r;
  std::vector<Tensor> none;
  std::vector<std::vector<char>> masks(prepared.world.config.topics);
  std::size_t used = 0;
  for (const auto& rec : prepared.data.explicit_eval) {
    if (options.max_users && used >= options.max_users) break;
    if (options.record_filter && !options.record_filter(rec)) continue;
    if (!rec.source_topic) continue;
    ++used;
    const std::uint32_t topic = *rec.source_topic;
    auto& mask = masks.at(topic);
    if (mask.empty()) {
      mask.resize(corpus.size());
      for (std::size_t i = 0; i < corpus.size(); ++i) mask[i] = corpus.has_label(i, topic);
    }
    const auto set = model.user_embeddings(params, *rec.user, {topic});
    const auto pos = corpus.embeddings.row(corpus.row_of(rec.positive));
    r.ranks.push_back(positive_rank(set.embeddings, pos, rec.positive, corpus, &mask));
    r.user_ids.push_back(rec.user_id);
  }
  EvalOptions o = options;
  o.compute_coverage = false;
  return finish_eval(std::move(r), o, none);
}

std::vector<MetricRow> metric_rows(const EvalResult& result, const std::string& name,
                                   std::uint64_t seed) {
  std::vector<MetricRow> rows;
  for (const auto& [k, hr] : result.hit_rate) {
    rows.push_back({"hr@" + std::to_string(k), name, hr, seed});
  }
  if (!std::isnan(result.coverage)) rows.push_back({"coverage", name, result.coverage, seed});
  if (!std::isnan(result.collapse)) rows.push_back({"divergence", name, result.collapse, seed});
  rows.push_back({"records", name, double(result.ranks.size()), seed});
  return rows;
}

InterestModelConfig ablation_interest(const InterestModelConfig& base,
                                      const AblationCell& cell) {
  InterestModelConfig c = base;
  c.k = cell.k;
  c.use_vafpi = cell.use_vafpi;
  c.use_sar = cell.use_sar;
  c.mode = cell.use_vafpi && cell.use_sar ? InterestMode::kDcm : InterestMode::kCapsule;
  return c;
}

std::vector<MetricRow> run_ablation(const RunConfig& config) {
  std::vector<MetricRow> rows;
  const auto cells = config.eval.ablation.cells();
  for (std::uint64_t s : config.eval.ablation.seeds) {
    RunConfig rc = config;
    rc.seed = derive_seed(config.seed, s);
    rc.resolve();
    log_info("ablation seed " + std::to_string(s) + ": generating data");
    const PreparedData prepared = prepare_data(rc.world, rc.data);
    for (const auto& cell : cells) {
      const std::string name = cell.name();
      try {
        ImplicitModelConfig mc = rc.model_implicit;
        mc.interest = ablation_interest(mc.interest, cell);
        mc.interest.validate();
        const auto run = train_implicit(mc, rc.trainer, prepared.data);
        const auto corpus = make_corpus(run.model, run.params, prepared.data.catalog);
        const auto res = evaluate_implicit(run.model, run.params, prepared, corpus,
                                           eval_options(rc.eval, rc.seed));
        for (auto& row : metric_rows(res, name, s)) rows.push_back(std::move(row));
        log_info("ablation " + name + " seed " + std::to_string(s) + " done");
      } catch (const Error& e) {
        log(LogLevel::kWarn, "ablation cell " + name + " failed: " + e.what());
        rows.push_back({"failed", name, 1.0, s});
      }
    }
  }
  return rows;
}

void write_divergence_trajectory(const ImplicitModel& model, const ParamStore& params,
                                 const EngagementSequence& seq, std::uint64_t seed,
                                 const std::string& path) {
  if (!model.config().interest.is_routing()) {
    throw ConfigError("divergence trajectories need a routing interest mode");
  }
  Rng rng(seed);
  RoutingTrace trace;
  model.interest().run_dcm(seq, params, rng, &trace);
  const std::size_t k = static_cast<std::size_t>(model.config().interest.k);
  const std::size_t d = trace.centroids.front().cols();
  Tensor all = Tensor::matrix(trace.centroids.size() * k, d);
  for (std::size_t s = 0; s < trace.centroids.size(); ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      auto src = trace.centroids[s].row(j);
      std::copy(src.begin(), src.end(), all.row(s * k + j).begin());
    }
  }
  const Tensor xy = classical_mds(all, 2);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  out << "step,centroid,x,y\n";
  for (std::size_t s = 0; s < trace.centroids.size(); ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      out << s << ',' << j << ',' << xy(s * k + j, 0) << ',' << xy(s * k + j, 1) << '\n';
    }
  }
}

}  // namespace mvr
