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

// Microbenchmarks for the serving path. BM_Retrieve reports per-request
// latency of the full retriever (both models, ANN fetch, filter, merge);
// run with --benchmark_repetitions=N for p50/p90 across repetitions.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "mvr/experiment.h"
#include "mvr/serving.h"

namespace mvr {
namespace {

IndexedCorpus random_corpus(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  IndexedCorpus c;
  c.embeddings = Tensor::gaussian({n, dim}, 1.0, rng);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = c.embeddings.row(i);
    double norm = 0;
    for (double x : row) norm += x * x;
    for (double& x : row) x /= std::sqrt(norm);
    c.item_ids.push_back(i);
    c.topic_labels.push_back({static_cast<std::uint32_t>(i % 8)});
  }
  c.build_lookup();
  return c;
}

const HnswIndex& shared_index() {
  static const HnswIndex index = [] {
    HnswConfig hc;
    return HnswIndex::build(random_corpus(20000, 32, 1), hc);
  }();
  return index;
}

void BM_HnswQuery(benchmark::State& state) {
  const auto& index = shared_index();
  Rng rng(2);
  const Tensor queries = Tensor::gaussian({64, 32}, 1.0, rng);
  const auto ef = static_cast<std::size_t>(state.range(0));
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.query(queries.row(q++ % 64), 100, ef));
  }
}
BENCHMARK(BM_HnswQuery)->Arg(100)->Arg(200)->Arg(400);

void BM_BruteForce(benchmark::State& state) {
  const auto& corpus = shared_index().corpus();
  Rng rng(3);
  const Tensor query = Tensor::gaussian({1, 32}, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_topk(corpus, query.row(0), 100));
}
BENCHMARK(BM_BruteForce);

void BM_HnswBuild(benchmark::State& state) {
  const IndexedCorpus corpus = random_corpus(static_cast<std::size_t>(state.range(0)), 32, 4);
  HnswConfig hc;
  for (auto _ : state) benchmark::DoNotOptimize(HnswIndex::build(corpus, hc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HnswBuild)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RunDcm(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const InterestModel model(InterestModelConfig::preset(InterestMode::kDcm, 7, 64, {64, 1}));
  Rng rng(5);
  ParamStore params;
  model.init_params(params, rng);
  EngagementSequence seq;
  const Tensor feats = Tensor::gaussian({len, 64}, 1.0, rng);
  for (std::size_t i = 0; i < len; ++i) {
    auto r = feats.row(i);
    seq.items.push_back(SequenceItem{i, {{r.begin(), r.end()}, {0.5}}, true,
                                     static_cast<std::int64_t>(i), true});
  }
  for (auto _ : state) benchmark::DoNotOptimize(model.run_dcm(seq, params, rng));
}
BENCHMARK(BM_RunDcm)->Arg(32)->Arg(128);

void BM_RoundRobinMerge(benchmark::State& state) {
  std::vector<CandidateList> lists(12);
  for (std::size_t l = 0; l < lists.size(); ++l) {
    for (std::size_t i = 0; i < 100; ++i) {
      lists[l].push_back({(l * 37 + i * 3) % 800, 1.0, SourceKind::kImplicit,
                          static_cast<std::uint32_t>(l)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(round_robin_merge(lists));
}
BENCHMARK(BM_RoundRobinMerge);

// Untrained models over a generated world; latency does not depend on the
// weights.
struct ServingFixture {
  RunConfig config;
  PreparedData data;
  ImplicitModel implicit_model;
  ExplicitModel explicit_model;
  ParamStore implicit_params, explicit_params;
  std::unique_ptr<HnswIndex> implicit_index, explicit_index;
  std::unique_ptr<Retriever> retriever;

  ServingFixture()
      : config(parse_run_config(R"({"seed": 6, "world": {"users": 200}})")),
        data(prepare_data(config.world, config.data)),
        implicit_model(config.model_implicit),
        explicit_model(config.model_explicit) {
    Rng rng(7);
    implicit_model.init_params(implicit_params, rng);
    explicit_model.init_params(explicit_params, rng);
    implicit_index = std::make_unique<HnswIndex>(HnswIndex::build(
        make_corpus(implicit_model, implicit_params, data.data.catalog), config.index));
    explicit_index = std::make_unique<HnswIndex>(HnswIndex::build(
        make_corpus(explicit_model, explicit_params, data.data.catalog), config.index));
    retriever = std::make_unique<Retriever>(implicit_model, implicit_params, *implicit_index,
                                            explicit_model, explicit_params, *explicit_index,
                                            config.serving);
  }
};

void BM_Retrieve(benchmark::State& state) {
  static const ServingFixture fx;
  std::vector<RetrievalRequest> requests;
  for (const auto& rec : fx.data.data.eval) {
    RetrievalRequest r;
    r.user_id = rec.user_id;
    r.user = *rec.user;
    r.sequence = rec.seq.materialize();
    requests.push_back(std::move(r));
    if (requests.size() == 32) break;
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(fx.retriever->retrieve(requests[i++ % 32]));
}
BENCHMARK(BM_Retrieve)
    ->Unit(benchmark::kMillisecond)
    ->ComputeStatistics("p90", [](const std::vector<double>& v) {
      std::vector<double> s = v;
      std::sort(s.begin(), s.end());
      return s[static_cast<std::size_t>(0.9 * double(s.size() - 1))];
    });

}  // namespace
}  // namespace mvr

BENCHMARK_MAIN();
