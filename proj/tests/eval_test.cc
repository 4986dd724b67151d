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

#include "mvr/eval.h"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mvr/error.h"

namespace mvr {
namespace {

IndexedCorpus corpus_from(const Tensor& rows) {
  IndexedCorpus c;
  c.embeddings = rows;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    c.item_ids.push_back(i);
    c.topic_labels.push_back({static_cast<std::uint32_t>(i % 2)});
  }
  c.build_lookup();
  return c;
}

// Independent oracle: score every item, sort descending with the positive
// placed after all ties, and read off its 1-based position.
std::size_t oracle_rank(const Tensor& users, const IndexedCorpus& corpus, std::size_t pos) {
  std::vector<std::pair<double, int>> s;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j < users.rows(); ++j) {
      double d = 0;
      for (std::size_t c = 0; c < users.cols(); ++c) d += users(j, c) * corpus.embeddings(i, c);
      best = std::max(best, d);
    }
    s.push_back({best, i == pos ? 1 : 0});
  }
  std::sort(s.begin(), s.end(), [](auto a, auto b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t r = 0; r < s.size(); ++r) {
    if (s[r].second) return r + 1;
  }
  return 0;
}

TEST(PositiveRankTest, HandExample) {
  // Items along the axes; user set {e0, e1}.
  const auto corpus = corpus_from(Tensor::from_rows({{1, 0}, {0, 1}, {0.6, 0.8}, {-1, 0}}));
  const Tensor users = Tensor::from_rows({{1, 0}, {0, 1}});
  EXPECT_EQ(positive_rank(users, corpus.embeddings.row(2), 2, corpus), 3u);
  // Items 0 and 1 tie at score 1; ties count against the positive.
  EXPECT_EQ(positive_rank(users, corpus.embeddings.row(0), 0, corpus), 2u);
  EXPECT_EQ(positive_rank(users, corpus.embeddings.row(3), 3, corpus), 4u);
  const std::vector<char> mask = {0, 0, 1, 1};
  EXPECT_EQ(positive_rank(users, corpus.embeddings.row(2), 2, corpus, &mask), 1u);
}

TEST(PositiveRankTest, MatchesSortingOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor items = Tensor::gaussian({200, 5}, 1.0, rng);
    // Coarse rounding produces many exact ties.
    for (double& v : items.storage()) v = std::round(v * 2.0) / 2.0;
    const auto corpus = corpus_from(items);
    const Tensor users = Tensor::gaussian({3, 5}, 1.0, rng);
    for (std::size_t pos : {0u, 17u, 199u}) {
      EXPECT_EQ(positive_rank(users, corpus.embeddings.row(pos), pos, corpus),
                oracle_rank(users, corpus, pos));
    }
  }
}

TEST(PositiveRankTest, Errors) {
  const Tensor users = Tensor::from_rows({{1, 0}});
  EXPECT_THROW(positive_rank(users, std::vector<double>{1, 0}, 0, IndexedCorpus{}),
               UndefinedMetricError);
  const auto corpus = corpus_from(Tensor::from_rows({{1, 0}}));
  EXPECT_THROW(positive_rank(Tensor::matrix(0, 2), std::vector<double>{1, 0}, 0, corpus),
               UndefinedMetricError);
}

TEST(HitRateTest, Fractions) {
  const std::vector<std::size_t> ranks = {1, 5, 100, 101, 1000, 2000};
  EXPECT_DOUBLE_EQ(hit_rate(ranks, 100), 0.5);
  EXPECT_DOUBLE_EQ(hit_rate(ranks, 1000), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(hit_rate(ranks, 1), 1.0 / 6.0);
  EXPECT_THROW(hit_rate({}, 10), UndefinedMetricError);
}

TEST(HitRateTest, MonotoneInK) {
  const std::vector<std::size_t> ranks = {3, 9, 27, 81, 243};
  double prev = 0.0;
  for (std::size_t k = 1; k < 300; ++k) {
    const double h = hit_rate(ranks, k);
    EXPECT_GE(h, prev);
    prev = h;
  }
}

World coverage_world() {
  World w;
  w.config.topics = 4;
  w.config.items_per_topic = 2;
  for (std::uint64_t i = 0; i < 8; ++i) {
    SyntheticItem it;
    it.item_id = i;
    it.topic_id = static_cast<std::uint32_t>(i / 2);
    it.labels = {it.topic_id};
    w.items.push_back(it);
  }
  return w;
}

TEST(InterestCoverageTest, CountsTopicsAboveThreshold) {
  const World w = coverage_world();
  SyntheticUser u;
  u.mixture_topics = {0, 1, 3};
  u.mixture_weights = {0.5, 0.45, 0.05};
  // Topic 3 is below the 0.1 threshold and does not count.
  const std::vector<std::uint64_t> cands = {0, 1, 6, 7};
  EXPECT_DOUBLE_EQ(interest_coverage(cands, u, w, 100), 0.5);
  const std::vector<std::uint64_t> both = {2, 0};
  EXPECT_DOUBLE_EQ(interest_coverage(both, u, w, 100), 1.0);
  EXPECT_DOUBLE_EQ(interest_coverage(both, u, w, 1), 0.5);
  EXPECT_DOUBLE_EQ(interest_coverage({}, u, w, 100), 0.0);
}

TEST(CollapseTest, IdenticalAndOrthogonalSets) {
  const Tensor same = Tensor::from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
  const Tensor basis = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_NEAR(pairwise_cosine(same), 1.0, 1e-12);
  EXPECT_NEAR(pairwise_cosine(basis), 0.0, 1e-12);
  const std::vector<Tensor> sets = {same, basis};
  EXPECT_NEAR(collapse_metric(sets), 0.5, 1e-12);
  EXPECT_THROW(pairwise_cosine(Tensor::from_rows({{1, 0}})), UndefinedMetricError);
  EXPECT_THROW(collapse_metric({}), UndefinedMetricError);
}

TEST(CollapseTest, ScaleInvariant) {
  Rng rng(3);
  Tensor a = Tensor::gaussian({4, 6}, 1.0, rng);
  Tensor b = a;
  for (std::size_t c = 0; c < 6; ++c) b(2, c) *= 7.5;
  EXPECT_NEAR(pairwise_cosine(a), pairwise_cosine(b), 1e-12);
}

TEST(OverlapReportTest, AveragesOverUsersWithBothBranches) {
  auto list = [](std::initializer_list<std::uint64_t> xs) {
    CandidateList l;
    for (auto x : xs) l.push_back({x, 0.0, SourceKind::kImplicit, 0});
    return l;
  };
  const std::vector<CandidateList> imp = {list({1, 2, 3}), list({1}), list({})};
  const std::vector<CandidateList> exp = {list({3, 4, 5}), list({1}), list({9})};
  const auto r = overlap_report(imp, exp);
  EXPECT_EQ(r.users, 2u);
  EXPECT_DOUBLE_EQ(r.jaccard, (0.2 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.intersection_over_min, (1.0 / 3.0 + 1.0) / 2.0);
}

TEST(OfflineCandidatesTest, BudgetsAndRoundRobin) {
  const auto corpus =
      corpus_from(Tensor::from_rows({{1, 0}, {0.9, 0.1}, {0.8, 0.2}, {0, 1}, {0.1, 0.9}}));
  const Tensor users = Tensor::from_rows({{1, 0}, {0, 1}});
  const std::vector<double> w = {0.25, 0.75};
  // Budgets [1, 3]; the heavier row goes first.
  EXPECT_EQ(offline_candidates(users, w, corpus, 4),
            (std::vector<std::uint64_t>{3, 0, 4, 2}));
  const std::vector<double> zero = {0.0, 1.0};
  EXPECT_EQ(offline_candidates(users, zero, corpus, 2), (std::vector<std::uint64_t>{3, 4}));
}

TEST(ClassicalMdsTest, RecoversPlanarDistances) {
  Rng rng(4);
  const Tensor pts = Tensor::gaussian({12, 2}, 1.0, rng);
  const Tensor y = classical_mds(pts, 2);
  ASSERT_EQ(y.rows(), 12u);
  ASSERT_EQ(y.cols(), 2u);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) {
      const double dx = std::hypot(pts(i, 0) - pts(j, 0), pts(i, 1) - pts(j, 1));
      const double dy = std::hypot(y(i, 0) - y(j, 0), y(i, 1) - y(j, 1));
      EXPECT_NEAR(dx, dy, 1e-8);
    }
  }
}

TEST(ClassicalMdsTest, CollinearPointsUseOneAxis) {
  const Tensor pts = Tensor::from_rows({{0, 0, 0}, {1, 1, 0}, {3, 3, 0}});
  const Tensor y = classical_mds(pts, 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y(i, 1), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(y(2, 0) - y(0, 0)), 3.0 * std::sqrt(2.0), 1e-9);
}

TEST(MetricsOutputTest, CsvAndSummary) {
  const std::vector<MetricRow> rows = {{"hr@100", "dcm", 0.25, 1},
                                       {"hr@100", "dcm", 0.75, 2},
                                       {"coverage", "mind", 0.5, 1}};
  std::ostringstream out;
  write_metrics_csv(rows, out);
  EXPECT_EQ(out.str(),
            "metric,name,value,seed\nhr@100,dcm,0.25,1\nhr@100,dcm,0.75,2\n"
            "coverage,mind,0.5,1\n");
  const auto j = nlohmann::json::parse(metrics_summary_json(rows));
  EXPECT_DOUBLE_EQ(j["hr@100"]["dcm"]["mean"].get<double>(), 0.5);
  EXPECT_EQ(j["hr@100"]["dcm"]["n"].get<int>(), 2);
  EXPECT_DOUBLE_EQ(j["coverage"]["mind"]["mean"].get<double>(), 0.5);
}

TEST(AblationSpecTest, GridAndNames) {
  AblationSpec s;
  const auto cells = s.cells();
  EXPECT_EQ(cells.size(), 12u);
  EXPECT_EQ(cells.front().name(), "vafpi1_sar1_k2");
  EXPECT_EQ(cells.back().name(), "vafpi0_sar0_k7");
  s.k = {0};
  EXPECT_THROW(s.validate(), ConfigError);
  EvalConfig e;
  EXPECT_NO_THROW(e.validate());
  e.k_rank = {};
  EXPECT_THROW(e.validate(), ConfigError);
}

}  // namespace
}  // namespace mvr
