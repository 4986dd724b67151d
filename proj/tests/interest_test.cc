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
#include <set>

#include <gtest/gtest.h>

#include "mvr/error.h"
#include "test_util.h"

namespace mvr {
namespace {

ItemEmbeddingMatrix make_items(Tensor e, std::vector<bool> valid = {}) {
  if (valid.empty()) valid.assign(e.rows(), true);
  return ItemEmbeddingMatrix{std::move(e), std::move(valid)};
}

EngagementSequence sequence_from_rows(const Tensor& rows) {
  EngagementSequence seq;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto r = rows.row(i);
    SequenceItem item;
    item.item_id = i;
    item.features = {std::vector<double>(r.begin(), r.end())};
    item.timestamp = static_cast<std::int64_t>(i);
    seq.items.push_back(std::move(item));
  }
  return seq;
}

// Items from `topics` orthogonal anchors scaled by 3, plus noise.
Tensor topic_rows(std::size_t topics, std::size_t per_topic, std::size_t dim,
                  double noise, Rng& rng, std::vector<int>* labels) {
  std::normal_distribution<double> n(0.0, noise);
  Tensor x = Tensor::matrix(topics * per_topic, dim);
  for (std::size_t t = 0; t < topics; ++t)
    for (std::size_t i = 0; i < per_topic; ++i) {
      const std::size_t r = t * per_topic + i;
      for (std::size_t c = 0; c < dim; ++c) x(r, c) = n(rng);
      x(r, t) += 3.0;
      if (labels) labels->push_back(static_cast<int>(t));
    }
  return x;
}

InterestModelConfig config_for(InterestMode mode, int k, std::size_t dim) {
  auto c = InterestModelConfig::preset(mode, k, dim, {dim});
  c.summary_hidden = dim;
  return c;
}

// Summarizer with identity weights: e_i = GELU(f_i).
ParamStore identity_params(const InterestModel& m, Rng& rng) {
  ParamStore p;
  m.init_params(p, rng);
  p.value(m.prefix() + "/sum_w1") = Tensor::identity(m.config().dim);
  p.value(m.prefix() + "/sum_w2") = Tensor::identity(m.config().dim);
  return p;
}

TEST(SequenceTest, ValidityInvariants) {
  SequenceItem ok{1, {{1.0}}, true, 0, true};
  SequenceItem missing{2, {{}}, true, 1, true};
  SequenceItem negative{3, {{1.0}}, false, 2, true};
  EXPECT_TRUE(derive_validity(ok));
  EXPECT_FALSE(derive_validity(missing));
  EXPECT_FALSE(derive_validity(negative));
  EXPECT_THROW((EngagementSequence{{ok, missing}}.validate(8)), ConfigError);
  missing.valid = false;
  negative.valid = false;
  EXPECT_NO_THROW((EngagementSequence{{ok, missing, negative}}.validate(8)));
  EXPECT_THROW((EngagementSequence{{ok, missing, negative}}.validate(2)),
               ConfigError);
  SequenceItem early = ok;
  early.timestamp = -1;
  EXPECT_THROW((EngagementSequence{{ok, early}}.validate(8)), ConfigError);
}

TEST(SummarizeTest, ZeroWeightsGiveZeroEmbeddings) {
  InterestModel m(config_for(InterestMode::kDcm, 2, 3));
  Rng rng(1);
  ParamStore p;
  m.init_params(p, rng);
  p.value("interest/sum_w1").fill(0.0);
  p.value("interest/sum_w2").fill(0.0);
  auto e = m.summarize_items(sequence_from_rows(Tensor::from_rows({{1, 2, 3}})), p);
  for (double v : e.embeddings.data()) EXPECT_EQ(v, 0.0);
}

TEST(SummarizeTest, MatchesHandComposedMlp) {
  auto cfg = config_for(InterestMode::kDcm, 1, 2);
  cfg.feature_dims = {1, 1};
  cfg.summary_hidden = 2;
  InterestModel m(cfg);
  Rng rng(1);
  ParamStore p;
  m.init_params(p, rng);
  p.value("interest/sum_w1") = Tensor::from_rows({{1.0, 0.5}, {-1.0, 2.0}});
  p.value("interest/sum_w2") = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  EngagementSequence seq;
  seq.items.push_back(SequenceItem{0, {{0.3}, {0.4}}, true, 0, true});
  const auto e = m.summarize_items(seq, p);
  // h = W1^T f = (0.3 - 0.4, 0.15 + 0.8).
  EXPECT_NEAR(e.embeddings(0, 0), gelu(-0.1), 1e-15);
  EXPECT_NEAR(e.embeddings(0, 1), gelu(0.95), 1e-15);
}

TEST(SummarizeTest, MissingFeatureIsZeroFilledAndInvalid) {
  auto cfg = config_for(InterestMode::kDcm, 1, 2);
  cfg.feature_dims = {2, 1};
  InterestModel m(cfg);
  std::vector<bool> valid;
  EngagementSequence seq;
  seq.items.push_back(SequenceItem{0, {{1.0, 2.0}, {}}, true, 0, false});
  Tensor x = m.feature_rows(seq.items, &valid);
  EXPECT_EQ(x(0, 2), 0.0);
  EXPECT_FALSE(valid[0]);
  seq.items[0].features = {{1.0}, {1.0}};
  EXPECT_THROW(m.feature_rows(seq.items, &valid), DimensionError);
}

TEST(SummarizeTest, GradientMatchesFiniteDifferences) {
  auto cfg = config_for(InterestMode::kDcm, 2, 3);
  cfg.summary_hidden = 4;
  InterestModel m(cfg);
  Rng rng(5);
  ParamStore p;
  m.init_params(p, rng);
  const Tensor x = Tensor::gaussian({5, 3}, 1.0, rng);
  auto f = testing::objective([&](const ad::Binder& b) {
    return m.summarize(b.tape, *b.trainable, x);
  });
  EXPECT_LT(grad_check(f, p, 5), 1e-4);
}

TEST(VafpiTest, PicksFarthestItem) {
  auto items = make_items(Tensor::from_rows({{1, 0}, {0, 1}, {0.894, 0.447}}));
  // Find a seed whose first pick is e1, then check the sweep.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto ids = vafpi_select(items, 2, rng);
    if (ids[0] != 0) continue;
    EXPECT_EQ(ids[1], 1u);
    items.valid[1] = false;
    Rng again(seed);
    auto ids2 = vafpi_select(items, 2, again);
    ASSERT_EQ(ids2[0], 0u);
    EXPECT_EQ(ids2[1], 2u);
    return;
  }
  FAIL() << "no seed picked the first item";
}

TEST(VafpiTest, NeverPicksInvalidAndRepeatsWhenShort) {
  auto items = make_items(Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}}),
                          {false, true, false});
  Rng rng(3);
  auto ids = vafpi_select(items, 3, rng);
  EXPECT_EQ(ids, (std::vector<std::size_t>{1, 1, 1}));
  items.valid = {false, false, false};
  EXPECT_THROW(vafpi_select(items, 1, rng), EmptySequenceError);
}

TEST(VafpiTest, FirstPickIsUniformOverValidItems) {
  auto items = make_items(Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}, {2, 0}}),
                          {true, false, true, true});
  std::vector<int> hits(4, 0);
  Rng rng(11);
  for (int i = 0; i < 3000; ++i) ++hits[vafpi_select(items, 1, rng)[0]];
  EXPECT_EQ(hits[1], 0);
  for (int j : {0, 2, 3}) EXPECT_NEAR(hits[j] / 3000.0, 1.0 / 3, 0.04);
}

// Exhaustive max-min oracle: every pick after the first minimizes, over the
// valid unpicked items, the max similarity to the already chosen centroids.
TEST(VafpiTest, SatisfiesMaxMinConditionExhaustively) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t l = 16 + 12 * trial;
    auto items = make_items(Tensor::gaussian({l, 6}, 1.0, rng));
    std::bernoulli_distribution drop(0.2);
    for (std::size_t i = 0; i < l; ++i) items.valid[i] = !drop(rng);
    items.valid[0] = true;
    auto ids = vafpi_select(items, 7, rng);
    for (std::size_t m = 1; m < ids.size(); ++m) {
      ASSERT_TRUE(items.valid[ids[m]]);
      auto max_sim = [&](std::size_t i) {
        double s = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j)
          s = std::max(s, dot(items.embeddings.row(ids[j]), items.embeddings.row(i)));
        return s;
      };
      const double chosen = max_sim(ids[m]);
      for (std::size_t i = 0; i < l; ++i) {
        if (!items.valid[i]) continue;
        if (std::find(ids.begin(), ids.begin() + m, i) != ids.begin() + m) continue;
        EXPECT_LE(chosen, max_sim(i));
      }
    }
  }
}

TEST(RoutingTest, SoftRoutingExamples) {
  auto items = make_items(Tensor::from_rows({{1, 0}, {0.3, 0.3}}), {true, false});
  Tensor c = Tensor::from_rows({{1, 0}, {0, 1}});
  Tensor w = route_soft(items, c);
  EXPECT_NEAR(w(0, 0), 0.7310585786300049, 1e-12);
  EXPECT_NEAR(w(0, 1), 0.2689414213699951, 1e-12);
  EXPECT_EQ(w(1, 0), 0.0);
  EXPECT_EQ(w(1, 1), 0.0);
  Tensor one = route_soft(items, Tensor::from_rows({{0.5, 0.5}}));
  EXPECT_DOUBLE_EQ(one(0, 0), 1.0);
  // A bilinear map swapping axes flips the preference.
  Tensor swap = Tensor::from_rows({{0, 1}, {1, 0}});
  Tensor ws = route_soft(items, c, &swap);
  EXPECT_NEAR(ws(0, 1), 0.7310585786300049, 1e-12);
}

TEST(RoutingTest, SingleAssignmentExamples) {
  auto items = make_items(Tensor::from_rows({{1, 0}, {0.5, 0.5}, {1, 1}}),
                          {true, true, false});
  Tensor c = Tensor::from_rows({{1, 0}, {0, 1}});
  Tensor w = route_single_assignment(items, c);
  EXPECT_NEAR(w(0, 0), 0.7310585786300049, 1e-12);
  EXPECT_EQ(w(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(w(1, 0), 0.5);
  EXPECT_EQ(w(1, 1), 0.0);
  EXPECT_EQ(w(2, 0) + w(2, 1), 0.0);
}

TEST(RoutingTest, SingleAssignmentEqualsMaskedSoftRouting) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto items = make_items(Tensor::gaussian({20, 5}, 1.0, rng));
    Tensor c = Tensor::gaussian({4, 5}, 1.0, rng);
    Tensor hard = route_single_assignment(items, c);
    Tensor soft = route_soft(items, c);
    for (std::size_t i = 0; i < 20; ++i) {
      double total = 0;
      int nonzero = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        total += soft(i, j);
        if (hard(i, j) != 0.0) {
          ++nonzero;
          EXPECT_EQ(hard(i, j), soft(i, j));
          for (std::size_t o = 0; o < 4; ++o) EXPECT_GE(soft(i, j), soft(i, o));
        }
      }
      EXPECT_EQ(nonzero, 1);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(RoutingTest, AssignmentInvariantUnderJointScaling) {
  Rng rng(9);
  for (double lambda : {0.01, 0.5, 7.0}) {
    auto items = make_items(Tensor::gaussian({30, 4}, 1.0, rng));
    Tensor c = Tensor::gaussian({3, 4}, 1.0, rng);
    Tensor base = route_single_assignment(items, c);
    auto scaled = items;
    for (double& v : scaled.embeddings.storage()) v *= lambda;
    Tensor cs = c;
    for (double& v : cs.storage()) v *= lambda;
    Tensor w = route_single_assignment(scaled, cs);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        EXPECT_EQ(base(i, j) != 0.0, w(i, j) != 0.0);
  }
}

TEST(UpdateTest, CentroidExamples) {
  auto items = make_items(Tensor::from_rows({{0.6, 0.8}, {1.0, 0.0}}));
  Tensor c = update_centroids(Tensor::from_rows({{1.0}, {0.0}}), items);
  EXPECT_NEAR(c(0, 0), 0.3, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.4, 1e-15);
  Tensor z = update_centroids(Tensor::matrix(2, 1), items);
  EXPECT_EQ(z(0, 0), 0.0);
  // Weighted sum then squash, by hand.
  Tensor w = Tensor::from_rows({{0.25, 1.0}, {0.5, 2.0}});
  Tensor got = update_centroids(w, items);
  for (std::size_t j = 0; j < 2; ++j) {
    const double sx = w(0, j) * 0.6 + w(1, j) * 1.0;
    const double sy = w(0, j) * 0.8;
    const double n2 = sx * sx + sy * sy;
    const double f = n2 / (1 + n2) / std::sqrt(n2);
    EXPECT_NEAR(got(j, 0), f * sx, 1e-12);
    EXPECT_NEAR(got(j, 1), f * sy, 1e-12);
  }
}

// Lloyd's algorithm from the ground-truth-free farthest seeding, used only as
// a labeling oracle.
std::vector<int> kmeans_labels(const Tensor& x, int k) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor c = Tensor::matrix(k, d);
  std::vector<std::size_t> seeds = {0};
  while (seeds.size() < std::size_t(k)) {
    std::size_t best = 0;
    double best_d = -1;
    for (std::size_t i = 0; i < n; ++i) {
      double md = std::numeric_limits<double>::infinity();
      for (auto s : seeds) {
        double dist = 0;
        for (std::size_t q = 0; q < d; ++q) dist += std::pow(x(i, q) - x(s, q), 2);
        md = std::min(md, dist);
      }
      if (md > best_d) best_d = md, best = i;
    }
    seeds.push_back(best);
  }
  for (int j = 0; j < k; ++j)
    for (std::size_t q = 0; q < d; ++q) c(j, q) = x(seeds[j], q);
  std::vector<int> label(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        double dist = 0;
        for (std::size_t q = 0; q < d; ++q) dist += std::pow(x(i, q) - c(j, q), 2);
        if (dist < bd) bd = dist, label[i] = j;
      }
    }
    c.fill(0);
    std::vector<int> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++cnt[label[i]];
      for (std::size_t q = 0; q < d; ++q) c(label[i], q) += x(i, q);
    }
    for (int j = 0; j < k; ++j)
      for (std::size_t q = 0; q < d; ++q) c(j, q) /= std::max(1, cnt[j]);
  }
  return label;
}

TEST(RunDcmTest, CentroidsMapOntoTopicsLikeKMeans) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<int> truth;
    Tensor rows = topic_rows(3, 10, 6, 0.3, rng, &truth);
    InterestModel m(config_for(InterestMode::kDcm, 3, 6));
    ParamStore p = identity_params(m, rng);
    const auto seq = sequence_from_rows(rows);
    CentroidSet cs = m.run_dcm(seq, p, rng);

    // Oracle labels on the same summarized embeddings.
    const auto e = m.summarize_items(seq, p);
    const auto oracle = kmeans_labels(e.embeddings, 3);
    std::set<std::pair<int, int>> oracle_map;
    for (std::size_t i = 0; i < truth.size(); ++i) oracle_map.insert({oracle[i], truth[i]});
    ASSERT_EQ(oracle_map.size(), 3u) << "oracle is not topic-pure";

    std::set<int> topics;
    for (std::size_t j = 0; j < 3; ++j) {
      auto row = cs.centroids.row(j);
      topics.insert(static_cast<int>(std::max_element(row.begin(), row.begin() + 3) - row.begin()));
    }
    EXPECT_EQ(topics.size(), 3u) << "seed " << seed;
    double mass = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double col = 0;
      for (std::size_t i = 0; i < rows.rows(); ++i) col += cs.routing_weights(i, j);
      EXPECT_NEAR(cs.importances[j], col, 1e-9);
      mass += col;
    }
    EXPECT_GT(mass, 0.0);
  }
}

TEST(RunDcmTest, SingleClusterDegenerateCase) {
  Rng rng(4);
  Tensor rows = topic_rows(2, 5, 4, 0.2, rng, nullptr);
  InterestModel m(config_for(InterestMode::kDcm, 1, 4));
  ParamStore p = identity_params(m, rng);
  auto seq = sequence_from_rows(rows);
  seq.items[3].valid = false;
  seq.items[3].positive_action = false;
  CentroidSet cs = m.run_dcm(seq, p, rng);
  EXPECT_NEAR(cs.importances[0], 9.0, 1e-12);
  // With K=1 the centroid is the squashed sum of valid items.
  auto e = m.summarize_items(seq, p);
  Tensor sum = Tensor::matrix(1, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    if (!e.valid[i]) continue;
    for (std::size_t c = 0; c < 4; ++c) sum(0, c) += e.embeddings(i, c);
  }
  Tensor want = squash(sum);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(cs.centroids(0, c), want(0, c), 1e-12);
}

TEST(RunDcmTest, EmptySequenceThrows) {
  InterestModel m(config_for(InterestMode::kDcm, 2, 2));
  Rng rng(1);
  ParamStore p;
  m.init_params(p, rng);
  EngagementSequence seq;
  seq.items.push_back(SequenceItem{0, {{1.0, 1.0}}, false, 0, false});
  EXPECT_THROW(m.run_dcm(seq, p, rng), EmptySequenceError);
}

TEST(RunDcmTest, DcmCentroidsMoreDiverseThanMind) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng data_rng(seed);
    Tensor rows = topic_rows(3, 8, 6, 0.3, data_rng, nullptr);
    const auto seq = sequence_from_rows(rows);
    InterestModel dcm(config_for(InterestMode::kDcm, 3, 6), "a");
    InterestModel mind(config_for(InterestMode::kMind, 3, 6), "b");
    Rng r1(seed), r2(seed);
    ParamStore pd = identity_params(dcm, r1);
    ParamStore pm = identity_params(mind, r2);
    const double d1 = centroid_divergence(dcm.run_dcm(seq, pd, r1).centroids);
    const double d2 = centroid_divergence(mind.run_dcm(seq, pm, r2).centroids);
    wins += d1 < d2;
  }
  EXPECT_GE(wins, 27);
}

TEST(ConfigTest, ModeTogglePairing) {
  auto c = config_for(InterestMode::kDcm, 2, 2);
  c.use_sar = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c = config_for(InterestMode::kMind, 2, 2);
  c.use_vafpi = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c.mode = InterestMode::kCapsule;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(parse_interest_mode("self_attention"), InterestMode::kSelfAttention);
  EXPECT_THROW(parse_interest_mode("bogus"), ConfigError);
}

TEST(DivergenceTest, Examples) {
  EXPECT_NEAR(centroid_divergence(Tensor::from_rows({{1, 0}, {0, 2}})), 0.0, 1e-15);
  EXPECT_NEAR(centroid_divergence(Tensor::from_rows({{1, 1}, {2, 2}})), 1.0, 1e-15);
  Tensor h = Tensor::from_rows({{1, 0, 0}, {1, 1, 0}, {0, -1, 1}});
  const double c01 = 1 / std::sqrt(2.0), c02 = 0.0, c12 = -0.5;
  EXPECT_NEAR(centroid_divergence(h), (c01 + c02 + c12) / 3, 1e-12);
  EXPECT_THROW(centroid_divergence(Tensor::from_rows({{1, 0}})), UndefinedMetricError);
}

class AttentionTest : public ::testing::Test {
 protected:
  InterestModel make(InterestMode mode, int k) {
    auto c = config_for(mode, k, 3);
    c.summary_hidden = 4;
    return InterestModel(c);
  }
};

TEST_F(AttentionTest, SingleItemGivesValueProjection) {
  Rng rng(2);
  for (InterestMode mode : {InterestMode::kSelfAttention, InterestMode::kInterestToken}) {
    auto m = make(mode, 2);
    ParamStore p;
    m.init_params(p, rng);
    auto seq = sequence_from_rows(Tensor::from_rows({{0.5, -1.0, 2.0}}));
    const Tensor e = m.summarize_items(seq, p).embeddings;
    const bool sa = mode == InterestMode::kSelfAttention;
    Tensor cond = sa ? m.self_attention_conditions(seq, p)
                     : m.interest_token_conditions(seq, p);
    ASSERT_EQ(cond.rows(), 2u);
    for (std::size_t h = 0; h < 2; ++h) {
      const Tensor v = matmul(e, p.value(sa ? "interest/sa_v" + std::to_string(h)
                                            : std::string("interest/it_v")));
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(cond(h, c), v(0, c), 1e-12);
    }
  }
}

TEST_F(AttentionTest, SelfAttentionIsPermutationInvariant) {
  Rng rng(3);
  auto m = make(InterestMode::kSelfAttention, 3);
  ParamStore p;
  m.init_params(p, rng);
  Tensor rows = Tensor::gaussian({5, 3}, 1.0, rng);
  auto seq = sequence_from_rows(rows);
  Tensor a = m.self_attention_conditions(seq, p);
  std::reverse(seq.items.begin(), seq.items.end());
  std::swap(seq.items[0], seq.items[2]);
  Tensor b = m.self_attention_conditions(seq, p);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST_F(AttentionTest, InterestTokenAttentionMatchesHandOracle) {
  auto c = config_for(InterestMode::kInterestToken, 2, 2);
  c.summary_hidden = 2;
  InterestModel m(c);
  Rng rng(1);
  ParamStore p;
  m.init_params(p, rng);
  p.value("interest/sum_w1") = Tensor::identity(2);
  p.value("interest/sum_w2") = Tensor::identity(2);
  p.value("interest/it_k") = Tensor::identity(2);
  p.value("interest/it_v") = Tensor::identity(2);
  // Token 0 orthogonal to both keys, token 1 aligned with the first key.
  p.value("interest/tokens") = Tensor::from_rows({{0, 0}, {4, 0}});
  auto seq = sequence_from_rows(Tensor::from_rows({{3, 0}, {0, 3}}));
  const Tensor cond = m.interest_token_conditions(seq, p);
  const double e0 = gelu(3.0), z = gelu(0.0);
  const double s = 1 / std::sqrt(2.0);
  // Uniform attention for token 0.
  EXPECT_NEAR(cond(0, 0), 0.5 * (e0 + z), 1e-12);
  const double a0 = std::exp(4 * e0 * s), a1 = std::exp(4 * z * s);
  const double w0 = a0 / (a0 + a1), w1 = a1 / (a0 + a1);
  EXPECT_NEAR(cond(1, 0), w0 * e0 + w1 * z, 1e-12);
  EXPECT_NEAR(cond(1, 1), w0 * z + w1 * e0, 1e-12);
}

TEST_F(AttentionTest, BatchConditionGradients) {
  for (InterestMode mode : {InterestMode::kSelfAttention, InterestMode::kInterestToken,
                            InterestMode::kDcm, InterestMode::kMind}) {
    auto m = make(mode, 2);
    Rng rng(4);
    ParamStore p;
    m.init_params(p, rng);
    auto s1 = std::make_shared<EngagementSequence>(
        sequence_from_rows(Tensor::gaussian({4, 3}, 1.0, rng)));
    s1->items[1].valid = false;
    auto s2 = std::make_shared<EngagementSequence>(
        sequence_from_rows(Tensor::gaussian({3, 3}, 1.0, rng)));
    std::vector<SequenceView> views = {SequenceView::whole(s1), SequenceView::whole(s2)};
    RoutingCache cache;
    auto f = testing::objective([&](const ad::Binder& b) {
      Rng fixed(17);
      return m.conditions(b.tape, *b.trainable, views, fixed, &cache).rows;
    });
    EXPECT_LT(grad_check(f, p, 4), 1e-4) << to_string(mode);
  }
}

TEST_F(AttentionTest, BatchMatchesSingleSequencePath) {
  auto m = make(InterestMode::kDcm, 2);
  Rng rng(6);
  ParamStore p;
  m.init_params(p, rng);
  auto s = std::make_shared<EngagementSequence>(
      sequence_from_rows(Tensor::gaussian({6, 3}, 1.0, rng)));
  Rng a(1), b(1);
  CentroidSet single = m.run_dcm(*s, p, a);
  ad::Tape tape;
  std::vector<SequenceView> views = {SequenceView::whole(s)};
  auto batch = m.conditions_frozen(tape, p, views, b);
  for (std::size_t i = 0; i < single.centroids.size(); ++i) {
    EXPECT_NEAR(batch.rows.value()[i], single.centroids[i], 1e-12);
  }
  EXPECT_EQ(batch.importances[0], single.importances);
}

}  // namespace
}  // namespace mvr
