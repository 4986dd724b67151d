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

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "mvr/error.h"

namespace mvr {

double max_score(const Tensor& user_set, std::span<const double> item) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < user_set.rows(); ++j) {
    best = std::max(best, dot(user_set.row(j), item));
  }
  return best;
}

std::size_t positive_rank(const Tensor& user_set,
                          std::span<const double> positive_embedding,
                          std::uint64_t positive_id, const IndexedCorpus& corpus,
                          const std::vector<char>* mask) {
  if (corpus.size() == 0) throw UndefinedMetricError("hit rate on an empty corpus");
  if (user_set.rows() == 0) throw UndefinedMetricError("user has no embeddings");
  if (mask && mask->size() != corpus.size()) {
    throw DimensionError("corpus mask length");
  }
  const double pos = max_score(user_set, positive_embedding);
  // [M x K] scores in one product.
  const Tensor scores = matmul_nt(corpus.embeddings, user_set);
  std::size_t above = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.item_ids[i] == positive_id) continue;
    if (mask && !(*mask)[i]) continue;
    auto row = scores.row(i);
    if (*std::max_element(row.begin(), row.end()) >= pos) ++above;
  }
  return above + 1;
}

double hit_rate(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw UndefinedMetricError("hit rate over no records");
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r <= k;
  return double(hits) / double(ranks.size());
}

double interest_coverage(std::span<const std::uint64_t> candidates,
                         const SyntheticUser& user, const World& world,
                         std::size_t n, double threshold) {
  std::set<std::uint32_t> wanted;
  for (std::size_t i = 0; i < user.mixture_topics.size(); ++i) {
    if (user.mixture_weights[i] >= threshold) wanted.insert(user.mixture_topics[i]);
  }
  if (wanted.empty()) return 0.0;
  std::set<std::uint32_t> hit;
  const std::size_t limit = std::min(n, candidates.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const std::uint32_t t = world.item(candidates[i]).topic_id;
    if (wanted.count(t)) hit.insert(t);
  }
  return double(hit.size()) / double(wanted.size());
}

double pairwise_cosine(const Tensor& set) {
  const std::size_t k = set.rows();
  if (k < 2) throw UndefinedMetricError("pairwise cosine needs at least 2 rows");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double na = norm(set.row(a)), nb = norm(set.row(b));
      total += (na > 0 && nb > 0) ? dot(set.row(a), set.row(b)) / (na * nb) : 0.0;
      ++pairs;
    }
  }
  return total / double(pairs);
}

double collapse_metric(std::span<const Tensor> sets) {
  if (sets.empty()) throw UndefinedMetricError("collapse metric over no users");
  double total = 0.0;
  for (const auto& s : sets) total += pairwise_cosine(s);
  return total / double(sets.size());
}

OverlapReport overlap_report(std::span<const CandidateList> implicit_lists,
                             std::span<const CandidateList> explicit_lists) {
  if (implicit_lists.size() != explicit_lists.size()) {
    throw DimensionError("overlap report needs one list pair per user");
  }
  OverlapReport r;
  for (std::size_t u = 0; u < implicit_lists.size(); ++u) {
    if (implicit_lists[u].empty() || explicit_lists[u].empty()) continue;
    const auto s = candidate_overlap(implicit_lists[u], explicit_lists[u]);
    r.jaccard += s.jaccard;
    r.intersection_over_min += s.intersection_over_min;
    ++r.users;
  }
  if (r.users) {
    r.jaccard /= double(r.users);
    r.intersection_over_min /= double(r.users);
  }
  return r;
}

std::vector<std::uint64_t> offline_candidates(const Tensor& user_set,
                                              std::span<const double> importances,
                                              const IndexedCorpus& corpus,
                                              std::size_t n) {
  if (importances.size() != user_set.rows()) {
    throw DimensionError("one importance per user embedding expected");
  }
  const auto budgets = allocate_budgets(importances, n);
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importances[a] > importances[b];
  });
  std::vector<CandidateList> lists;
  for (std::size_t j : order) {
    if (budgets[j] == 0) continue;
    CandidateList l;
    for (const auto& s : brute_force_topk(corpus, user_set.row(j), budgets[j])) {
      l.push_back({s.item_id, s.score, SourceKind::kImplicit, static_cast<std::uint32_t>(j)});
    }
    lists.push_back(std::move(l));
  }
  std::vector<std::uint64_t> out;
  for (const auto& c : round_robin_merge(lists)) out.push_back(c.item_id);
  return out;
}

Tensor classical_mds(const Tensor& points, std::size_t dims) {
  const std::size_t n = points.rows();
  if (n == 0) return Tensor::matrix(0, dims);
  Eigen::MatrixXd d2(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < points.cols(); ++c) {
        const double diff = points(i, c) - points(j, c);
        s += diff * diff;
      }
      d2(Eigen::Index(i), Eigen::Index(j)) = s;
    }
  }
  // B = -1/2 J D^2 J with J the centering matrix.
  const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(Eigen::Index(n), Eigen::Index(n)) -
                            Eigen::MatrixXd::Constant(Eigen::Index(n), Eigen::Index(n), 1.0 / double(n));
  const Eigen::MatrixXd b = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  Tensor out = Tensor::matrix(n, dims);
  for (std::size_t k = 0; k < dims && k < n; ++k) {
    // Eigenvalues are ascending.
    const Eigen::Index col = Eigen::Index(n - 1 - k);
    const double lambda = std::max(0.0, eig.eigenvalues()(col));
    auto v = eig.eigenvectors().col(col);
    // Fix the sign so the largest-magnitude coordinate is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      out(i, k) = sign * v(Eigen::Index(i)) * std::sqrt(lambda);
    }
  }
  return out;
}

void write_metrics_csv(std::span<const MetricRow> rows, std::ostream& out) {
  out << "metric,name,value,seed\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.metric << ',' << r.name << ',' << r.value << ',' << r.seed << '\n';
  }
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write_metrics_csv(rows, out);
}

std::string metrics_summary_json(std::span<const MetricRow> rows) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const auto& r : rows) grouped[r.metric][r.name].push_back(r.value);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [metric, names] : grouped) {
    for (const auto& [name, values] : names) {
      const double mean =
          std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
      j[metric][name] = {{"mean", mean}, {"n", values.size()}, {"values", values}};
    }
  }
  return j.dump(2);
}

std::string AblationCell::name() const {
  return std::string("vafpi") + (use_vafpi ? "1" : "0") + "_sar" +
         (use_sar ? "1" : "0") + "_k" + std::to_string(k);
}

std::vector<AblationCell> AblationSpec::cells() const {
  std::vector<AblationCell> out;
  for (bool v : vafpi) {
    for (bool s : sar) {
      for (int kk : k) out.push_back({v, s, kk});
    }
  }
  return out;
}

void AblationSpec::validate() const {
  if (vafpi.empty() || sar.empty() || k.empty()) {
    throw ConfigError("ablation grid is empty");
  }
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  for (int kk : k) {
    if (kk < 1) throw ConfigError("ablation k must be positive");
  }
}

void EvalConfig::validate() const {
  if (k_rank.empty()) throw ConfigError("eval.k_rank is empty");
  for (std::size_t k : k_rank) {
    if (k == 0) throw ConfigError("eval.k_rank entries must be positive");
  }
  if (coverage_n == 0) throw ConfigError("eval.coverage_n must be positive");
  ablation.validate();
}

}  // namespace mvr
