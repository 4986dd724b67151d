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

// Maximum inner product search over unit-norm item embeddings: an exact
// scan and an HNSW graph index.
//
// Index file layout, integers little-endian:
//   "MVRIDX" | u32 version | u32 M | u32 d | u64 count
//   u32 ef_construction | u32 ef_search | u64 seed | u32 max_level | u32 entry
//   count x u64 id | count*d x f64 embedding
//   count x (u32 level | per layer 0..level: u32 degree | degree x u32)
//   count x (u32 label count | labels x u32)

#ifndef MVR_ANN_H_
#define MVR_ANN_H_

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/tensor.h"

namespace mvr {

struct IndexedCorpus {
  std::vector<std::uint64_t> item_ids;
  Tensor embeddings;  // [M x d], unit rows
  std::vector<std::vector<std::uint32_t>> topic_labels;

  std::size_t size() const { return item_ids.size(); }
  std::size_t dim() const { return embeddings.cols(); }
  // Throws ConfigError on duplicate ids, mismatched lengths or rows that
  // are not unit-norm within 1e-6.
  void validate() const;
  // Row of an id; throws ConfigError when absent.
  std::size_t row_of(std::uint64_t id) const;
  bool has_label(std::size_t row, std::uint32_t topic) const;

  void build_lookup();

 private:
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

struct ScoredItem {
  std::uint64_t item_id = 0;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

// Score descending, then id ascending.
bool ranks_before(const ScoredItem& a, const ScoredItem& b);

// Exact top-k by inner product. k larger than the corpus returns all items.
std::vector<ScoredItem> brute_force_topk(const IndexedCorpus& corpus,
                                         std::span<const double> query,
                                         std::size_t k);

struct HnswConfig {
  std::size_t m = 16;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::uint32_t kIndexVersion = 1;

class HnswIndex {
 public:
  // Single-threaded and deterministic per seed. Throws ConfigError on an
  // empty or invalid corpus.
  static HnswIndex build(IndexedCorpus corpus, const HnswConfig& config);

  // Throws ConfigError when ef_search < k.
  std::vector<ScoredItem> query(std::span<const double> q, std::size_t k,
                                std::size_t ef_search) const;
  // Uses max(config ef_search, k).
  std::vector<ScoredItem> query(std::span<const double> q,
                                std::size_t k) const;

  const IndexedCorpus& corpus() const { return corpus_; }
  const HnswConfig& config() const { return config_; }
  std::size_t size() const { return corpus_.size(); }
  int max_level() const { return max_level_; }
  int level(std::size_t node) const { return levels_[node]; }
  const std::vector<std::uint32_t>& neighbors(std::size_t node,
                                              int layer) const;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  // Throws FormatError on a bad magic, version mismatch or truncation.
  static HnswIndex load(std::istream& in);
  static HnswIndex load(const std::string& path);

 private:
  struct Candidate {
    double sim;
    std::uint32_t node;
  };

  HnswIndex() = default;

  double sim(std::span<const double> q, std::uint32_t node) const;
  std::uint32_t greedy(std::span<const double> q, std::uint32_t entry,
                       int from, int to) const;
  std::vector<Candidate> search_layer(std::span<const double> q,
                                      std::uint32_t entry, std::size_t ef,
                                      int layer) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> cands,
                                              std::size_t m) const;
  void insert(std::uint32_t node, Rng& rng);
  std::size_t max_degree(int layer) const;

  IndexedCorpus corpus_;
  HnswConfig config_;
  std::vector<int> levels_;
  // links_[node][layer]
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace mvr

#endif  // MVR_ANN_H_
