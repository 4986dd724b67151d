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

#include "mvr/ann.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include "mvr/checkpoint.h"
#include "mvr/error.h"

namespace mvr {

void IndexedCorpus::validate() const {
  if (embeddings.rank() != 2 || embeddings.rows() != item_ids.size()) {
    throw ConfigError("corpus has " + std::to_string(item_ids.size()) +
                      " ids but embeddings " + embeddings.shape_string());
  }
  if (!topic_labels.empty() && topic_labels.size() != item_ids.size()) {
    throw ConfigError("corpus topic labels do not match the id count");
  }
  std::unordered_map<std::uint64_t, std::size_t> seen;
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    if (!seen.emplace(item_ids[i], i).second) {
      throw ConfigError("duplicate corpus id " + std::to_string(item_ids[i]));
    }
    const double n = norm(embeddings.row(i));
    if (std::abs(n - 1.0) > 1e-6) {
      throw ConfigError("corpus row " + std::to_string(i) + " has norm " +
                        std::to_string(n));
    }
  }
}

void IndexedCorpus::build_lookup() {
  lookup_.clear();
  lookup_.reserve(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) lookup_.emplace(item_ids[i], i);
}

std::size_t IndexedCorpus::row_of(std::uint64_t id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) {
    throw ConfigError("item " + std::to_string(id) + " not in corpus");
  }
  return it->second;
}

bool IndexedCorpus::has_label(std::size_t row, std::uint32_t topic) const {
  if (row >= topic_labels.size()) return false;
  const auto& l = topic_labels[row];
  return std::find(l.begin(), l.end(), topic) != l.end();
}

bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item_id < b.item_id;
}

std::vector<ScoredItem> brute_force_topk(const IndexedCorpus& corpus,
                                         std::span<const double> query,
                                         std::size_t k) {
  if (corpus.size() == 0 || k == 0) return {};
  if (query.size() != corpus.dim()) {
    throw DimensionError("query dim " + std::to_string(query.size()) +
                         " vs corpus dim " + std::to_string(corpus.dim()));
  }
  std::vector<ScoredItem> all(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    all[i] = {corpus.item_ids[i], dot(query, corpus.embeddings.row(i))};
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(),
                    ranks_before);
  all.resize(k);
  return all;
}

void HnswConfig::validate() const {
  if (m < 2) throw ConfigError("index.m must be at least 2");
  if (ef_construction == 0) throw ConfigError("index.ef_construction must be positive");
  if (ef_search == 0) throw ConfigError("index.ef_search must be positive");
}

double HnswIndex::sim(std::span<const double> q, std::uint32_t node) const {
  return dot(q, corpus_.embeddings.row(node));
}

std::size_t HnswIndex::max_degree(int layer) const {
  return layer == 0 ? 2 * config_.m : config_.m;
}

const std::vector<std::uint32_t>& HnswIndex::neighbors(std::size_t node,
                                                       int layer) const {
  return links_.at(node).at(static_cast<std::size_t>(layer));
}

std::uint32_t HnswIndex::greedy(std::span<const double> q, std::uint32_t entry,
                                int from, int to) const {
  std::uint32_t cur = entry;
  double best = sim(q, cur);
  for (int layer = from; layer > to; --layer) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::uint32_t nb : links_[cur][static_cast<std::size_t>(layer)]) {
        const double s = sim(q, nb);
        if (s > best || (s == best && nb < cur)) {
          best = s;
          cur = nb;
          moved = true;
        }
      }
    }
  }
  return cur;
}

namespace {

// Strict weak orders with node index as the tie-break so the graph does not
// depend on heap implementation details.
struct Better {
  template <class C>
  bool operator()(const C& a, const C& b) const {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.node < b.node;
  }
};
struct Worse {
  template <class C>
  bool operator()(const C& a, const C& b) const { return Better()(b, a); }
};

}  // namespace

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(
    std::span<const double> q, std::uint32_t entry, std::size_t ef,
    int layer) const {
  std::vector<char> visited(corpus_.size(), 0);
  // Best candidate on top.
  std::priority_queue<Candidate, std::vector<Candidate>, Worse> frontier;
  // Worst result on top.
  std::priority_queue<Candidate, std::vector<Candidate>, Better> results;
  const Candidate start{sim(q, entry), entry};
  visited[entry] = 1;
  frontier.push(start);
  results.push(start);
  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (results.size() >= ef && Better()(results.top(), c)) break;
    frontier.pop();
    for (std::uint32_t nb : links_[c.node][static_cast<std::size_t>(layer)]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate cand{sim(q, nb), nb};
      if (results.size() < ef || Better()(cand, results.top())) {
        frontier.push(cand);
        results.push(cand);
        if (results.size() > ef) results.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Keeps a candidate only when it is closer to the base than to every
// neighbor already kept, which spreads links across directions.
std::vector<std::uint32_t> HnswIndex::select_neighbors(
    std::vector<Candidate> cands, std::size_t m) const {
  std::sort(cands.begin(), cands.end(), Better());
  std::vector<std::uint32_t> out;
  for (const Candidate& c : cands) {
    if (out.size() >= m) break;
    bool keep = true;
    for (std::uint32_t r : out) {
      if (dot(corpus_.embeddings.row(c.node), corpus_.embeddings.row(r)) > c.sim) {
        keep = false;
        break;
      }
    }
    if (keep) out.push_back(c.node);
  }
  return out;
}

void HnswIndex::insert(std::uint32_t node, Rng& rng) {
  const double ml = 1.0 / std::log(double(config_.m));
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const int level = static_cast<int>(std::floor(-std::log(1.0 - u) * ml));
  levels_[node] = level;
  links_[node].assign(static_cast<std::size_t>(level) + 1, {});
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }
  const auto q = corpus_.embeddings.row(node);
  std::uint32_t ep = greedy(q, entry_, max_level_, level);
  for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto found = search_layer(q, ep, config_.ef_construction, layer);
    const auto lc = static_cast<std::size_t>(layer);
    links_[node][lc] = select_neighbors(found, config_.m);
    for (std::uint32_t nb : links_[node][lc]) {
      auto& back = links_[nb][lc];
      back.push_back(node);
      if (back.size() > max_degree(layer)) {
        std::vector<Candidate> cands;
        cands.reserve(back.size());
        const auto base = corpus_.embeddings.row(nb);
        for (std::uint32_t x : back) cands.push_back({sim(base, x), x});
        back = select_neighbors(std::move(cands), max_degree(layer));
      }
    }
    ep = found.front().node;
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

HnswIndex HnswIndex::build(IndexedCorpus corpus, const HnswConfig& config) {
  config.validate();
  if (corpus.size() == 0) throw ConfigError("cannot index an empty corpus");
  if (corpus.size() > 0xffffffffu) throw ConfigError("corpus too large for u32 links");
  corpus.validate();
  corpus.build_lookup();
  HnswIndex idx;
  idx.corpus_ = std::move(corpus);
  idx.config_ = config;
  const std::size_t n = idx.corpus_.size();
  idx.levels_.assign(n, 0);
  idx.links_.resize(n);
  Rng rng(derive_seed(config.seed, 0x6c76));
  for (std::size_t i = 0; i < n; ++i) idx.insert(static_cast<std::uint32_t>(i), rng);
  return idx;
}

std::vector<ScoredItem> HnswIndex::query(std::span<const double> q,
                                         std::size_t k,
                                         std::size_t ef_search) const {
  if (ef_search < k) {
    throw ConfigError("ef_search " + std::to_string(ef_search) + " < k " +
                      std::to_string(k));
  }
  if (q.size() != corpus_.dim()) {
    throw DimensionError("query dim " + std::to_string(q.size()) +
                         " vs index dim " + std::to_string(corpus_.dim()));
  }
  if (k == 0) return {};
  const std::uint32_t ep = greedy(q, entry_, max_level_, 0);
  const auto found = search_layer(q, ep, ef_search, 0);
  std::vector<ScoredItem> out;
  out.reserve(found.size());
  for (const Candidate& c : found) {
    out.push_back({corpus_.item_ids[c.node], c.sim});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<ScoredItem> HnswIndex::query(std::span<const double> q,
                                         std::size_t k) const {
  return query(q, k, std::max(config_.ef_search, k));
}

namespace {
constexpr char kIndexMagic[6] = {'M', 'V', 'R', 'I', 'D', 'X'};
}  // namespace

void HnswIndex::save(std::ostream& out) const {
  using namespace binio;
  out.write(kIndexMagic, sizeof(kIndexMagic));
  put_u32(out, kIndexVersion);
  put_u32(out, static_cast<std::uint32_t>(config_.m));
  put_u32(out, static_cast<std::uint32_t>(corpus_.dim()));
  put_u64(out, corpus_.size());
  put_u32(out, static_cast<std::uint32_t>(config_.ef_construction));
  put_u32(out, static_cast<std::uint32_t>(config_.ef_search));
  put_u64(out, config_.seed);
  put_u32(out, static_cast<std::uint32_t>(max_level_));
  put_u32(out, entry_);
  for (std::uint64_t id : corpus_.item_ids) put_u64(out, id);
  for (double v : corpus_.embeddings.data()) put_f64(out, v);
  for (std::size_t i = 0; i < size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(levels_[i]));
    for (const auto& layer : links_[i]) {
      put_u32(out, static_cast<std::uint32_t>(layer.size()));
      for (std::uint32_t nb : layer) put_u32(out, nb);
    }
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& labels = i < corpus_.topic_labels.size()
                             ? corpus_.topic_labels[i]
                             : std::vector<std::uint32_t>{};
    put_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (std::uint32_t t : labels) put_u32(out, t);
  }
  if (!out) throw FormatError("failed writing index");
}

void HnswIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  save(out);
}

HnswIndex HnswIndex::load(std::istream& in) {
  using namespace binio;
  char magic[6];
  get_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) {
    throw FormatError("not an index file (bad magic)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kIndexVersion) {
    throw FormatError("index version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kIndexVersion) + ")");
  }
  HnswIndex idx;
  idx.config_.m = get_u32(in);
  const std::uint32_t d = get_u32(in);
  const std::uint64_t n = get_u64(in);
  if (n == 0 || n > 0xffffffffu || d == 0 || d > 1u << 16 || n * d > (1ull << 32)) {
    throw FormatError("implausible index dimensions");
  }
  idx.config_.ef_construction = get_u32(in);
  idx.config_.ef_search = get_u32(in);
  idx.config_.seed = get_u64(in);
  idx.max_level_ = static_cast<int>(get_u32(in));
  idx.entry_ = get_u32(in);
  if (idx.entry_ >= n || idx.max_level_ > 64) throw FormatError("corrupt index header");
  auto& c = idx.corpus_;
  c.item_ids.resize(n);
  for (auto& id : c.item_ids) id = get_u64(in);
  std::vector<double> emb(n * d);
  for (double& v : emb) v = get_f64(in);
  c.embeddings = Tensor({n, d}, std::move(emb));
  idx.levels_.resize(n);
  idx.links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t level = get_u32(in);
    if (level > static_cast<std::uint32_t>(idx.max_level_)) {
      throw FormatError("corrupt index: node level above max level");
    }
    idx.levels_[i] = static_cast<int>(level);
    idx.links_[i].resize(level + 1);
    for (auto& layer : idx.links_[i]) {
      const std::uint32_t deg = get_u32(in);
      if (deg > 2 * idx.config_.m) throw FormatError("corrupt index: degree");
      layer.resize(deg);
      for (auto& nb : layer) {
        nb = get_u32(in);
        if (nb >= n) throw FormatError("corrupt index: neighbor id");
      }
    }
  }
  c.topic_labels.resize(n);
  for (auto& labels : c.topic_labels) {
    const std::uint32_t count = get_u32(in);
    if (count > 1024) throw FormatError("corrupt index: label count");
    labels.resize(count);
    for (auto& t : labels) t = get_u32(in);
  }
  c.build_lookup();
  return idx;
}

HnswIndex HnswIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return load(in);
}

}  // namespace mvr
