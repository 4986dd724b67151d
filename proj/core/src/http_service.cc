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

#include "mvr/http_service.h"

#include <httplib.h>
#include <json.hpp>

#include <set>
#include <thread>

#include "mvr/error.h"
#include "mvr/log.h"

namespace mvr {

using nlohmann::json;

struct RetrievalService::State {
  RunConfig config;
  ItemCatalog catalog;
  ImplicitModel implicit_model;
  ExplicitModel explicit_model;
  ParamStore implicit_params;
  ParamStore explicit_params;
  HnswIndex implicit_index;
  HnswIndex explicit_index;
  std::unique_ptr<Retriever> retriever;
};

RetrievalService::RetrievalService(RunConfig config, ItemCatalog catalog,
                                   ParamStore implicit_params,
                                   ParamStore explicit_params,
                                   HnswIndex implicit_index,
                                   HnswIndex explicit_index) {
  config.validate();
  state_ = std::unique_ptr<State>(new State{
      config, std::move(catalog), ImplicitModel(config.model_implicit),
      ExplicitModel(config.model_explicit), std::move(implicit_params),
      std::move(explicit_params), std::move(implicit_index),
      std::move(explicit_index), nullptr});
  if (state_->catalog.index.size() != state_->catalog.size()) state_->catalog.rebuild_index();
  state_->retriever = std::make_unique<Retriever>(
      state_->implicit_model, state_->implicit_params, state_->implicit_index,
      state_->explicit_model, state_->explicit_params, state_->explicit_index,
      config.serving);
}

RetrievalService::~RetrievalService() = default;

const Retriever& RetrievalService::retriever() const { return *state_->retriever; }

namespace {

template <class T>
T field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type");
  }
}

FeatureFields split_slots(std::span<const double> row, std::span<const std::size_t> dims) {
  FeatureFields out;
  std::size_t off = 0;
  for (std::size_t d : dims) {
    out.emplace_back(row.begin() + off, row.begin() + off + d);
    off += d;
  }
  return out;
}

}  // namespace

RetrievalRequest RetrievalService::parse_request(const std::string& body) const {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw FormatError(std::string("body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("body must be a JSON object");
  static const std::set<std::string> kKeys = {"user_id", "profile", "followed_topics",
                                              "sequence", "budget", "k_ex"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKeys.count(it.key())) throw FormatError("unknown field '" + it.key() + "'");
  }
  const auto& cfg = state_->config;
  RetrievalRequest req;
  req.user_id = field<std::uint64_t>(j, "user_id", 0);
  if (!j.contains("profile")) throw FormatError("field 'profile' is required");
  req.user.profile = field<std::vector<double>>(j, "profile", {});
  if (req.user.profile.size() != cfg.model_implicit.tower.profile_dim) {
    throw FormatError("profile must have " +
                      std::to_string(cfg.model_implicit.tower.profile_dim) + " entries");
  }
  req.user.followed_topics = field<std::vector<std::uint32_t>>(j, "followed_topics", {});
  for (auto t : req.user.followed_topics) {
    if (t >= cfg.model_explicit.tower.num_topics) {
      throw UnknownTopicError("topic " + std::to_string(t) + " is not in the vocabulary");
    }
  }
  req.total_budget = field<std::size_t>(j, "budget", 0);
  req.k_ex = field<std::size_t>(j, "k_ex", 0);

  const auto& dims = cfg.model_implicit.interest.feature_dims;
  const json seq = j.value("sequence", json::array());
  if (!seq.is_array()) throw FormatError("field 'sequence' must be an array");
  for (const auto& e : seq) {
    if (!e.is_object()) throw FormatError("sequence entries must be objects");
    SequenceItem it;
    it.item_id = field<std::uint64_t>(e, "item_id", 0);
    if (!e.contains("item_id")) throw FormatError("sequence entry without item_id");
    it.timestamp = field<std::int64_t>(e, "timestamp", 0);
    const int action = field<int>(e, "action", 1);
    if (action != 1 && action != -1) throw FormatError("action must be +1 or -1");
    it.positive_action = action == 1;
    if (e.contains("features") && !e["features"].is_null()) {
      const auto& f = e["features"];
      if (!f.is_array() || f.size() != dims.size()) {
        throw FormatError("features must have " + std::to_string(dims.size()) + " slots");
      }
      for (std::size_t s = 0; s < dims.size(); ++s) {
        if (f[s].is_null()) {
          it.features.emplace_back();
          continue;
        }
        auto slot = field<std::vector<double>>(json{{"slot", f[s]}}, "slot", {});
        if (slot.size() != dims[s]) throw FormatError("feature slot has the wrong width");
        it.features.push_back(std::move(slot));
      }
    } else {
      // ItemCatalog::row throws ConfigError for an unknown id.
      const std::size_t row = state_->catalog.row(it.item_id);
      it.features = split_slots(state_->catalog.features.row(row), dims);
    }
    it.valid = derive_validity(it);
    req.sequence.items.push_back(std::move(it));
  }
  std::stable_sort(req.sequence.items.begin(), req.sequence.items.end(),
                   [](const SequenceItem& a, const SequenceItem& b) {
                     return a.timestamp < b.timestamp;
                   });
  const std::size_t max_len = cfg.model_implicit.interest.max_seq_len;
  if (req.sequence.items.size() > max_len) {
    req.sequence.items.erase(req.sequence.items.begin(),
                             req.sequence.items.end() - std::ptrdiff_t(max_len));
  }
  return req;
}

namespace {

json error_body(const std::string& message) { return {{"error", message}}; }

json result_json(const RetrievalResult& r) {
  json cands = json::array();
  for (const auto& c : r.merged) {
    cands.push_back({{"item_id", c.item_id},
                     {"score", c.score},
                     {"source", c.source == SourceKind::kImplicit ? "implicit" : "explicit"},
                     {"source_index", c.source_index}});
  }
  return {{"candidates", cands},
          {"sampled_topics", r.sampled_topics},
          {"implicit_budgets", r.implicit_budgets},
          {"explicit_budgets", r.explicit_budget_split},
          {"overlap",
           {{"jaccard", r.overlap.jaccard},
            {"intersection_over_min", r.overlap.intersection_over_min}}}};
}

}  // namespace

HttpReply RetrievalService::handle(const std::string& method, const std::string& path,
                                   const std::string& body) const {
  if (path == "/healthz") {
    if (method != "GET") return {405, error_body("use GET").dump()};
    return {200, json{{"status", "ok"}}.dump()};
  }
  if (path != "/retrieve") return {404, error_body("no such endpoint").dump()};
  if (method != "POST") return {405, error_body("use POST").dump()};
  try {
    const auto req = parse_request(body);
    return {200, result_json(state_->retriever->retrieve(req)).dump()};
  } catch (const FormatError& e) {
    return {400, error_body(e.what()).dump()};
  } catch (const UnknownTopicError& e) {
    return {422, error_body(e.what()).dump()};
  } catch (const ConfigError& e) {
    return {422, error_body(e.what()).dump()};
  } catch (const Error& e) {
    log(LogLevel::kError, std::string("retrieve failed: ") + e.what());
    return {500, error_body(e.what()).dump()};
  }
}

struct HttpServer::Impl {
  const RetrievalService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(const RetrievalService& s) : service(s) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      const auto reply = service.handle(req.method, req.path, req.body);
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    };
    server.Get("/healthz", route);
    server.Post("/retrieve", route);
  }
};

HttpServer::HttpServer(const RetrievalService& service)
    : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  }
  log_info("serving on " + host + ":" + std::to_string(port));
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace mvr
