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

// JSON retrieval service over an immutable snapshot of both models and
// their indexes.
//
// POST /retrieve
//   {"user_id": 7, "profile": [..], "followed_topics": [3, 5],
//    "sequence": [{"item_id": 12, "timestamp": 4, "action": 1,
//                  "features": [[..], [..]]}],
//    "budget": 100, "k_ex": 5}
//   Only "profile" is required. Sequence entries without "features" take
//   the catalog features of their item; a null slot marks a missing
//   feature. "action" is +1 or -1 (default +1). The sequence is truncated
//   to its most recent max_seq_len entries.
//   200 {"candidates": [{"item_id", "score", "source", "source_index"}],
//        "sampled_topics": [..], "implicit_budgets": [..],
//        "explicit_budgets": [..],
//        "overlap": {"jaccard", "intersection_over_min"}}
//   400 malformed body, 422 unknown topic or item.
// GET /healthz -> 200 {"status": "ok"}

#ifndef MVR_HTTP_SERVICE_H_
#define MVR_HTTP_SERVICE_H_

#include <memory>
#include <string>

#include "mvr/config.h"

namespace mvr {

struct HttpReply {
  int status = 200;
  std::string body;
};

class RetrievalService {
 public:
  // Takes ownership of everything; nothing is mutated afterwards.
  RetrievalService(RunConfig config, ItemCatalog catalog, ParamStore implicit_params,
                   ParamStore explicit_params, HnswIndex implicit_index,
                   HnswIndex explicit_index);
  ~RetrievalService();

  RetrievalService(const RetrievalService&) = delete;
  RetrievalService& operator=(const RetrievalService&) = delete;

  // Transport-independent request handling.
  HttpReply handle(const std::string& method, const std::string& path,
                   const std::string& body) const;

  // Parses a /retrieve body. Throws FormatError (400) or
  // UnknownTopicError/ConfigError for unknown ids (422).
  RetrievalRequest parse_request(const std::string& body) const;

  const Retriever& retriever() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// Blocking HTTP server around a service. start() binds and serves on a
// background thread; port 0 picks a free port.
class HttpServer {
 public:
  explicit HttpServer(const RetrievalService& service);
  ~HttpServer();

  // Returns the bound port. Throws ConfigError when binding fails.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop() is called elsewhere.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mvr

#endif  // MVR_HTTP_SERVICE_H_
