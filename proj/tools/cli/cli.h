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

// The `mvr` command line: gen-data, train, build-index, eval, ablate, serve.

#ifndef MVR_TOOLS_CLI_H_
#define MVR_TOOLS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace mvr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Output file names inside the respective --out directories.
inline constexpr const char* kWorldFile = "world.jsonl";
inline constexpr const char* kOrganicFile = "engagements.jsonl";
inline constexpr const char* kExplicitFile = "explicit.jsonl";
inline constexpr const char* kConfigEcho = "config.json";
inline constexpr const char* kImplicitCheckpoint = "implicit.ckpt";
inline constexpr const char* kExplicitCheckpoint = "explicit.ckpt";
inline constexpr const char* kImplicitIndex = "implicit.mvridx";
inline constexpr const char* kExplicitIndex = "explicit.mvridx";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kSummaryFile = "summary.json";

}  // namespace mvr::cli

#endif  // MVR_TOOLS_CLI_H_
