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

#include "mvr/log.h"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include "mvr/error.h"

namespace mvr {
namespace {

LogLevel initial_level() {
  const char* env = std::getenv("MVR_LOG");
  if (!env || !*env) return LogLevel::kInfo;
  try {
    return parse_log_level(env);
  } catch (const ConfigError&) {
    return LogLevel::kInfo;
  }
}

std::atomic<LogLevel>& level_ref() {
  static std::atomic<LogLevel> level{initial_level()};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LogLevel log_level() { return level_ref().load(); }
void set_log_level(LogLevel level) { level_ref().store(level); }

LogLevel parse_log_level(std::string_view name) {
  if (name == "debug") return LogLevel::kDebug;
  if (name == "info") return LogLevel::kInfo;
  if (name == "warn") return LogLevel::kWarn;
  if (name == "error") return LogLevel::kError;
  if (name == "off") return LogLevel::kOff;
  throw ConfigError("unknown log level '" + std::string(name) + "'");
}

void log(LogLevel level, std::string_view message) {
  if (level < log_level() || level == LogLevel::kOff) return;
  static constexpr const char* kTags[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << '[' << kTags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace mvr
