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

// Minimal leveled logging to stderr. The threshold comes from the MVR_LOG
// environment variable (debug, info, warn, error, off; default info).

#ifndef MVR_LOG_H_
#define MVR_LOG_H_

#include <string_view>

namespace mvr {

enum class LogLevel { kDebug, kInfo, kWarn, kError, kOff };

LogLevel log_level();
void set_log_level(LogLevel level);
// Throws ConfigError for an unknown name.
LogLevel parse_log_level(std::string_view name);

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::kInfo, m); }
inline void log_debug(std::string_view m) { log(LogLevel::kDebug, m); }
inline void log_warn(std::string_view m) { log(LogLevel::kWarn, m); }

}  // namespace mvr

#endif  // MVR_LOG_H_
