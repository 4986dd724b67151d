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

// JSON mapping of the module configs. Internal to the library; the public
// surface is mvr/config.h.

#ifndef MVR_SRC_CONFIG_JSON_H_
#define MVR_SRC_CONFIG_JSON_H_

#include <json.hpp>

#include "mvr/synth.h"

namespace mvr {

nlohmann::json to_json(const WorldConfig& c);
// Fields absent from `j` keep their defaults. Unknown keys and wrongly typed
// values throw ConfigError.
WorldConfig world_config_from_json(const nlohmann::json& j,
                                   WorldConfig base = {});

}  // namespace mvr

#endif  // MVR_SRC_CONFIG_JSON_H_
