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

// Run configuration shared by the command line tool and the experiment
// drivers. JSON sections: world, model_implicit, model_explicit, trainer,
// index, serving, eval; plus the mandatory top-level "seed".

#ifndef MVR_CONFIG_H_
#define MVR_CONFIG_H_

#include <cstdint>
#include <string>

#include "mvr/ann.h"
#include "mvr/dataset.h"
#include "mvr/eval.h"
#include "mvr/models.h"
#include "mvr/serving.h"
#include "mvr/synth.h"
#include "mvr/training.h"

namespace mvr {

struct RunConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  DatasetOptions data;
  ImplicitModelConfig model_implicit;
  ExplicitModelConfig model_explicit;
  // Shared by both models.
  TrainerConfig trainer;
  HnswConfig index;
  ServingConfig serving;
  EvalConfig eval;

  // Derives every sub-seed from `seed` and copies the dimensions the world
  // dictates (feature widths, profile width, topic count, sequence window)
  // into the model configs.
  void resolve();
  // Throws ConfigError.
  void validate() const;
};

// Defaults for every field: the deployed knobs K_im = 7, K_ex = 5, a 15-day
// window and batch 256.
RunConfig default_run_config();

// Strict: unknown keys, wrong types and a missing seed throw ConfigError.
// The result is resolved and validated.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Resolved config as JSON, for echoing next to every artifact.
std::string to_json_string(const RunConfig& config);

}  // namespace mvr

#endif  // MVR_CONFIG_H_
