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

// Turns generated logs into training examples and evaluation records.

#ifndef MVR_DATASET_H_
#define MVR_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mvr/models.h"
#include "mvr/synth.h"

namespace mvr {

struct TrainEvalSplit {
  std::vector<Engagement> train;  // days 1..days-1
  std::vector<Engagement> eval;   // day `days`
};

TrainEvalSplit split_train_eval(std::span<const Engagement> records,
                                std::uint32_t days);

// One positive to retrieve for one user, with the user's state before the
// evaluation day.
struct EvalRecord {
  std::uint64_t user_id = 0;
  std::shared_ptr<const UserFeatures> user;
  SequenceView seq;
  std::uint64_t positive = 0;
  std::optional<std::uint32_t> source_topic;
};

struct DatasetOptions {
  // History window of each implicit example.
  std::size_t max_seq_len = 128;
  // Most recent positives kept per user for training; 0 keeps all.
  std::size_t max_examples_per_user = 0;
};

struct Dataset {
  ItemCatalog catalog;
  // Indexed by user id.
  std::vector<std::shared_ptr<const UserFeatures>> users;
  // Organic history of days 1..days-1 per user.
  std::vector<std::shared_ptr<const EngagementSequence>> histories;
  std::vector<TrainingExample> implicit_train;
  // Source-attributed examples from the follow-based retriever.
  std::vector<TrainingExample> explicit_train;
  // First valid organic positive of the evaluation day, per user.
  std::vector<EvalRecord> eval;
  // First source-attributed engagement of the evaluation day, per user.
  std::vector<EvalRecord> explicit_eval;
};

ItemCatalog make_catalog(const World& world);

// Implicit examples pair each valid positive with the window of organic
// history preceding it; positives without a valid item in that window are
// skipped.
Dataset build_dataset(const World& world, const Logs& logs,
                      const DatasetOptions& options);

// Replaces each example's condition with a label drawn uniformly from the
// target item's topic labels.
std::vector<TrainingExample> make_item_interest_examples(
    std::span<const TrainingExample> examples, const World& world,
    std::uint64_t seed);

}  // namespace mvr

#endif  // MVR_DATASET_H_
