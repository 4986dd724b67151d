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

// Sampled softmax over in-batch negatives with logQ correction, condition
// association, item frequency estimation and the SGD loop.

#ifndef MVR_TRAINING_H_
#define MVR_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/autodiff.h"
#include "mvr/models.h"
#include "mvr/tensor.h"

namespace mvr {

// argmax_j over dots; ties go to the lowest index. Entries with
// active[j] == false are skipped (all entries when active is empty).
std::size_t associate_condition(std::span<const double> dots,
                                const std::vector<bool>& active = {});
std::size_t associate_condition(const Tensor& user_embs, const Tensor& target);

struct GumbelSelection {
  Tensor hard;  // one-hot at argmax(dots + g)
  Tensor soft;  // softmax((dots + g) / tau)
  std::vector<double> noise;
};

// Draws g ~ Gumbel(0, 1) per entry. Inactive entries get weight 0 in both.
GumbelSelection gumbel_st_select(std::span<const double> dots, double tau,
                                 Rng& rng,
                                 const std::vector<bool>& active = {});
// Same with caller-provided noise.
GumbelSelection gumbel_st_weights(std::span<const double> dots,
                                  std::span<const double> noise, double tau,
                                  const std::vector<bool>& active = {});

// Differentiable straight-through selection: forward value is the hard
// one-hot, backward is the Jacobian of the soft weights w.r.t. dots.
ad::Var gumbel_st(ad::Var dots, std::span<const double> noise, double tau);

class FrequencyEstimator {
 public:
  enum class Mode { kExact, kStreaming };

  static FrequencyEstimator exact();
  static FrequencyEstimator streaming(double alpha, std::size_t buckets);

  Mode mode() const { return mode_; }
  // Records one occurrence at the current step and advances the step.
  void observe(std::uint64_t item_id);
  // Seen items get a strictly positive estimate; unseen ones the floor
  // 1 / max(1, steps).
  double estimate(std::uint64_t item_id) const;
  std::uint64_t steps() const { return step_; }

  // Streaming internals, exposed for update-rule tests.
  std::size_t bucket(std::uint64_t item_id) const;
  void set_streaming_state(std::uint64_t item_id, double last_seen,
                           double gap);
  void set_step(std::uint64_t step) { step_ = step; }
  double gap(std::uint64_t item_id) const;

  const std::unordered_map<std::uint64_t, std::uint64_t>& counts() const {
    return counts_;
  }

 private:
  Mode mode_ = Mode::kExact;
  std::uint64_t step_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
  double alpha_ = 0.01;
  std::vector<double> last_seen_;
  std::vector<double> gap_;
  std::vector<bool> seen_;
};

enum class Association { kArgmax, kGumbelSt };

std::string to_string(Association a);
Association parse_association(const std::string& name);

struct SoftmaxLossConfig {
  Association association = Association::kArgmax;
  double gumbel_temperature = 1.0;
  // Multiplies every corrected logit; 1 reproduces the plain dot product.
  double logit_scale = 1.0;
};

// Mean over examples of -log softmax at the positive among the in-batch
// items. The logit for candidate k of example i is
//   logit_scale * o_{i,j*}^T o_{y_k} - log_q[k].
// Only the associated embedding scores negatives; candidates sharing the
// positive's id are masked. user_rows is [B*K x d], item_rows [B x d].
// Pass zeros in log_q to disable the correction.
// Under kGumbelSt the association samples from
// softmax((logit_scale * dots + g) / tau) over the user's conditions.
ad::Var sampled_softmax_loss(ad::Var user_rows, ad::Var item_rows,
                             std::size_t k,
                             const std::vector<std::vector<bool>>& active,
                             std::span<const std::uint64_t> item_ids,
                             std::span<const double> log_q,
                             const SoftmaxLossConfig& config, Rng& rng);

struct TrainerConfig {
  std::size_t batch_size = 256;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 5;
  std::uint64_t seed = 0;
  SoftmaxLossConfig loss;
  bool logq_correction = true;
  FrequencyEstimator::Mode frequency = FrequencyEstimator::Mode::kExact;
  double streaming_alpha = 0.01;
  std::size_t streaming_buckets = std::size_t{1} << 16;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Shuffled minibatch SGD with momentum; bit-identical per seed. Partial
// batches smaller than 2 are dropped. Throws NumericError on a non-finite
// loss or gradient.
TrainResult train(const RetrievalModel& model, ParamStore& params,
                  const ItemCatalog& catalog,
                  const std::vector<TrainingExample>& examples,
                  const TrainerConfig& config,
                  const EpochCallback& on_epoch = {});

void write_loss_curve(const std::string& path,
                      const std::vector<double>& epoch_loss);

}  // namespace mvr

#endif  // MVR_TRAINING_H_
