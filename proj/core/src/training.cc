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

#include "mvr/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "mvr/error.h"

namespace mvr {

std::size_t associate_condition(std::span<const double> dots,
                                const std::vector<bool>& active) {
  std::size_t best = dots.size();
  for (std::size_t j = 0; j < dots.size(); ++j) {
    if (!active.empty() && !active[j]) continue;
    if (best == dots.size() || dots[j] > dots[best]) best = j;
  }
  if (best == dots.size()) {
    throw ConfigError("association needs at least one active condition");
  }
  return best;
}

std::size_t associate_condition(const Tensor& user_embs, const Tensor& target) {
  std::vector<double> dots(user_embs.rows());
  for (std::size_t j = 0; j < dots.size(); ++j) {
    dots[j] = dot(user_embs.row(j), target.data());
  }
  return associate_condition(dots);
}

GumbelSelection gumbel_st_weights(std::span<const double> dots,
                                  std::span<const double> noise, double tau,
                                  const std::vector<bool>& active) {
  if (!(tau > 0.0)) throw ConfigError("gumbel temperature must be positive");
  const std::size_t k = dots.size();
  GumbelSelection out;
  out.noise.assign(noise.begin(), noise.end());
  out.hard = Tensor({k}, 0.0);
  out.soft = Tensor({k}, 0.0);
  std::vector<double> perturbed(k);
  for (std::size_t j = 0; j < k; ++j) perturbed[j] = dots[j] + noise[j];
  const std::size_t best = associate_condition(perturbed, active);
  out.hard[best] = 1.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    if (active.empty() || active[j]) mx = std::max(mx, perturbed[j] / tau);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (!active.empty() && !active[j]) continue;
    out.soft[j] = std::exp(perturbed[j] / tau - mx);
    total += out.soft[j];
  }
  for (double& v : out.soft.storage()) v /= total;
  return out;
}

namespace {

std::vector<double> draw_gumbel(std::size_t k, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> g(k);
  for (double& v : g) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    v = -std::log(-std::log(u));
  }
  return g;
}

}  // namespace

GumbelSelection gumbel_st_select(std::span<const double> dots, double tau,
                                 Rng& rng, const std::vector<bool>& active) {
  const auto g = draw_gumbel(dots.size(), rng);
  return gumbel_st_weights(dots, g, tau, active);
}

ad::Var gumbel_st(ad::Var dots, std::span<const double> noise, double tau) {
  // Copy: recording new nodes may reallocate the tape.
  const Tensor d = dots.value();
  if (noise.size() != d.size()) throw DimensionError("gumbel noise size");
  const auto sel = gumbel_st_weights(d.data(), noise, tau);
  Tensor noise_t(d.shape(), std::vector<double>(noise.begin(), noise.end()));
  ad::Var soft = ad::softmax_rows(
      ad::scale(ad::add(dots, dots.tape()->constant(std::move(noise_t))),
                1.0 / tau));
  return ad::straight_through(Tensor(d.shape(), sel.hard.storage()), soft);
}

FrequencyEstimator FrequencyEstimator::exact() { return FrequencyEstimator(); }

FrequencyEstimator FrequencyEstimator::streaming(double alpha,
                                                 std::size_t buckets) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("streaming alpha must be in (0, 1]");
  }
  if (buckets == 0) throw ConfigError("streaming estimator needs buckets");
  FrequencyEstimator f;
  f.mode_ = Mode::kStreaming;
  f.alpha_ = alpha;
  f.last_seen_.assign(buckets, 0.0);
  f.gap_.assign(buckets, 0.0);
  f.seen_.assign(buckets, false);
  return f;
}

std::size_t FrequencyEstimator::bucket(std::uint64_t item_id) const {
  if (mode_ != Mode::kStreaming) return 0;
  return static_cast<std::size_t>(derive_seed(item_id, 0x51) %
                                  last_seen_.size());
}

void FrequencyEstimator::observe(std::uint64_t item_id) {
  if (mode_ == Mode::kExact) {
    ++counts_[item_id];
  } else {
    const std::size_t h = bucket(item_id);
    const double t = static_cast<double>(step_);
    if (seen_[h]) {
      gap_[h] = (1.0 - alpha_) * gap_[h] + alpha_ * (t - last_seen_[h]);
    }
    seen_[h] = true;
    last_seen_[h] = t;
  }
  ++step_;
}

double FrequencyEstimator::estimate(std::uint64_t item_id) const {
  const double floor =
      1.0 / static_cast<double>(std::max<std::uint64_t>(1, step_));
  if (mode_ == Mode::kExact) {
    auto it = counts_.find(item_id);
    if (it == counts_.end()) return floor;
    return static_cast<double>(it->second) / static_cast<double>(step_);
  }
  const std::size_t h = bucket(item_id);
  if (!seen_[h] || !(gap_[h] > 0.0)) return floor;
  return 1.0 / gap_[h];
}

void FrequencyEstimator::set_streaming_state(std::uint64_t item_id,
                                             double last_seen, double gap) {
  if (mode_ != Mode::kStreaming) {
    throw ConfigError("streaming state on an exact estimator");
  }
  const std::size_t h = bucket(item_id);
  last_seen_[h] = last_seen;
  gap_[h] = gap;
  seen_[h] = true;
}

double FrequencyEstimator::gap(std::uint64_t item_id) const {
  return mode_ == Mode::kStreaming ? gap_[bucket(item_id)] : 0.0;
}

std::string to_string(Association a) {
  return a == Association::kArgmax ? "argmax" : "gumbel_st";
}

Association parse_association(const std::string& name) {
  if (name == "argmax") return Association::kArgmax;
  if (name == "gumbel_st") return Association::kGumbelSt;
  throw ConfigError("unknown association '" + name + "'");
}

ad::Var sampled_softmax_loss(ad::Var user_rows, ad::Var item_rows,
                             std::size_t k,
                             const std::vector<std::vector<bool>>& active,
                             std::span<const std::uint64_t> item_ids,
                             std::span<const double> log_q,
                             const SoftmaxLossConfig& config, Rng& rng) {
  const Tensor& u = user_rows.value();
  const Tensor& it = item_rows.value();
  const std::size_t b = it.rows(), d = it.cols();
  if (b < 2) throw ConfigError("sampled softmax needs a batch of at least 2");
  if (k == 0 || u.rows() != b * k || u.cols() != d) {
    throw DimensionError("user rows " + u.shape_string() + " vs " +
                         std::to_string(b) + " x " + std::to_string(k) +
                         " conditions of dim " + std::to_string(d));
  }
  if (item_ids.size() != b || log_q.size() != b || active.size() != b) {
    throw DimensionError("per-example inputs must have batch length");
  }
  const bool gumbel = config.association == Association::kGumbelSt;
  const double s = config.logit_scale;

  std::vector<std::size_t> sel(b);
  std::vector<std::vector<bool>> act(b);
  Tensor soft = Tensor::matrix(b, k);
  std::vector<double> dots(k);
  for (std::size_t i = 0; i < b; ++i) {
    act[i] = active[i];
    if (std::find(act[i].begin(), act[i].end(), true) == act[i].end()) {
      act[i].assign(k, true);
    }
    for (std::size_t j = 0; j < k; ++j) {
      dots[j] = dot(u.row(i * k + j), it.row(i));
    }
    if (gumbel) {
      // Perturb the same scaled logits the softmax ranks with.
      for (double& x : dots) x *= s;
      const auto g = gumbel_st_select(dots, config.gumbel_temperature, rng,
                                      act[i]);
      sel[i] = associate_condition(g.hard.data());
      std::copy(g.soft.data().begin(), g.soft.data().end(),
                soft.row(i).begin());
    } else {
      sel[i] = associate_condition(dots, act[i]);
    }
  }

  // probs(i, c) over allowed candidates; masked entries stay 0.
  Tensor probs = Tensor::matrix(b, b);
  std::vector<bool> allowed(b * b, false);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    auto ui = u.row(i * k + sel[i]);
    auto row = probs.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < b; ++c) {
      if (c != i && item_ids[c] == item_ids[i]) continue;
      allowed[i * b + c] = true;
      row[c] = s * dot(ui, it.row(c)) - log_q[c];
      mx = std::max(mx, row[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < b; ++c) {
      if (!allowed[i * b + c]) continue;
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < b; ++c) row[c] /= total;
    loss -= std::log(row[i]);
  }
  loss /= static_cast<double>(b);

  return user_rows.tape()->record(
      Tensor({1}, loss), true,
      [user_rows, item_rows, k, sel = std::move(sel), act = std::move(act),
       soft = std::move(soft), probs = std::move(probs),
       allowed = std::move(allowed), gumbel, s,
       tau = config.gumbel_temperature](ad::Tape& tape, const Tensor&,
                                        const Tensor& g) {
        const Tensor& u = tape.value(user_rows);
        const Tensor& it = tape.value(item_rows);
        const std::size_t b = it.rows(), d = it.cols();
        const double scale = g[0] / static_cast<double>(b);
        Tensor gu = Tensor::matrix(u.rows(), d);
        Tensor gi = Tensor::matrix(b, d);
        std::vector<double> du(d);
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t urow = i * k + sel[i];
          auto ui = u.row(urow);
          std::fill(du.begin(), du.end(), 0.0);
          for (std::size_t c = 0; c < b; ++c) {
            if (!allowed[i * b + c]) continue;
            const double gl = scale * (probs(i, c) - (c == i ? 1.0 : 0.0));
            if (gl == 0.0) continue;
            auto ic = it.row(c);
            auto gic = gi.row(c);
            for (std::size_t x = 0; x < d; ++x) {
              du[x] += s * gl * ic[x];
              gic[x] += s * gl * ui[x];
            }
          }
          auto gur = gu.row(urow);
          for (std::size_t x = 0; x < d; ++x) gur[x] += du[x];
          if (!gumbel) continue;
          // Straight-through: d loss / d w_j = du . U_ij, pushed through the
          // softmax((s * dots + g) / tau) Jacobian onto dots_j = U_ij . I_i.
          std::vector<double> a(k, 0.0);
          double sa = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            if (!act[i][j]) continue;
            a[j] = dot(du, u.row(i * k + j));
            sa += soft(i, j) * a[j];
          }
          auto ii = it.row(i);
          auto gii = gi.row(i);
          for (std::size_t j = 0; j < k; ++j) {
            if (!act[i][j]) continue;
            const double dd = s * soft(i, j) * (a[j] - sa) / tau;
            if (dd == 0.0) continue;
            auto uij = u.row(i * k + j);
            auto guj = gu.row(i * k + j);
            for (std::size_t x = 0; x < d; ++x) {
              guj[x] += dd * ii[x];
              gii[x] += dd * uij[x];
            }
          }
        }
        if (tape.requires_grad(user_rows)) {
          Tensor& dst = tape.grad_ref(user_rows);
          for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += gu[x];
        }
        if (tape.requires_grad(item_rows)) {
          Tensor& dst = tape.grad_ref(item_rows);
          for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += gi[x];
        }
      });
}

void TrainerConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(loss.gumbel_temperature > 0.0)) {
    throw ConfigError("gumbel_temperature must be > 0");
  }
  if (!(loss.logit_scale > 0.0)) throw ConfigError("logit_scale must be > 0");
}

TrainResult train(const RetrievalModel& model, ParamStore& params,
                  const ItemCatalog& catalog,
                  const std::vector<TrainingExample>& examples,
                  const TrainerConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (examples.empty()) throw ConfigError("training set is empty");

  FrequencyEstimator freq =
      config.frequency == FrequencyEstimator::Mode::kExact
          ? FrequencyEstimator::exact()
          : FrequencyEstimator::streaming(config.streaming_alpha,
                                          config.streaming_buckets);
  if (config.frequency == FrequencyEstimator::Mode::kExact) {
    for (const auto& ex : examples) freq.observe(ex.target_item);
  }

  std::map<std::string, Tensor> velocity;
  for (const auto& [name, value] : params.values()) {
    velocity.emplace(name, Tensor(value.shape(), 0.0));
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng forward_rng(derive_seed(config.seed, 0x7261));
  TrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 0x5348, std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      if (len < 2) break;
      std::vector<const TrainingExample*> batch(len);
      std::vector<std::uint64_t> ids(len);
      for (std::size_t i = 0; i < len; ++i) {
        batch[i] = &examples[order[start + i]];
        ids[i] = batch[i]->target_item;
      }
      if (config.frequency == FrequencyEstimator::Mode::kStreaming) {
        for (std::uint64_t id : ids) freq.observe(id);
      }
      std::vector<double> log_q(len, 0.0);
      if (config.logq_correction) {
        for (std::size_t i = 0; i < len; ++i) {
          log_q[i] = std::log(freq.estimate(ids[i]));
        }
      }

      ad::Tape tape;
      const auto bind = ad::Binder::train(tape, params);
      const ModelForward fwd = model.forward_users(bind, batch, forward_rng);
      ad::Var items = model.forward_items(bind, catalog.gather(ids));
      ad::Var loss = sampled_softmax_loss(fwd.user_rows, items, fwd.k,
                                          fwd.active, ids, log_q, config.loss,
                                          forward_rng);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(result.steps));
      }
      tape.backward(loss);
      params.zero_grad();
      tape.write_param_grads(params);

      for (const auto& name : params.names()) {
        const Tensor& g = params.grad(name);
        if (!g.all_finite()) {
          throw NumericError("non-finite gradient for " + name + " at epoch " +
                             std::to_string(epoch));
        }
        Tensor& v = velocity.at(name);
        Tensor& p = params.value(name);
        for (std::size_t x = 0; x < p.size(); ++x) {
          v[x] = config.momentum * v[x] + g[x];
          p[x] -= config.learning_rate * v[x];
        }
      }
      loss_sum += value * static_cast<double>(len);
      loss_count += len;
      ++result.steps;
    }
    const double mean = loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_count));
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

void write_loss_curve(const std::string& path,
                      const std::vector<double>& epoch_loss) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write loss curve to " + path);
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    out << e << "," << epoch_loss[e] << "\n";
  }
}

}  // namespace mvr
