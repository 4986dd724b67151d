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

// Tape-based reverse-mode differentiation over matrix-valued nodes.
//
// A Tape records every operation applied to Vars in execution order; calling
// backward() on a scalar output walks the tape in reverse and accumulates
// gradients. Parameters enter the tape through Tape::param(), which binds a
// named tensor of a ParamStore; write_param_grads() adds the accumulated
// gradients back into the store.

#ifndef MVR_AUTODIFF_H_
#define MVR_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvr/tensor.h"

namespace mvr {

// Named trainable tensors and their gradients. Gradient shapes always match
// parameter shapes.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const;

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  const std::map<std::string, Tensor>& values() const { return values_; }
  std::vector<std::string> names() const;
  std::size_t num_scalars() const;

  void zero_grad();

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's own forward value and its accumulated gradient.
  using BackwardFn =
      std::function<void(Tape&, const Tensor& out, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Repeated calls with the same name return the same node.
  Var param(ParamStore& store, const std::string& name);
  // Binds a parameter as a constant (inference paths over const stores).
  Var frozen(const ParamStore& store, const std::string& name);
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad_ref(Var v);
  // Null when nothing has flowed into the node.
  const Tensor* grad(Var v) const;

  void backward(Var output);
  void backward(Var output, const Tensor& seed);

  void write_param_grads(ParamStore& store) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_ids_;
};

// Binds named parameters on a tape: trainable when `trainable` is set,
// otherwise as constants.
struct Binder {
  Tape& tape;
  const ParamStore& store;
  ParamStore* trainable = nullptr;

  Var operator()(const std::string& name) const {
    return trainable ? tape.param(*trainable, name) : tape.frozen(store, name);
  }
  static Binder train(Tape& tape, ParamStore& store) {
    return Binder{tape, store, &store};
  }
  static Binder frozen(Tape& tape, const ParamStore& store) {
    return Binder{tape, store, nullptr};
  }
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Adds a rank-1 bias to every row of a.
Var add_row(Var a, Var bias);
Var gelu(Var a);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var stack_rows(std::span<const Var> parts);
// Each row of a repeated `times` times consecutively.
Var repeat_rows(Var a, std::size_t times);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var l2_normalize_rows(Var a);
Var squash_rows(Var a);
// Row-wise softmax; columns with col_valid[c] == false get probability 0.
// Rows with no valid column are all zero.
Var masked_softmax_rows(Var a, const std::vector<bool>& col_valid);
Var softmax_rows(Var a);
Var sum(Var a);
Var sum_squares(Var a);
// Mean over the rows flagged in row_valid (all rows when empty); 1 x cols.
Var mean_rows(Var a, const std::vector<bool>& row_valid = {});
// Forward value is `hard`, gradient passes to `soft` unchanged.
Var straight_through(Tensor hard, Var soft);

// Block i of the output is weights[i]^T * a[offsets[i] : offsets[i]+L_i],
// where weights[i] is a constant [L_i x K_i] matrix.
struct Segment {
  std::size_t offset = 0;
  Tensor weights;
};
Var segment_weighted_sum(Var a, std::vector<Segment> segments);

}  // namespace ad

// Scalar objective: evaluates at the current parameter values and writes the
// analytic gradient into store.grad(). Must be deterministic.
using ScalarObjective = std::function<double(ParamStore&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
};

// Central finite-difference check. Returns the max over checked coordinates
// of |analytic - numeric| / max(1, |numeric|). Throws NumericError if the
// objective is non-finite anywhere it is evaluated.
double grad_check(const ScalarObjective& f, ParamStore& params,
                  std::uint64_t seed, GradCheckOptions options = {});

}  // namespace mvr

#endif  // MVR_AUTODIFF_H_
