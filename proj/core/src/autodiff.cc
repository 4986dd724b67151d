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

#include "mvr/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvr/error.h"

namespace mvr {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (values_.count(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  grads_[name] = Tensor(init.shape(), 0.0);
  return values_[name] = std::move(init);
}

bool ParamStore::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : values_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, g] : grads_) g.fill(0.0);
}

namespace ad {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{store.value(name), {}, nullptr, true, name});
  param_ids_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::frozen(const ParamStore& store, const std::string& name) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) return Var(this, it->second);
  nodes_.push_back(Node{store.value(name), {}, nullptr, false, {}});
  param_ids_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad
                                                  ? std::move(backward)
                                                  : BackwardFn{},
                        requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_ref(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.shape() == n.value.shape() && !n.value.shape().empty()
             ? &n.grad
             : nullptr;
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) {
    throw DimensionError("backward() without seed needs a scalar output");
  }
  backward(output, Tensor(value(output).shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& seed) {
  if (!seed.same_shape(value(output))) {
    throw DimensionError("backward seed shape mismatch");
  }
  grad_ref(output) = seed;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.shape() != n.value.shape()) continue;
    n.backward(*this, n.value, n.grad);
  }
}

void Tape::write_param_grads(ParamStore& store) const {
  for (const auto& [name, id] : param_ids_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
    Tensor& dst = store.grad(name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

namespace {

bool rg(Var v) { return v.tape()->requires_grad(v); }

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data().data();
  const double* s = src.data().data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("vars from different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  Tensor out = mvr::matmul(a.value(), b.value());
  return t.record(std::move(out), rg(a) || rg(b),
                  [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                    if (rg(a)) {
                      add_into(tape.grad_ref(a), matmul_nt(g, tape.value(b)));
                    }
                    if (rg(b)) {
                      add_into(tape.grad_ref(b), matmul_tn(tape.value(a), g));
                    }
                  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(mvr::transpose(a.value()), rg(a),
                  [a](Tape& tape, const Tensor&, const Tensor& g) {
                    add_into(tape.grad_ref(a), mvr::transpose(g));
                  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw DimensionError("add shapes");
  Tensor out = a.value();
  add_into(out, b.value());
  return a.tape()->record(std::move(out), rg(a) || rg(b),
                          [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                            if (rg(a)) add_into(tape.grad_ref(a), g);
                            if (rg(b)) add_into(tape.grad_ref(b), g);
                          });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw DimensionError("sub shapes");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape()->record(std::move(out), rg(a) || rg(b),
                          [a, b](Tape& tape, const Tensor&, const Tensor& g) {
                            if (rg(a)) add_into(tape.grad_ref(a), g);
                            if (rg(b)) {
                              Tensor& gb = tape.grad_ref(b);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                gb[i] -= g[i];
                            }
                          });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw DimensionError("mul shapes");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(
      std::move(out), rg(a) || rg(b), [a, b](Tape& tape, const Tensor&, const Tensor& g) {
        if (rg(a)) {
          Tensor& ga = tape.grad_ref(a);
          const Tensor& bv = tape.value(b);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (rg(b)) {
          Tensor& gb = tape.grad_ref(b);
          const Tensor& av = tape.value(a);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  return a.tape()->record(std::move(out), rg(a),
                          [a, s](Tape& tape, const Tensor&, const Tensor& g) {
                            Tensor& ga = tape.grad_ref(a);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += s * g[i];
                          });
}

Var add_row(Var a, Var bias) {
  check_same_tape(a, bias);
  const std::size_t cols = a.value().cols();
  if (bias.value().size() != cols) throw DimensionError("add_row bias size");
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias.value()[c];
  }
  return a.tape()->record(
      std::move(out), rg(a) || rg(bias),
      [a, bias](Tape& tape, const Tensor&, const Tensor& g) {
        if (rg(a)) add_into(tape.grad_ref(a), g);
        if (rg(bias)) {
          Tensor& gb = tape.grad_ref(bias);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
          }
        }
      });
}

Var gelu(Var a) {
  return a.tape()->record(mvr::gelu(a.value()), rg(a),
                          [a](Tape& tape, const Tensor&, const Tensor& g) {
                            Tensor& ga = tape.grad_ref(a);
                            const Tensor& x = tape.value(a);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * gelu_derivative(x[i]);
                          });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) throw DimensionError("concat_cols rows");
  const std::size_t ca = av.cols(), cb = bv.cols(), rows = av.rows();
  Tensor out = Tensor::matrix(rows, ca + cb);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.row(r).begin(), ca, out.row(r).begin());
    std::copy_n(bv.row(r).begin(), cb, out.row(r).begin() + ca);
  }
  return a.tape()->record(
      std::move(out), rg(a) || rg(b),
      [a, b, ca, cb](Tape& tape, const Tensor&, const Tensor& g) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto grow = g.row(r);
          if (rg(a)) {
            auto dst = tape.grad_ref(a).row(r);
            for (std::size_t c = 0; c < ca; ++c) dst[c] += grow[c];
          }
          if (rg(b)) {
            auto dst = tape.grad_ref(b).row(r);
            for (std::size_t c = 0; c < cb; ++c) dst[c] += grow[ca + c];
          }
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (begin + count > av.rows()) throw DimensionError("slice_rows range");
  const std::size_t cols = av.cols();
  std::vector<double> data(av.data().begin() + begin * cols,
                           av.data().begin() + (begin + count) * cols);
  return a.tape()->record(
      Tensor({count, cols}, std::move(data)), rg(a),
      [a, begin, cols](Tape& tape, const Tensor&, const Tensor& g) {
        Tensor& ga = tape.grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
      });
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("stack_rows of nothing");
  Tape& t = *parts[0].tape();
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  bool any = false;
  for (Var p : parts) {
    if (p.value().cols() != cols) throw DimensionError("stack_rows cols");
    rows += p.value().rows();
    any = any || rg(p);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + off);
    off += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), any,
                  [inputs](Tape& tape, const Tensor&, const Tensor& g) {
                    std::size_t off = 0;
                    for (Var p : inputs) {
                      const std::size_t n = tape.value(p).size();
                      if (rg(p)) {
                        Tensor& gp = tape.grad_ref(p);
                        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                      }
                      off += n;
                    }
                  });
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out = Tensor::matrix(rows * times, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < times; ++k)
      std::copy_n(av.row(r).begin(), cols, out.row(r * times + k).begin());
  return a.tape()->record(std::move(out), rg(a),
                          [a, times](Tape& tape, const Tensor&, const Tensor& g) {
                            Tensor& ga = tape.grad_ref(a);
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              auto dst = ga.row(r / times);
                              auto src = g.row(r);
                              for (std::size_t c = 0; c < src.size(); ++c)
                                dst[c] += src[c];
                            }
                          });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  Tensor out = Tensor::matrix(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw DimensionError("gather_rows index");
    std::copy_n(av.row(rows[i]).begin(), cols, out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), rg(a),
                          [a, idx](Tape& tape, const Tensor&, const Tensor& g) {
                            Tensor& ga = tape.grad_ref(a);
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              auto dst = ga.row(idx[i]);
                              auto src = g.row(i);
                              for (std::size_t c = 0; c < src.size(); ++c)
                                dst[c] += src[c];
                            }
                          });
}

Var l2_normalize_rows(Var a) {
  Tensor out = mvr::l2_normalize(a.value());
  return a.tape()->record(
      std::move(out), rg(a), [a](Tape& tape, const Tensor& y, const Tensor& g) {
        const Tensor& x = tape.value(a);
        Tensor& ga = tape.grad_ref(a);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto yr = y.row(r);
          auto gr = g.row(r);
          auto dst = ga.row(r);
          const double n = norm(x.row(r));
          const double yg = dot(yr, gr);
          for (std::size_t c = 0; c < yr.size(); ++c)
            dst[c] += (gr[c] - yr[c] * yg) / n;
        }
      });
}

Var squash_rows(Var a) {
  Tensor out = mvr::squash(a.value());
  return a.tape()->record(
      std::move(out), rg(a), [a](Tape& tape, const Tensor&, const Tensor& g) {
        const Tensor& x = tape.value(a);
        Tensor& ga = tape.grad_ref(a);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto gr = g.row(r);
          auto dst = ga.row(r);
          const double sq = dot(xr, xr);
          if (sq == 0.0) continue;
          // y = x * f(n) with f(n) = n / (1 + n^2).
          const double n = std::sqrt(sq);
          const double f = n / (1.0 + sq);
          const double fprime = (1.0 - sq) / ((1.0 + sq) * (1.0 + sq));
          const double coef = fprime / n * dot(xr, gr);
          for (std::size_t c = 0; c < xr.size(); ++c)
            dst[c] += f * gr[c] + coef * xr[c];
        }
      });
}

Var masked_softmax_rows(Var a, const std::vector<bool>& col_valid) {
  const Tensor& av = a.value();
  if (!col_valid.empty() && col_valid.size() != av.cols()) {
    throw DimensionError("masked_softmax_rows mask size");
  }
  auto valid = [&col_valid](std::size_t c) {
    return col_valid.empty() || col_valid[c];
  };
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < row.size(); ++c)
      if (valid(c)) mx = std::max(mx, row[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = valid(c) ? std::exp(row[c] - mx) : 0.0;
      total += row[c];
    }
    if (total > 0.0)
      for (double& v : row) v /= total;
  }
  return a.tape()->record(
      std::move(out), rg(a), [a](Tape& tape, const Tensor& y, const Tensor& g) {
        Tensor& ga = tape.grad_ref(a);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto yr = y.row(r);
          auto gr = g.row(r);
          auto dst = ga.row(r);
          const double yg = dot(yr, gr);
          for (std::size_t c = 0; c < yr.size(); ++c)
            dst[c] += yr[c] * (gr[c] - yg);
        }
      });
}

Var softmax_rows(Var a) { return masked_softmax_rows(a, {}); }

Var sum(Var a) {
  const auto& d = a.value().storage();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  return a.tape()->record(Tensor({1}, {s}), rg(a),
                          [a](Tape& tape, const Tensor&, const Tensor& g) {
                            for (double& v : tape.grad_ref(a).storage())
                              v += g[0];
                          });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().storage()) s += v * v;
  return a.tape()->record(Tensor({1}, {s}), rg(a),
                          [a](Tape& tape, const Tensor&, const Tensor& g) {
                            const Tensor& x = tape.value(a);
                            Tensor& ga = tape.grad_ref(a);
                            for (std::size_t i = 0; i < x.size(); ++i)
                              ga[i] += 2.0 * x[i] * g[0];
                          });
}

Var mean_rows(Var a, const std::vector<bool>& row_valid) {
  const Tensor& av = a.value();
  if (!row_valid.empty() && row_valid.size() != av.rows()) {
    throw DimensionError("mean_rows mask size");
  }
  std::vector<bool> mask =
      row_valid.empty() ? std::vector<bool>(av.rows(), true) : row_valid;
  const double count =
      static_cast<double>(std::count(mask.begin(), mask.end(), true));
  Tensor out = Tensor::matrix(1, av.cols());
  if (count > 0) {
    for (std::size_t r = 0; r < av.rows(); ++r) {
      if (!mask[r]) continue;
      auto row = av.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] / count;
    }
  }
  return a.tape()->record(
      std::move(out), rg(a),
      [a, mask, count](Tape& tape, const Tensor&, const Tensor& g) {
        if (count == 0) return;
        Tensor& ga = tape.grad_ref(a);
        for (std::size_t r = 0; r < mask.size(); ++r) {
          if (!mask[r]) continue;
          auto dst = ga.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c] / count;
        }
      });
}

Var straight_through(Tensor hard, Var soft) {
  if (!hard.same_shape(soft.value())) {
    throw DimensionError("straight_through shapes");
  }
  return soft.tape()->record(std::move(hard), rg(soft),
                             [soft](Tape& tape, const Tensor&, const Tensor& g) {
                               add_into(tape.grad_ref(soft), g);
                             });
}

Var segment_weighted_sum(Var a, std::vector<Segment> segments) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  std::size_t out_rows = 0;
  for (const Segment& s : segments) {
    if (s.offset + s.weights.rows() > av.rows()) {
      throw DimensionError("segment_weighted_sum range");
    }
    out_rows += s.weights.cols();
  }
  Tensor out = Tensor::matrix(out_rows, cols);
  std::size_t base = 0;
  for (const Segment& s : segments) {
    const std::size_t len = s.weights.rows(), k = s.weights.cols();
    for (std::size_t i = 0; i < len; ++i) {
      auto src = av.row(s.offset + i);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = s.weights(i, j);
        if (w == 0.0) continue;
        auto dst = out.row(base + j);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
      }
    }
    base += k;
  }
  return a.tape()->record(
      std::move(out), rg(a),
      [a, segments = std::move(segments)](Tape& tape, const Tensor&,
                                          const Tensor& g) {
        Tensor& ga = tape.grad_ref(a);
        std::size_t base = 0;
        for (const Segment& s : segments) {
          const std::size_t len = s.weights.rows(), k = s.weights.cols();
          for (std::size_t i = 0; i < len; ++i) {
            auto dst = ga.row(s.offset + i);
            for (std::size_t j = 0; j < k; ++j) {
              const double w = s.weights(i, j);
              if (w == 0.0) continue;
              auto src = g.row(base + j);
              for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
            }
          }
          base += k;
        }
      });
}

}  // namespace ad

double grad_check(const ScalarObjective& f, ParamStore& params,
                  std::uint64_t seed, GradCheckOptions options) {
  auto eval = [&f, &params]() {
    params.zero_grad();
    const double v = f(params);
    if (!std::isfinite(v)) {
      throw NumericError("objective is non-finite during gradient check");
    }
    return v;
  };
  eval();
  std::map<std::string, Tensor> analytic;
  for (const auto& name : params.names()) analytic[name] = params.grad(name);

  Rng rng(seed);
  double worst = 0.0;
  for (const auto& name : params.names()) {
    Tensor& value = params.value(name);
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param > 0 &&
        coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = value[i];
      value[i] = saved + options.step;
      const double up = eval();
      value[i] = saved - options.step;
      const double down = eval();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = std::abs(analytic[name][i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  params.zero_grad();
  for (const auto& [name, g] : analytic) params.grad(name) = g;
  return worst;
}

}  // namespace mvr
