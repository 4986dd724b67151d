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

#include "mvr/tensor.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mvr/error.h"

namespace mvr {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = splitmix(base);
  h = splitmix(h ^ a);
  h = splitmix(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix(h ^ (c + 0x85157af5ULL));
  return h;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::gaussian(std::vector<std::size_t> shape, double stddev,
                        Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? shape_[0] : shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Tensor c = Tensor::matrix(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: " + a.shape_string() + "^T x " +
                         b.shape_string());
  }
  Tensor c = Tensor::matrix(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[p * m + i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: " + a.shape_string() + " x " +
                         b.shape_string() + "^T");
  }
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < n; ++j) c(i, j) = dot(arow, b.row(j));
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.storage()) v = gelu(v);
  return y;
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : v) x /= total;
}

Tensor softmax(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("softmax of empty tensor");
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) softmax_inplace(y.row(r));
  return y;
}

void l2_normalize_inplace(std::span<double> v) {
  const double n = norm(v);
  if (std::isnan(n)) throw NumericError("cannot normalize a NaN vector");
  if (!(n > kNormEpsilon)) {
    throw DegenerateVectorError("cannot normalize vector with norm " +
                                std::to_string(n));
  }
  for (double& x : v) x /= n;
}

Tensor l2_normalize(const Tensor& v) {
  Tensor y = v;
  for (std::size_t r = 0; r < y.rows(); ++r) l2_normalize_inplace(y.row(r));
  return y;
}

void squash_inplace(std::span<double> v) {
  const double sq = dot(v, v);
  if (sq == 0.0) return;
  const double scale = sq / (1.0 + sq) / std::sqrt(sq);
  for (double& x : v) x *= scale;
}

Tensor squash(const Tensor& v) {
  Tensor y = v;
  for (std::size_t r = 0; r < y.rows(); ++r) squash_inplace(y.row(r));
  return y;
}

}  // namespace mvr
