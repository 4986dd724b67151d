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

// Dense row-major double tensors and the forward numeric kernels used by
// every trainable component.

#ifndef MVR_TENSOR_H_
#define MVR_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mvr {

using Rng = std::mt19937_64;

// Mixes a base seed with stream identifiers (splitmix64 finalizer) so that
// per-user / per-day generators are independent and reproducible.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor vector(std::vector<double> values);
  static Tensor from_rows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor gaussian(std::vector<std::size_t> shape, double stddev,
                         Rng& rng);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

// c = a * b for a [m x k], b [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a^T * b for a [k x m], b [k x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// c = a * b^T for a [m x k], b [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Exact erf form: x * Phi(x).
double gelu(double x);
double gelu_derivative(double x);
Tensor gelu(const Tensor& x);

// Softmax over a rank-1 tensor, or over each row of a matrix.
Tensor softmax(const Tensor& x);
void softmax_inplace(std::span<double> v);

inline constexpr double kNormEpsilon = 1e-12;

// Throws DegenerateVectorError when the norm is <= kNormEpsilon.
Tensor l2_normalize(const Tensor& v);
void l2_normalize_inplace(std::span<double> v);

// (|v|^2 / (1 + |v|^2)) * v / |v|; zero maps to zero.
Tensor squash(const Tensor& v);
void squash_inplace(std::span<double> v);

}  // namespace mvr

#endif  // MVR_TENSOR_H_
