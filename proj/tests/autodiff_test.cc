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

#include <gtest/gtest.h>

#include "mvr/error.h"
#include "test_util.h"

namespace mvr {
namespace {

using testing::objective;

ParamStore random_params(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  p.add("a", Tensor::gaussian({3, 4}, 1.0, rng));
  p.add("b", Tensor::gaussian({4, 2}, 1.0, rng));
  p.add("c", Tensor::gaussian({3, 4}, 1.0, rng));
  p.add("v", Tensor::gaussian({4}, 1.0, rng));
  return p;
}

struct OpCase {
  const char* name;
  testing::GraphBuilder build;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class AutodiffOpTest : public ::testing::TestWithParam<OpCase> {};

TEST_P(AutodiffOpTest, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ParamStore p = random_params(seed);
    EXPECT_LT(grad_check(objective(GetParam().build), p, seed), 1e-6)
        << GetParam().name << " seed " << seed;
  }
}

const std::vector<bool> kMask4 = {true, false, true, true};
const std::vector<bool> kMask3 = {true, true, false};

INSTANTIATE_TEST_SUITE_P(
    Ops, AutodiffOpTest,
    ::testing::Values(
        OpCase{"matmul", [](const ad::Binder& b) { return ad::matmul(b("a"), b("b")); }},
        OpCase{"transpose", [](const ad::Binder& b) { return ad::transpose(b("a")); }},
        OpCase{"add_sub_mul",
               [](const ad::Binder& b) {
                 return ad::mul(ad::add(b("a"), b("c")), ad::sub(b("a"), b("c")));
               }},
        OpCase{"scale_add_row",
               [](const ad::Binder& b) { return ad::add_row(ad::scale(b("a"), 0.3), b("v")); }},
        OpCase{"gelu", [](const ad::Binder& b) { return ad::gelu(b("a")); }},
        OpCase{"concat_slice",
               [](const ad::Binder& b) {
                 return ad::slice_rows(ad::concat_cols(b("a"), b("c")), 1, 2);
               }},
        OpCase{"stack_repeat_gather",
               [](const ad::Binder& b) {
                 ad::Var parts[] = {b("a"), b("c")};
                 std::vector<std::size_t> rows = {5, 0, 0, 2};
                 return ad::gather_rows(ad::repeat_rows(ad::stack_rows(parts), 2), rows);
               }},
        OpCase{"l2_normalize", [](const ad::Binder& b) { return ad::l2_normalize_rows(b("a")); }},
        OpCase{"squash", [](const ad::Binder& b) { return ad::squash_rows(b("a")); }},
        OpCase{"masked_softmax",
               [](const ad::Binder& b) { return ad::masked_softmax_rows(b("a"), kMask4); }},
        OpCase{"softmax", [](const ad::Binder& b) { return ad::softmax_rows(b("a")); }},
        OpCase{"sum_squares", [](const ad::Binder& b) { return ad::sum_squares(b("a")); }},
        OpCase{"mean_rows", [](const ad::Binder& b) { return ad::mean_rows(b("a"), kMask3); }},
        OpCase{"segment_weighted_sum",
               [](const ad::Binder& b) {
                 std::vector<ad::Segment> segs = {
                     {0, Tensor::from_rows({{0.2, 0.0}, {0.5, 1.0}})},
                     {1, Tensor::from_rows({{1.0}, {-0.4}})}};
                 return ad::segment_weighted_sum(ad::matmul(b("a"), b("b")), segs);
               }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return info.param.name; });

TEST(AutodiffTest, SumOfSquaresGradientIsTwiceValue) {
  ParamStore p = random_params(1);
  ad::Tape tape;
  auto out = ad::sum_squares(tape.param(p, "a"));
  tape.backward(out);
  tape.write_param_grads(p);
  for (std::size_t i = 0; i < p.value("a").size(); ++i) {
    EXPECT_DOUBLE_EQ(p.grad("a")[i], 2 * p.value("a")[i]);
  }
}

TEST(AutodiffTest, StraightThroughPassesSoftGradient) {
  ParamStore p;
  p.add("x", Tensor::from_rows({{0.1, 0.7, -0.2}}));
  ad::Tape tape;
  ad::Var x = tape.param(p, "x");
  ad::Var st = ad::straight_through(Tensor::from_rows({{0, 1, 0}}), ad::scale(x, 2.0));
  EXPECT_EQ(st.value()(0, 1), 1.0);
  tape.backward(ad::sum(st));
  tape.write_param_grads(p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad("x")[i], 2.0);
}

TEST(AutodiffTest, FrozenParamsReceiveNoGradient) {
  ParamStore p = random_params(2);
  ad::Tape tape;
  const auto bind = ad::Binder::frozen(tape, p);
  auto out = ad::sum(bind("a"));
  EXPECT_FALSE(tape.requires_grad(out));
  tape.write_param_grads(p);
  EXPECT_EQ(p.grad("a")[0], 0.0);
}

TEST(AutodiffTest, ParamStoreErrors) {
  ParamStore p;
  p.add("w", Tensor::matrix(1, 1));
  EXPECT_THROW(p.add("w", Tensor::matrix(1, 1)), ConfigError);
  EXPECT_THROW(p.value("missing"), ConfigError);
}

}  // namespace
}  // namespace mvr
