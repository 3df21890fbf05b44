// Copyright 2026 The PartFormer Authors.
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

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "ppf/autograd.h"
#include "ppf/rng.h"
#include "support.h"

using ppf::Rng;
using ppf::Tensor;
using ppf::testing::gradient_error;
using ppf::testing::random_parameter;
namespace ag = ppf::ag;

namespace {

constexpr double kTolerance = 1e-6;

// Weighted sum so every output entry contributes a distinct gradient.
ag::Var probe(const ag::Var& y, const Tensor& weights) {
  return ag::sum(ag::mul(y, ag::constant(weights)));
}

}  // namespace

TEST_CASE("elementwise ops have correct gradients") {
  Rng rng(1);
  auto a = random_parameter({3, 4}, rng);
  auto b = random_parameter({3, 4}, rng);
  const Tensor w = ppf::testing::random_tensor({3, 4}, rng);
  CHECK(gradient_error([&] { return probe(ag::add(a, b), w); }, {a, b}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::sub(a, b), w); }, {a, b}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::mul(a, b), w); }, {a, b}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::scale(a, -2.5), w); }, {a}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::relu(a), w); }, {a}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::sigmoid(a), w); }, {a}) < kTolerance);
  CHECK(gradient_error(
            [&] {
              const std::vector<ag::Var> terms{a, b, a};
              return probe(ag::add_n(terms), w);
            },
            {a, b}) < kTolerance);
}

TEST_CASE("shape ops have correct gradients") {
  Rng rng(2);
  auto a = random_parameter({4, 3}, rng);
  auto b = random_parameter({2, 3}, rng);
  const Tensor w6 = ppf::testing::random_tensor({6, 3}, rng);
  const Tensor wt = ppf::testing::random_tensor({3, 4}, rng);
  const Tensor wr = ppf::testing::random_tensor({2, 6}, rng);
  const Tensor wg = ppf::testing::random_tensor({5, 3}, rng);
  const Tensor ws = ppf::testing::random_tensor({2, 3}, rng);
  CHECK(gradient_error(
            [&] {
              const std::vector<ag::Var> parts{a, b};
              return probe(ag::concat_rows(parts), w6);
            },
            {a, b}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::transpose(a), wt); }, {a}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::reshape(a, {2, 6}), wr); }, {a}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::slice_rows(a, 1, 3), ws); }, {a}) < kTolerance);
  const std::vector<int> rows{3, 0, 3, 1, 2};
  CHECK(gradient_error([&] { return probe(ag::gather_rows(a, rows), wg); }, {a}) < kTolerance);
}

TEST_CASE("matrix ops have correct gradients") {
  Rng rng(3);
  auto a = random_parameter({3, 5}, rng);
  auto b = random_parameter({5, 4}, rng);
  auto c = random_parameter({4, 5}, rng);
  auto bias = random_parameter({4}, rng);
  auto gamma = random_parameter({5}, rng);
  auto beta = random_parameter({5}, rng);
  const Tensor w34 = ppf::testing::random_tensor({3, 4}, rng);
  const Tensor w35 = ppf::testing::random_tensor({3, 5}, rng);
  CHECK(gradient_error([&] { return probe(ag::matmul(a, b), w34); }, {a, b}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::matmul_nt(a, c), w34); }, {a, c}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::linear(a, c, bias), w34); }, {a, c, bias}) <
        kTolerance);
  CHECK(gradient_error([&] { return probe(ag::layer_norm(a, gamma, beta), w35); },
                       {a, gamma, beta}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::softmax_rows(a), w35); }, {a}) < kTolerance);
}

TEST_CASE("feature map ops have correct gradients") {
  Rng rng(4);
  auto x = random_parameter({4, 6, 5}, rng);
  auto weight = random_parameter({3, 4, 3, 3}, rng, 0.5);
  auto bias = random_parameter({3}, rng);
  auto gamma = random_parameter({4}, rng);
  auto beta = random_parameter({4}, rng);
  const Tensor wc1 = ppf::testing::random_tensor({3, 6, 5}, rng);
  const Tensor wc2 = ppf::testing::random_tensor({3, 3, 3}, rng);
  const Tensor wg = ppf::testing::random_tensor({4, 6, 5}, rng);
  const Tensor wu = ppf::testing::random_tensor({4, 12, 10}, rng);
  const Tensor wb = ppf::testing::random_tensor({4, 9, 7}, rng);
  CHECK(gradient_error([&] { return probe(ag::conv2d(x, weight, bias, 1, 1), wc1); },
                       {x, weight, bias}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::conv2d(x, weight, bias, 2, 1), wc2); },
                       {x, weight, bias}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::group_norm(x, gamma, beta, 2), wg); },
                       {x, gamma, beta}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::upsample_nearest(x, 2), wu); }, {x}) < kTolerance);
  CHECK(gradient_error([&] { return probe(ag::resize_bilinear(x, 9, 7), wb); }, {x}) <
        kTolerance);
  auto other = random_parameter({2, 6, 5}, rng);
  const Tensor wcat = ppf::testing::random_tensor({6, 6, 5}, rng);
  CHECK(gradient_error(
            [&] {
              const std::vector<ag::Var> parts{x, other};
              return probe(ag::concat_channels(parts), wcat);
            },
            {x, other}) < kTolerance);
}

TEST_CASE("warp has correct gradients for both inputs") {
  Rng rng(5);
  auto x = random_parameter({3, 5, 6}, rng);
  auto flow = random_parameter({2, 5, 6}, rng, 0.7);
  const Tensor w = ppf::testing::random_tensor({3, 5, 6}, rng);
  CHECK(gradient_error([&] { return probe(ag::warp(x, flow), w); }, {x, flow}) < 1e-5);
}

TEST_CASE("warp with zero flow is the identity") {
  Rng rng(6);
  const auto x = ag::constant(ppf::testing::random_tensor({2, 4, 4}, rng));
  const auto flow = ag::constant(Tensor({2, 4, 4}));
  CHECK(ag::warp(x, flow).value() == x.value());
}

TEST_CASE("bilinear resize samples half-pixel centers") {
  Rng rng(7);
  const Tensor x = ppf::testing::random_tensor({2, 4, 5}, rng);
  const int oh = 7, ow = 9;
  const Tensor y = ag::resize_bilinear(ag::constant(x), oh, ow).value();
  double worst = 0.0;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const double sy = (i + 0.5) * 4.0 / oh - 0.5;
        const double sx = (j + 0.5) * 5.0 / ow - 0.5;
        worst = std::max(worst, std::abs(y.at(c, i, j) - ppf::oracle::bilinear(x, c, sy, sx)));
      }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("linear and layer norm match explicit oracles") {
  Rng rng(8);
  const Tensor x = ppf::testing::random_tensor({3, 5}, rng);
  const Tensor w = ppf::testing::random_tensor({4, 5}, rng);
  const Tensor b = ppf::testing::random_tensor({4}, rng);
  const Tensor g = ppf::testing::random_tensor({5}, rng);
  const Tensor be = ppf::testing::random_tensor({5}, rng);
  const Tensor lin =
      ag::linear(ag::constant(x), ag::constant(w), ag::constant(b)).value();
  CHECK(ppf::max_abs_diff(lin, ppf::oracle::linear(x, w, &b)) < 1e-12);
  const Tensor ln =
      ag::layer_norm(ag::constant(x), ag::constant(g), ag::constant(be)).value();
  CHECK(ppf::max_abs_diff(ln, ppf::oracle::layer_norm(x, g, be)) < 1e-10);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  const Tensor logits({2, 3}, std::vector<double>{1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0});
  const Tensor p = ag::softmax_rows(ag::constant(logits)).value();
  for (int r = 0; r < 2; ++r) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      CHECK(std::isfinite(p.at(r, c)));
      total += p.at(r, c);
    }
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("gradients accumulate across shared uses and reset on zero_grad") {
  auto a = ag::parameter(Tensor({2}, std::vector<double>{1.0, 2.0}));
  ag::backward(ag::sum(ag::mul(a, a)));
  CHECK(a.grad()[0] == doctest::Approx(2.0));
  CHECK(a.grad()[1] == doctest::Approx(4.0));
  ag::backward(ag::sum(a));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  a.zero_grad();
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("no-grad guard records no graph") {
  auto a = ag::parameter(Tensor({2}, 1.0));
  {
    ag::NoGradGuard guard;
    CHECK_FALSE(ag::grad_enabled());
    const ag::Var y = ag::sum(ag::mul(a, a));
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ag::grad_enabled());
  CHECK(ag::sum(a).requires_grad());
}

TEST_CASE("ops reject mismatched shapes") {
  const auto a = ag::constant(Tensor({2, 3}));
  const auto b = ag::constant(Tensor({3, 2}));
  CHECK_THROWS(ag::add(a, b));
  CHECK_THROWS(ag::matmul(a, a));
  CHECK_THROWS(ag::conv2d(ag::constant(Tensor({2, 4, 4})), ag::constant(Tensor({1, 3, 3, 3})),
                          ag::constant(Tensor({1})), 1, 1));
}
