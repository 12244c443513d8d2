// Copyright 2026 The flsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flsim/nn_ops.hpp"
#include "flsim/rng.hpp"
#include "flsim/tensor.hpp"
#include "test_support.hpp"

using namespace flsim;

TEST_CASE("conv1d forward matches hand-computed cross-correlation") {
  const Tensor input({1, 3}, {1, 2, 3});
  const Tensor kernel({1, 1, 3}, {1, 0, -1});
  const Tensor bias({1}, {0});
  const Tensor out = conv1d_forward(input, kernel, bias);
  REQUIRE(out.shape == std::vector<std::size_t>{1, 3});
  CHECK(out.at(0, 0) == doctest::Approx(-2));
  CHECK(out.at(0, 1) == doctest::Approx(-2));
  CHECK(out.at(0, 2) == doctest::Approx(2));
}

TEST_CASE("conv1d identity kernel is the identity on any input") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
    const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform_int(0, 30));
    Tensor input({c, len});
    for (double& v : input.data) v = rng.uniform(-5, 5);
    // Identity: kernels[i][i][center] = 1.
    Tensor kernels({c, c, 3});
    for (std::size_t i = 0; i < c; ++i) kernels.at(i, i, 1) = 1.0;
    const Tensor out = conv1d_forward(input, kernels, Tensor({c}));
    CHECK(test::max_abs_diff(out.data, input.data) == doctest::Approx(0));
  }
}

TEST_CASE("conv1d all-zero kernels give constant bias output") {
  const Tensor input({2, 5}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const Tensor kernels({3, 2, 3});
  const Tensor bias({3}, {0.5, -1.0, 2.0});
  const Tensor out = conv1d_forward(input, kernels, bias);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(out.at(c, i) == doctest::Approx(bias.at(c)));
}

TEST_CASE("conv1d shape errors name the offending dimension") {
  const Tensor input({2, 5});
  const Tensor kernels({3, 4, 3});  // wrong C_in
  const Tensor bias({3});
  CHECK_THROWS_AS(conv1d_forward(input, kernels, bias), ShapeError);
  CHECK_THROWS_WITH_AS(conv1d_forward(input, kernels, bias),
                       doctest::Contains("dimension 1"), ShapeError);
}

TEST_CASE("conv1d backward zero upstream gradient gives zero gradients") {
  const Tensor input({2, 6}, std::vector<double>(12, 1.5));
  Tensor kernels({2, 2, 3});
  for (double& v : kernels.data) v = 0.25;
  const Tensor grad_out({2, 6});
  const Conv1dGrads g = conv1d_backward(input, kernels, grad_out);
  for (double v : g.input.data) CHECK(v == 0.0);
  for (double v : g.kernels.data) CHECK(v == 0.0);
  for (double v : g.bias.data) CHECK(v == 0.0);
}

TEST_CASE("conv1d backward identity kernel passes gradient through") {
  Rng rng(5);
  Tensor input({1, 7});
  Tensor grad_out({1, 7});
  for (double& v : input.data) v = rng.uniform(-1, 1);
  for (double& v : grad_out.data) v = rng.uniform(-1, 1);
  Tensor kernels({1, 1, 3}, {0, 1, 0});
  const Conv1dGrads g = conv1d_backward(input, kernels, grad_out);
  CHECK(test::max_abs_diff(g.input.data, grad_out.data) == doctest::Approx(0));
}

TEST_CASE("conv1d backward matches finite differences") {
  Rng rng(17);
  Tensor input({1, 5});
  Tensor kernels({1, 1, 3});
  Tensor bias({1});
  for (double& v : input.data) v = rng.uniform(-1, 1);
  for (double& v : kernels.data) v = rng.uniform(-1, 1);
  bias.at(0) = rng.uniform(-1, 1);
  Tensor grad_out({1, 5});
  for (double& v : grad_out.data) v = rng.uniform(-1, 1);

  // Scalar objective: sum(grad_out * conv(input, kernels, bias)).
  auto objective = [&](const Tensor& in, const Tensor& k, const Tensor& b) {
    const Tensor out = conv1d_forward(in, k, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      acc += grad_out.data[i] * out.data[i];
    return acc;
  };

  const Conv1dGrads g = conv1d_backward(input, kernels, grad_out);
  const double h = 1e-5;

  for (std::size_t i = 0; i < input.size(); ++i) {
    Tensor plus = input, minus = input;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd =
        (objective(plus, kernels, bias) - objective(minus, kernels, bias)) /
        (2 * h);
    CHECK(test::rel_err(g.input.data[i], fd) < 1e-5);
  }
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    Tensor plus = kernels, minus = kernels;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd =
        (objective(input, plus, bias) - objective(input, minus, bias)) /
        (2 * h);
    CHECK(test::rel_err(g.kernels.data[i], fd) < 1e-5);
  }
}

TEST_CASE("gap computes per-channel means") {
  const Tensor input({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor out = gap(input);
  CHECK(out.at(0) == doctest::Approx(2));
  CHECK(out.at(1) == doctest::Approx(5));
  CHECK(gap(Tensor({1, 2}, {-1, 1})).at(0) == doctest::Approx(0));
}

TEST_CASE("gap is permutation-invariant along the length axis") {
  Rng rng(23);
  Tensor input({3, 10});
  for (double& v : input.data) v = rng.uniform(-2, 2);
  const Tensor base = gap(input);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor shuffled = input;
    std::vector<std::size_t> perm(10);
    for (std::size_t i = 0; i < 10; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 10; ++i)
        shuffled.at(c, i) = input.at(c, perm[i]);
    const Tensor out = gap(shuffled);
    CHECK(test::max_abs_diff(out.data, base.data) < 1e-12);
  }
}

TEST_CASE("dense identity and arithmetic examples") {
  Tensor w({2, 2}, {1, 0, 0, 1});
  const Tensor x({2}, {3.5, -2});
  const Tensor out = dense_forward(x, w, Tensor({2}));
  CHECK(out.at(0) == doctest::Approx(3.5));
  CHECK(out.at(1) == doctest::Approx(-2));

  const Tensor out2 = dense_forward(Tensor({2}, {1, 1}),
                                    Tensor({1, 2}, {1, 2}), Tensor({1}, {3}));
  CHECK(out2.at(0) == doctest::Approx(6));
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(31);
  Tensor x({4});
  Tensor w({3, 4});
  Tensor b({3});
  Tensor grad_out({3});
  for (double& v : x.data) v = rng.uniform(-1, 1);
  for (double& v : w.data) v = rng.uniform(-1, 1);
  for (double& v : b.data) v = rng.uniform(-1, 1);
  for (double& v : grad_out.data) v = rng.uniform(-1, 1);

  auto objective = [&](const Tensor& xx, const Tensor& ww, const Tensor& bb) {
    const Tensor out = dense_forward(xx, ww, bb);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      acc += grad_out.data[i] * out.data[i];
    return acc;
  };

  const DenseGrads g = dense_backward(x, w, grad_out);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor plus = x, minus = x;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd = (objective(plus, w, b) - objective(minus, w, b)) / (2 * h);
    CHECK(test::rel_err(g.input.data[i], fd) < 1e-5);
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor plus = w, minus = w;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd = (objective(x, plus, b) - objective(x, minus, b)) / (2 * h);
    CHECK(test::rel_err(g.weights.data[i], fd) < 1e-5);
  }
}

TEST_CASE("softmax cross entropy on uniform logits gives ln K") {
  const Tensor logits({5});
  const auto r = softmax_cross_entropy(logits, 2);
  CHECK(r.loss == doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy survives extreme logits") {
  const Tensor logits({2}, {1000.0, -1000.0});
  const auto r = softmax_cross_entropy(logits, 0);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss == doctest::Approx(0).epsilon(1e-12));
  for (double v : r.grad_logits.data) CHECK(std::isfinite(v));
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  const Tensor logits({3});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, 3), Error);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor logits({6});
    for (double& v : logits.data) v = rng.uniform(-3, 3);
    const std::size_t label = static_cast<std::size_t>(rng.uniform_int(0, 5));
    const auto r = softmax_cross_entropy(logits, label);
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      Tensor plus = logits, minus = logits;
      plus.data[i] += h;
      minus.data[i] -= h;
      const double fd = (softmax_cross_entropy(plus, label).loss -
                         softmax_cross_entropy(minus, label).loss) /
                        (2 * h);
      CHECK(std::abs(r.grad_logits.data[i] - fd) < 1e-6);
    }
  }
}

TEST_CASE("adam leaves params unchanged on zero gradients") {
  const Tensor params({3}, {1, 2, 3});
  const Tensor grads({3});
  const auto [next, state] = adam_step(params, grads, AdamState::init(params),
                                       AdamConfig{});
  CHECK(test::max_abs_diff(next.data, params.data) == doctest::Approx(0));
  CHECK(state.step == 1);
}

TEST_CASE("adam first step matches the bias-corrected closed form") {
  const Tensor params({1}, {0.0});
  const Tensor grads({1}, {1.0});
  AdamConfig cfg;  // lr=0.001, b1=0.9, b2=0.999, eps=1e-8
  const auto [next, state] = adam_step(params, grads, AdamState::init(params), cfg);
  // With bias correction the first update is -lr * g / (|g| + eps).
  CHECK(next.at(0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam is deterministic") {
  Rng rng(7);
  Tensor params({10}), grads({10});
  for (double& v : params.data) v = rng.uniform(-1, 1);
  for (double& v : grads.data) v = rng.uniform(-1, 1);
  const auto a = adam_step(params, grads, AdamState::init(params), AdamConfig{});
  const auto b = adam_step(params, grads, AdamState::init(params), AdamConfig{});
  CHECK(a.first.data == b.first.data);
  CHECK(a.second.m.data == b.second.m.data);
  CHECK(a.second.v.data == b.second.v.data);
}

TEST_CASE("adam rejects mismatched shapes") {
  const Tensor params({3});
  const Tensor grads({4});
  CHECK_THROWS_AS(adam_step(params, grads, AdamState::init(params), AdamConfig{}),
                  ShapeError);
}
