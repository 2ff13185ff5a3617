// Copyright 2026 The MFHCA Authors
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfhca/adam.hpp"
#include "mfhca/gradcheck.hpp"
#include "mfhca/tensor.hpp"

using namespace mfhca;

TEST_CASE("sum backward gives all-ones gradient") {
  auto x = Tensor32::from_vector({4}, {1.f, -2.f, 3.f, 0.5f}, true);
  sum_all(x).backward();
  for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("quadratic loss gradient equals x") {
  auto x = Tensor32::from_vector({3}, {1.f, -2.f, 3.f}, true);
  auto loss = scale(sum_all(mul(x, x)), 0.5f);
  loss.backward();
  for (size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("backward on non-scalar is an error") {
  auto x = Tensor32::zeros({2, 2}, true);
  CHECK_THROWS_AS(add(x, x).backward(), ValidationError);
}

TEST_CASE("backward twice without rerunning forward is an error") {
  auto x = Tensor32::from_vector({2}, {1.f, 2.f}, true);
  auto loss = sum_all(x);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), ValidationError);
  // A fresh forward pass gives a fresh graph.
  auto loss2 = sum_all(x);
  CHECK_NOTHROW(loss2.backward());
}

TEST_CASE("gradients accumulate across fan-out") {
  auto x = Tensor32::from_vector({2}, {3.f, 4.f}, true);
  sum_all(add(x, x)).backward();
  for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("concat of one tensor is identical") {
  auto x = Tensor32::from_vector({2, 2}, {1.f, 2.f, 3.f, 4.f});
  auto y = concat<float>({x}, 0);
  CHECK(y.shape() == x.shape());
  CHECK(y.data() == x.data());
}

TEST_CASE("concat along axis 0 preserves order") {
  auto a = Tensor32::from_vector({2}, {1.f, 2.f});
  auto b = Tensor32::from_vector({1}, {3.f});
  auto y = concat<float>({a, b}, 0);
  CHECK(y.data() == std::vector<float>{1.f, 2.f, 3.f});
}

TEST_CASE("split of concat returns the pieces bitwise") {
  std::mt19937 rng(7);
  auto a = Tensor32::uniform({3, 2}, -5, 5, rng);
  auto b = Tensor32::uniform({3, 4}, -5, 5, rng);
  auto cat = concat<float>({a, b}, 1);
  auto a2 = slice(cat, 1, 0, 2);
  auto b2 = slice(cat, 1, 2, 4);
  CHECK(a2.data() == a.data());
  CHECK(b2.data() == b.data());
}

TEST_CASE("concat rejects mismatched side dimensions") {
  auto a = Tensor32::zeros({2, 3});
  auto b = Tensor32::zeros({2, 4});
  CHECK_THROWS_AS(concat<float>({a, b}, 0), ValidationError);
}

TEST_CASE("transpose and reshape round-trip") {
  auto x = Tensor32::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
  auto xt = transpose(x);
  CHECK(xt.shape() == Shape{3, 2});
  CHECK(xt.at({0, 1}) == 4.f);
  CHECK(transpose(xt).data() == x.data());
  CHECK(reshape(x, {3, 2}).data() == x.data());
  CHECK_THROWS_AS(reshape(x, {4, 2}), ValidationError);
}

TEST_CASE("transpose12 swaps the trailing axes of a 3-D tensor") {
  auto x = Tensor32::from_vector({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = transpose12(x);
  CHECK(y.shape() == Shape{1, 3, 2});
  CHECK(y.at({0, 0, 1}) == 4.f);
  CHECK(y.at({0, 2, 0}) == 3.f);
}

TEST_CASE("structural op gradients match finite differences") {
  std::mt19937 rng(11);
  auto x = Tensor64::uniform({3, 4}, -1, 1, rng, true);
  auto w1 = Tensor64::uniform({2, 4}, -1, 1, rng);
  auto w2 = Tensor64::uniform({4, 3}, -1, 1, rng);
  auto err1 = gradcheck_max_rel_error({x}, [&] {
    return sum_all(mul(slice(x, 0, 1, 2), w1));
  });
  CHECK(err1 < 1e-4);
  auto err2 = gradcheck_max_rel_error({x}, [&] {
    return sum_all(mul(transpose(x), w2));
  });
  CHECK(err2 < 1e-4);
  auto y = Tensor64::uniform({3, 4}, -1, 1, rng, true);
  auto wc = Tensor64::uniform({6, 4}, -1, 1, rng);
  auto err3 = gradcheck_max_rel_error({x, y}, [&] {
    return sum_all(mul(concat<double>({x, y}, 0), wc));
  });
  CHECK(err3 < 1e-4);
  auto wm = Tensor64::uniform({4}, -1, 1, rng);
  auto err4 = gradcheck_max_rel_error({x}, [&] {
    return sum_all(mul(mean_axis(x, 0), wm));
  });
  CHECK(err4 < 1e-4);
}

TEST_CASE("identical seeds produce bitwise-identical tensors") {
  std::mt19937 r1(123), r2(123);
  auto a = Tensor32::uniform({4, 5}, -1, 1, r1);
  auto b = Tensor32::uniform({4, 5}, -1, 1, r2);
  CHECK(a.data() == b.data());
}

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
  auto p = Tensor32::from_vector({3}, {1.f, 2.f, 3.f}, true);
  p.grad();  // allocate zero grads
  std::vector<Tensor32> params{p};
  AdamState<float> state;
  adam_step(params, state, 0.1f);
  CHECK(p.data() == std::vector<float>{1.f, 2.f, 3.f});
  CHECK(state.step_count == 1);
}

TEST_CASE("first adam step moves against the gradient by about lr") {
  // With fresh moments, mhat/vhat reduce to g/|g|, so the step is
  // -lr * g/(|g| + eps) regardless of gradient magnitude.
  auto p = Tensor32::from_vector({2}, {1.f, -1.f}, true);
  p.grad()[0] = 0.3f;
  p.grad()[1] = -4.0f;
  std::vector<Tensor32> params{p};
  AdamState<float> state;
  const float lr = 0.01f;
  adam_step(params, state, lr);
  CHECK(p.data()[0] == doctest::Approx(1.f - lr).epsilon(1e-4));
  CHECK(p.data()[1] == doctest::Approx(-1.f + lr).epsilon(1e-4));
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  auto x = Tensor32::from_vector({1}, {1.f}, true);
  std::vector<Tensor32> params{x};
  AdamState<float> state;
  for (int i = 0; i < 50; ++i) {
    x.zero_grad();
    auto loss = scale(sum_all(mul(x, x)), 0.5f);
    loss.backward();
    adam_step(params, state, 0.1f);
  }
  CHECK(std::fabs(x.data()[0]) < 0.5f);
  CHECK(state.step_count == 50);
}

TEST_CASE("adam aborts on NaN gradient") {
  auto p = Tensor32::from_vector({1}, {1.f}, true);
  p.grad()[0] = std::nanf("");
  std::vector<Tensor32> params{p};
  AdamState<float> state;
  CHECK_THROWS_AS(adam_step(params, state, 0.1f), NumericalError);
  CHECK(p.data()[0] == 1.f);  // untouched
}
