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
#include <random>

#include "mfhca/gradcheck.hpp"
#include "mfhca/mf_grf.hpp"

using namespace mfhca;

namespace {

template <class T>
void zero_all_convs(GrfParams<T>& p) {
  for (auto* t : {&p.gate_reduce_w, &p.gate_reduce_b, &p.gate_h_w, &p.gate_h_b,
                  &p.gate_w_w, &p.gate_w_b, &p.context_w, &p.context_b})
    std::fill(t->data().begin(), t->data().end(), T(0));
}

}  // namespace

// ---- parallel conv ----

TEST_CASE("parallel_conv maps zero input with zero biases to zero") {
  std::mt19937 rng(1);
  MfConfig cfg;
  auto p = MfParams<float>::make(cfg, rng);  // biases start at zero
  auto x = Tensor32::zeros({1, 1, 20, 12});
  auto y = parallel_conv(x, p);
  CHECK(y.shape() == Shape{1, 16, 10, 6});
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("parallel_conv shape on the full-size spectrogram") {
  std::mt19937 rng(2);
  auto p = MfParams<float>::make(MfConfig{}, rng);
  auto x = Tensor32::uniform({1, 1, 297, 200}, -1, 1, rng);
  CHECK(parallel_conv(x, p).shape() == Shape{1, 16, 148, 100});
  CHECK_THROWS_AS(parallel_conv(Tensor32::zeros({1, 1, 9, 200}), p), ValidationError);
}

TEST_CASE("time-branch channels do not depend on the frequency kernel") {
  std::mt19937 rng(3);
  auto p = MfParams<float>::make(MfConfig{}, rng);
  auto x = Tensor32::uniform({1, 1, 24, 16}, -1, 1, rng);
  auto y1 = parallel_conv(x, p);
  for (auto& v : p.conv_freq_w.data()) v += 0.37f;  // perturb the (2,8) kernel
  auto y2 = parallel_conv(x, p);
  const int64_t half = y1.numel() / 2;
  for (int64_t i = 0; i < half; ++i) REQUIRE(y1.data()[i] == y2.data()[i]);
  // and the frequency half did change
  bool changed = false;
  for (int64_t i = half; i < y1.numel(); ++i) changed |= y1.data()[i] != y2.data()[i];
  CHECK(changed);
}

// ---- coordinate pool ----

TEST_CASE("coordinate_pool of a constant is constant") {
  auto x = Tensor32::full({2, 3, 4, 5}, 2.5f);
  auto [zh, zw] = coordinate_pool(x);
  CHECK(zh.shape() == Shape{2, 3, 4});
  CHECK(zw.shape() == Shape{2, 3, 5});
  for (float v : zh.data()) CHECK(v == doctest::Approx(2.5f));
  for (float v : zw.data()) CHECK(v == doctest::Approx(2.5f));
}

TEST_CASE("coordinate_pool direct evaluation") {
  auto x = Tensor32::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [zh, zw] = coordinate_pool(x);
  CHECK(zh.data() == std::vector<float>{1.5f, 3.5f});
  CHECK(zw.data() == std::vector<float>{2.0f, 3.0f});
}

TEST_CASE("coordinate_pool double-counting identity") {
  std::mt19937 rng(5);
  auto x = Tensor32::uniform({2, 3, 5, 6}, -2, 2, rng);
  auto [zh, zw] = coordinate_pool(x);
  double global = 0;
  for (float v : x.data()) global += v;
  global /= double(x.numel());
  double mh = 0, mw = 0;
  for (float v : zh.data()) mh += v;
  mh /= double(zh.numel());
  for (float v : zw.data()) mw += v;
  mw /= double(zw.numel());
  CHECK(std::fabs(mh - global) < 1e-6);
  CHECK(std::fabs(mw - global) < 1e-6);
}

// ---- gates ----

TEST_CASE("zeroed gate convolutions give 0.5 gates everywhere") {
  std::mt19937 rng(7);
  GrfConfig cfg{16, 8, 4};
  auto p = GrfParams<float>::make(cfg, rng);
  zero_all_convs(p);
  auto x = Tensor32::uniform({2, 16, 6, 5}, -1, 1, rng);
  auto [zh, zw] = coordinate_pool(x);
  auto [gh, gw] = grf_gates(zh, zw, p);
  CHECK(gh.shape() == Shape{2, 16, 6});
  CHECK(gw.shape() == Shape{2, 16, 5});
  for (float v : gh.data()) REQUIRE(v == 0.5f);
  for (float v : gw.data()) REQUIRE(v == 0.5f);
}

TEST_CASE("gate values stay strictly inside (0,1)") {
  std::mt19937 rng(8);
  for (int seed = 0; seed < 5; ++seed) {
    GrfConfig cfg{8, 8, 2};
    auto p = GrfParams<float>::make(cfg, rng);
    auto x = Tensor32::uniform({1, 8, 7, 9}, -3, 3, rng);
    auto [zh, zw] = coordinate_pool(x);
    auto [gh, gw] = grf_gates(zh, zw, p);
    for (float v : gh.data()) {
      REQUIRE(v > 0.f);
      REQUIRE(v < 1.f);
    }
    for (float v : gw.data()) {
      REQUIRE(v > 0.f);
      REQUIRE(v < 1.f);
    }
  }
}

// ---- branch a ----

TEST_CASE("unit gates pass the input through, zero gates annihilate it") {
  std::mt19937 rng(9);
  auto x = Tensor32::uniform({1, 2, 3, 4}, -2, 2, rng);
  auto ones_h = Tensor32::full({1, 2, 3}, 1.f);
  auto ones_w = Tensor32::full({1, 2, 4}, 1.f);
  CHECK(grf_branch_a(x, ones_h, ones_w).data() == x.data());
  auto zero_h = Tensor32::zeros({1, 2, 3});
  for (float v : grf_branch_a(x, zero_h, ones_w).data()) CHECK(v == 0.f);
}

TEST_CASE("sigmoid gates attenuate every element") {
  std::mt19937 rng(10);
  GrfConfig cfg{8, 8, 2};
  auto p = GrfParams<float>::make(cfg, rng);
  auto x = Tensor32::uniform({1, 8, 5, 6}, -3, 3, rng);
  auto [zh, zw] = coordinate_pool(x);
  auto [gh, gw] = grf_gates(zh, zw, p);
  auto ya = grf_branch_a(x, gh, gw);
  for (int64_t i = 0; i < x.numel(); ++i)
    REQUIRE(std::fabs(ya.data()[i]) <= std::fabs(x.data()[i]));
}

// ---- branch b ----

TEST_CASE("zeroed context convolution makes branch b the identity") {
  std::mt19937 rng(11);
  GrfConfig cfg{4, 8, 2};
  auto p = GrfParams<float>::make(cfg, rng);
  std::fill(p.context_w.data().begin(), p.context_w.data().end(), 0.f);
  std::fill(p.context_b.data().begin(), p.context_b.data().end(), 0.f);
  auto x = Tensor32::uniform({1, 4, 6, 6}, -1, 1, rng);
  CHECK(grf_branch_b(x, p).data() == x.data());
}

TEST_CASE("branch b matches the composition of verified primitives") {
  std::mt19937 rng(12);
  GrfConfig cfg{4, 8, 4};
  auto p = GrfParams<float>::make(cfg, rng);
  auto x = Tensor32::uniform({1, 4, 8, 8}, -1, 1, rng);
  auto y = grf_branch_b(x, p);
  auto ref = add(x, bilinear_upsample(
                       conv2d(avg_pool2d(x, {4, 4}, {4, 4}), p.context_w, p.context_b,
                              {1, 1}, {1, 1}),
                       8, 8));
  for (int64_t i = 0; i < y.numel(); ++i)
    REQUIRE(y.data()[i] == doctest::Approx(ref.data()[i]));
  // degenerate pooled size
  auto tiny = Tensor32::zeros({1, 4, 3, 8});
  CHECK_THROWS_AS(grf_branch_b(tiny, p), ValidationError);
}

// ---- full block ----

TEST_CASE("grf with zeroed convolutions scales the input by 2.25") {
  std::mt19937 rng(13);
  GrfConfig cfg{8, 8, 2};
  auto p = GrfParams<float>::make(cfg, rng);
  zero_all_convs(p);
  auto x = Tensor32::uniform({2, 8, 6, 4}, -2, 2, rng);
  auto y = grf_forward(x, p);
  for (int64_t i = 0; i < x.numel(); ++i)
    REQUIRE(y.data()[i] == doctest::Approx(2.25f * x.data()[i]).epsilon(1e-6));
}

TEST_CASE("grf output keeps the input shape across a size sweep") {
  std::mt19937 rng(14);
  GrfConfig cfg{4, 8, 4};
  auto p = GrfParams<float>::make(cfg, rng);
  for (int h = 4; h <= 31; h += 3)
    for (int w : {4, 5, 9, 13, 31}) {
      auto x = Tensor32::uniform({1, 4, h, w}, -1, 1, rng);
      REQUIRE(grf_forward(x, p).shape() == x.shape());
    }
}

TEST_CASE("grf rejects channel mismatch") {
  std::mt19937 rng(15);
  GrfConfig cfg{8, 8, 2};
  auto p = GrfParams<float>::make(cfg, rng);
  CHECK_THROWS_AS(grf_forward(Tensor32::zeros({1, 4, 6, 6}), p), ValidationError);
}

TEST_CASE("test-only override removes both branches leaving Y = X") {
  std::mt19937 rng(16);
  GrfConfig cfg{4, 8, 2};
  auto p = GrfParams<float>::make(cfg, rng);
  auto x = Tensor32::uniform({1, 4, 5, 7}, -1, 1, rng);
  GrfOverride ov;
  ov.force_gate = 0.0;
  ov.drop_context_branch = true;
  auto y = grf_forward(x, p, &ov);
  CHECK(y.data() == x.data());
}

TEST_CASE("grf output is finite for finite input across 100 seeds") {
  for (uint32_t seed = 0; seed < 100; ++seed) {
    std::mt19937 rng(seed);
    GrfConfig cfg{4, 8, 2};
    auto p = GrfParams<float>::make(cfg, rng);
    auto x = Tensor32::uniform({1, 4, 5, 6}, -10, 10, rng);
    for (float v : grf_forward(x, p).data()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("grf gradients match finite differences") {
  std::mt19937 rng(17);
  GrfConfig cfg{4, 8, 2};
  auto p = GrfParams<double>::make(cfg, rng);
  auto x = Tensor64::uniform({1, 4, 4, 5}, -1, 1, rng, true);
  auto w = Tensor64::uniform({1, 4, 4, 5}, -1, 1, rng);
  std::vector<Tensor64> leaves{x,          p.gate_reduce_w, p.gate_reduce_b,
                               p.gate_bn.gamma, p.gate_bn.beta,  p.gate_h_w,
                               p.gate_h_b, p.gate_w_w,      p.gate_w_b,
                               p.context_w, p.context_b};
  auto err = gradcheck_max_rel_error(leaves, [&] {
    return sum_all(mul(grf_forward(x, p), w));
  });
  CHECK(err < 1e-4);
}

// ---- stack ----

TEST_CASE("mf_forward shape chain on the default configuration") {
  std::mt19937 rng(18);
  MfConfig cfg;
  auto chain = mf_shape_chain(cfg, 297, 200);
  CHECK(chain == std::pair<int, int>{37, 25});
  auto p = MfParams<float>::make(cfg, rng);
  auto x = Tensor32::uniform({1, 1, 297, 200}, -1, 1, rng);
  auto y = mf_forward(x, p);
  CHECK(y.shape() == Shape{1, 48, 37, 25});
}

TEST_CASE("mf_forward maps zero input to zero with zero biases") {
  std::mt19937 rng(19);
  auto p = MfParams<float>::make(MfConfig{}, rng);
  auto x = Tensor32::zeros({1, 1, 64, 48});
  for (float v : mf_forward(x, p).data()) REQUIRE(v == 0.0f);
}

TEST_CASE("a two-stage 16-32 configuration ends at 32 channels") {
  std::mt19937 rng(20);
  MfConfig cfg;
  cfg.grf_channels = {16, 32};
  auto p = MfParams<float>::make(cfg, rng);
  CHECK(p.grf.size() == 2);
  CHECK(p.transitions.size() == 1);
  auto x = Tensor32::uniform({1, 1, 64, 48}, -1, 1, rng);
  auto y = mf_forward(x, p);
  CHECK(y.dim(1) == 32);
}

TEST_CASE("shape chain rejects collapsing configurations") {
  MfConfig cfg;
  cfg.ratio_den = 16;
  cfg.grf_channels = {16, 32, 48, 64};
  // stage 4 on a 297x200 input is 19x13; 13/16 == 0
  CHECK_THROWS_AS(mf_shape_chain(cfg, 297, 200), ValidationError);
  MfConfig odd;
  odd.grf_channels = {15};
  CHECK_THROWS_AS(odd.validate(), ValidationError);
}

TEST_CASE("default MF stack parameter count matches the closed-form sum") {
  std::mt19937 rng(21);
  auto p = MfParams<float>::make(MfConfig{}, rng);
  int64_t total = 0;
  auto add_t = [&total](const Tensor32& t) { total += t.numel(); };
  add_t(p.conv_time_w);
  add_t(p.conv_time_b);
  add_t(p.conv_freq_w);
  add_t(p.conv_freq_b);
  for (auto& [w, b] : p.transitions) {
    add_t(w);
    add_t(b);
  }
  for (auto& g : p.grf) {
    add_t(g.gate_reduce_w);
    add_t(g.gate_reduce_b);
    add_t(g.gate_bn.gamma);
    add_t(g.gate_bn.beta);
    add_t(g.gate_h_w);
    add_t(g.gate_h_b);
    add_t(g.gate_w_w);
    add_t(g.gate_w_b);
    add_t(g.context_w);
    add_t(g.context_b);
  }
  // Independent hand computation, layer by layer.
  auto conv_n = [](int co, int ci, int kh, int kw) { return int64_t(co) * ci * kh * kw + co; };
  auto grf_n = [&conv_n](int c) {
    const int cr = std::max(8, c / 8);
    return conv_n(cr, c, 1, 1) + 2 * cr + 2 * conv_n(c, cr, 1, 1) + conv_n(c, c, 3, 3);
  };
  const int64_t expect = conv_n(8, 1, 10, 2) + conv_n(8, 1, 2, 8) + grf_n(16) +
                         conv_n(32, 16, 3, 3) + grf_n(32) + conv_n(48, 32, 3, 3) +
                         grf_n(48);
  CHECK(total == expect);
  CHECK(total == 53736);
}
