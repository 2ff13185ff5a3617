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

// Central finite-difference suite over every differentiable operator plus a
// tiny end-to-end model, all in double precision.

#include "mfhca/gradcheck.hpp"

#include <random>

#include "mfhca/model.hpp"

namespace mfhca {

namespace {

using T64 = Tensor<double>;

T64 rnd(Shape s, std::mt19937& rng, bool rg = true) {
  return T64::uniform(std::move(s), -1.0, 1.0, rng, rg);
}

// Weighted-sum loss so every output entry has a distinct gradient path.
template <class Fn>
double op_case(std::mt19937& rng, std::vector<T64> leaves, Fn&& fwd) {
  T64 w;
  {
    auto probe = fwd();
    w = T64::uniform(probe.shape(), -1.0, 1.0, rng, false);
  }
  return gradcheck_max_rel_error(std::move(leaves),
                                 [&] { return sum_all(mul(fwd(), w)); });
}

ModelConfig tiny_model_config() {
  // Feature map chain 10x8 -> 5x4 -> 3x2 gives T_s = 3.
  ModelConfig cfg;
  cfg.mf.grf_channels = {4, 4};
  cfg.mf.ratio_den = 2;
  cfg.hca.d_model = 4;
  cfg.hca.bilstm_hidden = 3;
  cfg.hca.hubert_dim = 5;
  cfg.hca.fc1_width = 8;
  cfg.hca.fc2_width = 5;
  cfg.input_frames = 10;
  cfg.input_bins = 8;
  return cfg;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(uint64_t seed, int num_seeds) {
  std::vector<GradcheckResult> results;
  auto record = [&results](const std::string& name, double err) {
    for (auto& r : results)
      if (r.name == name) {
        r.max_rel_error = std::max(r.max_rel_error, err);
        return;
      }
    results.push_back({name, err});
  };

  for (int s = 0; s < num_seeds; ++s) {
    std::mt19937 rng(static_cast<uint32_t>(seed + 101 * s));

    {
      auto x = rnd({2, 2, 4, 5}, rng);
      auto k = rnd({3, 2, 2, 3}, rng);
      auto b = rnd({3}, rng);
      record("conv2d", op_case(rng, {x, k, b},
                               [&] { return conv2d(x, k, b, {2, 1}, {1, 1}); }));
    }
    {
      auto x = rnd({2, 2, 5, 4}, rng);
      record("avg_pool2d",
             op_case(rng, {x}, [&] { return avg_pool2d(x, {2, 2}, {1, 2}); }));
      record("max_pool2d",
             op_case(rng, {x}, [&] { return max_pool2d(x, {2, 2}, {2, 2}); }));
    }
    {
      auto x = rnd({1, 2, 3, 4}, rng);
      record("bilinear_upsample",
             op_case(rng, {x}, [&] { return bilinear_upsample(x, 6, 7); }));
    }
    for (bool training : {true, false}) {
      auto x = rnd({2, 3, 2, 3}, rng);
      auto state = BatchNormState<double>::make(3);
      state.training = training;
      state.running_mean = rnd({3}, rng, false);
      state.running_var = T64::uniform({3}, 0.5, 2.0, rng);
      record(training ? "batchnorm2d_train" : "batchnorm2d_eval",
             op_case(rng, {x, state.gamma, state.beta},
                     [&] { return batchnorm2d(x, state); }));
    }
    {
      auto x = T64::uniform({8}, -2.0, 2.0, rng, true);
      record("sigmoid", op_case(rng, {x}, [&] { return sigmoid(x); }));
      record("swish", op_case(rng, {x}, [&] { return swish(x); }));
      record("tanh", op_case(rng, {x}, [&] { return tanh_op(x); }));
      // keep relu away from its kink
      auto xr = T64::from_vector({6}, {-1.9, -1.1, -0.4, 0.6, 1.2, 2.3}, true);
      record("relu", op_case(rng, {xr}, [&] { return relu(xr); }));
    }
    {
      auto x = rnd({3, 4}, rng);
      record("softmax", op_case(rng, {x}, [&] { return softmax(x, 1); }));
      record("cross_entropy",
             gradcheck_max_rel_error({x}, [&] {
               return cross_entropy(x, std::vector<int>{1, 3, 0});
             }));
    }
    {
      auto a = rnd({3, 4}, rng);
      auto b = rnd({4, 2}, rng);
      record("matmul", op_case(rng, {a, b}, [&] { return matmul(a, b); }));
    }
    {
      auto x = rnd({2, 3, 4}, rng);
      auto w = rnd({5, 4}, rng);
      auto b = rnd({5}, rng);
      record("linear", op_case(rng, {x, w, b}, [&] { return linear(x, w, b); }));
    }
    {
      auto a = rnd({2, 3}, rng);
      auto b = rnd({2, 2}, rng);
      record("concat",
             op_case(rng, {a, b}, [&] { return concat<double>({a, b}, 1); }));
      auto x = rnd({4, 5}, rng);
      record("slice", op_case(rng, {x}, [&] { return slice(x, 1, 1, 3); }));
      record("transpose", op_case(rng, {x}, [&] { return transpose(x); }));
      record("mean_axis", op_case(rng, {x}, [&] { return mean_axis(x, 0); }));
      auto x3 = rnd({2, 3, 4}, rng);
      record("transpose12", op_case(rng, {x3}, [&] { return transpose12(x3); }));
      auto x4 = rnd({1, 2, 3, 3}, rng);
      record("pad2d", op_case(rng, {x4}, [&] { return pad2d(x4, 1, 2, 0, 1); }));
    }
    {
      auto x = rnd({2, 2, 3, 4}, rng);
      auto gh = rnd({2, 2, 3}, rng);
      auto gw = rnd({2, 2, 4}, rng);
      record("coord_gate_apply",
             op_case(rng, {x, gh, gw}, [&] { return coord_gate_apply(x, gh, gw); }));
    }
    {
      auto seq = rnd({4, 3}, rng);
      auto p = BiLstmParams<double>::make(3, 2, rng);
      record("bilstm",
             op_case(rng, {seq, p.fw.w_ih, p.fw.w_hh, p.fw.bias, p.bw.w_ih, p.bw.w_hh, p.bw.bias},
                     [&] { return bilstm(seq, p); }));
    }
    {
      GrfConfig gcfg;
      gcfg.channels = 4;
      gcfg.ratio_den = 2;
      auto p = GrfParams<double>::make(gcfg, rng);
      auto x = rnd({1, 4, 4, 5}, rng);
      record("grf_block",
             op_case(rng,
                     {x, p.gate_reduce_w, p.gate_reduce_b, p.gate_bn.gamma, p.gate_bn.beta,
                      p.gate_h_w, p.gate_h_b, p.gate_w_w, p.gate_w_b, p.context_w,
                      p.context_b},
                     [&] { return grf_forward(x, p); }));
    }
    {
      auto params = ModelParams<double>::make(tiny_model_config(), seed + 31 * s);
      auto spec = rnd({2, 1, 10, 8}, rng);
      auto feats = rnd({2, 4, 5}, rng);
      std::vector<T64> leaves{spec, feats};
      for (auto& [name, t] : params.learnable) leaves.push_back(t);
      std::vector<int> labels{2, 0};
      record("model_end_to_end", gradcheck_max_rel_error(leaves, [&] {
               return cross_entropy(model_forward(params, spec, feats).logits, labels);
             }));
    }
  }
  return results;
}

bool gradcheck_suite_passed(const std::vector<GradcheckResult>& results, double tol) {
  for (const auto& r : results)
    if (!(r.max_rel_error < tol)) return false;
  return !results.empty();
}

}  // namespace mfhca
