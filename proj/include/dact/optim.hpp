// Copyright 2026 The dact-cpp Authors
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

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dact/tensor.hpp"

namespace dact {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter, plus the step count.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
  AdamHyper hyper;
};

/// Bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having a zero gradient.
inline void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: parameter list changed size");
  ++state.step;
  const auto& hp = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (state.m[i].size() != p.numel()) throw DimensionError("adam_step: parameter " + std::to_string(i) + " resized");
    const bool has = p.has_grad();
    auto values = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? p.grad()[j] : 0.0;
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g;
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

/// Global L2 norm over every gradient buffer.
inline double gradient_norm(std::span<const Tensor> params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  return std::sqrt(total);
}

/// Rescales all gradients so their global norm is at most max_norm. Returns the pre-clip norm.
inline double clip_gradients(std::span<Tensor> params, double max_norm) {
  const double norm = gradient_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

inline void zero_gradients(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace dact
