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

// Early-exit baselines over per-block classifiers: stop when the block's
// prediction entropy drops below a threshold, or when the argmax has stayed
// the same for `patience` consecutive blocks.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dact/dact.hpp"
#include "dact/model.hpp"

namespace dact {

enum class BaselineKind { entropy, patience };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::entropy;
  double entropy_threshold = 0.0;
  std::size_t patience = 1;

  static BaselineConfig entropy(double threshold) { return {BaselineKind::entropy, threshold, 1}; }
  static BaselineConfig with_patience(std::size_t patience) { return {BaselineKind::patience, 0.0, patience}; }

  void validate(std::size_t num_blocks) const {
    if (kind == BaselineKind::entropy && !(entropy_threshold >= 0.0)) {
      throw ContractError("entropy threshold must be >= 0");
    }
    if (kind == BaselineKind::patience && (patience < 1 || patience > num_blocks)) {
      throw ContractError("patience " + std::to_string(patience) + " outside [1," + std::to_string(num_blocks) + "]");
    }
  }
};

/// Natural-log Shannon entropy with 0 ln 0 = 0.
inline double entropy(std::span<const double> y) {
  double h = 0.0;
  for (double v : y)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline bool entropy_halt(std::span<const double> y, double threshold) { return entropy(y) < threshold; }

/// True iff the last patience + 1 predictions exist and agree.
inline bool patience_halt(std::span<const std::size_t> argmax_history, std::size_t patience) {
  if (patience < 1) throw ContractError("patience must be >= 1");
  if (argmax_history.size() < patience + 1) return false;
  const auto tail = argmax_history.last(patience + 1);
  for (std::size_t v : tail)
    if (v != tail.front()) return false;
  return true;
}

struct BaselineResult {
  std::size_t prediction = 0;
  std::size_t layers_used = 0;
};

inline BaselineResult forward_baseline(const Model& model, std::span<const std::size_t> token_ids,
                                       const BaselineConfig& config) {
  const std::size_t blocks = model.config().num_blocks;
  config.validate(blocks);
  const Backbone& backbone = model.backbone();
  const EmbeddedInput in = backbone.embed(token_ids);
  Tensor x = in.states;
  std::vector<std::size_t> history;
  BaselineResult out;
  for (std::size_t n = 1; n <= blocks; ++n) {
    x = backbone.apply_block(n - 1, x, in.attention_mask);
    const BlockReadout r = block_readout(model, slice(x, 0, 0, 1), n);
    history.push_back(argmax(r.y.data()));
    out.prediction = history.back();
    out.layers_used = n;
    const bool halt = config.kind == BaselineKind::entropy ? entropy_halt(r.y.data(), config.entropy_threshold)
                                                           : patience_halt(history, config.patience);
    if (halt) break;
  }
  return out;
}

/// Thresholds 0, 0.05, ... up to the first value >= ln(C), where every input halts at block 1.
inline std::vector<double> entropy_threshold_grid(std::size_t num_classes, double step = 0.05) {
  std::vector<double> grid;
  const double top = std::log(static_cast<double>(num_classes));
  for (std::size_t i = 0;; ++i) {
    const double t = step * static_cast<double>(i);
    grid.push_back(t);
    if (t >= top) break;
  }
  return grid;
}

}  // namespace dact
