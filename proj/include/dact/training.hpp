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

/**
 * @file training.hpp
 * @brief Two-phase optimization and the tau sweep.
 *
 * Phase 1 tunes the backbone for the task through the last block's output
 * head alone. Phase 2 trains backbone and every head jointly on
 * CE(a_N) + tau * sum h. Baseline exits instead freeze the backbone and fit
 * each block's output head with its own cross-entropy.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dact/dact.hpp"
#include "dact/data.hpp"
#include "dact/evaluation.hpp"
#include "dact/model.hpp"
#include "dact/optim.hpp"
#include "dact/rng.hpp"

namespace dact {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double tau = 0.0;
  double lr_phase1 = 1e-3;
  double lr_phase2 = 3e-4;
  double lr_baseline = 1e-3;
  std::size_t epochs_phase1 = 4;
  std::size_t epochs_phase2 = 4;
  std::size_t epochs_baseline = 4;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;

  void validate() const {
    if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_phase1 > 0.0 && lr_phase2 > 0.0 && lr_baseline > 0.0)) throw ConfigError("learning rates must be > 0");
  }

  [[nodiscard]] KeyValues to_key_values() const {
    KeyValues kv;
    const auto num = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    kv.set("tau", num(tau));
    kv.set("lr_phase1", num(lr_phase1));
    kv.set("lr_phase2", num(lr_phase2));
    kv.set("lr_baseline", num(lr_baseline));
    kv.set("epochs_phase1", std::to_string(epochs_phase1));
    kv.set("epochs_phase2", std::to_string(epochs_phase2));
    kv.set("epochs_baseline", std::to_string(epochs_baseline));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("seed", std::to_string(seed));
    kv.set("grad_clip", num(grad_clip));
    return kv;
  }

  void read(const KeyValues& kv) {
    kv.read("tau", tau);
    kv.read("lr_phase1", lr_phase1);
    kv.read("lr_phase2", lr_phase2);
    kv.read("lr_baseline", lr_baseline);
    kv.read("epochs_phase1", epochs_phase1);
    kv.read("epochs_phase2", epochs_phase2);
    kv.read("epochs_baseline", epochs_baseline);
    kv.read("batch_size", batch_size);
    kv.read("seed", seed);
    kv.read("grad_clip", grad_clip);
  }
};

/// The five tau values of the reference sweep.
inline std::vector<double> default_tau_grid() { return {5e-5, 5e-4, 5e-3, 5e-2, 5e-1}; }

struct EpochStats {
  double mean_loss = 0.0;
  double mean_task_loss = 0.0;
  double mean_ponder = 0.0;  // phase 2 only
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::vector<double> batch_losses;
  /// Trainable parameters that never received a nonzero gradient in the last epoch.
  std::vector<std::string> untouched_parameters;
};

namespace detail {

/// Stream seeds derived from TrainConfig::seed.
enum SeedStream : std::uint64_t { kInitStream = 0, kPhase1Stream = 1, kPhase2Stream = 2, kBaselineStream = 3 };

struct BatchLoss {
  double total = 0.0;
  double task = 0.0;
  double ponder = 0.0;
};

/// Generic mini-batch loop. `step_loss` builds the loss of one example on the
/// active tape and returns it with its components.
template <typename LossFn>
TrainReport run_epochs(std::span<const NamedTensor> trainable, std::size_t n_examples, std::size_t epochs,
                       double lr, const TrainConfig& cfg, std::uint64_t stream, const char* phase,
                       LossFn&& step_loss) {
  TrainReport report;
  if (epochs == 0 || n_examples == 0) return report;
  std::vector<Tensor> params;
  for (const auto& p : trainable) params.push_back(p.tensor);
  zero_gradients(params);
  AdamState adam;
  Rng rng(mix_seed(cfg.seed, stream));
  std::vector<std::size_t> order(n_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<char> touched(params.size(), 0);
    EpochStats stats;
    for (std::size_t start = 0; start < n_examples; start += cfg.batch_size) {
      const std::size_t end = std::min(n_examples, start + cfg.batch_size);
      BatchLoss batch;
      for (std::size_t k = start; k < end; ++k) {
        Tape tape;
        Tape::Scope scope(tape);
        const auto [loss, task, ponder] = step_loss(order[k]);
        if (!std::isfinite(loss.item())) {
          throw TrainingDiverged(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch) +
                                 ", example " + std::to_string(order[k]));
        }
        tape.backward(affine(loss, inv_batch));
        batch.total += loss.item();
        batch.task += task;
        batch.ponder += ponder;
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (touched[i] || !params[i].has_grad()) continue;
        for (double g : params[i].grad())
          if (g != 0.0) {
            touched[i] = 1;
            break;
          }
      }
      const double norm = clip_gradients(params, cfg.grad_clip);
      if (!std::isfinite(norm)) {
        throw TrainingDiverged(std::string(phase) + ": non-finite gradient norm at epoch " + std::to_string(epoch));
      }
      adam_step(params, adam, lr);
      zero_gradients(params);
      report.batch_losses.push_back(batch.total / static_cast<double>(end - start));
      stats.mean_loss += batch.total;
      stats.mean_task_loss += batch.task;
      stats.mean_ponder += batch.ponder;
    }
    const double n = static_cast<double>(n_examples);
    stats.mean_loss /= n;
    stats.mean_task_loss /= n;
    stats.mean_ponder /= n;
    report.epochs.push_back(stats);
    report.untouched_parameters.clear();
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!touched[i]) report.untouched_parameters.push_back(trainable[i].name);
  }
  return report;
}

inline std::vector<NamedTensor> select(const Model& model, const std::function<bool(const std::string&)>& keep) {
  std::vector<NamedTensor> out;
  for (auto& p : model.parameters())
    if (keep(p.name)) out.push_back(p);
  return out;
}

}  // namespace detail

/// Backbone plus the last block's output head, trained with plain cross-entropy.
inline TrainReport train_phase1(Model& model, std::span<const TokenizedExample> data, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t last = model.config().num_blocks;
  const std::string head = "head." + std::to_string(last) + ".output.";
  const auto trainable = detail::select(model, [&](const std::string& name) {
    return name.rfind("head.", 0) != 0 || name.rfind(head, 0) == 0;
  });
  std::vector<std::vector<std::size_t>> ids;
  for (const auto& ex : data) ids.push_back(strip_padding(ex.ids));
  return detail::run_epochs(trainable, data.size(), cfg.epochs_phase1, cfg.lr_phase1, cfg, detail::kPhase1Stream,
                            "phase 1", [&](std::size_t i) {
                              const BlockStates states = model.backbone().encode(ids[i]);
                              const Tensor y = block_readout(model, states.cls_states.back(), last).y;
                              Tensor loss = cross_entropy(y, data[i].label);
                              const double task = loss.item();
                              return std::tuple{loss, task, 0.0};
                            });
}

/// Joint training of backbone and every head on CE(a_N) + tau * sum h.
inline TrainReport train_phase2(Model& model, std::span<const TokenizedExample> data, const TrainConfig& cfg) {
  cfg.validate();
  const auto trainable = model.parameters();
  std::vector<std::vector<std::size_t>> ids;
  for (const auto& ex : data) ids.push_back(strip_padding(ex.ids));
  return detail::run_epochs(trainable, data.size(), cfg.epochs_phase2, cfg.lr_phase2, cfg, detail::kPhase2Stream,
                            "phase 2", [&](std::size_t i) {
                              const TrainingForward f = forward_training(model, ids[i], data[i].label, cfg.tau);
                              return std::tuple{f.loss.total, f.loss.task_loss.item(), f.loss.ponder_penalty.item()};
                            });
}

/// Frozen backbone; every block's output head fitted with its own cross-entropy, summed.
inline TrainReport train_baseline_heads(Model& model, std::span<const TokenizedExample> data, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t blocks = model.config().num_blocks;
  // Backbone is frozen, so its classification-token states are computed once.
  std::vector<std::vector<Tensor>> cls(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const BlockStates states = model.backbone().encode(strip_padding(data[i].ids));
    for (const auto& c : states.cls_states) cls[i].push_back(c.detach());
  }
  const auto trainable = detail::select(model, [](const std::string& name) {
    return name.rfind("head.", 0) == 0 && name.find(".output.") != std::string::npos;
  });
  return detail::run_epochs(trainable, data.size(), cfg.epochs_baseline, cfg.lr_baseline, cfg,
                            detail::kBaselineStream, "baseline heads", [&](std::size_t i) {
                              Tensor loss;
                              for (std::size_t n = 1; n <= blocks; ++n) {
                                Tensor ce = cross_entropy(block_readout(model, cls[i][n - 1], n).y, data[i].label);
                                loss = loss.defined() ? add(loss, ce) : ce;
                              }
                              const double task = loss.item();
                              return std::tuple{loss, task, 0.0};
                            });
}

/// Fresh model for a seed, with the deterministic initialization stream.
inline Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  return Model::init(cfg, mix_seed(seed, detail::kInitStream));
}

struct SweepCell {
  double tau = 0.0;
  std::uint64_t seed = 0;
  Model model;
  TradeoffPoint point;
  double mean_ponder = 0.0;  // validation mean of sum h
  TrainReport report;
  std::optional<std::string> error;
};

struct SweepOptions {
  std::vector<double> grid = default_tau_grid();
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  Metric metric = Metric::accuracy;
  /// Called after each finished cell (progress reporting).
  std::function<void(const SweepCell&)> on_cell;
  /// Called once per seed with the phase-1 model, before its phase-2 cells.
  std::function<void(std::uint64_t, const Model&)> on_phase1;
};

/// One phase-1 model per seed, then one phase-2 run per tau starting from a
/// copy of it. A failing cell records its error and the sweep continues.
inline std::vector<SweepCell> sweep_tau(const ModelConfig& model_cfg, std::span<const TokenizedExample> train,
                                        std::span<const TokenizedExample> validation, const TrainConfig& base,
                                        const SweepOptions& options = {}) {
  if (options.grid.empty()) throw ConfigError("tau grid is empty");
  std::vector<SweepCell> cells;
  for (std::uint64_t seed : options.seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    Model phase1 = init_model(model_cfg, seed);
    train_phase1(phase1, train, cfg);
    if (options.on_phase1) options.on_phase1(seed, phase1);
    for (double tau : options.grid) {
      SweepCell cell;
      cell.tau = tau;
      cell.seed = seed;
      cell.model = phase1.clone();
      cfg.tau = tau;
      try {
        cell.report = train_phase2(cell.model, train, cfg);
        const Evaluation ev = evaluate(cell.model, validation, {Method::dact, tau}, options.metric, seed);
        cell.point = ev.point;
        cell.mean_ponder = mean_ponder(cell.model, validation);
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.point = {Method::dact, tau, std::nan(""), std::nan(""), seed};
      }
      if (options.on_cell) options.on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace dact
