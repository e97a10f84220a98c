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
 * @file dact.hpp
 * @brief Differentiable adaptive computation over transformer blocks.
 *
 * After block n the heads emit a class distribution y_n and a halting value
 * h_n in (0,1). The accumulated answer and remaining halting probability evolve
 * as
 *
 *     a_n = y_n * p_{n-1} + a_{n-1} * (1 - p_{n-1}),   p_n = p_{n-1} * h_n,
 *
 * starting from a_0 = 0, p_0 = 1. Training unrolls every block and minimises
 * CE(a_N, label) + tau * sum_n h_n. At inference the loop stops after block n
 * as soon as no sequence of the d = N - n remaining blocks can change argmax(a):
 *
 *     a[c*] * (1 - p_n)^d >= a[c_ru] + p_n * d.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dact/model.hpp"
#include "dact/tensor.hpp"

namespace dact {

/// Intermediate class distribution and halting value of one block.
struct BlockReadout {
  Tensor y;  // [1, C], sums to 1
  Tensor h;  // [1, 1], strictly inside (0, 1)
};

/// Accumulated answer `a`, remaining halting probability `p`, steps taken `n`.
struct HaltingState {
  Tensor a;  // [1, C]
  Tensor p;  // [1, 1]
  std::size_t n = 0;

  static HaltingState initial(std::size_t num_classes) {
    return {Tensor::zeros({1, num_classes}), Tensor::filled({1, 1}, 1.0), 0};
  }

  [[nodiscard]] std::span<const double> answer() const { return a.data(); }
  [[nodiscard]] double remaining() const { return p.item(); }
};

struct LossBreakdown {
  Tensor task_loss;
  Tensor ponder_penalty;
  double tau = 0.0;
  Tensor total;
};

/// Test hook: replaces every halting value with a constant (e.g. exactly 1).
struct ForwardOptions {
  std::optional<double> forced_halting;
};

/// Index of the largest entry, lowest index on ties.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

/// Index of the second-largest entry: the largest after excluding argmax.
/// Lowest index wins ties.
inline std::size_t runner_up(std::span<const double> values) {
  if (values.size() < 2) throw ContractError("runner-up needs at least two classes");
  const std::size_t top = argmax(values);
  std::size_t best = top == 0 ? 1 : 0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (i != top && values[i] > values[best]) best = i;
  return best;
}

/// y = softmax(W_y . cls + b_y), h = sigmoid(w_h . cls + c_h) for block `block_index` (1-based).
inline BlockReadout block_readout(const Model& model, const Tensor& cls_state, std::size_t block_index,
                                  const ForwardOptions& options = {}) {
  const DactHead& head = model.head(block_index);
  const Tensor& cls = cls_state.rank() == 1 ? reshape(cls_state, {1, cls_state.numel()}) : cls_state;
  BlockReadout r;
  r.y = softmax(head.output(cls));
  r.h = options.forced_halting ? Tensor::filled({1, 1}, *options.forced_halting) : sigmoid(head.halting(cls));
  return r;
}

/// One accumulation step; the answer update uses the incoming p.
inline HaltingState dact_step(const HaltingState& state, const BlockReadout& r) {
  HaltingState next;
  next.a = add(scale(r.y, state.p), scale(state.a, affine(state.p, -1.0, 1.0)));
  next.p = mul(state.p, r.h);
  next.n = state.n + 1;
  return next;
}

/// total = task + tau * sum(h) over the given readouts.
inline LossBreakdown ponder_loss(const Tensor& task_loss, std::span<const BlockReadout> readouts, double tau) {
  if (readouts.empty()) throw ContractError("ponder_loss: no readouts");
  if (!(tau >= 0.0)) throw ContractError("ponder_loss: tau must be non-negative");
  std::vector<Tensor> halts;
  halts.reserve(readouts.size());
  for (const auto& r : readouts) halts.push_back(r.h);
  LossBreakdown out;
  out.task_loss = task_loss;
  out.ponder_penalty = sum(concat(halts, 0));
  out.tau = tau;
  out.total = add(task_loss, affine(out.ponder_penalty, tau));
  return out;
}

struct TrainingForward {
  HaltingState state;
  LossBreakdown loss;
  std::vector<BlockReadout> readouts;
};

/// Unrolls all N blocks; differentiable into the backbone and every head.
inline TrainingForward forward_training(const Model& model, std::span<const std::size_t> token_ids,
                                        std::size_t label, double tau, const ForwardOptions& options = {}) {
  const BlockStates states = model.backbone().encode(token_ids);
  TrainingForward out;
  out.state = HaltingState::initial(model.config().num_classes);
  for (std::size_t n = 0; n < states.blocks_run(); ++n) {
    out.readouts.push_back(block_readout(model, states.cls_states[n], n + 1, options));
    out.state = dact_step(out.state, out.readouts.back());
  }
  out.loss = ponder_loss(cross_entropy(out.state.a, label), out.readouts, tau);
  return out;
}

/// a[c*] * (1 - p)^d >= a[c_ru] + p * d, with p the post-update remaining probability.
inline bool halting_bound_holds(std::span<const double> a, double p, std::size_t d) {
  if (a.size() < 2) throw ContractError("halting bound needs at least two classes");
  const double top = a[argmax(a)];
  const double second = a[runner_up(a)];
  const double dd = static_cast<double>(d);
  return top * std::pow(1.0 - p, dd) >= second + p * dd;
}

inline bool halting_bound_holds(const HaltingState& state, std::size_t d) {
  return halting_bound_holds(state.answer(), state.remaining(), d);
}

/// Plays the strongest future adversary against the current leader: every
/// remaining block puts all its mass on one challenger with h = 1, which keeps
/// p (and so the challenger's weight) maximal. Each challenger is tried in
/// turn. Returns true iff the leader survives all of them.
inline bool adversarial_bound_audit(std::span<const double> a, double p, std::size_t d) {
  if (d == 0) return true;
  const std::size_t leader = argmax(a);
  for (std::size_t challenger = 0; challenger < a.size(); ++challenger) {
    if (challenger == leader) continue;
    std::vector<double> acc(a.begin(), a.end());
    for (std::size_t step = 0; step < d; ++step) {
      for (std::size_t c = 0; c < acc.size(); ++c) {
        const double y = c == challenger ? 1.0 : 0.0;
        acc[c] = y * p + acc[c] * (1.0 - p);
      }
      if (argmax(acc) != leader) return false;
    }
  }
  return true;
}

/// One row of the optional per-block inference trace.
struct TraceRow {
  std::size_t example = 0;
  std::size_t block = 0;
  std::vector<double> y;
  double h = 0.0;
  double p = 0.0;
  std::vector<double> a;
  bool halted = false;
};

struct AdaptiveResult {
  std::size_t prediction = 0;
  std::size_t layers_used = 0;
  HaltingState state;
};

/// Runs blocks one at a time and stops at the first block after which the
/// halting bound holds for the blocks that remain.
inline AdaptiveResult forward_adaptive(const Model& model, std::span<const std::size_t> token_ids,
                                       std::vector<TraceRow>* trace = nullptr, std::size_t example_index = 0,
                                       const ForwardOptions& options = {}) {
  const std::size_t blocks = model.config().num_blocks;
  const Backbone& backbone = model.backbone();
  const EmbeddedInput in = backbone.embed(token_ids);
  AdaptiveResult out;
  out.state = HaltingState::initial(model.config().num_classes);
  Tensor x = in.states;
  for (std::size_t n = 1; n <= blocks; ++n) {
    x = backbone.apply_block(n - 1, x, in.attention_mask);
    const BlockReadout r = block_readout(model, slice(x, 0, 0, 1), n, options);
    out.state = dact_step(out.state, r);
    const bool halt = n == blocks || halting_bound_holds(out.state, blocks - n);
    if (trace) {
      trace->push_back({example_index, n, {r.y.data().begin(), r.y.data().end()}, r.h.item(),
                        out.state.remaining(), {out.state.a.data().begin(), out.state.a.data().end()}, halt});
    }
    if (halt) break;
  }
  out.layers_used = out.state.n;
  out.prediction = argmax(out.state.answer());
  return out;
}

/// Header plus rows of trace.csv: example,block,h,p,a_0..a_{C-1},y_0..y_{C-1},halted.
inline void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows, std::size_t num_classes) {
  out << "example,block,h,p";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",a_" << c;
  for (std::size_t c = 0; c < num_classes; ++c) out << ",y_" << c;
  out << ",halted\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.example << ',' << r.block << ',' << num(r.h) << ',' << num(r.p);
    for (double v : r.a) out << ',' << num(v);
    for (double v : r.y) out << ',' << num(v);
    out << ',' << (r.halted ? 1 : 0) << '\n';
  }
}

}  // namespace dact
