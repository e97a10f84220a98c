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
 * @file evaluation.hpp
 * @brief Adaptive-inference evaluation: efficiency (fraction of blocks run),
 *        task metrics and per-block usage counts.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dact/baselines.hpp"
#include "dact/dact.hpp"
#include "dact/data.hpp"
#include "dact/model.hpp"

namespace dact {

enum class Method { dact, entropy, patience, static_depth };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::dact: return "dact";
    case Method::entropy: return "entropy";
    case Method::patience: return "patience";
    case Method::static_depth: return "static";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  if (name == "dact") return Method::dact;
  if (name == "entropy") return Method::entropy;
  if (name == "patience") return Method::patience;
  if (name == "static") return Method::static_depth;
  throw ConfigError("unknown method '" + name + "' (expected dact, entropy, patience or static)");
}

enum class Metric { accuracy, f1, mcc };

inline Metric parse_metric(const std::string& name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "f1") return Metric::f1;
  if (name == "mcc") return Metric::mcc;
  throw ConfigError("unknown metric '" + name + "'");
}

/// One sample of the computation/performance curve.
struct TradeoffPoint {
  Method method = Method::dact;
  double knob = 0.0;         // tau, entropy threshold, or patience
  double efficiency = 1.0;   // blocks executed / (N * examples)
  double performance = 0.0;  // task metric
  std::uint64_t seed = 0;

  bool operator==(const TradeoffPoint&) const = default;
};

/// counts[n] = examples that executed block n + 1.
struct LayerHistogram {
  std::vector<std::size_t> counts;

  [[nodiscard]] bool non_increasing() const {
    for (std::size_t i = 1; i < counts.size(); ++i)
      if (counts[i] > counts[i - 1]) return false;
    return true;
  }
};

struct MethodSpec {
  Method method = Method::dact;
  double knob = 0.0;

  [[nodiscard]] BaselineConfig baseline() const {
    if (method == Method::entropy) return BaselineConfig::entropy(knob);
    return BaselineConfig::with_patience(static_cast<std::size_t>(std::llround(knob)));
  }
};

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;   // binary: positive class 1; otherwise macro-averaged
  double mcc = 0.0;  // multiclass Matthews correlation (reduces to binary MCC)

  [[nodiscard]] double get(Metric m) const {
    switch (m) {
      case Metric::accuracy: return accuracy;
      case Metric::f1: return f1;
      case Metric::mcc: return mcc;
    }
    return accuracy;
  }
};

inline Metrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                               std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("metrics: prediction/label count mismatch");
  Metrics out;
  if (labels.empty()) return out;
  std::vector<std::vector<double>> confusion(num_classes, std::vector<double>(num_classes, 0.0));
  for (std::size_t i = 0; i < labels.size(); ++i) confusion.at(labels[i]).at(predictions[i]) += 1.0;
  const double total = static_cast<double>(labels.size());
  double correct = 0.0;
  std::vector<double> row(num_classes, 0.0), col(num_classes, 0.0);
  for (std::size_t t = 0; t < num_classes; ++t)
    for (std::size_t p = 0; p < num_classes; ++p) {
      row[t] += confusion[t][p];
      col[p] += confusion[t][p];
      if (t == p) correct += confusion[t][p];
    }
  out.accuracy = correct / total;

  const auto f1_of = [&](std::size_t c) {
    const double tp = confusion[c][c];
    const double denom = row[c] + col[c];
    return denom > 0.0 ? 2.0 * tp / denom : 0.0;
  };
  if (num_classes == 2) {
    out.f1 = f1_of(1);
  } else {
    double sum_f1 = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) sum_f1 += f1_of(c);
    out.f1 = sum_f1 / static_cast<double>(num_classes);
  }

  double sum_pt = 0.0, sum_p2 = 0.0, sum_t2 = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    sum_pt += col[c] * row[c];
    sum_p2 += col[c] * col[c];
    sum_t2 += row[c] * row[c];
  }
  const double denom = std::sqrt((total * total - sum_p2) * (total * total - sum_t2));
  out.mcc = denom > 0.0 ? (correct * total - sum_pt) / denom : 0.0;
  return out;
}

struct Evaluation {
  TradeoffPoint point;
  Metrics metrics;
  LayerHistogram histogram;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> layers_used;
};

/// argmax of a_N from the full training-path unroll (no tape, no early exit).
inline std::size_t full_depth_prediction(const Model& model, std::span<const std::size_t> token_ids) {
  return argmax(forward_training(model, token_ids, 0, 0.0).state.answer());
}

/// Runs the chosen exit rule on every example. Static evaluation executes all
/// blocks and predicts with the last block's classifier.
inline Evaluation evaluate(const Model& model, std::span<const TokenizedExample> data, const MethodSpec& spec,
                           Metric metric = Metric::accuracy, std::uint64_t seed = 0,
                           std::vector<TraceRow>* trace = nullptr) {
  const std::size_t blocks = model.config().num_blocks;
  const std::size_t classes = model.config().num_classes;
  Evaluation out;
  out.histogram.counts.assign(blocks, 0);
  std::vector<std::size_t> labels;
  std::size_t executed = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    if (ex.label >= classes) {
      throw ContractError("example " + std::to_string(i) + " has label " + std::to_string(ex.label) +
                          " but the model has " + std::to_string(classes) + " classes");
    }
    const auto ids = strip_padding(ex.ids);
    std::size_t prediction = 0, used = 0;
    switch (spec.method) {
      case Method::dact: {
        const auto r = forward_adaptive(model, ids, trace, i);
        prediction = r.prediction;
        used = r.layers_used;
        break;
      }
      case Method::entropy:
      case Method::patience: {
        const auto r = forward_baseline(model, ids, spec.baseline());
        prediction = r.prediction;
        used = r.layers_used;
        break;
      }
      case Method::static_depth: {
        const BlockStates states = model.backbone().encode(ids);
        prediction = argmax(block_readout(model, states.cls_states.back(), blocks).y.data());
        used = blocks;
        break;
      }
    }
    out.predictions.push_back(prediction);
    out.layers_used.push_back(used);
    labels.push_back(ex.label);
    executed += used;
    for (std::size_t n = 0; n < used; ++n) ++out.histogram.counts[n];
  }
  out.metrics = compute_metrics(out.predictions, labels, classes);
  out.point.method = spec.method;
  out.point.knob = spec.knob;
  out.point.seed = seed;
  out.point.efficiency =
      data.empty() ? 0.0 : static_cast<double>(executed) / static_cast<double>(blocks * data.size());
  out.point.performance = out.metrics.get(metric);
  return out;
}

inline LayerHistogram layer_histogram(const Model& model, std::span<const TokenizedExample> data,
                                      const MethodSpec& spec) {
  return evaluate(model, data, spec).histogram;
}

/// Mean of sum_n h_n over the examples (training-path unroll, no tape).
inline double mean_ponder(const Model& model, std::span<const TokenizedExample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) {
    total += forward_training(model, strip_padding(ex.ids), 0, 0.0).loss.ponder_penalty.item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace dact
