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
 * @file model.hpp
 * @brief Pre-norm transformer encoder with a classification token, plus one
 *        output head and one halting head per block.
 */

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dact/config.hpp"
#include "dact/rng.hpp"
#include "dact/tensor.hpp"

namespace dact {

/// Reserved vocabulary ids.
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kClsId = 1;
inline constexpr std::size_t kUnkId = 2;
inline constexpr std::size_t kSepId = 3;

/// Additive score for masked attention keys; exp of it underflows to exactly 0.
inline constexpr double kMaskedScore = -1e9;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Weight stored [in, out] so that y = x . W + b for row-vector inputs.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out), b(out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : b) v = rng.uniform(-bound, bound);
    return {Tensor({in, out}, std::move(w), true), Tensor({out}, std::move(b), true)};
  }

  [[nodiscard]] Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t dim) {
    return {Tensor(Shape{dim}, std::vector<double>(dim, 1.0), true), Tensor::zeros({dim}, true)};
  }

  [[nodiscard]] Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, 1e-5); }
};

struct BlockParams {
  LayerNormParams attn_norm;
  Linear query, key, value, attn_out;
  LayerNormParams ffn_norm;
  Linear ffn_in, ffn_out;
};

/// Per-block readout heads on the classification-token state.
struct DactHead {
  Linear output;   // [D, C]
  Linear halting;  // [D, 1]
};

/// Sequence after embedding: position 0 holds the classification token.
struct EmbeddedInput {
  Tensor states;                    // [S, D]
  Tensor attention_mask;            // [S, S] additive: 0 or kMaskedScore per key column
  std::vector<std::size_t> ids;     // ids actually embedded, CLS first
  bool truncated = false;
};

/// Embedding output plus every block's output.
struct BlockStates {
  std::vector<Tensor> hidden;      // blocks_run + 1 entries, each [S, D]
  std::vector<Tensor> cls_states;  // blocks_run entries, each [1, D]
  bool truncated = false;

  [[nodiscard]] std::size_t blocks_run() const { return cls_states.size(); }
};

class Backbone {
 public:
  Backbone() = default;

  static Backbone init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Backbone b;
    b.cfg_ = cfg;
    const std::size_t d = cfg.hidden_dim;
    std::vector<double> tok(cfg.vocab_size * d), pos(cfg.max_seq_len * d);
    for (double& v : tok) v = rng.normal(0.0, 0.02);
    for (double& v : pos) v = rng.normal(0.0, 0.02);
    b.token_embedding_ = Tensor({cfg.vocab_size, d}, std::move(tok), true);
    b.position_embedding_ = Tensor({cfg.max_seq_len, d}, std::move(pos), true);
    for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
      BlockParams p;
      p.attn_norm = LayerNormParams::init(d);
      p.query = Linear::init(d, d, rng);
      p.key = Linear::init(d, d, rng);
      p.value = Linear::init(d, d, rng);
      p.attn_out = Linear::init(d, d, rng);
      p.ffn_norm = LayerNormParams::init(d);
      p.ffn_in = Linear::init(d, cfg.ffn_dim, rng);
      p.ffn_out = Linear::init(cfg.ffn_dim, d, rng);
      b.blocks_.push_back(std::move(p));
    }
    return b;
  }

  Backbone(Backbone&& other) noexcept
      : cfg_(other.cfg_),
        token_embedding_(std::move(other.token_embedding_)),
        position_embedding_(std::move(other.position_embedding_)),
        blocks_(std::move(other.blocks_)),
        block_executions_(other.block_executions_.load()) {}

  Backbone& operator=(Backbone&& other) noexcept {
    cfg_ = other.cfg_;
    token_embedding_ = std::move(other.token_embedding_);
    position_embedding_ = std::move(other.position_embedding_);
    blocks_ = std::move(other.blocks_);
    block_executions_ = other.block_executions_.load();
    return *this;
  }

  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  /// Prepends the classification token unless the sequence already starts
  /// with it, then truncates to max_seq_len. Keys holding [PAD] are masked.
  [[nodiscard]] EmbeddedInput embed(std::span<const std::size_t> token_ids) const {
    EmbeddedInput in;
    in.ids.reserve(token_ids.size() + 1);
    if (token_ids.empty() || token_ids.front() != kClsId) in.ids.push_back(kClsId);
    in.ids.insert(in.ids.end(), token_ids.begin(), token_ids.end());
    if (in.ids.size() > cfg_.max_seq_len) {
      in.ids.resize(cfg_.max_seq_len);
      in.truncated = true;
    }
    for (std::size_t id : in.ids) {
      if (id >= cfg_.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(id) + " >= vocab_size " +
                                std::to_string(cfg_.vocab_size));
      }
    }
    const std::size_t s = in.ids.size();
    std::vector<std::size_t> positions(s);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    in.states = add(embedding(token_embedding_, in.ids), embedding(position_embedding_, positions));
    std::vector<double> mask(s * s, 0.0);
    for (std::size_t j = 0; j < s; ++j) {
      if (in.ids[j] != kPadId) continue;
      for (std::size_t i = 0; i < s; ++i) mask[i * s + j] = kMaskedScore;
    }
    in.attention_mask = Tensor({s, s}, std::move(mask));
    return in;
  }

  /// Runs block `index` (0-based) on x: x + Attn(LN(x)), then + FFN(LN(.)).
  [[nodiscard]] Tensor apply_block(std::size_t index, const Tensor& x, const Tensor& attention_mask) const {
    const BlockParams& p = blocks_.at(index);
    block_executions_.fetch_add(1, std::memory_order_relaxed);
    const Tensor attended = add(x, attention(p, p.attn_norm(x), attention_mask));
    return add(attended, p.ffn_out(gelu(p.ffn_in(p.ffn_norm(attended)))));
  }

  /// Attention probabilities of every head for block `index` (diagnostics and tests).
  [[nodiscard]] std::vector<Tensor> attention_weights(std::size_t index, const Tensor& x,
                                                      const Tensor& attention_mask) const {
    const BlockParams& p = blocks_.at(index);
    const Tensor normed = p.attn_norm(x);
    const Tensor q = p.query(normed), k = p.key(normed);
    std::vector<Tensor> out;
    for (std::size_t h = 0; h < cfg_.num_heads; ++h) out.push_back(head_probs(q, k, h, attention_mask));
    return out;
  }

  [[nodiscard]] BlockStates encode(std::span<const std::size_t> token_ids) const {
    return encode_prefix(token_ids, cfg_.num_blocks);
  }

  /// Runs only blocks 1..upto; identical values to the first entries of encode().
  [[nodiscard]] BlockStates encode_prefix(std::span<const std::size_t> token_ids, std::size_t upto) const {
    if (upto < 1 || upto > cfg_.num_blocks) {
      throw ContractError("encode_prefix: upto=" + std::to_string(upto) + " outside [1," +
                          std::to_string(cfg_.num_blocks) + "]");
    }
    EmbeddedInput in = embed(token_ids);
    BlockStates out;
    out.truncated = in.truncated;
    out.hidden.push_back(in.states);
    for (std::size_t n = 0; n < upto; ++n) {
      out.hidden.push_back(apply_block(n, out.hidden.back(), in.attention_mask));
      out.cls_states.push_back(slice(out.hidden.back(), 0, 0, 1));
    }
    return out;
  }

  /// Total block applications since construction or the last reset.
  [[nodiscard]] std::uint64_t block_executions() const { return block_executions_.load(); }
  void reset_block_executions() { block_executions_ = 0; }

  void collect_parameters(std::vector<NamedTensor>& out) const {
    out.push_back({"embedding.token", token_embedding_});
    out.push_back({"embedding.position", position_embedding_});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& p = blocks_[i];
      const std::string prefix = "block." + std::to_string(i) + ".";
      out.push_back({prefix + "attn_norm.gain", p.attn_norm.gain});
      out.push_back({prefix + "attn_norm.bias", p.attn_norm.bias});
      out.push_back({prefix + "query.weight", p.query.weight});
      out.push_back({prefix + "query.bias", p.query.bias});
      out.push_back({prefix + "key.weight", p.key.weight});
      out.push_back({prefix + "key.bias", p.key.bias});
      out.push_back({prefix + "value.weight", p.value.weight});
      out.push_back({prefix + "value.bias", p.value.bias});
      out.push_back({prefix + "attn_out.weight", p.attn_out.weight});
      out.push_back({prefix + "attn_out.bias", p.attn_out.bias});
      out.push_back({prefix + "ffn_norm.gain", p.ffn_norm.gain});
      out.push_back({prefix + "ffn_norm.bias", p.ffn_norm.bias});
      out.push_back({prefix + "ffn_in.weight", p.ffn_in.weight});
      out.push_back({prefix + "ffn_in.bias", p.ffn_in.bias});
      out.push_back({prefix + "ffn_out.weight", p.ffn_out.weight});
      out.push_back({prefix + "ffn_out.bias", p.ffn_out.bias});
    }
  }

 private:
  [[nodiscard]] Tensor head_probs(const Tensor& q, const Tensor& k, std::size_t h, const Tensor& mask) const {
    const std::size_t dh = cfg_.hidden_dim / cfg_.num_heads;
    const Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor scores = affine(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    return softmax(add(scores, mask));
  }

  [[nodiscard]] Tensor attention(const BlockParams& p, const Tensor& normed, const Tensor& mask) const {
    const std::size_t dh = cfg_.hidden_dim / cfg_.num_heads;
    const Tensor q = p.query(normed), k = p.key(normed), v = p.value(normed);
    std::vector<Tensor> heads;
    heads.reserve(cfg_.num_heads);
    for (std::size_t h = 0; h < cfg_.num_heads; ++h) {
      heads.push_back(matmul(head_probs(q, k, h, mask), slice(v, 1, h * dh, (h + 1) * dh)));
    }
    return p.attn_out(cfg_.num_heads == 1 ? heads.front() : concat(heads, 1));
  }

  ModelConfig cfg_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  std::vector<BlockParams> blocks_;
  mutable std::atomic<std::uint64_t> block_executions_{0};
};

/// Backbone plus the per-block output and halting heads.
class Model {
 public:
  Model() = default;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deterministic initialization: embeddings, blocks in order, then heads in order.
  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model m;
    m.cfg_ = cfg;
    m.backbone_ = Backbone::init(cfg, rng);
    for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
      m.heads_.push_back({Linear::init(cfg.hidden_dim, cfg.num_classes, rng), Linear::init(cfg.hidden_dim, 1, rng)});
    }
    return m;
  }

  /// Deep copy of every parameter.
  [[nodiscard]] Model clone() const {
    Model m = init(cfg_, 0);
    auto dst = m.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), dst[i].tensor.mutable_data().begin());
    }
    return m;
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const Backbone& backbone() const { return backbone_; }
  [[nodiscard]] Backbone& backbone() { return backbone_; }

  /// Head of block `block_index`, 1-based.
  [[nodiscard]] const DactHead& head(std::size_t block_index) const {
    if (block_index < 1 || block_index > heads_.size()) {
      throw ContractError("head index " + std::to_string(block_index) + " outside [1," +
                          std::to_string(heads_.size()) + "]");
    }
    return heads_[block_index - 1];
  }

  /// Every parameter in a fixed order; handles alias the model's storage.
  [[nodiscard]] std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    backbone_.collect_parameters(out);
    for (std::size_t i = 0; i < heads_.size(); ++i) {
      const std::string prefix = "head." + std::to_string(i + 1) + ".";
      out.push_back({prefix + "output.weight", heads_[i].output.weight});
      out.push_back({prefix + "output.bias", heads_[i].output.bias});
      out.push_back({prefix + "halting.weight", heads_[i].halting.weight});
      out.push_back({prefix + "halting.bias", heads_[i].halting.bias});
    }
    return out;
  }

  [[nodiscard]] std::vector<Tensor> backbone_parameters() const {
    std::vector<NamedTensor> named;
    backbone_.collect_parameters(named);
    std::vector<Tensor> out;
    for (auto& n : named) out.push_back(n.tensor);
    return out;
  }

  [[nodiscard]] std::vector<Tensor> output_head_parameters() const {
    std::vector<Tensor> out;
    for (const auto& h : heads_) {
      out.push_back(h.output.weight);
      out.push_back(h.output.bias);
    }
    return out;
  }

  [[nodiscard]] std::vector<Tensor> all_parameters() const {
    std::vector<Tensor> out;
    for (auto& n : parameters()) out.push_back(n.tensor);
    return out;
  }

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  std::vector<DactHead> heads_;
};

}  // namespace dact
