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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "dact/model.hpp"
#include "test_support.hpp"

namespace dact {
namespace {

using testing::random_ids;
using testing::tiny_config;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::map<std::string, Tensor> by_name(const Model& m) {
  std::map<std::string, Tensor> out;
  for (auto& p : m.parameters()) out.emplace(p.name, p.tensor);
  return out;
}

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig cfg;
  cfg.hidden_dim = 30;
  cfg.num_heads = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.num_classes = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.num_blocks = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ModelConfig, KeyValueRoundTrip) {
  ModelConfig cfg = tiny_config(3, 12, 4);
  ModelConfig back;
  back.read(KeyValues::parse(cfg.to_key_values().to_string()));
  EXPECT_EQ(back, cfg);
}

TEST(Embed, EmptyTextIsClsOnly) {
  const Model m = Model::init(tiny_config(), 1);
  const EmbeddedInput in = m.backbone().embed({});
  EXPECT_EQ(in.ids, (std::vector<std::size_t>{kClsId}));
  EXPECT_EQ(in.states.shape(), (Shape{1, 8}));
  EXPECT_FALSE(in.truncated);
}

TEST(Embed, PositionZeroIsClassificationToken) {
  const Model m = Model::init(tiny_config(), 1);
  const std::vector<std::size_t> ids = {5, 6};
  const auto params = by_name(m);
  const EmbeddedInput in = m.backbone().embed(ids);
  const Tensor& tok = params.at("embedding.token");
  const Tensor& pos = params.at("embedding.position");
  for (std::size_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(in.states[j], tok[kClsId * 8 + j] + pos[j]);
}

TEST(Embed, IsDeterministic) {
  const Model m = Model::init(tiny_config(), 1);
  const std::vector<std::size_t> ids = {4, 7, 9};
  EXPECT_EQ(values(m.backbone().embed(ids).states), values(m.backbone().embed(ids).states));
}

TEST(Embed, SameTokenAtTwoPositionsDiffersByPositionalRows) {
  const Model m = Model::init(tiny_config(), 2);
  const auto params = by_name(m);
  const Tensor& pos = params.at("embedding.position");
  const std::vector<std::size_t> ids = {7, 7};
  const Tensor s = m.backbone().embed(ids).states;
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_NEAR(s[8 + j] - s[16 + j], pos[8 + j] - pos[16 + j], 1e-15);
  }
}

TEST(Embed, OverlongInputIsTruncatedAndFlagged) {
  const Model m = Model::init(tiny_config(), 1);
  const std::vector<std::size_t> ids(25, 5);
  const EmbeddedInput in = m.backbone().embed(ids);
  EXPECT_TRUE(in.truncated);
  EXPECT_EQ(in.ids.size(), 10u);
  EXPECT_EQ(in.ids.front(), kClsId);
  EXPECT_TRUE(m.backbone().encode(ids).truncated);
}

TEST(Embed, ExistingClsIsNotDuplicated) {
  const Model m = Model::init(tiny_config(), 1);
  const std::vector<std::size_t> ids = {kClsId, 5, 6};
  EXPECT_EQ(m.backbone().embed(ids).ids, ids);
}

TEST(Embed, IdOutsideVocabularyThrows) {
  const Model m = Model::init(tiny_config(), 1);
  const std::vector<std::size_t> ids = {5, 12};
  EXPECT_THROW((void)m.backbone().embed(ids), std::out_of_range);
}

TEST(Encode, ShapeContract) {
  ModelConfig cfg = tiny_config(4, 16);
  const Model m = Model::init(cfg, 3);
  Rng rng(3);
  const BlockStates s = m.backbone().encode(random_ids(rng, 6, cfg.vocab_size));
  ASSERT_EQ(s.hidden.size(), 5u);
  for (const auto& h : s.hidden) EXPECT_EQ(h.shape(), (Shape{7, 16}));
  ASSERT_EQ(s.blocks_run(), 4u);
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_EQ(s.cls_states[n].shape(), (Shape{1, 16}));
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(s.cls_states[n][j], s.hidden[n + 1][j]);
  }
}

// Independent single-block oracle built from the named parameters with the
// primitive ops, bypassing Backbone::apply_block.
Tensor manual_block(const std::map<std::string, Tensor>& p, const Tensor& x, std::size_t heads) {
  const auto w = [&](const std::string& n) { return p.at("block.0." + n); };
  const auto linear = [&](const std::string& n, const Tensor& in) {
    return add_bias(matmul(in, w(n + ".weight")), w(n + ".bias"));
  };
  const std::size_t s = x.dim(0), d = x.dim(1), dh = d / heads;
  const Tensor normed = layer_norm(x, w("attn_norm.gain"), w("attn_norm.bias"), 1e-5);
  const Tensor q = linear("query", normed), k = linear("key", normed), v = linear("value", normed);
  std::vector<double> mixed(s * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < s; ++i) {
      std::vector<double> score(s);
      double top = -1e300;
      for (std::size_t j = 0; j < s; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        score[j] = dot / std::sqrt(static_cast<double>(dh));
        top = std::max(top, score[j]);
      }
      double z = 0.0;
      for (double& sc : score) z += (sc = std::exp(sc - top));
      for (std::size_t j = 0; j < s; ++j)
        for (std::size_t c = 0; c < dh; ++c) mixed[i * d + h * dh + c] += score[j] / z * v[j * d + h * dh + c];
    }
  }
  const Tensor attended = add(x, linear("attn_out", Tensor({s, d}, mixed)));
  const Tensor normed2 = layer_norm(attended, w("ffn_norm.gain"), w("ffn_norm.bias"), 1e-5);
  const Tensor pre = linear("ffn_in", normed2);
  std::vector<double> hidden(pre.data().begin(), pre.data().end());
  for (double& u : hidden) {
    u = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
  }
  const Tensor inner({s, hidden.size() / s}, hidden);
  return add(attended, linear("ffn_out", inner));
}

TEST(Encode, SingleBlockMatchesManualComposition) {
  const ModelConfig cfg = tiny_config(1, 8);
  const Model m = Model::init(cfg, 4);
  Rng rng(4);
  const auto ids = random_ids(rng, 5, cfg.vocab_size);
  const BlockStates s = m.backbone().encode(ids);
  const Tensor expected = manual_block(by_name(m), m.backbone().embed(ids).states, cfg.num_heads);
  ASSERT_EQ(s.hidden[1].shape(), expected.shape());
  for (std::size_t i = 0; i < expected.numel(); ++i) EXPECT_NEAR(s.hidden[1][i], expected[i], 1e-12);
}

TEST(Encode, ValuesAtPaddedPositionsDoNotReachClassificationToken) {
  const ModelConfig cfg = tiny_config(2, 8);
  const Model m = Model::init(cfg, 5);
  const std::vector<std::size_t> ids = {5, kPadId, 6, kPadId, kPadId};
  const EmbeddedInput in = m.backbone().embed(ids);
  const Tensor reference = m.backbone().apply_block(0, in.states, in.attention_mask);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor perturbed = in.states.clone();
    for (std::size_t row : {2u, 4u, 5u})
      for (std::size_t j = 0; j < 8; ++j) perturbed.mutable_data()[row * 8 + j] = rng.uniform(-5, 5);
    const Tensor out = m.backbone().apply_block(0, perturbed, in.attention_mask);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out[j], reference[j]);
  }
}

TEST(Encode, TrailingPaddingLeavesClsStatesBitwiseUnchanged) {
  const ModelConfig cfg = tiny_config(3, 8);
  const Model m = Model::init(cfg, 6);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto ids = random_ids(rng, 1 + rng.below(5), cfg.vocab_size);
    const BlockStates bare = m.backbone().encode(ids);
    ids.resize(9, kPadId);
    const BlockStates padded = m.backbone().encode(ids);
    for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(values(bare.cls_states[n]), values(padded.cls_states[n]));
  }
}

TEST(Attention, RowsAreDistributionsAndPadsGetZeroWeight) {
  const ModelConfig cfg = tiny_config(2, 8);
  const Model m = Model::init(cfg, 7);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto ids = random_ids(rng, 6, cfg.vocab_size);
    for (auto& id : ids)
      if (rng.bernoulli(0.3)) id = kPadId;
    const EmbeddedInput in = m.backbone().embed(ids);
    const std::size_t s = in.ids.size();
    for (std::size_t block = 0; block < 2; ++block) {
      for (const Tensor& w : m.backbone().attention_weights(block, in.states, in.attention_mask)) {
        for (std::size_t i = 0; i < s; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < s; ++j) {
            total += w[i * s + j];
            if (in.ids[j] == kPadId) {
              EXPECT_EQ(w[i * s + j], 0.0);
            }
          }
          EXPECT_NEAR(total, 1.0, 1e-9);
        }
      }
    }
  }
}

TEST(EncodePrefix, FullDepthEqualsEncode) {
  const ModelConfig cfg = tiny_config(3, 8);
  const Model m = Model::init(cfg, 8);
  const std::vector<std::size_t> ids = {4, 5, 6};
  const BlockStates a = m.backbone().encode(ids), b = m.backbone().encode_prefix(ids, 3);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(values(a.hidden[n]), values(b.hidden[n]));
}

TEST(EncodePrefix, PrefixIsBitwiseEqualToFullRun) {
  const ModelConfig cfg = tiny_config(4, 8);
  const Model m = Model::init(cfg, 9);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ids = random_ids(rng, 1 + rng.below(8), cfg.vocab_size);
    const BlockStates full = m.backbone().encode(ids);
    const std::size_t upto = 1 + rng.below(4);
    const BlockStates part = m.backbone().encode_prefix(ids, upto);
    ASSERT_EQ(part.blocks_run(), upto);
    for (std::size_t n = 0; n <= upto; ++n) EXPECT_EQ(values(part.hidden[n]), values(full.hidden[n]));
  }
}

TEST(EncodePrefix, OutOfRangeIsContractError) {
  const Model m = Model::init(tiny_config(2), 1);
  const std::vector<std::size_t> ids = {4};
  EXPECT_THROW((void)m.backbone().encode_prefix(ids, 0), ContractError);
  EXPECT_THROW((void)m.backbone().encode_prefix(ids, 3), ContractError);
}

TEST(BlockCounter, CountsOneIncrementPerBlockRun) {
  ModelConfig cfg = tiny_config(6, 8);
  Model m = Model::init(cfg, 1);
  const std::vector<std::size_t> ids = {4, 5};
  m.backbone().reset_block_executions();
  (void)m.backbone().encode_prefix(ids, 1);
  EXPECT_EQ(m.backbone().block_executions(), 1u);
  (void)m.backbone().encode(ids);
  EXPECT_EQ(m.backbone().block_executions(), 7u);
}

TEST(Init, LinearWeightsWithinFanInBoundAndEmbeddingsSmall) {
  ModelConfig cfg;
  const Model m = Model::init(cfg, 11);
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("embedding.", 0) == 0) {
      double ss = 0.0;
      for (double v : p.tensor.data()) ss += v * v;
      EXPECT_NEAR(std::sqrt(ss / p.tensor.numel()), 0.02, 0.002) << p.name;
    } else if (p.name.ends_with(".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.tensor.dim(0)));
      for (double v : p.tensor.data()) EXPECT_LE(std::abs(v), bound) << p.name;
    }
  }
}

TEST(Model, SameSeedGivesIdenticalParameters) {
  const Model a = Model::init(tiny_config(), 42), b = Model::init(tiny_config(), 42);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(values(pa[i].tensor), values(pb[i].tensor)) << pa[i].name;
}

TEST(Model, ParameterNamesAreUniqueAndHeadsAreSeparate) {
  const Model m = Model::init(tiny_config(3), 1);
  std::set<std::string> names;
  for (const auto& p : m.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_NE(values(m.head(1).output.weight), values(m.head(2).output.weight));
  EXPECT_THROW((void)m.head(0), ContractError);
  EXPECT_THROW((void)m.head(4), ContractError);
}

TEST(Model, CloneIsDeep) {
  const Model a = Model::init(tiny_config(), 3);
  Model b = a.clone();
  const double before = a.parameters()[0].tensor[0];
  EXPECT_EQ(b.parameters()[0].tensor[0], before);
  b.parameters()[0].tensor.mutable_data()[0] += 1.0;
  EXPECT_EQ(a.parameters()[0].tensor[0], before);
}

}  // namespace
}  // namespace dact
