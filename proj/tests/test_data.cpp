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

#include <algorithm>
#include <set>
#include <sstream>

#include "dact/data.hpp"

namespace dact {
namespace {

Dataset read(const std::string& text, const TsvSchema& schema = {}) {
  std::istringstream in(text);
  return read_tsv(in, schema, "t.tsv");
}

TEST(Synthetic, SameSeedSameDataset) {
  const Dataset a = gen_synthetic(7, 300), b = gen_synthetic(7, 300);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_NE(a.examples, gen_synthetic(8, 300).examples);
}

TEST(Synthetic, ClassesAreBalanced) {
  const Dataset d = gen_synthetic(1, 1000);
  std::vector<std::size_t> counts(2, 0);
  for (const auto& ex : d.examples) ++counts.at(ex.label);
  EXPECT_EQ(counts, (std::vector<std::size_t>{500, 500}));

  SyntheticSpec three;
  three.num_classes = 3;
  const Dataset t = gen_synthetic(2, 1001, three);
  std::vector<std::size_t> c3(3, 0);
  for (const auto& ex : t.examples) ++c3.at(ex.label);
  EXPECT_LE(*std::max_element(c3.begin(), c3.end()) - *std::min_element(c3.begin(), c3.end()), 1u);
}

TEST(Synthetic, DifficultyTagsFollowRatio) {
  const Dataset d = gen_synthetic(3, 1000);
  std::size_t hard = 0;
  for (const auto& ex : d.examples) {
    ASSERT_TRUE(ex.difficulty.has_value());
    hard += *ex.difficulty == Difficulty::hard;
  }
  EXPECT_EQ(hard, 300u);
}

TEST(Synthetic, EasyExamplesCarryTheirMarkerUpFront) {
  const Dataset d = gen_synthetic(4, 500);
  for (const auto& ex : d.examples) {
    const auto toks = split_whitespace(ex.text_a);
    const std::string marker = "m" + std::to_string(ex.label);
    const bool front = toks.size() > 1 && (toks[0] == marker || toks[1] == marker);
    const bool anywhere = std::find_if(toks.begin(), toks.end(), [](const std::string& t) {
                            return t.size() > 1 && t[0] == 'm';
                          }) != toks.end();
    if (*ex.difficulty == Difficulty::easy) {
      EXPECT_TRUE(front) << ex.text_a;
    } else {
      EXPECT_FALSE(anywhere) << ex.text_a;
    }
  }
}

TEST(Synthetic, UnknownFamilyIsConfigError) {
  SyntheticSpec spec;
  spec.family = "parity";
  EXPECT_THROW(gen_synthetic(1, 10, spec), ConfigError);
}

TEST(Split, DisjointAndCoversEverything) {
  const Dataset d = gen_synthetic(5, 1000);
  const auto [train, valid] = split_train_validation(d, 20);
  EXPECT_EQ(train.size() + valid.size(), d.size());
  std::set<std::string> seen;
  for (const auto& ex : train.examples) seen.insert(ex.text_a);
  for (const auto& ex : valid.examples) EXPECT_FALSE(seen.contains(ex.text_a)) << ex.text_a;
  EXPECT_GT(valid.size(), 100u);
  EXPECT_LT(valid.size(), 300u);
}

TEST(Vocab, ReservedIdsAndFrequencyOrder) {
  Dataset d;
  d.label_names = {"0"};
  d.examples = {{"b a b c", std::nullopt, 0, std::nullopt}, {"c b", std::string("a"), 0, std::nullopt}};
  const Vocab v = Vocab::build(d);
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(1), "[CLS]");
  EXPECT_EQ(v.token(2), "[UNK]");
  EXPECT_EQ(v.token(3), "[SEP]");
  // b:3, then a and c tie at 2 and sort lexicographically
  EXPECT_EQ(v.id("b"), 4u);
  EXPECT_EQ(v.id("a"), 5u);
  EXPECT_EQ(v.id("c"), 6u);
  EXPECT_EQ(v.id("zzz"), kUnkId);
  EXPECT_EQ(Vocab::build(d), v);
}

TEST(Vocab, SaveLoadRoundTrip) {
  const Vocab v = Vocab::build(gen_synthetic(6, 50));
  const std::string path = ::testing::TempDir() + "vocab_roundtrip.txt";
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
}

TEST(Tokenize, EmptyTextIsClsThenPads) {
  const Vocab v;
  const Example ex{"", std::nullopt, 0, std::nullopt};
  EXPECT_EQ(tokenize(ex, v, 4), (std::vector<std::size_t>{kClsId, kPadId, kPadId, kPadId}));
}

TEST(Tokenize, PairHasExactlyOneSeparator) {
  Dataset d;
  d.examples = {{"x y z", std::string("u v"), 0, std::nullopt}};
  const Vocab v = Vocab::build(d);
  for (std::size_t max_len : {3u, 4u, 6u, 10u}) {
    const auto ids = tokenize(d.examples[0], v, max_len);
    EXPECT_EQ(std::count(ids.begin(), ids.end(), kSepId), 1) << max_len;
    EXPECT_EQ(ids.size(), max_len);
  }
}

TEST(Tokenize, TruncationKeepsClsAndRespectsLength) {
  const Dataset d = gen_synthetic(7, 200);
  const Vocab v = Vocab::build(d);
  for (std::size_t max_len : {1u, 5u, 9u, 16u}) {
    for (const auto& ex : d.examples) {
      const auto ids = tokenize(ex, v, max_len);
      ASSERT_EQ(ids.size(), max_len);
      EXPECT_EQ(ids.front(), kClsId);
    }
  }
}

TEST(Tokenize, StripPaddingRemovesOnlyTrailingPads) {
  const std::vector<std::size_t> ids = {kClsId, 5, kPadId, 6, kPadId, kPadId};
  EXPECT_EQ(strip_padding(ids), (std::vector<std::size_t>{kClsId, 5, kPadId, 6}));
  EXPECT_EQ(strip_padding({kClsId, kPadId}), (std::vector<std::size_t>{kClsId}));
}

TEST(Tsv, HeaderPlusOneRow) {
  const Dataset d = read("text_a\tlabel\nhello world\tpos\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.examples[0].text_a, "hello world");
  EXPECT_EQ(d.label_names, (std::vector<std::string>{"pos"}));
}

TEST(Tsv, MissingLabelFieldNamesLineTwo) {
  try {
    (void)read("text_a\tlabel\nonly text\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Tsv, MissingColumnIsSchemaError) {
  EXPECT_THROW(read("sentence\tlabel\nx\t0\n"), SchemaError);
  TsvSchema pair;
  pair.text_b = "text_b";
  EXPECT_THROW(read("text_a\tlabel\nx\t0\n", pair), SchemaError);
}

TEST(Tsv, UnknownLabelReportsLine) {
  TsvSchema schema;
  schema.label_names = {"neg", "pos"};
  try {
    (void)read("text_a\tlabel\na\tpos\nb\tmaybe\n", schema);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("maybe"), std::string::npos) << msg;
  }
}

TEST(Tsv, WriteThenLoadPreservesEveryField) {
  Dataset d = gen_synthetic(8, 40);
  d.examples[3].text_b = "second sentence";
  d.examples[5].difficulty.reset();
  std::stringstream buf;
  write_tsv(buf, d);
  TsvSchema schema;
  schema.text_b = "text_b";
  schema.label_names = d.label_names;
  const Dataset back = read_tsv(buf, schema);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    Example expected = d.examples[i];
    if (!expected.text_b) expected.text_b = "";
    EXPECT_EQ(back.examples[i], expected) << i;
  }
}

TEST(Tsv, RefusesToWriteEmbeddedTabs) {
  Dataset d;
  d.label_names = {"0"};
  d.examples = {{"ok", std::string("bad\ttext"), 0, std::nullopt}};
  std::ostringstream out;
  EXPECT_THROW(write_tsv(out, d), DataError);
}

TEST(Tsv, MissingFileNamesPath) {
  try {
    (void)load_tsv("/nonexistent/data.tsv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/data.tsv"), std::string::npos);
  }
}

}  // namespace
}  // namespace dact
