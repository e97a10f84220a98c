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

#include <cstring>
#include <sstream>

#include "dact/checkpoint.hpp"
#include "test_support.hpp"

namespace dact {
namespace {

using testing::tiny_config;

TEST(Checkpoint, RoundTripIsBitExact) {
  Model m = Model::init(tiny_config(3, 8, 3), 21);
  // awkward values survive unchanged
  auto params = m.parameters();
  params[0].tensor.mutable_data()[0] = -0.0;
  params[0].tensor.mutable_data()[1] = 1e-310;
  params[0].tensor.mutable_data()[2] = 0.1 + 0.2;
  KeyValues meta;
  meta.set("tau", "0.05");
  const std::string bytes = checkpoint_bytes(m, meta);
  std::istringstream in(bytes);
  const Checkpoint back = read_checkpoint(in);
  EXPECT_EQ(back.model.config(), m.config());
  EXPECT_EQ(back.metadata.get("tau"), "0.05");
  const auto a = m.parameters(), b = back.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    ASSERT_EQ(a[i].tensor.numel(), b[i].tensor.numel());
    EXPECT_EQ(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.numel() * sizeof(double)),
              0)
        << a[i].name;
  }
  EXPECT_EQ(checkpoint_bytes(back.model, meta), bytes);
}

TEST(Checkpoint, StartsWithMagicAndVersion) {
  const std::string bytes = checkpoint_bytes(Model::init(tiny_config(), 1));
  EXPECT_EQ(bytes.substr(0, 8), "DACTCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);
}

TEST(Checkpoint, ValuesAreLittleEndianDoubles) {
  Model m = Model::init(tiny_config(1, 4), 1);
  auto params = m.parameters();
  params.back().tensor.mutable_data().back() = 1.0;  // 0x3FF0000000000000
  const std::string bytes = checkpoint_bytes(m);
  const std::string tail = bytes.substr(bytes.size() - 8);
  EXPECT_EQ(tail, std::string("\0\0\0\0\0\0\xF0\x3F", 8));
}

TEST(Checkpoint, RejectsBadMagicTruncationAndVersion) {
  std::string bytes = checkpoint_bytes(Model::init(tiny_config(), 1));
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad);
    EXPECT_THROW(read_checkpoint(in), CheckpointError);
  }
  {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_checkpoint(in), CheckpointError);
  }
  {
    std::string bad = bytes;
    bad[8] = 2;
    std::istringstream in(bad);
    EXPECT_THROW(read_checkpoint(in), CheckpointError);
  }
}

TEST(Checkpoint, MetadataMayNotContradictConfig) {
  KeyValues meta;
  meta.set("num_blocks", "9");
  EXPECT_THROW(checkpoint_bytes(Model::init(tiny_config(), 1), meta), CheckpointError);
}

TEST(Checkpoint, MissingFileErrorNamesPath) {
  try {
    (void)load_checkpoint("/nonexistent/model.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/model.ckpt"), std::string::npos);
  }
}

TEST(Checkpoint, SaveLoadThroughFile) {
  const Model m = Model::init(tiny_config(), 2);
  const std::string path = ::testing::TempDir() + "roundtrip.ckpt";
  save_checkpoint(path, m);
  EXPECT_EQ(checkpoint_bytes(load_checkpoint(path).model), checkpoint_bytes(m));
}

}  // namespace
}  // namespace dact
