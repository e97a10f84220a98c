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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dact/cli.hpp"

namespace dact {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dact_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.cfg") << "num_blocks=3\nhidden_dim=16\nnum_heads=2\nffn_dim=32\nmax_seq_len=16\n"
                                         "epochs_phase1=1\nepochs_phase2=1\nepochs_baseline=1\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void make_data(std::size_t n = 200) {
    const Result r = run({"gen-data", "--n", std::to_string(n), "--out", path("d.tsv")});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  void make_checkpoint() {
    make_data();
    const Result r = run({"train", "--data", path("d.tsv"), "--config", path("small.cfg"), "--out", path("m.ckpt")});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST_F(CliTest, GenDataWritesSummaryAndFile) {
  const Result r = run({"gen-data", "--n", "100", "--out", path("d.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find("# ")), "examples,easy,hard,classes\n100,70,30,2\n");
  EXPECT_EQ(load_tsv(path("d.tsv"), TsvSchema{}).size(), 100u);
}

TEST_F(CliTest, GenDataDefaultSeedIsSeven) {
  ASSERT_EQ(run({"gen-data", "--n", "50", "--out", path("a.tsv")}).code, 0);
  ASSERT_EQ(run({"gen-data", "--n", "50", "--seed", "7", "--out", path("b.tsv")}).code, 0);
  ASSERT_EQ(run({"gen-data", "--n", "50", "--seed", "8", "--out", path("c.tsv")}).code, 0);
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
  EXPECT_NE(slurp(path("a.tsv")), slurp(path("c.tsv")));
}

TEST_F(CliTest, TrainProducesCheckpointAndVocab) {
  make_checkpoint();
  EXPECT_TRUE(fs::exists(path("m.ckpt")));
  EXPECT_TRUE(fs::exists(path("m.ckpt.vocab.txt")));
  const Checkpoint ck = load_checkpoint(path("m.ckpt"));
  EXPECT_EQ(ck.model.config().num_blocks, 3u);
  EXPECT_EQ(ck.metadata.get("method"), "dact");
}

TEST_F(CliTest, TrainIsDeterministic) {
  make_data();
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    const Result r = run({"train", "--data", path("d.tsv"), "--config", path("small.cfg"), "--out", path(name)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  const Result r = run({"train", "--data", "x.tsv", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--data"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingSubcommandIsUsageError) { EXPECT_EQ(run({}).code, 2); }

TEST_F(CliTest, UnknownConfigKeyIsRejected) {
  make_data();
  std::ofstream(path("bad.cfg")) << "num_blockz=3\n";
  const Result r = run({"train", "--data", path("d.tsv"), "--config", path("bad.cfg"), "--out", path("m.ckpt")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("num_blockz"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalOnMissingCheckpointNamesPath) {
  make_data();
  const std::string missing = path("nope.ckpt");
  const Result r = run({"eval", "--checkpoint", missing, "--data", path("d.tsv")});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalHistogramAndTrace) {
  make_checkpoint();
  const Result ev = run({"eval", "--checkpoint", path("m.ckpt"), "--data", path("d.tsv"), "--trace", path("t.csv")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out.rfind("method,knob,seed,efficiency,performance\ndact,", 0), 0u) << ev.out;
  EXPECT_TRUE(fs::exists(path("t.csv")));

  const Result h = run({"histogram", "--checkpoint", path("m.ckpt"), "--data", path("d.tsv"), "--out", path("h.csv")});
  ASSERT_EQ(h.code, 0) << h.err;
  std::istringstream in(slurp(path("h.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "block,count");
  std::vector<std::size_t> counts;
  while (std::getline(in, line)) counts.push_back(std::stoul(line.substr(line.find(',') + 1)));
  ASSERT_EQ(counts.size(), 3u);
  EXPECT_EQ(counts[0], 200u);
  EXPECT_TRUE(LayerHistogram{counts}.non_increasing());
}

TEST_F(CliTest, TraceNeedsDactMethod) {
  make_checkpoint();
  const Result r = run({"eval", "--checkpoint", path("m.ckpt"), "--data", path("d.tsv"), "--method", "entropy",
                        "--trace", path("t.csv")});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, AuditPassesOnRandomTriplesAndModel) {
  const Result bare = run({"audit", "--n", "2000"});
  ASSERT_EQ(bare.code, 0) << bare.out;
  make_checkpoint();
  const Result r = run({"audit", "--n", "500", "--checkpoint", path("m.ckpt"), "--data", path("d.tsv")});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("early_exit_agreement,200,200"), std::string::npos) << r.out;
}

TEST(CliGrid, DefaultKeywordAndList) {
  EXPECT_EQ(cli::detail::parse_grid("default"), default_tau_grid());
  EXPECT_EQ(cli::detail::parse_grid("0.5,0.05"), (std::vector<double>{0.5, 0.05}));
  EXPECT_THROW(cli::detail::parse_grid("0.5,x"), ConfigError);
}

TEST_F(CliTest, SweepWritesAllMethodsAndCurveReproducesIt) {
  make_data();
  const Result r = run({"sweep", "--data", path("d.tsv"), "--config", path("small.cfg"), "--grid", "0.0005,0.5",
                        "--seeds", "0,1", "--out", path("sw")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string tradeoff = slurp(path("sw/tradeoff.csv"));
  std::istringstream in(tradeoff);
  std::set<Method> methods;
  for (const auto& p : read_tradeoff_csv(in)) methods.insert(p.method);
  EXPECT_EQ(methods.size(), 4u);

  const Result c = run({"curve", "--data", path("sw/tradeoff.csv"), "--out", path("re_")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(path("re_curve.csv")), slurp(path("sw/curve.csv")));
  EXPECT_EQ(slurp(path("re_auc.csv")), slurp(path("sw/auc.csv")));

  const Result again = run({"sweep", "--data", path("d.tsv"), "--config", path("small.cfg"), "--grid", "0.0005,0.5",
                            "--seeds", "0,1", "--out", path("sw2")});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(path("sw2/tradeoff.csv")), tradeoff);
}

}  // namespace
}  // namespace dact
