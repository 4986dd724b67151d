// Copyright 2026 The MVR Authors.
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

#include "cli/cli.h"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mvr::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kTinyConfig = R"({
  "seed": 4,
  "world": {"topics": 3, "items_per_topic": 30, "users": 30, "dim": 4, "profile_dim": 3},
  "model_implicit": {"interest": {"dim": 6, "max_seq_len": 8, "k": 3},
                     "tower": {"dim": 4, "hidden": 8}},
  "model_explicit": {"tower": {"dim": 4, "hidden": 8}},
  "trainer": {"epochs": 1, "batch_size": 64},
  "eval": {"k_rank": [10]},
  "serving": {"total_budget": 10, "k_ex": 2}
})";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mvr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("cfg.json", kTinyConfig);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int mvr(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(mvr({}), kExitConfig);
  EXPECT_EQ(mvr({"frobnicate"}), kExitConfig);
  EXPECT_EQ(mvr({"gen-data", "--out", path("d")}), kExitConfig);
  EXPECT_EQ(mvr({"gen-data", "--config", path("missing.json"), "--out", path("d")}),
            kExitConfig);
  EXPECT_EQ(mvr({"--help"}), kExitOk);
}

TEST_F(CliTest, BadConfigExitsTwo) {
  write("bad.json", R"({"seed": 1, "trainer": {"epochz": 2}})");
  EXPECT_EQ(mvr({"gen-data", "--config", path("bad.json"), "--out", path("d")}), kExitConfig);
  EXPECT_NE(err_.str().find("epochz"), std::string::npos);
}

TEST_F(CliTest, PipelineEndToEnd) {
  const std::string cfg = path("cfg.json");
  ASSERT_EQ(mvr({"gen-data", "--config", cfg, "--out", path("data")}), kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(path("data/world.jsonl")));
  EXPECT_TRUE(fs::exists(path("data/config.json")));

  // Checkpoints are checked before training data is touched.
  EXPECT_EQ(mvr({"eval", "--config", cfg, "--data", path("data"), "--checkpoint",
                 path("nope"), "--out", path("ev")}),
            kExitConfig);

  ASSERT_EQ(mvr({"train", "--config", cfg, "--data", path("data"), "--out", path("ckpt")}),
            kExitOk)
      << err_.str();
  EXPECT_TRUE(fs::exists(path("ckpt/implicit.ckpt")));
  EXPECT_TRUE(fs::exists(path("ckpt/explicit.ckpt")));
  EXPECT_TRUE(fs::exists(path("ckpt/loss_implicit.csv")));

  ASSERT_EQ(mvr({"build-index", "--config", cfg, "--data", path("data"), "--checkpoint",
                 path("ckpt"), "--out", path("idx")}),
            kExitOk)
      << err_.str();
  ASSERT_EQ(mvr({"eval", "--config", cfg, "--data", path("data"), "--checkpoint",
                 path("ckpt"), "--index", path("idx"), "--out", path("ev")}),
            kExitOk)
      << err_.str();
  EXPECT_TRUE(fs::exists(path("ev/metrics.csv")));
  const auto summary = nlohmann::json::parse(std::ifstream(path("ev/summary.json")));
  EXPECT_FALSE(summary.empty());

  write("req.json", R"({"profile": [0.1, 0.2, 0.3], "followed_topics": [1]})");
  ASSERT_EQ(mvr({"serve", "--config", cfg, "--data", path("data"), "--checkpoint",
                 path("ckpt"), "--index", path("idx"), "--input", path("req.json")}),
            kExitOk)
      << err_.str() << out_.str();
  const auto reply = nlohmann::json::parse(out_.str());
  EXPECT_LE(reply["candidates"].size(), 10u);
  EXPECT_FALSE(reply["candidates"].empty());

  // Data generated under another seed is rejected.
  EXPECT_EQ(mvr({"train", "--config", cfg, "--seed", "99", "--data", path("data"), "--out",
                 path("ckpt2")}),
            kExitConfig);
}

TEST_F(CliTest, GenDataIsDeterministic) {
  const std::string cfg = path("cfg.json");
  ASSERT_EQ(mvr({"gen-data", "--config", cfg, "--out", path("a")}), kExitOk);
  ASSERT_EQ(mvr({"gen-data", "--config", cfg, "--out", path("b")}), kExitOk);
  auto slurp = [](const std::string& p) {
    std::stringstream s;
    s << std::ifstream(p).rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp(path("a/engagements.jsonl")), slurp(path("b/engagements.jsonl")));
  EXPECT_EQ(slurp(path("a/world.jsonl")), slurp(path("b/world.jsonl")));
}

}  // namespace
}  // namespace mvr::cli
