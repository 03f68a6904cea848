/*
 * Copyright 2026 The GRECS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "grecs/pipeline.hpp"
#include "test_support.hpp"

namespace grecs {
namespace {

using testing::code_of;

RunConfig small_config(const std::filesystem::path& out) {
  RunConfig c;
  c.output_dir = out.string();
  SyntheticSpec spec;
  spec.users = 60;
  spec.items = 50;
  spec.brands = 4;
  spec.categories = 3;
  spec.min_purchases = 5;
  spec.max_purchases = 15;
  c.synthetic = spec;
  c.embed.dim = 16;
  c.embed.epochs = 3;
  c.embed.learning_rate = 1e-2;
  c.agent.hidden1 = 32;
  c.agent.hidden2 = 16;
  c.agent.epochs = 2;
  c.widths = {10, 3, 1};
  c.sweep_interactions = {0, 1};
  c.sweep_relations = {1, 2};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(PipelineTest, FullRunWritesEveryArtifact) {
  testing::TempDir dir("pipe");
  Pipeline p(small_config(dir.path() / "run"));
  p.run();
  auto seed = p.seed_dir(1);
  for (const char* f : {"split/manifest.json", "split/train.tsv", "embeddings.json", "policy.bin",
                        "training_curve.csv", "agent_summary.json", "cold-average/graph.tsv",
                        "cold-null/embeddings.json", "recs/grecs-average-warm.jsonl",
                        "recs/pop-cold_user.jsonl", "metrics.json", "sweep-interactions.json",
                        "sweep-relations.json"}) {
    EXPECT_TRUE(std::filesystem::exists(seed / f)) << f;
  }
  for (const char* f : {"report.csv", "report.json", "patterns.csv", "sweep-interactions.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(p.out() / f)) << f;
  }
  auto metrics = nlohmann::json::parse(slurp(seed / "metrics.json"));
  EXPECT_EQ(metrics.at("config_hash").get<std::string>(), p.config_hash());
  for (const char* m : {"grecs-average", "grecs-null", "pop"}) {
    for (const char* c : {"warm", "cold_user", "cold_item"}) {
      EXPECT_TRUE(metrics.at("models").at(m).contains(c)) << m << " " << c;
    }
  }
  EXPECT_DOUBLE_EQ(metrics["models"]["pop"]["warm"]["popb"].get<double>(), 1.0);
  EXPECT_NE(slurp(p.out() / "dataset" / "triplets.tsv").find(p.config_hash()), std::string::npos);
}

TEST(PipelineTest, RerunIsByteIdentical) {
  testing::TempDir a("pipe-a"), b("pipe-b");
  auto ca = small_config(a.path());
  auto cb = small_config(b.path());
  Pipeline(ca).run();
  Pipeline(cb).run();
  auto s = std::filesystem::path("seed-1");
  for (const char* f : {"split/manifest.json", "embeddings.json", "policy.bin", "recs/grecs-null-cold_user.jsonl",
                        "metrics.json", "sweep-relations.json"}) {
    EXPECT_EQ(slurp(a.path() / s / f), slurp(b.path() / s / f)) << f;
  }
}

TEST(PipelineTest, StagesResumeFromArtifacts) {
  testing::TempDir dir("pipe-resume");
  auto cfg = small_config(dir.path());
  Pipeline(cfg).run();
  auto before = slurp(dir.path() / "seed-1" / "metrics.json");
  Pipeline again(cfg);
  again.recommend_stage(1);
  again.evaluate(1);
  EXPECT_EQ(slurp(dir.path() / "seed-1" / "metrics.json"), before);
}

TEST(PipelineTest, ZeroInteractionSweepEqualsStrictCold) {
  testing::TempDir dir("pipe-sweep");
  auto cfg = small_config(dir.path());
  Pipeline p(cfg);
  p.run();
  auto metrics = nlohmann::json::parse(slurp(p.seed_dir(1) / "metrics.json"));
  auto sweep = p.sweep(1, Pipeline::SweepAxis::kInteractions, {0});
  EXPECT_EQ(sweep["points"][0]["hr"], metrics["models"]["grecs-average"]["cold_user"]["hr"]);
  EXPECT_EQ(sweep["points"][0]["ndcg"], metrics["models"]["grecs-average"]["cold_user"]["ndcg"]);
}

TEST(PipelineTest, MissingArtifactsRaiseStageError) {
  testing::TempDir dir("pipe-missing");
  Pipeline p(small_config(dir.path()));
  try {
    p.train_agent_stage(1);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "train-agent");
  }
  EXPECT_THROW(p.sweep(1, Pipeline::SweepAxis::kRelations, {-1}), StageError);
}

TEST(ConfigTest, JsonRoundTripAndHash) {
  auto c = small_config("x");
  auto again = RunConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
  auto moved = c;
  moved.output_dir = "elsewhere";
  moved.seeds = {4, 5};
  EXPECT_EQ(moved.hash(), c.hash());
  moved.k = 5;
  EXPECT_NE(moved.hash(), c.hash());
}

TEST(ConfigTest, OverridesParseJsonOrString) {
  nlohmann::json j = small_config("x").to_json();
  apply_override(j, "agent.epochs=7");
  apply_override(j, "cold_strategies=[\"null\"]");
  apply_override(j, "output_dir=out dir");
  auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.agent.epochs, 7);
  EXPECT_EQ(c.strategies.size(), 1u);
  EXPECT_EQ(c.output_dir, "out dir");
  EXPECT_EQ(code_of([&] { apply_override(j, "=3"); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([&] { apply_override(j, "noequals"); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(parse_int_list("0,1,,3"), (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(code_of([] { parse_int_list("1,x"); }), ErrorCode::kInvalidConfig);
}

TEST(ConfigTest, ValidationRejectsBadValues) {
  auto c = small_config("x");
  c.widths = {5, 5};
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kInvalidConfig);
  c = small_config("x");
  c.synthetic.reset();
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kInvalidConfig);
  c = small_config("x");
  c.seeds.clear();
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::kInvalidConfig);
  EXPECT_EQ(code_of([] { Pipeline::parse_axis("time"); }), ErrorCode::kInvalidConfig);
}

int run_cli(const std::string& args) {
  int status = std::system((std::string(GRECS_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, ExitCodesDistinguishStageAndUsageErrors) {
  testing::TempDir dir("cli");
  auto out = (dir.path() / "run").string();
  auto cfg = (dir.path() / "cfg.json").string();
  std::ofstream(cfg) << small_config(out).to_json().dump();
  EXPECT_EQ(run_cli("config -c " + cfg), 0);
  EXPECT_EQ(run_cli("train-agent -c " + cfg), 1);
  EXPECT_NE(run_cli("sweep -c " + cfg), 0);
  EXPECT_EQ(run_cli("config -c " + cfg + " -s k=0"), 2);
  EXPECT_EQ(run_cli("config -c /nonexistent.json"), 2);
  EXPECT_EQ(run_cli("synth -c " + cfg), 0);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "dataset" / "triplets.tsv"));
  EXPECT_EQ(run_cli("split -c " + cfg + " --seeds 3"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "run" / "seed-3" / "split" / "manifest.json"));
}

}  // namespace
}  // namespace grecs
