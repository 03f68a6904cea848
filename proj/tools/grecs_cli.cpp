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

// Command-line front end. Every subcommand takes --config (JSON), repeated
// --set key.path=value overrides and --out; stage commands also take --seeds.
//
// Exit codes: 0 ok, 1 stage failure, 2 bad configuration or usage.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "grecs/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::string seeds;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_seeds) {
  cmd->add_option("-c,--config", o.config_path, "JSON run configuration");
  cmd->add_option("-s,--set", o.overrides, "Override, e.g. agent.epochs=10");
  cmd->add_option("-o,--out", o.out, "Output directory");
  if (with_seeds) cmd->add_option("--seeds", o.seeds, "Comma-separated seeds");
}

grecs::RunConfig load_config(const CommonOptions& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) grecs::fail(grecs::ErrorCode::kInvalidConfig, "cannot open " + o.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      grecs::fail(grecs::ErrorCode::kInvalidConfig, e.what());
    }
  }
  if (!j.contains("dataset")) j["dataset"] = {{"synthetic", nlohmann::json::object()}};
  for (const auto& s : o.overrides) grecs::apply_override(j, s);
  if (!o.out.empty()) j["output_dir"] = o.out;
  if (!o.seeds.empty()) {
    std::vector<std::uint64_t> seeds;
    for (int v : grecs::parse_int_list(o.seeds)) {
      if (v < 0) grecs::fail(grecs::ErrorCode::kInvalidConfig, "seeds must be non-negative");
      seeds.push_back(static_cast<std::uint64_t>(v));
    }
    j["seeds"] = seeds;
  }
  return grecs::RunConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GRECS: knowledge-graph path reasoning recommender"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string axis;
  std::string values;
  std::string stage;

  struct Sub {
    const char* name;
    const char* help;
    bool seeds;
  };
  const std::vector<Sub> subs{
      {"synth", "Generate the synthetic dataset", false},
      {"split", "Split interactions and select cold users/items", true},
      {"train-embed", "Train knowledge-graph embeddings", true},
      {"train-agent", "Train the path-reasoning policy", true},
      {"cold-integrate", "Attach cold entities and compute their embeddings", true},
      {"recommend", "Beam-search recommendations with explanation paths", true},
      {"eval", "Compute metrics and path-pattern statistics", true},
      {"sweep", "Cold-start sweep over interactions or relations", true},
      {"report", "Aggregate metrics across seeds", true},
      {"run", "Run every stage (or one, with --stage)", true},
      {"config", "Print the resolved configuration", false},
  };
  std::map<std::string, CLI::App*> cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, opts, s.seeds);
    cmds[s.name] = cmd;
  }
  cmds["sweep"]->add_option("--axis", axis, "interactions or relations")->required();
  cmds["sweep"]->add_option("--values", values, "Comma-separated axis values");
  cmds["run"]->add_option("--stage", stage, "Run only this stage");

  CLI11_PARSE(app, argc, argv);

  std::string current = "config";
  try {
    auto config = load_config(opts);
    grecs::Pipeline pipeline(config);
    const auto& seeds = pipeline.config().seeds;
    auto* sub = app.get_subcommands().front();
    current = sub->get_name();
    if (current == "config") {
      std::cout << config.to_json().dump(2) << "\n";
    } else if (current == "synth") {
      pipeline.synth();
    } else if (current == "run") {
      pipeline.run(stage);
    } else if (current == "report") {
      pipeline.report();
    } else if (current == "sweep") {
      auto a = grecs::Pipeline::parse_axis(axis);
      std::vector<int> v;
      if (!values.empty()) {
        v = grecs::parse_int_list(values);
      } else {
        v = a == grecs::Pipeline::SweepAxis::kInteractions ? config.sweep_interactions
                                                           : config.sweep_relations;
      }
      for (auto seed : seeds) pipeline.sweep(seed, a, v);
    } else {
      for (auto seed : seeds) {
        if (current == "split") pipeline.split(seed);
        if (current == "train-embed") pipeline.train_embed(seed);
        if (current == "train-agent") pipeline.train_agent_stage(seed);
        if (current == "cold-integrate") pipeline.cold_integrate(seed);
        if (current == "recommend") pipeline.recommend_stage(seed);
        if (current == "eval") pipeline.evaluate(seed);
      }
    }
  } catch (const grecs::StageError& e) {
    std::cerr << "grecs: stage " << e.stage() << " failed: " << e.what() << "\n";
    return 1;
  } catch (const grecs::Error& e) {
    std::cerr << "grecs: [" << current << "] " << grecs::to_string(e.code()) << ": " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "grecs: [" << current << "] " << e.what() << "\n";
    return 2;
  }
  return 0;
}
