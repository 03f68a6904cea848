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

// End-to-end experiment driver. Every stage reads its inputs from and
// writes its outputs to the run directory, so any stage can be re-run or
// resumed on its own:
//
//   <out>/dataset/{triplets.tsv,schema.json}           synth
//   <out>/seed-S/split/{manifest.json,train.tsv}       split
//   <out>/seed-S/embeddings.json                       train-embed
//   <out>/seed-S/{policy.bin,training_curve.csv,...}   train-agent
//   <out>/seed-S/cold-<strategy>/...                   cold-integrate
//   <out>/seed-S/recs/*.jsonl                          recommend
//   <out>/seed-S/metrics.json                          eval
//   <out>/seed-S/sweep-<axis>.json                     sweep
//   <out>/report.{csv,json}, patterns.csv, sweep-*.csv report

#ifndef GRECS_PIPELINE_HPP
#define GRECS_PIPELINE_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "grecs/agent.hpp"
#include "grecs/coldstart.hpp"
#include "grecs/common.hpp"
#include "grecs/data.hpp"
#include "grecs/embed.hpp"
#include "grecs/eval.hpp"
#include "grecs/inference.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

namespace fs = std::filesystem;

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunConfig {
  std::string output_dir = "run";
  std::optional<SyntheticSpec> synthetic;
  std::string triplets;
  std::string schema;
  SplitConfig split;
  EmbedTrainConfig embed;
  AgentConfig agent;
  std::vector<int> widths{25, 5, 1};
  std::vector<ColdEmbeddingStrategy> strategies{ColdEmbeddingStrategy::kAverageTranslation,
                                                ColdEmbeddingStrategy::kNull};
  int k = 10;
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> sweep_interactions{0, 1, 2, 3};
  std::vector<int> sweep_relations{1, 2, 3, 5, 10};
  int uniform_rollouts = 3;

  void validate() const {
    if (!synthetic && (triplets.empty() || schema.empty())) {
      fail(ErrorCode::kInvalidConfig, "dataset needs either a synthetic spec or triplets + schema");
    }
    if (!synthetic) {
      if (!fs::exists(triplets)) fail(ErrorCode::kInvalidConfig, "missing triplet file " + triplets);
      if (!fs::exists(schema)) fail(ErrorCode::kInvalidConfig, "missing schema file " + schema);
    }
    if (seeds.empty()) fail(ErrorCode::kInvalidConfig, "at least one seed is required");
    if (k < 1) fail(ErrorCode::kInvalidConfig, "k must be >= 1");
    if (strategies.empty()) fail(ErrorCode::kInvalidConfig, "at least one cold strategy");
    if (widths.size() != static_cast<std::size_t>(agent.hops)) {
      fail(ErrorCode::kInvalidConfig, "need one beam width per hop");
    }
    split.validate();
    embed.validate();
    agent.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["output_dir"] = output_dir;
    nlohmann::json ds;
    if (synthetic) {
      ds["synthetic"] = *synthetic;
    } else {
      ds["triplets"] = triplets;
      ds["schema"] = schema;
    }
    j["dataset"] = ds;
    j["split"] = split;
    j["embed"] = embed;
    j["agent"] = agent;
    j["inference"] = {{"widths", widths}};
    std::vector<std::string> names;
    for (auto s : strategies) names.emplace_back(to_string(s));
    j["cold_strategies"] = names;
    j["k"] = k;
    j["seeds"] = seeds;
    j["sweep"] = {{"interactions", sweep_interactions}, {"relations", sweep_relations}};
    j["uniform_rollouts"] = uniform_rollouts;
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
      c.output_dir = j.value("output_dir", c.output_dir);
      if (j.contains("dataset")) {
        const auto& ds = j.at("dataset");
        if (ds.contains("synthetic")) c.synthetic = ds.at("synthetic").get<SyntheticSpec>();
        c.triplets = ds.value("triplets", "");
        c.schema = ds.value("schema", "");
      }
      if (j.contains("split")) c.split = j.at("split").get<SplitConfig>();
      if (j.contains("embed")) c.embed = j.at("embed").get<EmbedTrainConfig>();
      if (j.contains("agent")) c.agent = j.at("agent").get<AgentConfig>();
      if (j.contains("inference")) c.widths = j.at("inference").value("widths", c.widths);
      if (j.contains("cold_strategies")) {
        c.strategies.clear();
        for (const auto& s : j.at("cold_strategies")) {
          c.strategies.push_back(parse_cold_strategy(s.get<std::string>()));
        }
      }
      c.k = j.value("k", c.k);
      if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
      if (j.contains("sweep")) {
        c.sweep_interactions = j.at("sweep").value("interactions", c.sweep_interactions);
        c.sweep_relations = j.at("sweep").value("relations", c.sweep_relations);
      }
      c.uniform_rollouts = j.value("uniform_rollouts", c.uniform_rollouts);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kInvalidConfig, e.what());
    }
    return c;
  }

  // Fingerprint of everything that determines results (not output_dir or
  // the seed list, which are stamped separately).
  std::string hash() const {
    auto j = to_json();
    j.erase("output_dir");
    j.erase("seeds");
    std::ostringstream s;
    s << std::hex << fnv1a64(j.dump());
    return s.str();
  }
};

// Parses "a.b.c=value" and writes value (JSON if it parses, else a string).
inline void apply_override(nlohmann::json& config, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::kInvalidConfig, "override must look like key.path=value: " + assignment);
  }
  std::string path = "/" + assignment.substr(0, eq);
  for (auto& ch : path) {
    if (ch == '.') ch = '/';
  }
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  config[nlohmann::json::json_pointer(path)] = value;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorCode::kInvalidConfig, "not an integer: " + item);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct EvalGraph {
  KnowledgeGraph graph;
  EmbeddingTable table;
  std::vector<EntityId> cold_items;
  std::vector<std::pair<std::size_t, EntityId>> cold_users;  // (index into cold_test, id)
  std::vector<std::string> skipped;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config) : config_(std::move(config)) {
    config_.validate();
    hash_ = config_.hash();
  }

  const RunConfig& config() const { return config_; }
  const std::string& config_hash() const { return hash_; }

  fs::path out() const { return fs::absolute(config_.output_dir).lexically_normal(); }
  fs::path seed_dir(std::uint64_t seed) const { return out() / ("seed-" + std::to_string(seed)); }
  fs::path dataset_triplets() const {
    return config_.synthetic ? out() / "dataset" / "triplets.tsv" : fs::path(config_.triplets);
  }
  fs::path dataset_schema() const {
    return config_.synthetic ? out() / "dataset" / "schema.json" : fs::path(config_.schema);
  }

  // ---- stages -------------------------------------------------------------

  void synth() {
    stage("synth", [&] {
      if (!config_.synthetic) return;
      fs::create_directories(out() / "dataset");
      auto ds = generate_synthetic(*config_.synthetic);
      write_synthetic(ds, dataset_triplets().string(), dataset_schema().string(), stamp(0));
    });
  }

  void split(std::uint64_t seed) {
    stage("split", [&] {
      auto graph = load_dataset(dataset_triplets().string(), dataset_schema().string());
      auto cfg = config_.split;
      cfg.seed = seed;
      auto s = split_dataset(graph, cfg);
      auto dir = seed_dir(seed) / "split";
      fs::create_directories(dir);
      {
        std::ofstream t(dir / "train.tsv", std::ios::binary);
        t << "# " << stamp(seed) << '\n';
        write_triplets(t, s.train);
      }
      auto manifest = split_manifest(s);
      manifest["config_hash"] = hash_;
      manifest["seed"] = seed;
      // Paths relative to the output directory.
      auto rel = [&](const fs::path& p) { return p.lexically_relative(out()).generic_string(); };
      manifest["files"] = {{"dataset_triplets", rel(fs::absolute(dataset_triplets()))},
                           {"dataset_schema", rel(fs::absolute(dataset_schema()))},
                           {"train_triplets", rel(fs::absolute(dir / "train.tsv"))}};
      write_json(dir / "manifest.json", manifest);
    });
  }

  void train_embed(std::uint64_t seed) {
    stage("train-embed", [&] {
      auto s = load_split(seed);
      auto cfg = config_.embed;
      cfg.seed = seed;
      auto table = train_embeddings(s.train, cfg);
      auto j = embeddings_to_json(table, s.train);
      j["config_hash"] = hash_;
      write_json(seed_dir(seed) / "embeddings.json", j);
    });
  }

  void train_agent_stage(std::uint64_t seed) {
    stage("train-agent", [&] {
      auto s = load_split(seed);
      auto table = load_embeddings((seed_dir(seed) / "embeddings.json").string(), s.train);
      auto cfg = config_.agent;
      cfg.seed = seed;
      auto reward = reward_spec(s.train.schema());
      auto trained = train_agent(s.train, table, reward, cfg);
      save_policy((seed_dir(seed) / "policy.bin").string(), trained.policy,
                  {{"config_hash", hash_}, {"seed", seed}});
      write_training_curve((seed_dir(seed) / "training_curve.csv").string(), trained.curve);

      auto users = training_users(s.train);
      auto eval_seed = seed ^ 0x00C0FFEEULL;
      double learned = mean_rollout_reward(trained.policy, users, s.train, table, reward, cfg.hops,
                                           cfg.max_actions, RolloutPolicy::kLearned, eval_seed,
                                           config_.uniform_rollouts);
      double uniform = mean_rollout_reward(trained.policy, users, s.train, table, reward, cfg.hops,
                                           cfg.max_actions, RolloutPolicy::kUniform, eval_seed,
                                           config_.uniform_rollouts);
      write_json(seed_dir(seed) / "agent_summary.json",
                 {{"config_hash", hash_},
                  {"seed", seed},
                  {"reward_mode", std::string(to_string(cfg.reward))},
                  {"training_users", users.size()},
                  {"mean_reward_learned", learned},
                  {"mean_reward_uniform", uniform}});
    });
  }

  void cold_integrate(std::uint64_t seed) {
    stage("cold-integrate", [&] {
      auto s = load_split(seed);
      auto table = load_embeddings((seed_dir(seed) / "embeddings.json").string(), s.train);
      for (auto strategy : config_.strategies) {
        auto eg = build_eval_graph(s, table, strategy, s.cold_test,
                                   [&](const ColdUser& cu) { return user_profile(s, cu); }, {});
        auto dir = strategy_dir(seed, strategy);
        fs::create_directories(dir);
        {
          std::ofstream t(dir / "graph.tsv", std::ios::binary);
          t << "# " << stamp(seed) << '\n';
          write_triplets(t, eg.graph);
        }
        auto j = embeddings_to_json(eg.table, eg.graph);
        j["config_hash"] = hash_;
        write_json(dir / "embeddings.json", j);
        std::vector<std::string> users, items;
        for (auto [idx, id] : eg.cold_users) users.push_back(eg.graph.describe(id));
        for (auto id : eg.cold_items) items.push_back(eg.graph.describe(id));
        write_json(dir / "cold.json", {{"config_hash", hash_},
                                       {"seed", seed},
                                       {"strategy", std::string(to_string(strategy))},
                                       {"cold_users", users},
                                       {"cold_items", items},
                                       {"skipped", eg.skipped}});
      }
    });
  }

  void recommend_stage(std::uint64_t seed) {
    stage("recommend", [&] {
      auto s = load_split(seed);
      auto policy = load_policy((seed_dir(seed) / "policy.bin").string());
      auto dir = seed_dir(seed) / "recs";
      fs::create_directories(dir);
      bool pop_written = false;
      for (auto strategy : config_.strategies) {
        auto sdir = strategy_dir(seed, strategy);
        auto graph = read_triplets((sdir / "graph.tsv").string(), s.train.schema());
        graph.freeze();
        auto table = load_embeddings((sdir / "embeddings.json").string(), graph);
        auto cold = nlohmann::json::parse(read_file(sdir / "cold.json"));
        auto warm_users = warm_cohort(s, graph);
        std::vector<EntityId> cold_users;
        for (const auto& name : cold.at("cold_users")) {
          cold_users.push_back(resolve(graph, name.get<std::string>()));
        }
        std::string model = "grecs-" + std::string(to_string(strategy));
        write_recs(dir / (model + "-warm.jsonl"), seed, graph, warm_users,
                   [&](EntityId u) { return grecs_list(u, policy, graph, table); });
        write_recs(dir / (model + "-cold_user.jsonl"), seed, graph, cold_users,
                   [&](EntityId u) { return grecs_list(u, policy, graph, table); });
        if (!pop_written) {
          PopBaseline pop(graph, config_.k);
          auto pop_list = [&](EntityId u) {
            RecommendationList l{u, config_.k, {}};
            int rank = 1;
            for (auto item : pop.recommend(u)) l.items.push_back({item, rank++, {}});
            return l;
          };
          write_recs(dir / "pop-warm.jsonl", seed, graph, warm_users, pop_list);
          write_recs(dir / "pop-cold_user.jsonl", seed, graph, cold_users, pop_list);
          pop_written = true;
        }
      }
    });
  }

  void evaluate(std::uint64_t seed) {
    stage("eval", [&] {
      auto s = load_split(seed);
      nlohmann::json metrics;
      metrics["config_hash"] = hash_;
      metrics["seed"] = seed;
      metrics["k"] = config_.k;
      std::vector<CohortPaths> pattern_cohorts;
      bool pop_done = false;
      for (auto strategy : config_.strategies) {
        auto sdir = strategy_dir(seed, strategy);
        auto graph = read_triplets((sdir / "graph.tsv").string(), s.train.schema());
        graph.freeze();
        auto cold = nlohmann::json::parse(read_file(sdir / "cold.json"));
        ItemSet cold_items;
        for (const auto& n : cold.at("cold_items")) cold_items.insert(resolve(graph, n.get<std::string>()));
        PopularityIndex pop(graph);
        std::string model = "grecs-" + std::string(to_string(strategy));
        std::vector<std::string> models{model};
        if (!pop_done) models.push_back("pop");
        for (const auto& m : models) {
          auto warm = read_recs(seed_dir(seed) / "recs" / (m + "-warm.jsonl"), graph);
          auto cold_u = read_recs(seed_dir(seed) / "recs" / (m + "-cold_user.jsonl"), graph);
          auto cohorts = cohort_users(s, graph, warm, cold_u, cold_items);
          for (const auto& [cohort, users] : cohorts) {
            auto cm = evaluate_cohort(users, pop, cold_items, config_.k);
            metrics["models"][m][cohort] = cohort_json(cm);
          }
          if (m == model) {
            pattern_cohorts.push_back({model + ":warm", pattern_keys(warm, graph)});
            pattern_cohorts.push_back({model + ":cold_user", pattern_keys(cold_u, graph)});
          }
        }
        pop_done = true;
      }
      auto report = pattern_report(pattern_cohorts);
      metrics["patterns"] = {{"cohorts", report.cohorts}, {"percent", report.percent}};
      auto summary = seed_dir(seed) / "agent_summary.json";
      if (fs::exists(summary)) metrics["agent"] = nlohmann::json::parse(read_file(summary));
      write_json(seed_dir(seed) / "metrics.json", metrics);
    });
  }

  enum class SweepAxis { kInteractions, kRelations };

  static SweepAxis parse_axis(const std::string& s) {
    if (s == "interactions") return SweepAxis::kInteractions;
    if (s == "relations") return SweepAxis::kRelations;
    fail(ErrorCode::kInvalidConfig, "sweep axis must be interactions or relations");
  }

  // HR/nDCG of the cold test users at each axis value. The policy and warm
  // embeddings are reused for every value.
  nlohmann::json sweep(std::uint64_t seed, SweepAxis axis, const std::vector<int>& values) {
    nlohmann::json result;
    stage("sweep", [&] {
      for (int v : values) {
        if (v < 0) fail(ErrorCode::kInvalidAxisValue, std::to_string(v));
      }
      auto s = load_split(seed);
      auto base = load_embeddings((seed_dir(seed) / "embeddings.json").string(), s.train);
      auto policy = load_policy((seed_dir(seed) / "policy.bin").string());
      auto strategy = config_.strategies.front();
      const std::string axis_name = axis == SweepAxis::kInteractions ? "interactions" : "relations";
      result = {{"config_hash", hash_},
                {"seed", seed},
                {"axis", axis_name},
                {"strategy", std::string(to_string(strategy))},
                {"points", nlohmann::json::array()}};
      for (int v : values) {
        std::size_t flagged = 0;
        auto profile_of = [&](const ColdUser& cu) {
          if (axis == SweepAxis::kRelations) {
            for (const auto& [rel, list] : cu.ranked) {
              if (static_cast<int>(list.size()) < v) {
                ++flagged;
                break;
              }
            }
            return cu.profile(user_type_name(s), v);
          }
          return user_profile(s, cu);
        };
        int moved = axis == SweepAxis::kInteractions ? v : 0;
        auto eg = build_eval_graph(s, base, strategy, s.cold_test, profile_of, moved);
        PopularityIndex pop(eg.graph);
        ItemSet cold_items(eg.cold_items.begin(), eg.cold_items.end());
        std::vector<EvalUser> users;
        for (auto [idx, id] : eg.cold_users) {
          const auto& cu = s.cold_test[idx];
          EvalUser eu{cu.name, {}, {}};
          for (std::size_t i = static_cast<std::size_t>(moved); i < cu.hidden.size(); ++i) {
            if (auto item = eg.graph.find_entity(eg.graph.schema().item_type(), cu.hidden[i])) {
              eu.relevant.insert(*item);
            }
          }
          if (eu.relevant.empty()) continue;
          auto recs = grecs_list(id, policy, eg.graph, eg.table);
          auto seen = eg.graph.interacted_items(id);
          eu.recs = {id, recs.item_ids(), ItemSet(seen.begin(), seen.end())};
          users.push_back(std::move(eu));
        }
        auto cm = evaluate_cohort(users, pop, cold_items, config_.k);
        auto point = cohort_json(cm);
        point["value"] = v;
        point["flagged"] = flagged;
        result["points"].push_back(point);
      }
      write_json(seed_dir(seed) / ("sweep-" + axis_name + ".json"), result);
    });
    return result;
  }

  // Aggregates every seed's metrics (and sweeps, when present).
  nlohmann::json report() {
    nlohmann::json agg;
    stage("report", [&] {
      std::map<std::string, std::vector<double>> values;  // "model,cohort,metric" -> per seed
      std::map<std::string, std::map<std::string, std::vector<double>>> patterns;
      std::map<std::string, std::vector<double>> agent;
      std::map<std::string, std::map<int, std::vector<double>>> sweeps;  // axis -> value -> hr
      std::map<std::string, std::map<int, std::vector<double>>> sweeps_ndcg;
      for (auto seed : config_.seeds) {
        auto mpath = seed_dir(seed) / "metrics.json";
        if (!fs::exists(mpath)) fail(ErrorCode::kIoError, "missing " + mpath.string());
        auto m = nlohmann::json::parse(read_file(mpath));
        for (const auto& [model, cohorts] : m.at("models").items()) {
          for (const auto& [cohort, mj] : cohorts.items()) {
            for (const char* metric : {"ndcg", "hr", "popb", "cov", "prop"}) {
              values[model + "," + cohort + "," + metric].push_back(mj.at(metric).get<double>());
            }
          }
        }
        const auto& pc = m.at("patterns");
        auto cohorts = pc.at("cohorts").get<std::vector<std::string>>();
        for (const auto& [key, row] : pc.at("percent").items()) {
          for (std::size_t i = 0; i < cohorts.size(); ++i) {
            patterns[key][cohorts[i]].push_back(row.at(i).get<double>());
          }
        }
        if (m.contains("agent")) {
          agent["mean_reward_learned"].push_back(m["agent"]["mean_reward_learned"].get<double>());
          agent["mean_reward_uniform"].push_back(m["agent"]["mean_reward_uniform"].get<double>());
        }
        for (const char* axis : {"interactions", "relations"}) {
          auto spath = seed_dir(seed) / (std::string("sweep-") + axis + ".json");
          if (!fs::exists(spath)) continue;
          auto sj = nlohmann::json::parse(read_file(spath));
          for (const auto& p : sj.at("points")) {
            sweeps[axis][p.at("value").get<int>()].push_back(p.at("hr").get<double>());
            sweeps_ndcg[axis][p.at("value").get<int>()].push_back(p.at("ndcg").get<double>());
          }
        }
      }
      std::ostringstream csv;
      csv.precision(17);
      csv << "# config_hash=" << hash_ << " seeds=" << seed_list() << '\n';
      csv << "model,cohort,metric,mean,std,seeds\n";
      agg["config_hash"] = hash_;
      agg["seeds"] = config_.seeds;
      for (const auto& [key, vals] : values) {
        auto ms = mean_std(vals);
        csv << key << ',' << ms.mean << ',' << ms.std << ',' << ms.n << '\n';
        agg["metrics"][key] = {{"mean", ms.mean}, {"std", ms.std}, {"per_seed", vals}};
      }
      write_text(out() / "report.csv", csv.str());

      std::ostringstream pcsv;
      pcsv.precision(17);
      pcsv << "# config_hash=" << hash_ << " seeds=" << seed_list() << '\n';
      pcsv << "pattern,cohort,mean_percent,std_percent,seeds\n";
      for (const auto& [key, by_cohort] : patterns) {
        for (const auto& [cohort, vals] : by_cohort) {
          auto ms = mean_std(vals);
          pcsv << '"' << key << "\"," << cohort << ',' << ms.mean << ',' << ms.std << ',' << ms.n
               << '\n';
          agg["patterns"][key][cohort] = vals;
        }
      }
      write_text(out() / "patterns.csv", pcsv.str());

      for (const auto& [name, vals] : agent) agg["agent"][name] = vals;
      for (const auto& [axis, points] : sweeps) {
        std::ostringstream scsv;
        scsv.precision(17);
        scsv << "# config_hash=" << hash_ << " seeds=" << seed_list() << '\n';
        scsv << "axis,value,hr_mean,hr_std,ndcg_mean,ndcg_std,seeds\n";
        for (const auto& [v, hrs] : points) {
          auto h = mean_std(hrs);
          auto n = mean_std(sweeps_ndcg[axis][v]);
          scsv << axis << ',' << v << ',' << h.mean << ',' << h.std << ',' << n.mean << ','
               << n.std << ',' << h.n << '\n';
          agg["sweeps"][axis][std::to_string(v)] = hrs;
        }
        write_text(out() / ("sweep-" + axis + ".csv"), scsv.str());
      }
      write_json(out() / "report.json", agg);
    });
    return agg;
  }

  // Full pipeline for every configured seed. An empty `only` runs all stages.
  void run(const std::string& only = {}) {
    static const std::set<std::string> known{"synth",   "split",     "train-embed", "train-agent",
                                             "cold-integrate", "recommend", "eval", "sweep",
                                             "report"};
    if (!only.empty() && !known.count(only)) {
      fail(ErrorCode::kInvalidConfig, "unknown stage " + only);
    }
    auto want = [&](const char* s) { return only.empty() || only == s; };
    if (want("synth")) synth();
    for (auto seed : config_.seeds) {
      if (want("split")) split(seed);
      if (want("train-embed")) train_embed(seed);
      if (want("train-agent")) train_agent_stage(seed);
      if (want("cold-integrate")) cold_integrate(seed);
      if (want("recommend")) recommend_stage(seed);
      if (want("eval")) evaluate(seed);
      if (want("sweep")) {
        if (!config_.sweep_interactions.empty()) {
          sweep(seed, SweepAxis::kInteractions, config_.sweep_interactions);
        }
        if (!config_.sweep_relations.empty()) {
          sweep(seed, SweepAxis::kRelations, config_.sweep_relations);
        }
      }
    }
    if (want("report")) report();
  }

  // ---- helpers shared with tests ------------------------------------------

  DatasetSplit load_split(std::uint64_t seed) const {
    auto dir = seed_dir(seed) / "split";
    auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    auto schema = Schema::load(dataset_schema().string());
    return split_from_manifest(manifest, read_triplets((dir / "train.tsv").string(), schema));
  }

  // Training graph + cold items + the given cold users, with cold embeddings
  // under `strategy`. `moved` hidden interactions per user are added as
  // known interactions before the user is embedded.
  template <typename ProfileFn>
  static EvalGraph build_eval_graph(const DatasetSplit& s, const EmbeddingTable& base,
                                    ColdEmbeddingStrategy strategy,
                                    const std::vector<ColdUser>& cold_users, ProfileFn profile_of,
                                    int moved) {
    EvalGraph eg{s.train.next_generation(), base, {}, {}, {}};
    for (const auto& p : s.cold_items) {
      try {
        auto id = integrate_entity(eg.graph, p);
        cold_embedding(eg.table, eg.graph, id, strategy);
        eg.cold_items.push_back(id);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyProfile) throw;
        eg.skipped.push_back(p.type + ":" + p.name);
      }
    }
    for (std::size_t i = 0; i < cold_users.size(); ++i) {
      auto profile = profile_of(cold_users[i]);
      try {
        auto id = integrate_entity(eg.graph, profile);
        if (moved > 0) {
          auto n = std::min(cold_users[i].hidden.size(), static_cast<std::size_t>(moved));
          std::vector<std::string> known(cold_users[i].hidden.begin(),
                                         cold_users[i].hidden.begin() + static_cast<std::ptrdiff_t>(n));
          add_known_interactions(eg.graph, id, known);
        }
        cold_embedding(eg.table, eg.graph, id, strategy);
        eg.cold_users.emplace_back(i, id);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyProfile) throw;
        eg.skipped.push_back(profile.type + ":" + profile.name);
      }
    }
    eg.graph.freeze();
    return eg;
  }

  RecommendationList grecs_list(EntityId user, const PolicyModel& policy, const KnowledgeGraph& graph,
                                const EmbeddingTable& table) const {
    return recommend(user, policy, graph, table, config_.widths, config_.k, config_.agent.max_actions);
  }

 private:
  template <typename Fn>
  void stage(const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  }

  std::string stamp(std::uint64_t seed) const {
    return "config_hash=" + hash_ + " seed=" + std::to_string(seed);
  }

  std::string seed_list() const {
    std::string s;
    for (auto v : config_.seeds) s += (s.empty() ? "" : ";") + std::to_string(v);
    return s;
  }

  fs::path strategy_dir(std::uint64_t seed, ColdEmbeddingStrategy s) const {
    return seed_dir(seed) / ("cold-" + std::string(to_string(s)));
  }

  RewardSpec reward_spec(const Schema& schema) const {
    RewardSpec r;
    r.mode = config_.agent.reward;
    if (r.mode == RewardMode::kPattern) r.patterns = schema_patterns(schema);
    return r;
  }

  static std::string user_type_name(const DatasetSplit& s) {
    return s.train.schema().type_name(s.train.schema().user_type());
  }

  static ColdProfile user_profile(const DatasetSplit& s, const ColdUser& cu) {
    return cu.profile(user_type_name(s));
  }

  static EntityId resolve(const KnowledgeGraph& graph, const std::string& typed) {
    auto tn = parse_typed_name(typed, 0);
    auto id = graph.find_entity(tn.type, tn.name);
    if (!id) fail(ErrorCode::kUnknownEntity, typed);
    return *id;
  }

  // Warm users with a non-empty test set that exist in the graph.
  static std::vector<EntityId> warm_cohort(const DatasetSplit& s, const KnowledgeGraph& graph) {
    std::vector<EntityId> out;
    for (const auto& u : s.warm) {
      if (u.test.empty()) continue;
      if (auto id = graph.find_entity(graph.schema().user_type(), u.user)) out.push_back(*id);
    }
    return out;
  }

  template <typename ListFn>
  void write_recs(const fs::path& path, std::uint64_t seed, const KnowledgeGraph& graph,
                  const std::vector<EntityId>& users, ListFn list_of) const {
    std::ostringstream out;
    for (auto u : users) {
      auto j = recommendations_to_json(list_of(u), graph);
      j["config_hash"] = hash_;
      j["seed"] = seed;
      out << j.dump() << '\n';
    }
    write_text(path, out.str());
  }

  struct ReadRecs {
    EntityId user;
    std::vector<EntityId> items;
    std::vector<std::optional<PathState>> paths;
  };

  std::vector<ReadRecs> read_recs(const fs::path& path, const KnowledgeGraph& graph) const {
    std::vector<ReadRecs> out;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      ReadRecs r{resolve(graph, j.at("user").get<std::string>()), {}, {}};
      for (const auto& item : j.at("items")) {
        r.items.push_back(resolve(graph, item.at("item").get<std::string>()));
        if (item.contains("path")) {
          r.paths.push_back(path_from_json(item.at("path"), graph));
        } else {
          r.paths.push_back(std::nullopt);
        }
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  PathState path_from_json(const nlohmann::json& arr, const KnowledgeGraph& graph) const {
    EntityId user = resolve(graph, arr.at(0).get<std::string>());
    std::vector<Hop> hops;
    for (std::size_t i = 1; i + 1 < arr.size(); i += 2) {
      auto rel = arr.at(i).get<std::string>();
      EntityId e = resolve(graph, arr.at(i + 1).get<std::string>());
      if (rel == "self_loop") {
        hops.push_back({kSelfLoop, Direction::kForward, e});
        continue;
      }
      Direction dir = Direction::kForward;
      if (rel.size() > 3 && rel.compare(rel.size() - 3, 3, "^-1") == 0) {
        dir = Direction::kInverse;
        rel.resize(rel.size() - 3);
      }
      hops.push_back({graph.schema().require_relation(rel), dir, e});
    }
    return path_from_hops(graph, user, static_cast<int>(hops.size()), hops);
  }

  static std::vector<std::string> pattern_keys(const std::vector<ReadRecs>& recs,
                                               const KnowledgeGraph& graph) {
    std::vector<std::string> keys;
    for (const auto& r : recs) {
      for (const auto& p : r.paths) {
        if (p) keys.push_back(pattern_key(*p, graph));
      }
    }
    return keys;
  }

  std::vector<std::pair<std::string, std::vector<EvalUser>>> cohort_users(
      const DatasetSplit& s, const KnowledgeGraph& graph, const std::vector<ReadRecs>& warm,
      const std::vector<ReadRecs>& cold_u, const ItemSet& cold_items) const {
    std::map<std::string, const UserSplit*> warm_by_name;
    for (const auto& u : s.warm) warm_by_name[u.user] = &u;
    std::map<std::string, const ColdUser*> cold_by_name;
    for (const auto& u : s.cold_test) cold_by_name[u.name] = &u;
    auto item_ids = [&](const std::vector<std::string>& names) {
      ItemSet out;
      for (const auto& n : names) {
        if (auto id = graph.find_entity(graph.schema().item_type(), n)) out.insert(*id);
      }
      return out;
    };
    auto user_recs = [&](const ReadRecs& r) {
      auto seen = graph.interacted_items(r.user);
      return UserRecs{r.user, r.items, ItemSet(seen.begin(), seen.end())};
    };
    std::vector<EvalUser> warm_users, cold_item_users, cold_users;
    for (const auto& r : warm) {
      const auto& name = graph.entity(r.user).name;
      auto relevant = item_ids(warm_by_name.at(name)->test);
      ItemSet cold_relevant;
      for (auto i : relevant) {
        if (cold_items.count(i)) cold_relevant.insert(i);
      }
      warm_users.push_back({name, user_recs(r), relevant});
      if (!cold_relevant.empty()) cold_item_users.push_back({name, user_recs(r), cold_relevant});
    }
    for (const auto& r : cold_u) {
      const auto& name = graph.entity(r.user).name;
      cold_users.push_back({name, user_recs(r), item_ids(cold_by_name.at(name)->hidden)});
    }
    return {{"warm", std::move(warm_users)},
            {"cold_user", std::move(cold_users)},
            {"cold_item", std::move(cold_item_users)}};
  }

  static nlohmann::json cohort_json(const CohortMetrics& m) {
    return {{"ndcg", m.ndcg},
            {"hr", m.hr},
            {"popb", m.popb},
            {"cov", m.cov},
            {"prop", m.prop},
            {"users", m.users},
            {"per_user", {{"user", m.user_names}, {"ndcg", m.user_ndcg}, {"hr", m.user_hr}}}};
  }

  static std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
    out << text;
  }

  static void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(1) + "\n");
  }

  RunConfig config_;
  std::string hash_;
};

}  // namespace grecs

#endif  // GRECS_PIPELINE_HPP
