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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance [output_dir]   (default: acceptance-run)

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "grecs/coldstart.hpp"
#include "grecs/pipeline.hpp"
#include "test_support.hpp"

namespace grecs {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Score, conditional probability and cold embedding oracles.

Outcome criterion1() {
  auto t0 = Clock::now();
  double worst_score = 0, worst_prob = 0, worst_cold = 0;
  auto g = testing::random_graph({10, 30, 5, 5, 1, 6}, 101);
  auto t = testing::random_table(g, 16, 102, 0.6);
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<EntityId> pe(0, static_cast<EntityId>(g.num_entities() - 1));
  std::uniform_int_distribution<RelationId> pr(0, static_cast<RelationId>(g.schema().num_relations() - 1));
  for (int i = 0; i < 1000; ++i) {
    EntityId h = pe(rng), tail = pe(rng);
    RelationId r = pr(rng);
    double want = static_cast<double>(testing::naive_score(t, h, r, tail));
    worst_score = std::max(worst_score, testing::relative_error(score_triplet(t, h, r, tail), want));
  }
  auto users = g.users();
  auto items = g.items();
  RelationId purchase = g.interaction_relation();
  for (int i = 0; i < 1000; ++i) {
    EntityId u = users[rng() % users.size()];
    std::vector<EntityId> cands;
    for (auto it : items) {
      if (rng() % 2) cands.push_back(it);
    }
    if (cands.empty()) cands.push_back(items.front());
    EntityId tail = cands[rng() % cands.size()];
    long double z = 0, num = 0;
    for (auto c : cands) {
      long double e = std::exp(testing::naive_score(t, u, purchase, c));
      z += e;
      if (c == tail) num = e;
    }
    double want = static_cast<double>(num / z);
    worst_prob = std::max(worst_prob, testing::relative_error(conditional_prob(t, u, purchase, tail, cands), want));
  }
  for (int i = 0; i < 1000; ++i) {
    auto next = g.next_generation();
    auto table = t;
    bool as_item = rng() % 2;
    ColdProfile p{"cold", as_item ? "product" : "user", {}};
    int n = 1 + static_cast<int>(rng() % 4);
    for (int j = 0; j < n; ++j) {
      bool first = rng() % 2;
      std::string b = "brand:b" + std::to_string(rng() % 5), c = "category:c" + std::to_string(rng() % 5);
      if (as_item) {
        p.relations.push_back(first ? ColdDeclaration{"produced_by", b} : ColdDeclaration{"belong_to", c});
      } else {
        p.relations.push_back(first ? ColdDeclaration{"like", b} : ColdDeclaration{"interested_in", c});
      }
    }
    auto e = integrate_entity(next, p);
    auto got = cold_embedding(table, next, e, ColdEmbeddingStrategy::kAverageTranslation);
    std::vector<long double> acc(static_cast<std::size_t>(t.dim()), 0.0L);
    int count = 0;
    for (const auto& tr : next.triplets()) {
      if (tr.head != e) continue;
      for (int j = 0; j < t.dim(); ++j) {
        acc[static_cast<std::size_t>(j)] +=
            static_cast<long double>(t.entity_matrix()(tr.tail, j)) - t.relation_matrix()(tr.relation, j);
      }
      ++count;
    }
    for (int j = 0; j < t.dim(); ++j) {
      double want = static_cast<double>(acc[static_cast<std::size_t>(j)] / count);
      worst_cold = std::max(worst_cold, testing::relative_error(got.vector[j], want));
    }
  }
  double secs = seconds_since(t0);
  bool pass = worst_score <= 1e-10 && worst_prob <= 1e-10 && worst_cold <= 1e-10 && secs < 10;
  std::ostringstream d;
  d << "max rel err score " << worst_score << ", prob " << worst_prob << ", cold " << worst_cold << "; "
    << fmt("%.2f s", secs);
  return {pass, d.str()};
}

// ---------------------------------------------------------------------------
// 2. Rewards on every complete 3-hop path of a 30-entity graph.

// Pattern match by token comparison: types and relation names along the
// path, trailing self-loops removed.
bool oracle_matches(const PathState& ps, const KnowledgeGraph& g) {
  const auto& s = g.schema();
  std::vector<std::string> tokens{s.type_name(g.entity(ps.user()).type)};
  std::size_t n = ps.hops().size();
  while (n > 0 && ps.hops()[n - 1].is_self_loop()) --n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& h = ps.hops()[i];
    tokens.push_back(h.is_self_loop() ? "self_loop" : s.relation(h.relation).name);
    tokens.push_back(s.type_name(g.entity(h.entity).type));
  }
  for (const auto& p : s.patterns()) {
    if (p == tokens) return true;
  }
  return false;
}

Outcome criterion2() {
  auto t0 = Clock::now();
  auto g = testing::random_graph({8, 14, 4, 4, 1, 4}, 202);
  auto t = testing::random_table(g, 8, 203, 0.5);
  auto policy = PolicyModel(8, 3, 8, 8, 204);
  auto patterns = schema_patterns(g.schema());
  std::size_t paths = 0, mismatches = 0, nonzero_binary = 0, nonzero_pattern = 0;
  for (auto u : g.users()) {
    std::vector<ScoredPath> all;
    testing::enumerate_paths(PathState(g, u, 3), 0.0, policy, g, t, 100000, all);
    auto seen = g.interacted_items(u);
    std::unordered_set<EntityId> train(seen.begin(), seen.end());
    long double item_max = -INFINITY;
    for (auto i : g.items()) item_max = std::max(item_max, testing::naive_score(t, u, g.interaction_relation(), i));
    for (const auto& sp : all) {
      const auto& ps = sp.path;
      ++paths;
      int loops = 0;
      for (const auto& h : ps.hops()) loops += h.is_self_loop() ? 1 : 0;
      double want_binary = (std::find(seen.begin(), seen.end(), ps.terminal()) != seen.end() && loops < 2) ? 1.0 : 0.0;
      double want_pattern = 0;
      if (g.is_item(ps.terminal()) && oracle_matches(ps, g) && item_max > 0) {
        long double f = testing::naive_score(t, u, g.interaction_relation(), ps.terminal());
        want_pattern = static_cast<double>(std::clamp(f / item_max, 0.0L, 1.0L));
      }
      double got_binary = reward_binary(ps, train);
      double got_pattern = reward_pattern(ps, g, t, patterns, item_score_max(t, g, u));
      nonzero_binary += got_binary > 0;
      nonzero_pattern += got_pattern > 0;
      if (got_binary != want_binary || std::abs(got_pattern - want_pattern) > 1e-12) ++mismatches;
    }
  }
  double secs = seconds_since(t0);
  bool pass = g.num_entities() == 30 && paths >= 1000 && mismatches == 0 && nonzero_binary > 0 &&
              nonzero_pattern > 0 && secs < 30;
  std::ostringstream d;
  d << g.num_entities() << " entities, " << paths << " paths, " << mismatches << " mismatches ("
    << nonzero_binary << " binary / " << nonzero_pattern << " pattern rewards > 0); " << fmt("%.2f s", secs);
  return {pass, d.str()};
}

// ---------------------------------------------------------------------------
// 3. Wide beam equals exhaustive ranking.

Outcome criterion3() {
  int graphs_ok = 0;
  std::size_t lists = 0, max_entities = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto g = testing::random_graph({30 + static_cast<int>(seed * 2), 90, 8, 8, 1, 5}, 300 + seed);
    max_entities = std::max(max_entities, g.num_entities());
    auto t = testing::random_table(g, 6, 400 + seed, 0.5);
    PolicyModel p(6, 3, 16, 8, 500 + seed);
    std::mt19937_64 rng(600 + seed);
    std::normal_distribution<double> n(0.0, 0.5);
    for (Eigen::Index i = 0; i < p.params().size(); ++i) p.params()[i] += n(rng);
    std::vector<int> widths(3, testing::max_out_degree(g) + 1);
    bool ok = g.num_entities() <= 200;
    for (auto u : g.users()) {
      std::vector<ScoredPath> all;
      testing::enumerate_paths(PathState(g, u, 3), 0.0, p, g, t, 100000, all);
      std::set<EntityId> seen;
      for (auto i : g.interacted_items(u)) seen.insert(i);
      std::map<EntityId, double> best;
      for (const auto& sp : all) {
        EntityId e = sp.path.terminal();
        if (!g.is_item(e) || seen.count(e)) continue;
        auto it = best.find(e);
        if (it == best.end() || sp.log_prob > it->second) best[e] = sp.log_prob;
      }
      std::vector<std::tuple<double, double, EntityId>> rows;
      for (auto [item, lp] : best) {
        rows.emplace_back(-lp, -static_cast<double>(testing::naive_score(t, u, g.interaction_relation(), item)), item);
      }
      std::sort(rows.begin(), rows.end());
      auto got = recommend(u, p, g, t, widths, 10, 100000);
      std::size_t want_n = std::min<std::size_t>(10, rows.size());
      if (got.items.size() != want_n) ok = false;
      for (std::size_t i = 0; ok && i < want_n; ++i) {
        if (got.items[i].item != std::get<2>(rows[i]) || got.items[i].path.log_prob != -std::get<0>(rows[i])) {
          ok = false;
        }
      }
      ++lists;
    }
    graphs_ok += ok ? 1 : 0;
  }
  std::ostringstream d;
  d << graphs_ok << "/20 graphs exact (" << lists << " lists, max " << max_entities << " entities)";
  return {graphs_ok == 20, d.str()};
}

// ---------------------------------------------------------------------------
// 4. Metric oracles and Pop POPB.

Outcome criterion4() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    auto m = testing::random_metric_instance(7000 + seed);
    for (std::size_t u = 0; u < m.recs.size(); ++u) {
      const auto& items = m.recs[u].items;
      worst = std::max(worst, testing::metric_error(ndcg_at_k(items, m.relevant[u], m.k),
                                                    testing::oracle_ndcg(items, m.relevant[u], m.k)));
      worst = std::max(worst, testing::metric_error(hit_at_k(items, m.relevant[u], m.k),
                                                    testing::oracle_hr(items, m.relevant[u], m.k)));
    }
    PopularityIndex pop(m.graph);
    worst = std::max(worst, testing::metric_error(popb_at_k(m.recs, pop, m.k),
                                                  testing::oracle_popb(m.graph, m.recs, m.k)));
    worst = std::max(worst, testing::metric_error(cold_item_coverage(m.recs, m.cold_items, m.k),
                                                  testing::oracle_cov(m.recs, m.cold_items, m.k)));
    worst = std::max(worst, testing::metric_error(cold_item_proportion(m.recs, m.cold_items, m.k),
                                                  testing::oracle_prop(m.recs, m.cold_items, m.k)));
  }
  bool pop_exact = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto g = testing::random_graph({40, 60, 4, 4, 1, 12}, 8000 + seed);
    PopBaseline pop(g, 10);
    std::vector<UserRecs> recs;
    for (auto u : g.users()) {
      auto seen = g.interacted_items(u);
      recs.push_back({u, pop.recommend(u), ItemSet(seen.begin(), seen.end())});
    }
    pop_exact = pop_exact && popb_at_k(recs, pop.popularity(), 10) == 1.0;
  }
  std::ostringstream d;
  d << "max err " << worst << " over 500 instances; Pop POPB " << (pop_exact ? "== 1.0" : "!= 1.0");
  return {worst <= 1e-12 && pop_exact, d.str()};
}

// ---------------------------------------------------------------------------
// 5. Split protocol.

Outcome criterion5() {
  int clean = 0, identical = 0;
  std::string first_problem;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto g = testing::random_graph({50 + static_cast<int>(seed * 3), 80, 6, 5, 1, 14}, 900 + seed);
    SplitConfig c;
    c.seed = seed;
    auto a = split_dataset(g, c);
    auto bad = testing::split_violations(g, a);
    if (bad.empty()) {
      ++clean;
    } else if (first_problem.empty()) {
      first_problem = "seed " + std::to_string(seed) + ": " + bad.front();
    }
    auto b = split_dataset(g, c);
    std::ostringstream ta, tb;
    write_triplets(ta, a.train);
    write_triplets(tb, b.train);
    identical += (split_manifest(a).dump() == split_manifest(b).dump() && ta.str() == tb.str()) ? 1 : 0;
  }
  std::ostringstream d;
  d << clean << "/50 datasets pass the re-derivation oracle, " << identical << "/50 byte-identical reruns";
  if (!first_problem.empty()) d << " (" << first_problem << ")";
  return {clean == 50 && identical == 50, d.str()};
}

// ---------------------------------------------------------------------------
// 6-10. Default synthetic pipeline on three seeds.

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

struct SeedResults {
  nlohmann::json metrics, summary, sweep;
};

}  // namespace
}  // namespace grecs

int main(int argc, char** argv) {
  using namespace grecs;
  std::string out_dir = argc > 1 ? argv[1] : "acceptance-run";
  int failures = 0;
  auto report = [&](int n, const char* title, const Outcome& o) {
    std::cout << "criterion " << n << " [" << (o.pass ? "PASS" : "FAIL") << "] " << title << ": " << o.detail
              << std::endl;
    failures += o.pass ? 0 : 1;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "formula oracles", guarded(criterion1));
  report(2, "reward correctness", guarded(criterion2));
  report(3, "beam-search soundness", guarded(criterion3));
  report(4, "metric oracles", guarded(criterion4));
  report(5, "split protocol", guarded(criterion5));

  RunConfig config;
  config.output_dir = out_dir;
  config.synthetic = SyntheticSpec{};
  config.seeds = {1, 2, 3};
  std::map<std::uint64_t, SeedResults> results;
  double pipeline_secs = 0;
  std::string pipeline_error;
  try {
    std::filesystem::remove_all(out_dir);
    auto t0 = Clock::now();
    Pipeline p(config);
    p.run();
    pipeline_secs = seconds_since(t0);
    for (auto seed : config.seeds) {
      auto dir = p.seed_dir(seed);
      results[seed] = {read_json(dir / "metrics.json"), read_json(dir / "agent_summary.json"),
                       read_json(dir / "sweep-interactions.json")};
    }
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  if (!pipeline_error.empty()) {
    for (int n = 6; n <= 10; ++n) report(n, "pipeline", {false, "pipeline failed: " + pipeline_error});
    return 1;
  }

  auto per_seed = [&](const std::function<std::pair<bool, std::string>(const SeedResults&)>& check) {
    int wins = 0;
    std::ostringstream d;
    for (const auto& [seed, r] : results) {
      auto [ok, text] = check(r);
      wins += ok ? 1 : 0;
      d << "seed " << seed << ": " << text << (ok ? "" : " (miss)") << "; ";
    }
    d << wins << "/3 seeds";
    return std::make_pair(wins, d.str());
  };

  {
    auto [wins, text] = per_seed([](const SeedResults& r) {
      double learned = r.summary.at("mean_reward_learned").get<double>();
      double uniform = r.summary.at("mean_reward_uniform").get<double>();
      std::ostringstream s;
      s << "learned " << learned << " vs uniform " << uniform;
      return std::make_pair(learned >= 3.0 * uniform && learned > 0, s.str());
    });
    bool fast = pipeline_secs <= 15 * 60;
    report(6, "learning smoke test", {wins >= 2 && fast, text + fmt("; 3-seed pipeline %.0f s", pipeline_secs)});
  }
  {
    auto [wins, text] = per_seed([](const SeedResults& r) {
      double g = r.metrics["models"]["grecs-average"]["cold_user"]["hr"].get<double>();
      double pop = r.metrics["models"]["pop"]["cold_user"]["hr"].get<double>();
      std::ostringstream s;
      s << "HR@10 " << g << " vs Pop " << pop;
      return std::make_pair(g > pop, s.str());
    });
    report(7, "cold-user HR beats Pop", {wins >= 2, text});
  }
  {
    auto [wins, text] = per_seed([](const SeedResults& r) {
      double avg = r.metrics["models"]["grecs-average"]["warm"]["cov"].get<double>();
      double null = r.metrics["models"]["grecs-null"]["warm"]["cov"].get<double>();
      std::ostringstream s;
      s << "Cov average " << avg << " vs null " << null;
      return std::make_pair(avg > null, s.str());
    });
    report(8, "cold-item coverage: average > null", {wins >= 2, text});
  }
  {
    auto [wins, text] = per_seed([](const SeedResults& r) {
      double hr0 = -1, hr1 = -1;
      for (const auto& pt : r.sweep.at("points")) {
        if (pt.at("value") == 0) hr0 = pt.at("hr").get<double>();
        if (pt.at("value") == 1) hr1 = pt.at("hr").get<double>();
      }
      std::ostringstream s;
      s << "HR " << hr0 << " -> " << hr1;
      return std::make_pair(hr0 >= 0 && hr1 >= hr0, s.str());
    });
    report(9, "one known interaction does not hurt HR", {wins >= 2, text});
  }
  {
    bool ok = true;
    double worst_sum = 0, max_interaction_share = 0;
    for (const auto& [seed, r] : results) {
      const auto& pat = r.metrics.at("patterns");
      auto cohorts = pat.at("cohorts").get<std::vector<std::string>>();
      std::vector<double> sums(cohorts.size(), 0.0);
      for (const auto& [key, row] : pat.at("percent").items()) {
        bool interaction_first = key.rfind("user purchase ", 0) == 0;
        for (std::size_t c = 0; c < cohorts.size(); ++c) {
          double v = row.at(c).get<double>();
          sums[c] += v;
          if (interaction_first && cohorts[c].find(":cold_user") != std::string::npos) {
            max_interaction_share = std::max(max_interaction_share, v);
          }
        }
      }
      for (double s : sums) worst_sum = std::max(worst_sum, std::abs(s - 100.0));
    }
    ok = max_interaction_share == 0.0 && worst_sum <= 0.01;
    std::ostringstream d;
    d << "max cold-user share of purchase-first patterns " << max_interaction_share
      << "%, max |sum - 100| " << worst_sum;
    report(10, "pattern report sanity", {ok, d.str()});
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
