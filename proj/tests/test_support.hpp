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

// Fixtures shared by the unit and acceptance tests: small e-commerce graphs,
// random graphs and tables, and brute-force reference implementations.

#ifndef GRECS_TESTS_TEST_SUPPORT_HPP
#define GRECS_TESTS_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "grecs/agent.hpp"
#include "grecs/data.hpp"
#include "grecs/embed.hpp"
#include "grecs/eval.hpp"
#include "grecs/inference.hpp"
#include "grecs/kg_store.hpp"

namespace grecs::testing {

struct RandomGraphSpec {
  int users = 6;
  int items = 12;
  int brands = 3;
  int categories = 3;
  int min_purchases = 1;
  int max_purchases = 4;
};

// Random e-commerce graph (derived relations included, frozen).
inline KnowledgeGraph random_graph(const RandomGraphSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  KnowledgeGraph g(ecommerce_schema());
  const auto& s = g.schema();
  std::vector<EntityId> users, items, brands, cats;
  for (int i = 0; i < spec.users; ++i) users.push_back(g.add_entity("user", "u" + std::to_string(i)));
  for (int i = 0; i < spec.items; ++i) items.push_back(g.add_entity("product", "p" + std::to_string(i)));
  for (int i = 0; i < spec.brands; ++i) brands.push_back(g.add_entity("brand", "b" + std::to_string(i)));
  for (int i = 0; i < spec.categories; ++i) {
    cats.push_back(g.add_entity("category", "c" + std::to_string(i)));
  }
  std::uniform_int_distribution<std::size_t> pb(0, brands.size() - 1), pc(0, cats.size() - 1);
  for (auto i : items) {
    g.add_triplet(i, s.require_relation("produced_by"), brands[pb(rng)]);
    g.add_triplet(i, s.require_relation("belong_to"), cats[pc(rng)]);
  }
  std::uniform_int_distribution<int> pn(spec.min_purchases, spec.max_purchases);
  for (auto u : users) {
    auto pool = items;
    std::shuffle(pool.begin(), pool.end(), rng);
    int n = std::min<int>(pn(rng), static_cast<int>(pool.size()));
    for (int k = 0; k < n; ++k) g.add_triplet(u, s.require_relation("purchase"), pool[static_cast<std::size_t>(k)]);
  }
  derive_relations(g);
  g.freeze();
  return g;
}

// Table with N(0, scale^2) entries, biases and self-loop vector.
inline EmbeddingTable random_table(const KnowledgeGraph& g, int dim, std::uint64_t seed,
                                   double scale = 1.0) {
  EmbeddingTable t(g.num_entities(), g.schema().num_relations(), dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (Eigen::Index i = 0; i < t.entity_matrix().size(); ++i) t.entity_matrix().data()[i] = n(rng);
  for (Eigen::Index i = 0; i < t.relation_matrix().size(); ++i) t.relation_matrix().data()[i] = n(rng);
  for (Eigen::Index i = 0; i < t.bias_vector().size(); ++i) t.bias_vector()[i] = n(rng);
  for (Eigen::Index i = 0; i < dim; ++i) t.self_loop()[i] = n(rng);
  return t;
}

// Plain-loop scalar score, independent of Eigen expressions.
inline long double naive_score(const EmbeddingTable& t, EntityId h, RelationId r, EntityId tail) {
  long double acc = 0;
  for (int j = 0; j < t.dim(); ++j) {
    long double rv = r == kSelfLoop ? t.self_loop()[j] : t.relation_matrix()(r, j);
    acc += (static_cast<long double>(t.entity_matrix()(h, j)) + rv) * t.entity_matrix()(tail, j);
  }
  return acc + t.bias_vector()[tail];
}

inline double relative_error(double got, double want) {
  double denom = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / denom;
}

// Every complete path from `user`, with summed policy log-probabilities,
// enumerated depth-first without any pruning.
inline void enumerate_paths(const PathState& ps, double logp, const PolicyModel& policy,
                            const KnowledgeGraph& g, const EmbeddingTable& t, int max_actions,
                            std::vector<ScoredPath>& out) {
  if (ps.complete()) {
    out.push_back({ps, logp});
    return;
  }
  auto acts = valid_actions(ps, g, t, max_actions);
  Vector lp = policy.action_log_probs(encode_state(ps, t), action_features(ps, acts, t));
  for (std::size_t i = 0; i < acts.size(); ++i) {
    enumerate_paths(step(ps, acts[i], g), logp + lp[static_cast<Eigen::Index>(i)], policy, g, t,
                    max_actions, out);
  }
}

// Independent checker for split_dataset: re-derives every cohort and count
// from the raw graph with integer arithmetic (default 0.8/0.1/0.1 fractions)
// and returns one message per violated property.
inline std::vector<std::string> split_violations(const KnowledgeGraph& raw, const DatasetSplit& s) {
  std::vector<std::string> bad;
  const auto& schema = raw.schema();
  RelationId purchase = raw.interaction_relation();
  std::map<std::string, std::vector<std::string>> history;
  for (const auto& t : raw.triplets()) {
    if (t.relation == purchase) history[raw.entity(t.head).name].push_back(raw.entity(t.tail).name);
  }
  std::set<std::string> cold_users, cold_items;
  for (const auto& c : s.cold_val) cold_users.insert(c.name);
  for (const auto& c : s.cold_test) cold_users.insert(c.name);
  for (const auto& c : s.cold_items) cold_items.insert(c.name);
  auto n_users = raw.users().size(), n_items = raw.items().size();
  auto fifth = [](std::size_t n) { return (2 * n + 5) / 10; };  // llround(0.2 n); .5 rounds up
  if (cold_users.size() != fifth(n_users)) bad.push_back("cold user count");
  if (cold_items.size() != fifth(n_items)) bad.push_back("cold item count");
  if (s.cold_val.size() != cold_users.size() / 2) bad.push_back("cold val half");
  if (cold_users.size() != s.cold_val.size() + s.cold_test.size()) bad.push_back("cold users overlap");

  // Chronological prefix partition of warm users.
  std::set<std::string> warm_seen;
  std::set<std::pair<std::string, std::string>> expected_train;
  for (const auto& w : s.warm) {
    if (cold_users.count(w.user)) bad.push_back("cold user " + w.user + " in warm cohort");
    warm_seen.insert(w.user);
    const auto& seq = history[w.user];
    std::size_t n = seq.size();
    std::size_t tr = (8 * n + 9) / 10, va = (n - tr + 1) / 2;
    if (w.train.size() != tr || w.val.size() != va || w.test.size() != n - tr - va) {
      bad.push_back("prefix counts of " + w.user);
    }
    std::vector<std::string> joined = w.train;
    joined.insert(joined.end(), w.val.begin(), w.val.end());
    joined.insert(joined.end(), w.test.begin(), w.test.end());
    if (joined != seq) bad.push_back("partition of " + w.user);
    for (const auto& i : w.train) {
      if (!cold_items.count(i)) expected_train.insert({w.user, i});
    }
  }
  if (warm_seen.size() + cold_users.size() != n_users) bad.push_back("users not covered");

  // Training graph: no cold entity, exactly the warm train interactions,
  // raw attribute triplets among warm entities, derived edges by join.
  const auto& g = s.train;
  std::set<std::pair<std::string, std::string>> got_train;
  std::set<std::tuple<std::string, RelationId, std::string>> got_attr, want_attr, got_derived, want_derived;
  std::map<std::string, std::vector<std::pair<RelationId, std::string>>> item_attrs;
  for (const auto& t : g.triplets()) {
    const auto& h = g.entity(t.head);
    const auto& tl = g.entity(t.tail);
    bool h_cold = (h.type == schema.user_type() && cold_users.count(h.name)) ||
                  (h.type == schema.item_type() && cold_items.count(h.name));
    bool t_cold = tl.type == schema.item_type() && cold_items.count(tl.name);
    if (h_cold || t_cold) bad.push_back("cold entity in training triplet");
    if (t.relation == purchase) {
      got_train.insert({h.name, tl.name});
    } else if (schema.is_derived(t.relation)) {
      got_derived.insert({g.describe(t.head), t.relation, g.describe(t.tail)});
    } else {
      got_attr.insert({g.describe(t.head), t.relation, g.describe(t.tail)});
    }
  }
  if (got_train != expected_train) bad.push_back("training interactions differ from warm prefixes");
  for (const auto& t : raw.triplets()) {
    if (t.relation == purchase || schema.is_derived(t.relation)) continue;
    const auto& h = raw.entity(t.head);
    if (h.type == schema.item_type() && cold_items.count(h.name)) continue;
    want_attr.insert({raw.describe(t.head), t.relation, raw.describe(t.tail)});
    item_attrs[h.name].push_back({t.relation, raw.describe(t.tail)});
  }
  if (got_attr != want_attr) bad.push_back("attribute triplets differ");
  for (const auto& d : schema.derivations()) {
    RelationId via = schema.require_relation(d.via), derived = schema.require_relation(d.derived);
    for (const auto& [u, i] : expected_train) {
      for (const auto& [r, target] : item_attrs[i]) {
        if (r == via) want_derived.insert({schema.type_name(schema.user_type()) + ":" + u, derived, target});
      }
    }
  }
  if (got_derived != want_derived) bad.push_back("derived triplets differ from join");

  // Cold users: hidden history, frequency ranking, caps.
  for (const auto* cohort : {&s.cold_val, &s.cold_test}) {
    for (const auto& cu : *cohort) {
      if (cu.hidden != history[cu.name]) bad.push_back("hidden history of " + cu.name);
      for (const auto& d : schema.derivations()) {
        RelationId via = schema.require_relation(d.via);
        std::map<std::string, int> freq;
        for (const auto& i : cu.hidden) {
          if (cold_items.count(i)) {
            auto e = *raw.find_entity(schema.item_type(), i);
            for (const auto& t : raw.triplets()) {
              if (t.head == e && t.relation == via) ++freq[raw.describe(t.tail)];
            }
            continue;
          }
          for (const auto& [r, target] : item_attrs[i]) {
            if (r == via) ++freq[target];
          }
        }
        auto it = cu.ranked.find(d.derived);
        if (freq.empty()) {
          if (it != cu.ranked.end()) bad.push_back("spurious relation for " + cu.name);
          continue;
        }
        if (it == cu.ranked.end()) {
          bad.push_back("missing relation for " + cu.name);
          continue;
        }
        std::map<std::string, int> listed;
        for (const auto& rt : it->second) listed[rt.target] = rt.count;
        if (listed != freq) bad.push_back("frequencies of " + cu.name);
        for (std::size_t k = 1; k < it->second.size(); ++k) {
          const auto& a = it->second[k - 1];
          const auto& b = it->second[k];
          auto ida = raw.find_entity(parse_typed_name(a.target, 0).type, parse_typed_name(a.target, 0).name);
          auto idb = raw.find_entity(parse_typed_name(b.target, 0).type, parse_typed_name(b.target, 0).name);
          if (a.count < b.count || (a.count == b.count && *ida > *idb)) bad.push_back("ranking of " + cu.name);
        }
        int cap = cu.caps.count(d.derived) ? cu.caps.at(d.derived) : 0;
        if (cap < 1 || cap > 10) bad.push_back("cap out of range for " + cu.name);
        auto profile = cu.profile(schema.type_name(schema.user_type()));
        int kept = 0;
        for (const auto& decl : profile.relations) kept += decl.relation == d.derived ? 1 : 0;
        if (kept != std::min<int>(cap, static_cast<int>(it->second.size()))) bad.push_back("capped size");
        if (kept < 1 || kept > 10) bad.push_back("capped relation count outside [1,10]");
      }
    }
  }
  return bad;
}

// Random recommendation instance for metric oracles.
struct MetricInstance {
  KnowledgeGraph graph{ecommerce_schema()};
  std::vector<UserRecs> recs;
  std::vector<ItemSet> relevant;
  ItemSet cold_items;
  int k = 10;
};

inline MetricInstance random_metric_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MetricInstance m;
  m.graph = random_graph({12, 30, 3, 3, 0, 12}, seed);
  m.k = 1 + static_cast<int>(rng() % 12);
  auto items = m.graph.items();
  for (auto i : items) {
    if (rng() % 4 == 0) m.cold_items.insert(i);
  }
  if (m.cold_items.empty()) m.cold_items.insert(items.front());
  for (auto u : m.graph.users()) {
    UserRecs r;
    r.user = u;
    auto seen = m.graph.interacted_items(u);
    r.excluded = ItemSet(seen.begin(), seen.end());
    auto pool = items;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(rng() % (static_cast<std::size_t>(m.k) + 5));
    r.items = pool;
    ItemSet rel;
    for (auto i : items) {
      if (rng() % 6 == 0) rel.insert(i);
    }
    m.recs.push_back(std::move(r));
    m.relevant.push_back(std::move(rel));
  }
  return m;
}

inline double oracle_ndcg(const std::vector<EntityId>& recs, const ItemSet& rel, int k) {
  long double dcg = 0, idcg = 0;
  for (int pos = 1; pos <= k && pos <= static_cast<int>(recs.size()); ++pos) {
    if (rel.count(recs[static_cast<std::size_t>(pos - 1)])) dcg += 1.0L / std::log2(static_cast<long double>(pos) + 1);
  }
  for (int pos = 1; pos <= k && pos <= static_cast<int>(rel.size()); ++pos) {
    idcg += 1.0L / std::log2(static_cast<long double>(pos) + 1);
  }
  return idcg > 0 ? static_cast<double>(dcg / idcg) : 0.0;
}

inline double oracle_hr(const std::vector<EntityId>& recs, const ItemSet& rel, int k) {
  for (int pos = 0; pos < k && pos < static_cast<int>(recs.size()); ++pos) {
    if (rel.count(recs[static_cast<std::size_t>(pos)])) return 1.0;
  }
  return 0.0;
}

// Popularity recounted from raw triplets; candidates ranked by count then id.
inline double oracle_popb(const KnowledgeGraph& g, const std::vector<UserRecs>& recs, int k) {
  std::map<EntityId, long double> count;
  for (auto i : g.items()) count[i] = 0;
  for (const auto& t : g.triplets()) {
    if (t.relation == g.interaction_relation()) count[t.tail] += 1;
  }
  std::vector<std::pair<long double, EntityId>> ranked;
  for (auto [i, c] : count) ranked.push_back({-c, i});
  std::sort(ranked.begin(), ranked.end());
  long double total = 0;
  int users = 0;
  for (const auto& r : recs) {
    long double num = 0, den = 0;
    for (int pos = 0; pos < k && pos < static_cast<int>(r.items.size()); ++pos) {
      num += count[r.items[static_cast<std::size_t>(pos)]];
    }
    int taken = 0;
    for (const auto& [neg, i] : ranked) {
      if (taken == k) break;
      if (r.excluded.count(i)) continue;
      den += -neg;
      ++taken;
    }
    if (den <= 0) continue;
    total += num / den;
    ++users;
  }
  return users ? static_cast<double>(total / users) : 0.0;
}

inline double oracle_cov(const std::vector<UserRecs>& recs, const ItemSet& cold, int k) {
  std::set<EntityId> hit;
  for (const auto& r : recs) {
    for (int pos = 0; pos < k && pos < static_cast<int>(r.items.size()); ++pos) {
      auto i = r.items[static_cast<std::size_t>(pos)];
      if (cold.count(i)) hit.insert(i);
    }
  }
  return static_cast<double>(static_cast<long double>(hit.size()) / cold.size());
}

inline double oracle_prop(const std::vector<UserRecs>& recs, const ItemSet& cold, int k) {
  long double total = 0;
  for (const auto& r : recs) {
    int c = 0;
    for (int pos = 0; pos < k && pos < static_cast<int>(r.items.size()); ++pos) {
      c += cold.count(r.items[static_cast<std::size_t>(pos)]) ? 1 : 0;
    }
    total += static_cast<long double>(c) / k;
  }
  return recs.empty() ? 0.0 : static_cast<double>(total / recs.size());
}

// Relative error; absolute when the reference is 0.
inline double metric_error(double got, double want) {
  return want == 0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
}

inline int max_out_degree(const KnowledgeGraph& g) {
  std::size_t best = 0;
  for (EntityId e = 0; e < g.num_entities(); ++e) best = std::max(best, g.edges(e).size());
  return static_cast<int>(best);
}

// Code of the grecs::Error thrown by fn; nullopt when nothing is thrown.
template <typename Fn>
std::optional<ErrorCode> code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("grecs-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace grecs::testing

#endif  // GRECS_TESTS_TEST_SUPPORT_HPP
