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

#ifndef GRECS_DATA_HPP
#define GRECS_DATA_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "grecs/coldstart.hpp"
#include "grecs/common.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

// Applies every derivation rule of the schema to the graph's interactions:
// (u, interaction, i) and (i, via, x) give (u, derived, x). Returns the
// number of new triplets.
inline std::size_t derive_relations(KnowledgeGraph& graph) {
  const auto& schema = graph.schema();
  struct Rule {
    RelationId via, derived;
  };
  std::vector<Rule> rules;
  for (const auto& d : schema.derivations()) {
    rules.push_back({schema.require_relation(d.via), schema.require_relation(d.derived)});
  }
  if (rules.empty()) return 0;
  RelationId interaction = graph.interaction_relation();
  std::vector<Triplet> interactions;
  for (const auto& t : graph.triplets()) {
    if (t.relation == interaction) interactions.push_back(t);
  }
  std::size_t added = 0;
  for (const auto& t : interactions) {
    for (const auto& rule : rules) {
      for (const auto& e : graph.neighbors(t.tail, rule.via)) {
        if (e.direction != Direction::kForward) continue;
        if (graph.has_triplet(t.head, rule.derived, e.neighbor)) continue;
        added += graph.add_triplet(t.head, rule.derived, e.neighbor) ? 1 : 0;
      }
    }
  }
  return added;
}

inline KnowledgeGraph load_dataset(const std::string& triplet_path, const std::string& schema_path) {
  KnowledgeGraph graph = read_triplets(triplet_path, Schema::load(schema_path));
  derive_relations(graph);
  graph.freeze();
  return graph;
}

// Items of each user in interaction (insertion) order, indexed by entity id.
inline std::vector<std::vector<EntityId>> interactions_by_user(const KnowledgeGraph& graph) {
  std::vector<std::vector<EntityId>> out(graph.num_entities());
  for (const auto& t : graph.triplets()) {
    if (t.relation == graph.interaction_relation()) out[t.head].push_back(t.tail);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split protocol.

struct SplitConfig {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  double cold_fraction = 0.2;
  int cap_low = 1;
  int cap_high = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
      fail(ErrorCode::kInvalidConfig, "split fractions must be non-negative and sum to 1");
    }
    if (!(cold_fraction > 0 && cold_fraction < 1)) {
      fail(ErrorCode::kInvalidConfig, "cold fraction must be in (0, 1)");
    }
    if (cap_low < 1 || cap_high < cap_low) {
      fail(ErrorCode::kInvalidConfig, "relation cap range must satisfy 1 <= low <= high");
    }
  }
};

inline void to_json(nlohmann::json& j, const SplitConfig& c) {
  j = {{"train", c.train},     {"val", c.val},   {"test", c.test},
       {"cold_fraction", c.cold_fraction}, {"cap_low", c.cap_low}, {"cap_high", c.cap_high},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SplitConfig& c) {
  c.train = j.value("train", c.train);
  c.val = j.value("val", c.val);
  c.test = j.value("test", c.test);
  c.cold_fraction = j.value("cold_fraction", c.cold_fraction);
  c.cap_low = j.value("cap_low", c.cap_low);
  c.cap_high = j.value("cap_high", c.cap_high);
  c.seed = j.value("seed", c.seed);
}

struct PrefixCounts {
  std::size_t train = 0, val = 0, test = 0;
};

// Train takes ceil(train * n); val takes the ceil of its share of the
// remainder; test gets the rest.
inline PrefixCounts prefix_counts(std::size_t n, const SplitConfig& c) {
  constexpr double kSlack = 1e-9;
  auto ceil_of = [](double x) {
    return static_cast<std::size_t>(std::max(0.0, std::ceil(x - kSlack)));
  };
  PrefixCounts p;
  p.train = std::min(n, ceil_of(c.train * static_cast<double>(n)));
  std::size_t rest = n - p.train;
  double share = (c.val + c.test) > 0 ? c.val / (c.val + c.test) : 0.0;
  p.val = std::min(rest, ceil_of(share * static_cast<double>(rest)));
  p.test = rest - p.val;
  return p;
}

struct UserSplit {
  std::string user;
  std::vector<std::string> train, val, test;  // item names, chronological

  friend bool operator==(const UserSplit&, const UserSplit&) = default;
};

struct RankedTarget {
  std::string target;  // "type:name"
  int count = 0;

  friend bool operator==(const RankedTarget&, const RankedTarget&) = default;
};

struct ColdUser {
  std::string name;
  std::vector<std::string> hidden;  // every interaction, chronological
  // Per relation, all targets by descending frequency (ties: entity id).
  std::map<std::string, std::vector<RankedTarget>> ranked;
  // Sampled number of targets kept per relation.
  std::map<std::string, int> caps;

  // Keeps min(n, available) targets of every relation; n < 0 uses `caps`.
  ColdProfile profile(const std::string& user_type, int n = -1) const {
    ColdProfile p{name, user_type, {}};
    for (const auto& [rel, targets] : ranked) {
      int keep = n >= 0 ? n : caps.at(rel);
      for (int i = 0; i < keep && i < static_cast<int>(targets.size()); ++i) {
        p.relations.push_back({rel, targets[static_cast<std::size_t>(i)].target});
      }
    }
    return p;
  }

  friend bool operator==(const ColdUser&, const ColdUser&) = default;
};

// Top-k targets under the frequency order; all of them when k >= size.
inline std::vector<RankedTarget> top_k_targets(const std::vector<RankedTarget>& ranked, int k) {
  auto n = std::min(ranked.size(), static_cast<std::size_t>(std::max(k, 0)));
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n)};
}

template <typename Rng>
int sample_relation_cap(const SplitConfig& config, Rng& rng) {
  std::uniform_int_distribution<int> dist(config.cap_low, config.cap_high);
  return dist(rng);
}

// Draws k ~ U{cap_low..cap_high} for each relation of the user (relation
// name order) and returns the capped profile.
template <typename Rng>
ColdProfile cap_cold_relations(ColdUser& user, const std::string& user_type,
                               const SplitConfig& config, Rng& rng) {
  user.caps.clear();
  for (const auto& [rel, targets] : user.ranked) user.caps[rel] = sample_relation_cap(config, rng);
  return user.profile(user_type);
}

struct DatasetSplit {
  SplitConfig config;
  KnowledgeGraph train;
  std::vector<UserSplit> warm;
  std::vector<ColdUser> cold_val;
  std::vector<ColdUser> cold_test;
  std::vector<ColdProfile> cold_items;
};

inline DatasetSplit split_dataset(const KnowledgeGraph& graph, const SplitConfig& config) {
  config.validate();
  const auto& schema = graph.schema();
  auto by_user = interactions_by_user(graph);
  auto users = graph.users();
  auto items = graph.items();
  for (auto u : users) {
    if (by_user[u].empty()) fail(ErrorCode::kEmptyUser, graph.describe(u) + " has no interactions");
  }

  std::mt19937_64 rng(config.seed);
  auto carve = [&](std::vector<EntityId> pool) {
    std::shuffle(pool.begin(), pool.end(), rng);
    auto n = static_cast<std::size_t>(
        std::llround(config.cold_fraction * static_cast<double>(pool.size())));
    pool.resize(std::min(n, pool.size()));
    return pool;
  };
  auto cold_user_list = carve(users);
  auto cold_item_list = carve(items);
  std::vector<EntityId> cold_val_ids(cold_user_list.begin(),
                                     cold_user_list.begin() +
                                         static_cast<std::ptrdiff_t>(cold_user_list.size() / 2));
  std::vector<EntityId> cold_test_ids(cold_user_list.begin() +
                                          static_cast<std::ptrdiff_t>(cold_user_list.size() / 2),
                                      cold_user_list.end());
  std::sort(cold_val_ids.begin(), cold_val_ids.end());
  std::sort(cold_test_ids.begin(), cold_test_ids.end());
  std::sort(cold_item_list.begin(), cold_item_list.end());
  std::unordered_set<EntityId> cold(cold_user_list.begin(), cold_user_list.end());
  cold.insert(cold_item_list.begin(), cold_item_list.end());

  DatasetSplit out;
  out.config = config;

  // Chronological prefix split of warm users.
  std::set<std::pair<EntityId, EntityId>> train_pairs;
  for (auto u : users) {
    if (cold.count(u)) continue;
    const auto& seq = by_user[u];
    auto counts = prefix_counts(seq.size(), config);
    UserSplit us;
    us.user = graph.entity(u).name;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto& name = graph.entity(seq[i]).name;
      if (i < counts.train) {
        us.train.push_back(name);
        train_pairs.emplace(u, seq[i]);
      } else if (i < counts.train + counts.val) {
        us.val.push_back(name);
      } else {
        us.test.push_back(name);
      }
    }
    out.warm.push_back(std::move(us));
  }

  // Cold users: frequency-ranked targets of each derived relation, computed
  // from the full hidden history, then capped.
  std::vector<std::pair<RelationId, RelationId>> rules;  // (via, derived)
  for (const auto& d : schema.derivations()) {
    rules.emplace_back(schema.require_relation(d.via), schema.require_relation(d.derived));
  }
  auto make_cold_user = [&](EntityId u) {
    ColdUser cu;
    cu.name = graph.entity(u).name;
    for (auto i : by_user[u]) cu.hidden.push_back(graph.entity(i).name);
    for (const auto& [via, derived] : rules) {
      std::map<EntityId, int> freq;
      for (auto i : by_user[u]) {
        for (const auto& e : graph.neighbors(i, via)) {
          if (e.direction == Direction::kForward && !cold.count(e.neighbor)) ++freq[e.neighbor];
        }
      }
      if (freq.empty()) continue;
      std::vector<std::pair<EntityId, int>> ranked(freq.begin(), freq.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      auto& list = cu.ranked[schema.relation(derived).name];
      for (const auto& [e, c] : ranked) list.push_back({graph.describe(e), c});
    }
    cap_cold_relations(cu, schema.type_name(schema.user_type()), config, rng);
    return cu;
  };
  for (auto u : cold_val_ids) out.cold_val.push_back(make_cold_user(u));
  for (auto u : cold_test_ids) out.cold_test.push_back(make_cold_user(u));

  // Cold items keep their own non-interaction, non-derived triplets.
  for (auto i : cold_item_list) {
    ColdProfile p{graph.entity(i).name, schema.type_name(schema.item_type()), {}};
    for (const auto& e : graph.edges(i)) {
      const auto& rel = schema.relation(e.relation);
      if (e.direction != Direction::kForward || rel.is_interaction || schema.is_derived(e.relation) ||
          cold.count(e.neighbor)) {
        continue;
      }
      p.relations.push_back({rel.name, graph.describe(e.neighbor)});
    }
    out.cold_items.push_back(std::move(p));
  }

  // Training graph: warm entities only, training interactions only, derived
  // relations rebuilt from those interactions.
  out.train = KnowledgeGraph(schema);
  RelationId interaction = graph.interaction_relation();
  for (const auto& t : graph.triplets()) {
    if (schema.is_derived(t.relation) || cold.count(t.head) || cold.count(t.tail)) continue;
    if (t.relation == interaction && !train_pairs.count({t.head, t.tail})) continue;
    auto h = out.train.add_entity(graph.entity(t.head).type, graph.entity(t.head).name);
    auto tl = out.train.add_entity(graph.entity(t.tail).type, graph.entity(t.tail).name);
    out.train.add_triplet(h, t.relation, tl);
  }
  derive_relations(out.train);
  out.train.freeze();
  return out;
}

// ---------------------------------------------------------------------------
// Split manifest.

inline nlohmann::json cold_user_to_json(const ColdUser& cu) {
  nlohmann::json ranked = nlohmann::json::object();
  for (const auto& [rel, list] : cu.ranked) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : list) arr.push_back({t.target, t.count});
    ranked[rel] = std::move(arr);
  }
  return {{"name", cu.name}, {"hidden", cu.hidden}, {"ranked", std::move(ranked)}, {"caps", cu.caps}};
}

inline ColdUser cold_user_from_json(const nlohmann::json& j) {
  ColdUser cu;
  cu.name = j.at("name").get<std::string>();
  cu.hidden = j.at("hidden").get<std::vector<std::string>>();
  for (const auto& [rel, arr] : j.at("ranked").items()) {
    auto& list = cu.ranked[rel];
    for (const auto& t : arr) list.push_back({t.at(0).get<std::string>(), t.at(1).get<int>()});
  }
  cu.caps = j.at("caps").get<std::map<std::string, int>>();
  return cu;
}

inline nlohmann::json split_manifest(const DatasetSplit& s) {
  nlohmann::json j;
  j["format"] = "grecs-split";
  j["version"] = 1;
  j["config"] = s.config;
  nlohmann::json warm = nlohmann::json::array();
  for (const auto& u : s.warm) {
    warm.push_back({{"user", u.user}, {"train", u.train}, {"val", u.val}, {"test", u.test}});
  }
  j["warm_users"] = std::move(warm);
  j["cold_users_val"] = nlohmann::json::array();
  for (const auto& u : s.cold_val) j["cold_users_val"].push_back(cold_user_to_json(u));
  j["cold_users_test"] = nlohmann::json::array();
  for (const auto& u : s.cold_test) j["cold_users_test"].push_back(cold_user_to_json(u));
  j["cold_items"] = s.cold_items;
  return j;
}

inline DatasetSplit split_from_manifest(const nlohmann::json& j, KnowledgeGraph train) {
  if (j.value("format", "") != "grecs-split") fail(ErrorCode::kParseError, "not a split manifest");
  DatasetSplit s;
  s.config = j.at("config").get<SplitConfig>();
  s.train = std::move(train);
  s.train.freeze();
  for (const auto& u : j.at("warm_users")) {
    s.warm.push_back({u.at("user").get<std::string>(), u.at("train").get<std::vector<std::string>>(),
                      u.at("val").get<std::vector<std::string>>(),
                      u.at("test").get<std::vector<std::string>>()});
  }
  for (const auto& u : j.at("cold_users_val")) s.cold_val.push_back(cold_user_from_json(u));
  for (const auto& u : j.at("cold_users_test")) s.cold_test.push_back(cold_user_from_json(u));
  s.cold_items = j.at("cold_items").get<std::vector<ColdProfile>>();
  return s;
}

// ---------------------------------------------------------------------------
// Planted-preference synthetic data.

struct SyntheticSpec {
  int users = 500;
  int items = 300;
  int brands = 10;
  int categories = 8;
  double p_pref = 0.9;
  int min_purchases = 5;
  int max_purchases = 15;
  std::uint64_t seed = 7;

  void validate() const {
    if (users < 1 || items < 1 || brands < 1 || categories < 1) {
      fail(ErrorCode::kInvalidSpec, "entity counts must be positive");
    }
    if (!(p_pref >= 0 && p_pref <= 1)) fail(ErrorCode::kInvalidSpec, "p_pref must be in [0, 1]");
    if (min_purchases < 1 || max_purchases < min_purchases) {
      fail(ErrorCode::kInvalidSpec, "purchase range must satisfy 1 <= min <= max");
    }
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"users", s.users},
       {"items", s.items},
       {"brands", s.brands},
       {"categories", s.categories},
       {"p_pref", s.p_pref},
       {"min_purchases", s.min_purchases},
       {"max_purchases", s.max_purchases},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.users = j.value("users", s.users);
  s.items = j.value("items", s.items);
  s.brands = j.value("brands", s.brands);
  s.categories = j.value("categories", s.categories);
  s.p_pref = j.value("p_pref", s.p_pref);
  s.min_purchases = j.value("min_purchases", s.min_purchases);
  s.max_purchases = j.value("max_purchases", s.max_purchases);
  s.seed = j.value("seed", s.seed);
}

// E-commerce schema: purchases, brands, categories and the two derived
// cold-start relations.
inline Schema ecommerce_schema() {
  Schema s;
  auto user = s.add_type("user");
  auto product = s.add_type("product");
  auto brand = s.add_type("brand");
  auto category = s.add_type("category");
  s.set_user_type(user);
  s.set_item_type(product);
  s.add_relation({"purchase", user, product, true, "purchased_by"});
  s.add_relation({"produced_by", product, brand, false, "produces"});
  s.add_relation({"belong_to", product, category, false, "contains"});
  s.add_relation({"like", user, brand, false, "liked_by"});
  s.add_relation({"interested_in", user, category, false, "interests"});
  s.add_derivation({"like", "produced_by"});
  s.add_derivation({"interested_in", "belong_to"});
  s.add_pattern({"user", "purchase", "product", "purchase", "user", "purchase", "product"});
  s.add_pattern({"user", "purchase", "product", "produced_by", "brand", "produced_by", "product"});
  s.add_pattern({"user", "purchase", "product", "belong_to", "category", "belong_to", "product"});
  s.add_pattern({"user", "like", "brand", "produced_by", "product"});
  s.add_pattern({"user", "interested_in", "category", "belong_to", "product"});
  s.add_pattern({"user", "like", "brand", "like", "user", "purchase", "product"});
  s.add_pattern({"user", "interested_in", "category", "interested_in", "user", "purchase", "product"});
  s.validate();
  return s;
}

struct SyntheticDataset {
  Schema schema;
  std::string triplets;  // TSV text
  std::vector<int> item_brand, item_category;
  std::vector<std::pair<int, int>> preference;   // per user (brand, category)
  std::vector<std::vector<int>> purchases;       // per user, chronological
};

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  ds.schema = ecommerce_schema();
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> pick_brand(0, spec.brands - 1);
  std::uniform_int_distribution<int> pick_cat(0, spec.categories - 1);
  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (int i = 0; i < spec.items; ++i) {
    ds.item_brand.push_back(pick_brand(rng));
    ds.item_category.push_back(pick_cat(rng));
    cells[{ds.item_brand.back(), ds.item_category.back()}].push_back(i);
  }
  std::vector<std::pair<int, int>> nonempty;
  for (const auto& [cell, members] : cells) nonempty.push_back(cell);

  std::ostringstream out;
  for (int i = 0; i < spec.items; ++i) {
    out << "product:p" << i << "\tproduced_by\tbrand:b" << ds.item_brand[i] << '\n';
    out << "product:p" << i << "\tbelong_to\tcategory:c" << ds.item_category[i] << '\n';
  }
  std::uniform_int_distribution<int> pick_cell(0, static_cast<int>(nonempty.size()) - 1);
  std::uniform_int_distribution<int> pick_count(spec.min_purchases, spec.max_purchases);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int u = 0; u < spec.users; ++u) {
    auto pref = nonempty[static_cast<std::size_t>(pick_cell(rng))];
    ds.preference.push_back(pref);
    const auto& pool = cells[pref];
    std::vector<int> bought;
    int n = pick_count(rng);
    for (int draw = 0; draw < n; ++draw) {
      bool preferred = coin(rng) < spec.p_pref;
      auto unbought = [&](int i) { return std::find(bought.begin(), bought.end(), i) == bought.end(); };
      std::vector<int> options;
      if (preferred) {
        for (int i : pool) {
          if (unbought(i)) options.push_back(i);
        }
      }
      // An exhausted preferred cell falls back to a uniform draw, except when
      // p_pref is 1, where it ends the history.
      if (options.empty() && (!preferred || spec.p_pref < 1.0)) {
        for (int i = 0; i < spec.items; ++i) {
          if (unbought(i)) options.push_back(i);
        }
      }
      if (options.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      bought.push_back(options[pick(rng)]);
      out << "user:u" << u << "\tpurchase\tproduct:p" << bought.back() << '\n';
    }
    ds.purchases.push_back(std::move(bought));
  }
  ds.triplets = out.str();
  return ds;
}

inline void write_synthetic(const SyntheticDataset& ds, const std::string& triplet_path,
                            const std::string& schema_path, const std::string& stamp = {}) {
  std::ofstream t(triplet_path, std::ios::binary);
  if (!t) fail(ErrorCode::kIoError, "cannot write " + triplet_path);
  if (!stamp.empty()) t << "# " << stamp << '\n';
  t << ds.triplets;
  std::ofstream s(schema_path, std::ios::binary);
  if (!s) fail(ErrorCode::kIoError, "cannot write " + schema_path);
  s << ds.schema.to_json().dump(2) << '\n';
}

}  // namespace grecs

#endif  // GRECS_DATA_HPP
