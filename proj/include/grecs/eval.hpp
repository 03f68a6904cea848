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

// Top-K ranking metrics, popularity bias, cold-item coverage, the
// popularity baseline and path-pattern statistics.

#ifndef GRECS_EVAL_HPP
#define GRECS_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "grecs/agent.hpp"
#include "grecs/common.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

using ItemSet = std::unordered_set<EntityId>;

inline std::size_t top_k_size(std::span<const EntityId> recs, int k) {
  return std::min(recs.size(), static_cast<std::size_t>(std::max(k, 0)));
}

// Binary relevance, log2(rank + 1) discount.
inline double ndcg_at_k(std::span<const EntityId> recs, const ItemSet& relevant, int k) {
  double dcg = 0;
  auto n = top_k_size(recs, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(recs[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  if (dcg == 0) return 0.0;
  double idcg = 0;
  auto ideal = std::min(relevant.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

inline double hit_at_k(std::span<const EntityId> recs, const ItemSet& relevant, int k) {
  auto n = top_k_size(recs, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(recs[i])) return 1.0;
  }
  return 0.0;
}

// Training-interaction counts and the global popularity order
// (count descending, id ascending).
class PopularityIndex {
 public:
  explicit PopularityIndex(const KnowledgeGraph& graph) {
    for (auto item : graph.items()) {
      counts_[item] = static_cast<double>(graph.interaction_count(item));
      order_.push_back(item);
    }
    std::stable_sort(order_.begin(), order_.end(),
                     [&](EntityId a, EntityId b) { return counts_.at(a) > counts_.at(b); });
  }

  double count(EntityId item) const {
    auto it = counts_.find(item);
    return it == counts_.end() ? 0.0 : it->second;
  }

  const std::vector<EntityId>& order() const { return order_; }

  // The k most popular items not in `excluded`.
  std::vector<EntityId> top(int k, const ItemSet& excluded) const {
    std::vector<EntityId> out;
    for (auto item : order_) {
      if (static_cast<int>(out.size()) >= k) break;
      if (!excluded.count(item)) out.push_back(item);
    }
    return out;
  }

 private:
  std::unordered_map<EntityId, double> counts_;
  std::vector<EntityId> order_;
};

struct UserRecs {
  EntityId user = kNoEntity;
  std::vector<EntityId> items;  // ranked
  ItemSet excluded;             // the user's training interactions
};

// Per user: popularity mass of the top-k list over the popularity mass of
// the k most popular items the user could have been recommended. Users whose
// candidate mass is zero are skipped.
inline double popb_for_user(const UserRecs& r, const PopularityIndex& pop, int k) {
  double num = 0;
  for (std::size_t i = 0; i < top_k_size(r.items, k); ++i) num += pop.count(r.items[i]);
  double den = 0;
  for (auto item : pop.top(k, r.excluded)) den += pop.count(item);
  return den > 0 ? num / den : -1.0;
}

inline double popb_at_k(std::span<const UserRecs> recs, const PopularityIndex& pop, int k) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& r : recs) {
    double v = popb_for_user(r, pop, k);
    if (v < 0) continue;
    total += v;
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

inline double cold_item_coverage(std::span<const UserRecs> recs, const ItemSet& cold_items, int k) {
  if (cold_items.empty()) fail(ErrorCode::kEmptyColdSet, "no cold items to cover");
  ItemSet seen;
  for (const auto& r : recs) {
    for (std::size_t i = 0; i < top_k_size(r.items, k); ++i) {
      if (cold_items.count(r.items[i])) seen.insert(r.items[i]);
    }
  }
  return static_cast<double>(seen.size()) / static_cast<double>(cold_items.size());
}

inline double cold_item_proportion(std::span<const UserRecs> recs, const ItemSet& cold_items, int k) {
  if (recs.empty() || k <= 0) return 0.0;
  double total = 0;
  for (const auto& r : recs) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < top_k_size(r.items, k); ++i) c += cold_items.count(r.items[i]);
    total += static_cast<double>(c) / k;
  }
  return total / static_cast<double>(recs.size());
}

// Same ranking for everyone, minus the user's own interactions.
class PopBaseline {
 public:
  PopBaseline(const KnowledgeGraph& graph, int k) : graph_(graph), pop_(graph), k_(k) {}

  std::vector<EntityId> recommend(EntityId user) const {
    auto seen = graph_.interacted_items(user);
    return pop_.top(k_, ItemSet(seen.begin(), seen.end()));
  }

  const PopularityIndex& popularity() const { return pop_; }

 private:
  const KnowledgeGraph& graph_;
  PopularityIndex pop_;
  int k_;
};

// ---------------------------------------------------------------------------
// Cohort metrics.

struct CohortMetrics {
  double ndcg = 0, hr = 0, popb = 0, cov = 0, prop = 0;
  std::size_t users = 0;
  // Per-user raw values, aligned with `user_names`.
  std::vector<std::string> user_names;
  std::vector<double> user_ndcg, user_hr;
};

struct EvalUser {
  std::string name;
  UserRecs recs;
  ItemSet relevant;
};

// nDCG/HR average over users with a non-empty relevant set; POPB, Cov and
// Prop over every user of the cohort. Cov is 0 without cold items.
inline CohortMetrics evaluate_cohort(std::span<const EvalUser> users, const PopularityIndex& pop,
                                     const ItemSet& cold_items, int k) {
  CohortMetrics m;
  std::vector<UserRecs> all;
  for (const auto& u : users) {
    all.push_back(u.recs);
    if (u.relevant.empty()) continue;
    double n = ndcg_at_k(u.recs.items, u.relevant, k);
    double h = hit_at_k(u.recs.items, u.relevant, k);
    m.user_names.push_back(u.name);
    m.user_ndcg.push_back(n);
    m.user_hr.push_back(h);
    m.ndcg += n;
    m.hr += h;
  }
  m.users = m.user_names.size();
  if (m.users) {
    m.ndcg /= static_cast<double>(m.users);
    m.hr /= static_cast<double>(m.users);
  }
  m.popb = popb_at_k(all, pop, k);
  m.cov = cold_items.empty() ? 0.0 : cold_item_coverage(all, cold_items, k);
  m.prop = cold_item_proportion(all, cold_items, k);
  return m;
}

struct MeanStd {
  double mean = 0, std = 0;
  std::size_t n = 0;
};

// Sample standard deviation (n - 1); 0 for a single value.
inline MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.n = values.size();
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pattern statistics.

// "user like brand produced_by^-1 product"; trailing self-loops collapsed,
// interior ones rendered as "self_loop".
inline std::string pattern_key(const PathState& ps, const KnowledgeGraph& graph) {
  const auto& schema = graph.schema();
  auto sig = collapsed_signature(ps, graph);
  std::string out = schema.type_name(sig.types[0]);
  for (std::size_t i = 0; i < sig.hops.size(); ++i) {
    const auto& h = sig.hops[i];
    out += ' ';
    if (h.relation == kSelfLoop) {
      out += "self_loop";
    } else {
      out += schema.relation(h.relation).name;
      if (h.direction == Direction::kInverse) out += "^-1";
    }
    out += ' ';
    out += schema.type_name(sig.types[i + 1]);
  }
  return out;
}

// Percentages per pattern and cohort; a pattern absent from a cohort gets 0.
struct PatternReport {
  std::vector<std::string> cohorts;
  std::map<std::string, std::vector<double>> percent;

  double at(const std::string& pattern, const std::string& cohort) const {
    auto c = std::find(cohorts.begin(), cohorts.end(), cohort);
    auto p = percent.find(pattern);
    if (c == cohorts.end() || p == percent.end()) return 0.0;
    return p->second[static_cast<std::size_t>(c - cohorts.begin())];
  }
};

struct CohortPaths {
  std::string cohort;
  std::vector<std::string> keys;  // pattern_key of every chosen path
};

inline PatternReport pattern_report(std::span<const CohortPaths> cohorts) {
  PatternReport r;
  for (const auto& c : cohorts) r.cohorts.push_back(c.cohort);
  for (std::size_t ci = 0; ci < cohorts.size(); ++ci) {
    for (const auto& key : cohorts[ci].keys) {
      auto& row = r.percent[key];
      row.resize(cohorts.size(), 0.0);
      row[ci] += 1.0;
    }
  }
  for (std::size_t ci = 0; ci < cohorts.size(); ++ci) {
    double total = static_cast<double>(cohorts[ci].keys.size());
    for (auto& [key, row] : r.percent) {
      row.resize(cohorts.size(), 0.0);
      row[ci] = total > 0 ? 100.0 * row[ci] / total : 0.0;
    }
  }
  return r;
}

}  // namespace grecs

#endif  // GRECS_EVAL_HPP
