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

#ifndef GRECS_INFERENCE_HPP
#define GRECS_INFERENCE_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "grecs/agent.hpp"
#include "grecs/embed.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

struct ScoredPath {
  PathState path;
  double log_prob = 0;  // sum of action log-probabilities, <= 0

  EntityId terminal() const { return path.terminal(); }
};

// Lexicographic order on (entity sequence, relation sequence); used as the
// final tie-break everywhere paths are ordered.
inline bool path_less(const PathState& a, const PathState& b) {
  auto ea = a.entities();
  auto eb = b.entities();
  if (ea != eb) return ea < eb;
  const auto& ha = a.hops();
  const auto& hb = b.hops();
  for (std::size_t i = 0; i < std::min(ha.size(), hb.size()); ++i) {
    auto ka = std::tie(ha[i].relation, ha[i].direction);
    auto kb = std::tie(hb[i].relation, hb[i].direction);
    if (ka != kb) return ka < kb;
  }
  return ha.size() < hb.size();
}

// Breadth-wise expansion: at hop t every kept partial path is extended by its
// widths[t] most probable actions (ties: lower target id, then relation id,
// then direction). Returns every complete path, most probable first.
inline std::vector<ScoredPath> beam_search(EntityId user, const PolicyModel& policy,
                                           const KnowledgeGraph& graph,
                                           const EmbeddingTable& table,
                                           std::span<const int> widths, int max_actions = 250) {
  if (!graph.contains(user) || !graph.is_user(user)) {
    fail(ErrorCode::kUnknownUser, graph.contains(user) ? graph.describe(user)
                                                       : "#" + std::to_string(user));
  }
  if (widths.size() != static_cast<std::size_t>(policy.hops())) {
    fail(ErrorCode::kInvalidConfig, "need one beam width per hop");
  }
  std::vector<ScoredPath> beam{{PathState(graph, user, policy.hops()), 0.0}};
  for (std::size_t t = 0; t < widths.size(); ++t) {
    std::vector<ScoredPath> next;
    for (const auto& sp : beam) {
      auto acts = valid_actions(sp.path, graph, table, max_actions);
      Vector logp = policy.action_log_probs(encode_state(sp.path, table),
                                            action_features(sp.path, acts, table));
      std::vector<std::size_t> order(acts.size());
      std::iota(order.begin(), order.end(), 0);
      auto target = [&](std::size_t i) {
        return acts[i].is_self_loop() ? sp.path.current() : acts[i].target;
      };
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        auto ia = static_cast<Eigen::Index>(a);
        auto ib = static_cast<Eigen::Index>(b);
        if (logp[ia] != logp[ib]) return logp[ia] > logp[ib];
        return std::make_tuple(target(a), acts[a].relation, acts[a].direction) <
               std::make_tuple(target(b), acts[b].relation, acts[b].direction);
      });
      auto keep = std::min(order.size(), static_cast<std::size_t>(std::max(widths[t], 0)));
      for (std::size_t i = 0; i < keep; ++i) {
        auto a = order[i];
        next.push_back({step(sp.path, acts[a], graph),
                        sp.log_prob + logp[static_cast<Eigen::Index>(a)]});
      }
    }
    beam = std::move(next);
  }
  std::sort(beam.begin(), beam.end(), [](const ScoredPath& a, const ScoredPath& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return path_less(a.path, b.path);
  });
  return beam;
}

struct Recommendation {
  EntityId item = kNoEntity;
  int rank = 0;
  ScoredPath path;
};

struct RecommendationList {
  EntityId user = kNoEntity;
  int k = 0;
  std::vector<Recommendation> items;

  std::vector<EntityId> item_ids() const {
    std::vector<EntityId> out;
    for (const auto& r : items) out.push_back(r.item);
    return out;
  }
};

// Keeps paths ending at items the user has no interaction edge with; one
// entry per item (its most probable path); ordered by log-probability, then
// f(user, item | interaction), then item id; truncated to k.
inline RecommendationList rank_recommendations(std::span<const ScoredPath> paths, int k,
                                               const EmbeddingTable& table,
                                               const KnowledgeGraph& graph, EntityId user) {
  RecommendationList out{user, k, {}};
  if (paths.empty() || k <= 0) return out;
  auto seen = graph.interacted_items(user);
  std::unordered_set<EntityId> interacted(seen.begin(), seen.end());
  std::map<EntityId, const ScoredPath*> best;
  for (const auto& sp : paths) {
    EntityId item = sp.terminal();
    if (!graph.is_item(item) || interacted.count(item)) continue;
    auto [it, inserted] = best.emplace(item, &sp);
    if (inserted) continue;
    const ScoredPath* cur = it->second;
    if (sp.log_prob > cur->log_prob ||
        (sp.log_prob == cur->log_prob && path_less(sp.path, cur->path))) {
      it->second = &sp;
    }
  }
  struct Entry {
    EntityId item;
    const ScoredPath* path;
    double affinity;
  };
  std::vector<Entry> entries;
  RelationId r = graph.interaction_relation();
  for (const auto& [item, sp] : best) {
    entries.push_back({item, sp, score_triplet(table, user, r, item)});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.path->log_prob != b.path->log_prob) return a.path->log_prob > b.path->log_prob;
    if (a.affinity != b.affinity) return a.affinity > b.affinity;
    return a.item < b.item;
  });
  if (entries.size() > static_cast<std::size_t>(k)) entries.resize(static_cast<std::size_t>(k));
  int rank = 1;
  for (const auto& e : entries) out.items.push_back({e.item, rank++, *e.path});
  return out;
}

inline RecommendationList recommend(EntityId user, const PolicyModel& policy,
                                    const KnowledgeGraph& graph, const EmbeddingTable& table,
                                    std::span<const int> widths, int k, int max_actions = 250) {
  auto paths = beam_search(user, policy, graph, table, widths, max_actions);
  return rank_recommendations(paths, k, table, graph, user);
}

// ---------------------------------------------------------------------------
// Explanations.

struct ExplainedHop {
  EntityId from = kNoEntity;
  RelationId relation = 0;
  Direction direction = Direction::kForward;
  EntityId to = kNoEntity;
  std::string text;

  friend bool operator==(const ExplainedHop&, const ExplainedHop&) = default;
};

struct Explanation {
  EntityId user = kNoEntity;
  std::vector<ExplainedHop> hops;  // self-loops elided
  int self_loops = 0;
  bool no_recommendation = false;

  std::string text() const {
    std::string out;
    for (const auto& h : hops) {
      if (!out.empty()) out += "; ";
      out += h.text;
    }
    return out;
  }

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// The ids an explanation stands for: user, effective hops, self-loop count.
struct ExplanationIds {
  EntityId user = kNoEntity;
  std::vector<Hop> hops;
  int self_loops = 0;
};

inline Explanation explain_ids(const KnowledgeGraph& graph, const ExplanationIds& ids) {
  Explanation ex;
  ex.user = ids.user;
  ex.self_loops = ids.self_loops;
  EntityId from = ids.user;
  for (const auto& h : ids.hops) {
    const auto& rel = graph.schema().relation(h.relation);
    const auto& verb = h.direction == Direction::kForward ? rel.name : rel.inverse_name;
    ex.hops.push_back({from, h.relation, h.direction, h.entity,
                       graph.entity(from).name + " " + verb + " " + graph.entity(h.entity).name});
    from = h.entity;
  }
  ex.no_recommendation = ex.hops.empty();
  return ex;
}

inline Explanation explain(const PathState& path, const KnowledgeGraph& graph) {
  if (!path.complete()) fail(ErrorCode::kIncompletePath, "cannot explain a partial path");
  ExplanationIds ids{path.user(), {}, path.self_loops()};
  for (const auto& h : path.hops()) {
    if (!h.is_self_loop()) ids.hops.push_back(h);
  }
  return explain_ids(graph, ids);
}

inline ExplanationIds explanation_ids(const Explanation& ex) {
  ExplanationIds ids{ex.user, {}, ex.self_loops};
  for (const auto& h : ex.hops) ids.hops.push_back({h.relation, h.direction, h.to});
  return ids;
}

// ---------------------------------------------------------------------------
// JSON-lines output.

inline nlohmann::json path_to_json(const PathState& ps, const KnowledgeGraph& graph) {
  nlohmann::json arr = nlohmann::json::array();
  arr.push_back(graph.describe(ps.user()));
  for (const auto& h : ps.hops()) {
    if (h.is_self_loop()) {
      arr.push_back("self_loop");
    } else {
      const auto& name = graph.schema().relation(h.relation).name;
      arr.push_back(h.direction == Direction::kForward ? name : name + "^-1");
    }
    arr.push_back(graph.describe(h.entity));
  }
  return arr;
}

inline nlohmann::json recommendations_to_json(const RecommendationList& recs,
                                              const KnowledgeGraph& graph) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : recs.items) {
    if (r.path.path.user() == kNoEntity) {
      items.push_back({{"item", graph.describe(r.item)}, {"rank", r.rank}});
      continue;
    }
    items.push_back({{"item", graph.describe(r.item)},
                     {"rank", r.rank},
                     {"logprob", r.path.log_prob},
                     {"path", path_to_json(r.path.path, graph)},
                     {"explanation", explain(r.path.path, graph).text()}});
  }
  return {{"user", graph.describe(recs.user)}, {"items", std::move(items)}};
}

inline void write_recommendations(std::ostream& out, std::span<const RecommendationList> lists,
                                  const KnowledgeGraph& graph) {
  for (const auto& l : lists) out << recommendations_to_json(l, graph).dump() << '\n';
}

}  // namespace grecs

#endif  // GRECS_INFERENCE_HPP
