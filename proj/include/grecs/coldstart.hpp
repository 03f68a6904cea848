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

// Cold-start integration. A new user or item known only through
// non-interaction relations is attached to an already trained graph and
// given an embedding derived from its neighbours; nothing is retrained.

#ifndef GRECS_COLDSTART_HPP
#define GRECS_COLDSTART_HPP

#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "grecs/common.hpp"
#include "grecs/embed.hpp"
#include "grecs/inference.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

struct ColdDeclaration {
  std::string relation;
  std::string target;  // "type:name"

  friend bool operator==(const ColdDeclaration&, const ColdDeclaration&) = default;
};

struct ColdProfile {
  std::string name;
  std::string type;
  std::vector<ColdDeclaration> relations;

  friend bool operator==(const ColdProfile&, const ColdProfile&) = default;
};

inline void to_json(nlohmann::json& j, const ColdProfile& p) {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& d : p.relations) rels.push_back({{"relation", d.relation}, {"target", d.target}});
  j = {{"name", p.name}, {"type", p.type}, {"relations", std::move(rels)}};
}

inline void from_json(const nlohmann::json& j, ColdProfile& p) {
  p.name = j.at("name").get<std::string>();
  p.type = j.at("type").get<std::string>();
  p.relations.clear();
  for (const auto& r : j.at("relations")) {
    p.relations.push_back({r.at("relation").get<std::string>(), r.at("target").get<std::string>()});
  }
}

inline std::vector<ColdProfile> read_cold_profiles(std::istream& in) {
  std::vector<ColdProfile> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<ColdProfile>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParseError, "cold profile line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_cold_profiles(std::ostream& out, std::span<const ColdProfile> profiles) {
  for (const auto& p : profiles) out << nlohmann::json(p).dump() << '\n';
}

enum class ColdEmbeddingStrategy { kAverageTranslation, kNull };

inline std::string_view to_string(ColdEmbeddingStrategy s) {
  return s == ColdEmbeddingStrategy::kNull ? "null" : "average";
}

inline ColdEmbeddingStrategy parse_cold_strategy(const std::string& s) {
  if (s == "average" || s == "average_translation") return ColdEmbeddingStrategy::kAverageTranslation;
  if (s == "null" || s == "zero") return ColdEmbeddingStrategy::kNull;
  fail(ErrorCode::kInvalidConfig, "unknown cold embedding strategy " + s);
}

// Registers the profile's entity and adds one triplet (entity, relation,
// target) per distinct declaration. Declarations whose target is not in the
// graph are skipped; if none remain the entity is not integrated (EmptyProfile).
inline EntityId integrate_entity(KnowledgeGraph& graph, const ColdProfile& profile) {
  if (profile.relations.empty()) {
    fail(ErrorCode::kEmptyProfile, profile.name + " declares no relations");
  }
  const auto& schema = graph.schema();
  auto type = schema.find_type(profile.type);
  if (!type) fail(ErrorCode::kSchemaViolation, "unknown entity type " + profile.type);
  if (graph.find_entity(*type, profile.name)) {
    fail(ErrorCode::kSchemaViolation, profile.type + ":" + profile.name + " is already in the graph");
  }
  std::vector<std::pair<RelationId, EntityId>> known;
  for (const auto& d : profile.relations) {
    auto r = schema.relation_id(d.relation);
    if (!r) fail(ErrorCode::kSchemaViolation, "unknown relation " + d.relation);
    const auto& rel = schema.relation(*r);
    if (rel.is_interaction) {
      fail(ErrorCode::kSchemaViolation, "cold profiles cannot declare interaction " + d.relation);
    }
    if (rel.head_type != *type) {
      fail(ErrorCode::kSchemaViolation, d.relation + " does not start at " + profile.type);
    }
    auto target = parse_typed_name(d.target, 0);
    auto target_type = schema.find_type(target.type);
    if (!target_type || *target_type != rel.tail_type) {
      fail(ErrorCode::kSchemaViolation, d.target + " is not a valid tail of " + d.relation);
    }
    auto t = graph.find_entity(*target_type, target.name);
    if (t && std::find(known.begin(), known.end(), std::make_pair(*r, *t)) == known.end()) {
      known.emplace_back(*r, *t);
    }
  }
  if (known.empty()) {
    fail(ErrorCode::kEmptyProfile, profile.name + " is not related to any known entity");
  }
  EntityId e = graph.add_entity(*type, profile.name);
  for (const auto& [r, t] : known) graph.add_triplet(e, r, t);
  return e;
}

// Adds interaction triplets for an integrated cold user. Unknown items are
// skipped. Returns the number of edges added.
inline std::size_t add_known_interactions(KnowledgeGraph& graph, EntityId user,
                                          std::span<const std::string> item_names) {
  std::size_t added = 0;
  for (const auto& name : item_names) {
    if (auto item = graph.find_entity(graph.schema().item_type(), name)) {
      added += graph.add_triplet(user, graph.interaction_relation(), *item) ? 1 : 0;
    }
  }
  return added;
}

struct ColdEmbedding {
  Vector vector;
  double bias = 0;
};

// Average translation: mean of (e'_t - r') over the triplets headed at e.
// Null: zeros. The bias is 0 in both cases. The table is extended in place;
// rows of other entities are not touched.
inline ColdEmbedding cold_embedding(EmbeddingTable& table, const KnowledgeGraph& graph, EntityId e,
                                    ColdEmbeddingStrategy strategy) {
  if (!graph.contains(e)) fail(ErrorCode::kUnknownEntity, "entity id " + std::to_string(e));
  ColdEmbedding out{Vector::Zero(table.dim()), 0.0};
  if (strategy == ColdEmbeddingStrategy::kAverageTranslation) {
    std::size_t count = 0;
    for (const auto& edge : graph.edges(e)) {
      if (edge.direction != Direction::kForward) continue;
      if (!table.has_entity(edge.neighbor) || !table.has_relation(edge.relation)) {
        fail(ErrorCode::kMissingNeighborEmbedding, graph.describe(edge.neighbor));
      }
      out.vector += table.entity(edge.neighbor) - table.relation(edge.relation);
      ++count;
    }
    if (count == 0) fail(ErrorCode::kEmptyProfile, graph.describe(e) + " heads no triplets");
    out.vector /= static_cast<double>(count);
  }
  table.set_entity(e, out.vector, out.bias);
  return out;
}

inline RecommendationList recommend_cold(EntityId user, const PolicyModel& policy,
                                         const KnowledgeGraph& graph, const EmbeddingTable& table,
                                         std::span<const int> widths, int k, int max_actions = 250) {
  return recommend(user, policy, graph, table, widths, k, max_actions);
}

}  // namespace grecs

#endif  // GRECS_COLDSTART_HPP
