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

// Typed triplet store. Every triplet is stored once and indexed from both
// endpoints, so a triplet (h, r, t) is traversable as h -r-> t (forward) and
// t -r-> h (inverse).

#ifndef GRECS_KG_STORE_HPP
#define GRECS_KG_STORE_HPP

#include <algorithm>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "grecs/common.hpp"

namespace grecs {

enum class Direction : std::uint8_t { kForward = 0, kInverse = 1 };

struct RelationSchema {
  std::string name;
  TypeId head_type = 0;
  TypeId tail_type = 0;
  bool is_interaction = false;
  // Human-readable name used when the relation is walked tail -> head.
  std::string inverse_name;
};

// (user, interaction, item) + (item, via, x)  =>  (user, derived, x)
struct DerivationRule {
  std::string derived;
  std::string via;
};

class Schema {
 public:
  Schema() = default;

  static Schema from_json(const nlohmann::json& j) {
    Schema s;
    for (const auto& t : j.at("entity_types")) s.add_type(t.get<std::string>());
    s.user_type_ = s.type_id(j.at("user_type").get<std::string>());
    s.item_type_ = s.type_id(j.at("item_type").get<std::string>());
    for (const auto& r : j.at("relations")) {
      RelationSchema rel;
      rel.name = r.at("name").get<std::string>();
      rel.head_type = s.type_id(r.at("head").get<std::string>());
      rel.tail_type = s.type_id(r.at("tail").get<std::string>());
      rel.is_interaction = r.value("interaction", false);
      rel.inverse_name = r.value("inverse", rel.name + "_inverse");
      s.add_relation(std::move(rel));
    }
    if (j.contains("derived")) {
      for (const auto& d : j.at("derived")) {
        s.derivations_.push_back(
            {d.at("name").get<std::string>(), d.at("via").get<std::string>()});
      }
    }
    if (j.contains("patterns")) {
      for (const auto& p : j.at("patterns")) {
        s.patterns_.push_back(p.get<std::vector<std::string>>());
      }
    }
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["entity_types"] = types_;
    j["user_type"] = types_.at(user_type_);
    j["item_type"] = types_.at(item_type_);
    j["relations"] = nlohmann::json::array();
    for (const auto& r : relations_) {
      j["relations"].push_back({{"name", r.name},
                                {"head", types_.at(r.head_type)},
                                {"tail", types_.at(r.tail_type)},
                                {"interaction", r.is_interaction},
                                {"inverse", r.inverse_name}});
    }
    j["derived"] = nlohmann::json::array();
    for (const auto& d : derivations_) {
      j["derived"].push_back({{"name", d.derived}, {"via", d.via}});
    }
    j["patterns"] = patterns_;
    return j;
  }

  static Schema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIoError, "cannot open schema file " + path);
    nlohmann::json j;
    try {
      in >> j;
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParseError, path + ": " + e.what());
    }
  }

  TypeId add_type(const std::string& name) {
    if (auto it = type_index_.find(name); it != type_index_.end()) return it->second;
    auto id = static_cast<TypeId>(types_.size());
    types_.push_back(name);
    type_index_.emplace(name, id);
    return id;
  }

  RelationId add_relation(RelationSchema rel) {
    if (relation_index_.count(rel.name)) {
      fail(ErrorCode::kSchemaViolation, "duplicate relation " + rel.name);
    }
    auto id = static_cast<RelationId>(relations_.size());
    relation_index_.emplace(rel.name, id);
    relations_.push_back(std::move(rel));
    return id;
  }

  void set_user_type(TypeId t) { user_type_ = t; }
  void set_item_type(TypeId t) { item_type_ = t; }
  void add_derivation(DerivationRule rule) { derivations_.push_back(std::move(rule)); }
  void add_pattern(std::vector<std::string> tokens) { patterns_.push_back(std::move(tokens)); }

  // Exactly one interaction relation, and it must go User -> Item.
  void validate() const {
    int interactions = 0;
    for (const auto& r : relations_) {
      if (!r.is_interaction) continue;
      ++interactions;
      if (r.head_type != user_type_ || r.tail_type != item_type_) {
        fail(ErrorCode::kSchemaViolation,
             "interaction relation " + r.name + " must be user -> item");
      }
    }
    if (interactions != 1) {
      fail(ErrorCode::kSchemaViolation,
           "schema must flag exactly one interaction relation, found " +
               std::to_string(interactions));
    }
    for (const auto& d : derivations_) {
      auto via = relation_id(d.via);
      auto derived = relation_id(d.derived);
      if (!via || !derived) {
        fail(ErrorCode::kSchemaViolation, "derivation references unknown relation");
      }
      const auto& v = relations_[*via];
      const auto& dr = relations_[*derived];
      if (v.head_type != item_type_ || dr.head_type != user_type_ ||
          dr.tail_type != v.tail_type) {
        fail(ErrorCode::kSchemaViolation, "derivation " + d.derived + " is ill-typed");
      }
    }
  }

  std::optional<TypeId> find_type(const std::string& name) const {
    auto it = type_index_.find(name);
    if (it == type_index_.end()) return std::nullopt;
    return it->second;
  }

  TypeId type_id(const std::string& name) const {
    auto t = find_type(name);
    if (!t) fail(ErrorCode::kSchemaViolation, "unknown entity type " + name);
    return *t;
  }

  std::optional<RelationId> relation_id(const std::string& name) const {
    auto it = relation_index_.find(name);
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }

  RelationId require_relation(const std::string& name) const {
    auto r = relation_id(name);
    if (!r) fail(ErrorCode::kUnknownRelation, name);
    return *r;
  }

  const std::string& type_name(TypeId t) const { return types_.at(t); }
  const RelationSchema& relation(RelationId r) const { return relations_.at(r); }
  std::size_t num_types() const { return types_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  TypeId user_type() const { return user_type_; }
  TypeId item_type() const { return item_type_; }
  const std::vector<DerivationRule>& derivations() const { return derivations_; }
  const std::vector<std::vector<std::string>>& patterns() const { return patterns_; }

  RelationId interaction_relation() const {
    for (RelationId r = 0; r < relations_.size(); ++r) {
      if (relations_[r].is_interaction) return r;
    }
    fail(ErrorCode::kSchemaViolation, "no interaction relation");
  }

  bool is_derived(RelationId r) const {
    const auto& name = relations_.at(r).name;
    return std::any_of(derivations_.begin(), derivations_.end(),
                       [&](const DerivationRule& d) { return d.derived == name; });
  }

  bool operator==(const Schema& other) const {
    return to_json() == other.to_json();
  }

 private:
  std::vector<std::string> types_;
  std::unordered_map<std::string, TypeId> type_index_;
  std::vector<RelationSchema> relations_;
  std::unordered_map<std::string, RelationId> relation_index_;
  TypeId user_type_ = 0;
  TypeId item_type_ = 0;
  std::vector<DerivationRule> derivations_;
  std::vector<std::vector<std::string>> patterns_;
};

struct Triplet {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct Edge {
  RelationId relation = 0;
  EntityId neighbor = 0;
  Direction direction = Direction::kForward;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend bool operator<(const Edge& a, const Edge& b) {
    return std::tie(a.relation, a.neighbor, a.direction) <
           std::tie(b.relation, b.neighbor, b.direction);
  }
};

struct Entity {
  std::string name;
  TypeId type = 0;

  friend bool operator==(const Entity&, const Entity&) = default;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(Schema schema) : schema_(std::move(schema)) {
    interaction_ = schema_.interaction_relation();
  }

  const Schema& schema() const { return schema_; }
  RelationId interaction_relation() const { return interaction_; }

  EntityId add_entity(TypeId type, const std::string& name) {
    if (type >= schema_.num_types()) {
      fail(ErrorCode::kSchemaViolation, "unknown type id for entity " + name);
    }
    auto key = entity_key(type, name);
    if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
    require_mutable();
    auto id = static_cast<EntityId>(entities_.size());
    entities_.push_back({name, type});
    by_key_.emplace(std::move(key), id);
    adjacency_.emplace_back();
    interactions_.push_back(0);
    return id;
  }

  EntityId add_entity(const std::string& type_name, const std::string& name) {
    return add_entity(schema_.type_id(type_name), name);
  }

  std::optional<EntityId> find_entity(TypeId type, const std::string& name) const {
    auto it = by_key_.find(entity_key(type, name));
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<EntityId> find_entity(const std::string& type_name,
                                      const std::string& name) const {
    auto t = schema_.find_type(type_name);
    if (!t) return std::nullopt;
    return find_entity(*t, name);
  }

  // Returns true when the triplet was new. Duplicates are dropped.
  bool add_triplet(EntityId head, RelationId relation, EntityId tail) {
    check_entity(head);
    check_entity(tail);
    if (relation >= schema_.num_relations()) {
      fail(ErrorCode::kUnknownRelation, "relation id " + std::to_string(relation));
    }
    const auto& rel = schema_.relation(relation);
    if (entities_[head].type != rel.head_type || entities_[tail].type != rel.tail_type) {
      fail(ErrorCode::kSchemaViolation,
           "(" + describe(head) + ", " + rel.name + ", " + describe(tail) +
               ") violates " + schema_.type_name(rel.head_type) + " -> " +
               schema_.type_name(rel.tail_type));
    }
    Triplet t{head, relation, tail};
    if (triplet_set_.count(t)) {
      if (!warned_duplicate_) {
        log_warning("duplicate triplet dropped: (" + describe(head) + ", " + rel.name +
                    ", " + describe(tail) + ")");
        warned_duplicate_ = true;
      }
      return false;
    }
    require_mutable();
    triplet_set_.insert(t);
    triplets_.push_back(t);
    insert_sorted(adjacency_[head], Edge{relation, tail, Direction::kForward});
    insert_sorted(adjacency_[tail], Edge{relation, head, Direction::kInverse});
    if (rel.is_interaction) ++interactions_[tail];
    return true;
  }

  bool has_triplet(EntityId head, RelationId relation, EntityId tail) const {
    return triplet_set_.count(Triplet{head, relation, tail}) > 0;
  }

  // All edges incident to e, sorted by (relation, neighbor, direction).
  std::span<const Edge> edges(EntityId e) const {
    check_entity(e);
    return adjacency_[e];
  }

  std::vector<Edge> neighbors(EntityId e,
                              std::optional<RelationId> relation_filter = std::nullopt) const {
    auto all = edges(e);
    if (!relation_filter) return {all.begin(), all.end()};
    std::vector<Edge> out;
    for (const auto& edge : all) {
      if (edge.relation == *relation_filter) out.push_back(edge);
    }
    return out;
  }

  std::size_t interaction_count(EntityId item) const {
    check_entity(item);
    if (entities_[item].type != schema_.item_type()) {
      fail(ErrorCode::kNotAnItem, describe(item));
    }
    return interactions_[item];
  }

  // Items the user interacted with, ascending id.
  std::vector<EntityId> interacted_items(EntityId user) const {
    std::vector<EntityId> out;
    for (const auto& e : edges(user)) {
      if (e.relation == interaction_ && e.direction == Direction::kForward) {
        out.push_back(e.neighbor);
      }
    }
    return out;
  }

  std::vector<EntityId> entities_of_type(TypeId type) const {
    std::vector<EntityId> out;
    for (EntityId e = 0; e < entities_.size(); ++e) {
      if (entities_[e].type == type) out.push_back(e);
    }
    return out;
  }

  std::vector<EntityId> users() const { return entities_of_type(schema_.user_type()); }
  std::vector<EntityId> items() const { return entities_of_type(schema_.item_type()); }

  bool is_user(EntityId e) const { return entity(e).type == schema_.user_type(); }
  bool is_item(EntityId e) const { return entity(e).type == schema_.item_type(); }

  const Entity& entity(EntityId e) const {
    check_entity(e);
    return entities_[e];
  }

  bool contains(EntityId e) const { return e < entities_.size(); }

  std::string describe(EntityId e) const {
    if (!contains(e)) return "#" + std::to_string(e);
    return schema_.type_name(entities_[e].type) + ":" + entities_[e].name;
  }

  const std::vector<Triplet>& triplets() const { return triplets_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_triplets() const { return triplets_.size(); }
  const std::vector<Entity>& entity_list() const { return entities_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // Unfrozen copy that shares no state with this graph.
  KnowledgeGraph next_generation() const {
    KnowledgeGraph copy = *this;
    copy.frozen_ = false;
    return copy;
  }

  bool operator==(const KnowledgeGraph& other) const {
    return schema_ == other.schema_ && entities_ == other.entities_ &&
           triplets_ == other.triplets_ && adjacency_ == other.adjacency_ &&
           interactions_ == other.interactions_;
  }

 private:
  struct TripletHash {
    std::size_t operator()(const Triplet& t) const noexcept {
      std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) ^ t.tail;
      h ^= static_cast<std::uint64_t>(t.relation) * 0x9E3779B97F4A7C15ULL;
      return std::hash<std::uint64_t>{}(h);
    }
  };

  static std::string entity_key(TypeId type, const std::string& name) {
    return std::to_string(type) + ':' + name;
  }

  static void insert_sorted(std::vector<Edge>& list, const Edge& edge) {
    list.insert(std::upper_bound(list.begin(), list.end(), edge), edge);
  }

  void check_entity(EntityId e) const {
    if (e >= entities_.size()) {
      fail(ErrorCode::kUnknownEntity, "entity id " + std::to_string(e));
    }
  }

  void require_mutable() const {
    if (frozen_) fail(ErrorCode::kFrozenGraph, "graph is frozen");
  }

  Schema schema_;
  RelationId interaction_ = 0;
  std::vector<Entity> entities_;
  std::unordered_map<std::string, EntityId> by_key_;
  std::vector<Triplet> triplets_;
  std::unordered_set<Triplet, TripletHash> triplet_set_;
  std::vector<std::vector<Edge>> adjacency_;
  std::vector<std::uint32_t> interactions_;
  bool frozen_ = false;
  bool warned_duplicate_ = false;
};

// ---------------------------------------------------------------------------
// Triplet TSV: `head_type:head_name \t relation \t tail_type:tail_name`.

struct TypedName {
  std::string type;
  std::string name;
};

inline TypedName parse_typed_name(const std::string& token, std::size_t line) {
  auto colon = token.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == token.size()) {
    fail(ErrorCode::kParseError,
         "line " + std::to_string(line) + ": expected type:name, got '" + token + "'");
  }
  return {token.substr(0, colon), token.substr(colon + 1)};
}

struct RawTriplet {
  TypedName head;
  std::string relation;
  TypedName tail;
};

inline std::vector<RawTriplet> parse_triplets(std::istream& in) {
  std::vector<RawTriplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      fail(ErrorCode::kParseError,
           "line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    out.push_back({parse_typed_name(fields[0], lineno), fields[1],
                   parse_typed_name(fields[2], lineno)});
  }
  return out;
}

inline void add_raw_triplet(KnowledgeGraph& graph, const RawTriplet& raw) {
  const auto& schema = graph.schema();
  auto rel = schema.relation_id(raw.relation);
  if (!rel) fail(ErrorCode::kSchemaViolation, "unknown relation " + raw.relation);
  auto head_type = schema.find_type(raw.head.type);
  auto tail_type = schema.find_type(raw.tail.type);
  if (!head_type || !tail_type) {
    fail(ErrorCode::kSchemaViolation,
         "unknown entity type in " + raw.head.type + " / " + raw.tail.type);
  }
  auto h = graph.add_entity(*head_type, raw.head.name);
  auto t = graph.add_entity(*tail_type, raw.tail.name);
  graph.add_triplet(h, *rel, t);
}

inline KnowledgeGraph read_triplets(std::istream& in, const Schema& schema) {
  KnowledgeGraph graph(schema);
  for (const auto& raw : parse_triplets(in)) add_raw_triplet(graph, raw);
  return graph;
}

inline KnowledgeGraph read_triplets(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open triplet file " + path);
  return read_triplets(in, schema);
}

inline void write_triplets(std::ostream& out, const KnowledgeGraph& graph) {
  const auto& schema = graph.schema();
  for (const auto& t : graph.triplets()) {
    out << graph.describe(t.head) << '\t' << schema.relation(t.relation).name << '\t'
        << graph.describe(t.tail) << '\n';
  }
}

inline void write_triplets(const std::string& path, const KnowledgeGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  write_triplets(out, graph);
}

}  // namespace grecs

#endif  // GRECS_KG_STORE_HPP
