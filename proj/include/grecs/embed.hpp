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

// Translational KG embeddings. A triplet (h, r, t) is scored by
//
//   f(h, t | r) = <e_h + r, e_t> + b_t
//
// and training maximizes the softmax likelihood of the true tail against
// tails of the same entity type (sampled negatives, or all of them in
// full-softmax mode).

#ifndef GRECS_EMBED_HPP
#define GRECS_EMBED_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "grecs/common.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t num_entities, std::size_t num_relations, int dim)
      : dim_(dim),
        entities_(RowMatrix::Zero(static_cast<Eigen::Index>(num_entities), dim)),
        relations_(RowMatrix::Zero(static_cast<Eigen::Index>(num_relations), dim)),
        bias_(Vector::Zero(static_cast<Eigen::Index>(num_entities))),
        self_loop_(Vector::Zero(dim)),
        present_(num_entities, true) {
    if (dim < 1) fail(ErrorCode::kInvalidConfig, "embedding dimension must be >= 1");
  }

  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }
  std::size_t num_entities() const { return present_.size(); }
  std::size_t num_relations() const { return static_cast<std::size_t>(relations_.rows()); }

  bool has_entity(EntityId e) const { return e < present_.size() && present_[e]; }
  bool has_relation(RelationId r) const {
    return r == kSelfLoop || r < static_cast<RelationId>(relations_.rows());
  }

  auto entity(EntityId e) const {
    require_entity(e);
    return entities_.row(e).transpose();
  }
  auto entity(EntityId e) {
    require_entity(e);
    return entities_.row(e).transpose();
  }

  // kSelfLoop maps to the dedicated self-loop vector.
  Vector relation(RelationId r) const {
    if (r == kSelfLoop) return self_loop_;
    require_relation(r);
    return relations_.row(r).transpose();
  }
  auto relation_row(RelationId r) {
    require_relation(r);
    return relations_.row(r).transpose();
  }

  double bias(EntityId e) const {
    require_entity(e);
    return bias_[e];
  }
  double& bias(EntityId e) {
    require_entity(e);
    return bias_[e];
  }

  const Vector& self_loop() const { return self_loop_; }
  Vector& self_loop() { return self_loop_; }

  RowMatrix& entity_matrix() { return entities_; }
  const RowMatrix& entity_matrix() const { return entities_; }
  RowMatrix& relation_matrix() { return relations_; }
  const RowMatrix& relation_matrix() const { return relations_; }
  Vector& bias_vector() { return bias_; }
  const Vector& bias_vector() const { return bias_; }

  // Grows the table if needed. Existing rows are never touched.
  void set_entity(EntityId e, const Vector& v, double b) {
    if (v.size() != dim_) fail(ErrorCode::kInvalidConfig, "embedding dimension mismatch");
    if (e >= present_.size()) {
      auto old = static_cast<Eigen::Index>(present_.size());
      auto rows = static_cast<Eigen::Index>(e) + 1;
      entities_.conservativeResize(rows, dim_);
      bias_.conservativeResize(rows);
      entities_.bottomRows(rows - old).setZero();
      bias_.tail(rows - old).setZero();
      present_.resize(static_cast<std::size_t>(rows), false);
    }
    entities_.row(e) = v.transpose();
    bias_[e] = b;
    present_[e] = true;
  }

  void mark_missing(EntityId e) {
    require_entity(e);
    present_[e] = false;
  }

  bool operator==(const EmbeddingTable& o) const {
    return dim_ == o.dim_ && seed_ == o.seed_ && present_ == o.present_ &&
           entities_ == o.entities_ && relations_ == o.relations_ && bias_ == o.bias_ &&
           self_loop_ == o.self_loop_;
  }

 private:
  void require_entity(EntityId e) const {
    if (!has_entity(e)) {
      fail(ErrorCode::kMissingEmbedding, "no embedding for entity " + std::to_string(e));
    }
  }
  void require_relation(RelationId r) const {
    if (r >= static_cast<RelationId>(relations_.rows())) {
      fail(ErrorCode::kMissingEmbedding, "no embedding for relation " + std::to_string(r));
    }
  }

  int dim_ = 0;
  std::uint64_t seed_ = 0;
  RowMatrix entities_;
  RowMatrix relations_;
  Vector bias_;
  Vector self_loop_;
  std::vector<bool> present_;
};

inline double score_triplet(const EmbeddingTable& table, EntityId head, RelationId relation,
                            EntityId tail) {
  Vector translated = table.entity(head) + table.relation(relation);
  return translated.dot(table.entity(tail)) + table.bias(tail);
}

// Scores of every candidate tail for a fixed (head, relation).
inline Vector score_tails(const EmbeddingTable& table, EntityId head, RelationId relation,
                          std::span<const EntityId> tails) {
  Vector translated = table.entity(head) + table.relation(relation);
  Vector out(static_cast<Eigen::Index>(tails.size()));
  for (std::size_t i = 0; i < tails.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] =
        translated.dot(table.entity(tails[i])) + table.bias(tails[i]);
  }
  return out;
}

inline double log_sum_exp(const Vector& x) {
  double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

inline double conditional_prob(const EmbeddingTable& table, EntityId head, RelationId relation,
                               EntityId tail, std::span<const EntityId> candidates) {
  if (candidates.empty()) fail(ErrorCode::kEmptyCandidates, "no candidate tails");
  auto pos = std::find(candidates.begin(), candidates.end(), tail);
  if (pos == candidates.end()) {
    fail(ErrorCode::kEmptyCandidates, "true tail is not among the candidates");
  }
  Vector scores = score_tails(table, head, relation, candidates);
  auto idx = static_cast<Eigen::Index>(pos - candidates.begin());
  return std::exp(scores[idx] - log_sum_exp(scores));
}

struct EmbedTrainConfig {
  int dim = 100;
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int negatives = 5;
  std::uint64_t seed = 1;
  // Normalize over every type-compatible tail instead of sampling.
  bool full_softmax = false;

  void validate() const {
    if (dim < 1) fail(ErrorCode::kInvalidConfig, "dim must be >= 1");
    if (epochs < 0) fail(ErrorCode::kInvalidConfig, "epochs must be >= 0");
    if (negatives < 1) fail(ErrorCode::kInvalidConfig, "negatives must be >= 1");
    if (batch_size < 1) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
    if (!(learning_rate > 0)) fail(ErrorCode::kInvalidConfig, "learning_rate must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const EmbedTrainConfig& c) {
  j = {{"dim", c.dim},           {"epochs", c.epochs},       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size}, {"negatives", c.negatives}, {"seed", c.seed},
       {"full_softmax", c.full_softmax}};
}

inline void from_json(const nlohmann::json& j, EmbedTrainConfig& c) {
  c.dim = j.value("dim", c.dim);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.negatives = j.value("negatives", c.negatives);
  c.seed = j.value("seed", c.seed);
  c.full_softmax = j.value("full_softmax", c.full_softmax);
}

// Uniform(-0.5/d, 0.5/d) vectors, zero biases.
inline EmbeddingTable initialize_embeddings(const KnowledgeGraph& graph, int dim,
                                            std::uint64_t seed) {
  EmbeddingTable table(graph.num_entities(), graph.schema().num_relations(), dim);
  table.set_seed(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.5 / dim, 0.5 / dim);
  auto fill = [&](auto&& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = unif(rng);
    }
  };
  fill(table.entity_matrix());
  fill(table.relation_matrix());
  for (Eigen::Index j = 0; j < dim; ++j) table.self_loop()[j] = unif(rng);
  return table;
}

struct EmbeddingGradient {
  RowMatrix entity;
  RowMatrix relation;
  Vector bias;

  explicit EmbeddingGradient(const EmbeddingTable& t)
      : entity(RowMatrix::Zero(t.entity_matrix().rows(), t.dim())),
        relation(RowMatrix::Zero(t.relation_matrix().rows(), t.dim())),
        bias(Vector::Zero(t.bias_vector().size())) {}

  void set_zero() {
    entity.setZero();
    relation.setZero();
    bias.setZero();
  }
};

// Softmax negative log-likelihood of one triplet over `candidates`, where
// candidates[0] is the true tail. Accumulates `scale` * gradient.
inline double accumulate_triplet_loss(const EmbeddingTable& table, const Triplet& t,
                                      std::span<const EntityId> candidates,
                                      EmbeddingGradient* grad, double scale) {
  Vector translated = table.entity(t.head) + table.relation(t.relation);
  Vector scores = score_tails(table, t.head, t.relation, candidates);
  double lse = log_sum_exp(scores);
  double loss = lse - scores[0];
  if (grad == nullptr) return loss;
  Vector probs = (scores.array() - lse).exp();
  Vector d_translated = Vector::Zero(table.dim());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double g = probs[static_cast<Eigen::Index>(c)] - (c == 0 ? 1.0 : 0.0);
    g *= scale;
    EntityId tail = candidates[c];
    d_translated += g * table.entity(tail);
    grad->entity.row(tail) += g * translated.transpose();
    grad->bias[tail] += g;
  }
  grad->entity.row(t.head) += d_translated.transpose();
  grad->relation.row(t.relation) += d_translated.transpose();
  return loss;
}

// Tails in the true tail's type, true tail first.
inline std::vector<EntityId> full_candidates(const std::vector<EntityId>& same_type,
                                             EntityId tail) {
  std::vector<EntityId> out;
  out.reserve(same_type.size());
  out.push_back(tail);
  for (auto e : same_type) {
    if (e != tail) out.push_back(e);
  }
  return out;
}

// Mean full-softmax loss over the given triplets, with optional gradient.
inline double full_softmax_objective(const KnowledgeGraph& graph, const EmbeddingTable& table,
                                     std::span<const Triplet> triplets,
                                     EmbeddingGradient* grad = nullptr) {
  std::vector<std::vector<EntityId>> by_type(graph.schema().num_types());
  for (EntityId e = 0; e < graph.num_entities(); ++e) {
    by_type[graph.entity(e).type].push_back(e);
  }
  if (grad) grad->set_zero();
  double total = 0;
  double scale = 1.0 / static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    auto cands = full_candidates(by_type[graph.entity(t.tail).type], t.tail);
    total += accumulate_triplet_loss(table, t, cands, grad, scale);
  }
  return total * scale;
}

namespace detail {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
};

template <typename Param, typename Grad, typename Moment>
void adam_update(Param& param, const Grad& grad, Moment& m, Moment& v, const AdamState& s,
                 double lr) {
  m = s.beta1 * m + (1 - s.beta1) * grad;
  v = s.beta2 * v + (1 - s.beta2) * grad.cwiseProduct(grad);
  double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
}

}  // namespace detail

inline EmbeddingTable train_embeddings(const KnowledgeGraph& graph,
                                       const EmbedTrainConfig& config) {
  config.validate();
  if (graph.num_triplets() == 0) fail(ErrorCode::kEmptyGraph, "no triplets to embed");
  EmbeddingTable table = initialize_embeddings(graph, config.dim, config.seed);
  if (config.epochs == 0) return table;

  std::vector<std::vector<EntityId>> by_type(graph.schema().num_types());
  for (EntityId e = 0; e < graph.num_entities(); ++e) {
    by_type[graph.entity(e).type].push_back(e);
  }

  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<Triplet> order = graph.triplets();
  EmbeddingGradient grad(table);
  RowMatrix m_ent = RowMatrix::Zero(grad.entity.rows(), grad.entity.cols());
  RowMatrix v_ent = m_ent;
  RowMatrix m_rel = RowMatrix::Zero(grad.relation.rows(), grad.relation.cols());
  RowMatrix v_rel = m_rel;
  Vector m_bias = Vector::Zero(grad.bias.size());
  Vector v_bias = m_bias;
  detail::AdamState adam;

  std::vector<EntityId> cands;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      double scale = 1.0 / static_cast<double>(end - start);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const auto& t = order[i];
        const auto& pool = by_type[graph.entity(t.tail).type];
        if (config.full_softmax) {
          cands = full_candidates(pool, t.tail);
        } else {
          cands.assign(1, t.tail);
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          for (int n = 0; n < config.negatives; ++n) {
            EntityId neg = pool[pick(rng)];
            if (pool.size() > 1) {
              while (neg == t.tail) neg = pool[pick(rng)];
            }
            cands.push_back(neg);
          }
        }
        accumulate_triplet_loss(table, t, cands, &grad, scale);
      }
      ++adam.step;
      detail::adam_update(table.entity_matrix(), grad.entity, m_ent, v_ent, adam,
                          config.learning_rate);
      detail::adam_update(table.relation_matrix(), grad.relation, m_rel, v_rel, adam,
                          config.learning_rate);
      detail::adam_update(table.bias_vector(), grad.bias, m_bias, v_bias, adam,
                          config.learning_rate);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Snapshot: JSON keyed by symbol names. Doubles are written with round-trip
// precision, so save/load is exact.

inline nlohmann::json embeddings_to_json(const EmbeddingTable& table, const KnowledgeGraph& graph) {
  nlohmann::json j;
  j["format"] = "grecs-embeddings";
  j["version"] = 1;
  j["dim"] = table.dim();
  j["seed"] = table.seed();
  auto to_vec = [](const auto& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json ents = nlohmann::json::object();
  for (EntityId e = 0; e < graph.num_entities(); ++e) {
    if (!table.has_entity(e)) continue;
    Vector v = table.entity(e);
    ents[graph.describe(e)] = {{"v", to_vec(v)}, {"b", table.bias(e)}};
  }
  j["entities"] = std::move(ents);
  nlohmann::json rels = nlohmann::json::object();
  for (RelationId r = 0; r < table.num_relations(); ++r) {
    Vector v = table.relation(r);
    rels[graph.schema().relation(r).name] = to_vec(v);
  }
  j["relations"] = std::move(rels);
  j["self_loop"] = to_vec(table.self_loop());
  return j;
}

// Entities of `graph` absent from the snapshot are left marked missing.
inline EmbeddingTable embeddings_from_json(const nlohmann::json& j, const KnowledgeGraph& graph) {
  if (j.value("format", "") != "grecs-embeddings") {
    fail(ErrorCode::kParseError, "not an embedding snapshot");
  }
  int dim = j.at("dim").get<int>();
  EmbeddingTable table(graph.num_entities(), graph.schema().num_relations(), dim);
  table.set_seed(j.at("seed").get<std::uint64_t>());
  auto read_vec = [dim](const nlohmann::json& arr) {
    auto values = arr.get<std::vector<double>>();
    if (static_cast<int>(values.size()) != dim) {
      fail(ErrorCode::kParseError, "vector of wrong dimension in snapshot");
    }
    return Eigen::Map<Vector>(values.data(), dim).eval();
  };
  const auto& ents = j.at("entities");
  for (EntityId e = 0; e < graph.num_entities(); ++e) {
    auto it = ents.find(graph.describe(e));
    if (it == ents.end()) {
      table.mark_missing(e);
      continue;
    }
    table.set_entity(e, read_vec(it->at("v")), it->at("b").get<double>());
  }
  for (RelationId r = 0; r < table.num_relations(); ++r) {
    const auto& name = graph.schema().relation(r).name;
    table.relation_row(r) = read_vec(j.at("relations").at(name));
  }
  table.self_loop() = read_vec(j.at("self_loop"));
  return table;
}

inline void save_embeddings(const std::string& path, const EmbeddingTable& table,
                            const KnowledgeGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << embeddings_to_json(table, graph).dump() << '\n';
}

inline EmbeddingTable load_embeddings(const std::string& path, const KnowledgeGraph& graph) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, path + ": " + e.what());
  }
  return embeddings_from_json(j, graph);
}

}  // namespace grecs

#endif  // GRECS_EMBED_HPP
