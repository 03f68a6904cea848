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

// Path-finding MDP over the knowledge graph and the policy-gradient agent.
//
// A state is the path walked so far from a user. Actions are the edges of
// the current entity that lead to unvisited entities, plus a self-loop.
// Transitions are deterministic. Episodes last exactly `hops` steps and are
// rewarded at the terminal entity only.

#ifndef GRECS_AGENT_HPP
#define GRECS_AGENT_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "grecs/common.hpp"
#include "grecs/embed.hpp"
#include "grecs/kg_store.hpp"

namespace grecs {

struct Hop {
  RelationId relation = kSelfLoop;
  Direction direction = Direction::kForward;
  EntityId entity = kNoEntity;

  bool is_self_loop() const { return relation == kSelfLoop; }
  friend bool operator==(const Hop&, const Hop&) = default;
};

struct Action {
  RelationId relation = kSelfLoop;
  Direction direction = Direction::kForward;
  EntityId target = kNoEntity;

  static Action self_loop() { return {}; }
  static Action move(RelationId r, EntityId target, Direction dir) { return {r, dir, target}; }
  bool is_self_loop() const { return relation == kSelfLoop; }
  friend bool operator==(const Action&, const Action&) = default;
};

class PathState {
 public:
  PathState() = default;

  // Starts a path at `user`. The entity must be of the schema's user type.
  PathState(const KnowledgeGraph& graph, EntityId user, int hop_budget)
      : user_(user), budget_(hop_budget) {
    if (!graph.contains(user) || !graph.is_user(user)) {
      fail(ErrorCode::kUnknownUser, graph.describe(user));
    }
    if (hop_budget < 1) fail(ErrorCode::kInvalidConfig, "hop budget must be >= 1");
    visited_.push_back(user);
  }

  EntityId user() const { return user_; }
  EntityId current() const { return hops_.empty() ? user_ : hops_.back().entity; }
  const std::vector<Hop>& hops() const { return hops_; }
  int hop_budget() const { return budget_; }
  int hops_taken() const { return static_cast<int>(hops_.size()); }
  bool complete() const { return hops_taken() == budget_; }
  int self_loops() const { return self_loops_; }
  EntityId terminal() const { return current(); }

  bool visited(EntityId e) const {
    return std::find(visited_.begin(), visited_.end(), e) != visited_.end();
  }

  // Entity sequence [e_1, ..., e_{k+1}] including self-loop repeats.
  std::vector<EntityId> entities() const {
    std::vector<EntityId> out{user_};
    for (const auto& h : hops_) out.push_back(h.entity);
    return out;
  }

  friend bool operator==(const PathState& a, const PathState& b) {
    return a.user_ == b.user_ && a.budget_ == b.budget_ && a.hops_ == b.hops_ &&
           a.self_loops_ == b.self_loops_;
  }

 private:
  friend PathState step(const PathState&, const Action&, const KnowledgeGraph&);
  friend PathState path_from_hops(const KnowledgeGraph&, EntityId, int, std::span<const Hop>);

  EntityId user_ = kNoEntity;
  int budget_ = 0;
  std::vector<Hop> hops_;
  std::vector<EntityId> visited_;
  int self_loops_ = 0;
};

inline PathState step(const PathState& ps, const Action& a, const KnowledgeGraph& graph) {
  if (ps.complete()) fail(ErrorCode::kBudgetExhausted, "path already has all hops");
  PathState next = ps;
  EntityId here = ps.current();
  if (a.is_self_loop()) {
    next.hops_.push_back({kSelfLoop, Direction::kForward, here});
    ++next.self_loops_;
    return next;
  }
  auto edges = graph.edges(here);
  Edge wanted{a.relation, a.target, a.direction};
  if (!std::binary_search(edges.begin(), edges.end(), wanted)) {
    fail(ErrorCode::kInvalidAction, "no such edge from " + graph.describe(here));
  }
  if (ps.visited(a.target)) {
    fail(ErrorCode::kInvalidAction, graph.describe(a.target) + " already visited");
  }
  next.hops_.push_back({a.relation, a.direction, a.target});
  next.visited_.push_back(a.target);
  return next;
}

// Rebuilds a path by replaying hops; every hop is validated by step().
inline PathState path_from_hops(const KnowledgeGraph& graph, EntityId user, int hop_budget,
                                std::span<const Hop> hops) {
  PathState ps(graph, user, hop_budget);
  for (const auto& h : hops) {
    ps = step(ps, h.is_self_loop() ? Action::self_loop()
                                   : Action::move(h.relation, h.entity, h.direction),
              graph);
  }
  return ps;
}

// ---------------------------------------------------------------------------
// State encoding and action space.

inline int state_dim(int embed_dim, int hops) { return (1 + 2 * hops) * embed_dim; }

// [user | r_1 | e_1 | ... | r_k | e_k], untaken hops zero-filled.
inline Vector encode_state(const PathState& ps, const EmbeddingTable& table) {
  const int d = table.dim();
  Vector out = Vector::Zero(state_dim(d, ps.hop_budget()));
  out.segment(0, d) = table.entity(ps.user());
  int slot = 1;
  for (const auto& h : ps.hops()) {
    out.segment(slot * d, d) = table.relation(h.relation);
    out.segment((slot + 1) * d, d) = table.entity(h.entity);
    slot += 2;
  }
  return out;
}

// Self-loop first, then moves in the graph's canonical edge order. When more
// than `max_actions` moves exist, the ones scoring highest under
// f(user, target | interaction) are kept (stable on ties), still in canonical
// order.
inline std::vector<Action> valid_actions(const PathState& ps, const KnowledgeGraph& graph,
                                         const EmbeddingTable& table, int max_actions) {
  if (ps.complete()) fail(ErrorCode::kBudgetExhausted, "no hops left");
  std::vector<Action> moves;
  for (const auto& e : graph.edges(ps.current())) {
    if (!ps.visited(e.neighbor)) moves.push_back(Action::move(e.relation, e.neighbor, e.direction));
  }
  if (max_actions >= 0 && moves.size() > static_cast<std::size_t>(max_actions)) {
    Vector translated = table.entity(ps.user()) + table.relation(graph.interaction_relation());
    std::vector<double> score(moves.size());
    for (std::size_t i = 0; i < moves.size(); ++i) {
      score[i] = translated.dot(table.entity(moves[i].target)) + table.bias(moves[i].target);
    }
    std::vector<std::size_t> idx(moves.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    idx.resize(static_cast<std::size_t>(max_actions));
    std::sort(idx.begin(), idx.end());
    std::vector<Action> kept;
    kept.reserve(idx.size());
    for (auto i : idx) kept.push_back(moves[i]);
    moves = std::move(kept);
  }
  std::vector<Action> out;
  out.reserve(moves.size() + 1);
  out.push_back(Action::self_loop());
  out.insert(out.end(), moves.begin(), moves.end());
  return out;
}

// One row per action: [relation | target]. The self-loop uses the dedicated
// self-loop vector and the current entity.
inline RowMatrix action_features(const PathState& ps, std::span<const Action> actions,
                                 const EmbeddingTable& table) {
  const int d = table.dim();
  RowMatrix f(static_cast<Eigen::Index>(actions.size()), 2 * d);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    auto row = static_cast<Eigen::Index>(i);
    EntityId target = a.is_self_loop() ? ps.current() : a.target;
    f.row(row).head(d) = table.relation(a.relation).transpose();
    f.row(row).tail(d) = table.entity(target).transpose();
  }
  return f;
}

// ---------------------------------------------------------------------------
// Path patterns.

struct PatternHop {
  RelationId relation = 0;
  Direction direction = Direction::kForward;
  friend bool operator==(const PatternHop&, const PatternHop&) = default;
};

struct PathPattern {
  std::vector<TypeId> types;
  std::vector<PatternHop> hops;
  friend bool operator==(const PathPattern&, const PathPattern&) = default;
};

// Tokens alternate entity type and relation name, e.g.
//   user interested_in category belong_to product
// Direction is inferred from the neighbouring types; a `^-1` suffix forces
// the inverse direction when both readings type-check.
inline PathPattern parse_pattern(const std::vector<std::string>& tokens, const Schema& schema) {
  if (tokens.size() < 3 || tokens.size() % 2 == 0) {
    fail(ErrorCode::kSchemaViolation, "pattern must alternate types and relations");
  }
  PathPattern p;
  for (std::size_t i = 0; i < tokens.size(); i += 2) p.types.push_back(schema.type_id(tokens[i]));
  if (p.types.front() != schema.user_type()) {
    fail(ErrorCode::kSchemaViolation, "pattern must start at the user type");
  }
  for (std::size_t i = 1; i < tokens.size(); i += 2) {
    std::string name = tokens[i];
    bool forced_inverse = false;
    if (name.size() > 3 && name.compare(name.size() - 3, 3, "^-1") == 0) {
      forced_inverse = true;
      name.resize(name.size() - 3);
    }
    RelationId r = schema.require_relation(name);
    const auto& rel = schema.relation(r);
    TypeId from = p.types[i / 2];
    TypeId to = p.types[i / 2 + 1];
    bool fwd = rel.head_type == from && rel.tail_type == to;
    bool inv = rel.head_type == to && rel.tail_type == from;
    if (forced_inverse ? !inv : !(fwd || inv)) {
      fail(ErrorCode::kSchemaViolation, "relation " + name + " does not fit pattern types");
    }
    p.hops.push_back({r, (forced_inverse || !fwd) ? Direction::kInverse : Direction::kForward});
  }
  return p;
}

inline std::vector<PathPattern> schema_patterns(const Schema& schema) {
  std::vector<PathPattern> out;
  for (const auto& tokens : schema.patterns()) out.push_back(parse_pattern(tokens, schema));
  return out;
}

// Type/relation signature of a path with trailing self-loops removed.
// Interior self-loops stay in the signature as kSelfLoop hops.
inline PathPattern collapsed_signature(const PathState& ps, const KnowledgeGraph& graph) {
  std::size_t n = ps.hops().size();
  while (n > 0 && ps.hops()[n - 1].is_self_loop()) --n;
  PathPattern sig;
  sig.types.push_back(graph.entity(ps.user()).type);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& h = ps.hops()[i];
    sig.hops.push_back({h.relation, h.direction});
    sig.types.push_back(graph.entity(h.entity).type);
  }
  return sig;
}

inline bool match_pattern(const PathState& ps, const KnowledgeGraph& graph,
                          std::span<const PathPattern> patterns) {
  if (!ps.complete()) fail(ErrorCode::kIncompletePath, "pattern match needs a complete path");
  auto sig = collapsed_signature(ps, graph);
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const PathPattern& p) { return p == sig; });
}

// ---------------------------------------------------------------------------
// Rewards.

enum class RewardMode { kPattern, kBinary };

inline std::string_view to_string(RewardMode m) {
  return m == RewardMode::kPattern ? "pgpr" : "upgpr";
}

inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "pgpr" || s == "pattern") return RewardMode::kPattern;
  if (s == "upgpr" || s == "binary") return RewardMode::kBinary;
  fail(ErrorCode::kInvalidConfig, "unknown reward mode " + s);
}

struct RewardSpec {
  RewardMode mode = RewardMode::kBinary;
  std::vector<PathPattern> patterns;  // only read in pattern mode
};

// max over items i of f(user, i | interaction).
inline double item_score_max(const EmbeddingTable& table, const KnowledgeGraph& graph,
                             EntityId user) {
  RelationId r = graph.interaction_relation();
  Vector translated = table.entity(user) + table.relation(r);
  double best = -std::numeric_limits<double>::infinity();
  for (auto item : graph.items()) {
    if (!table.has_entity(item)) continue;
    best = std::max(best, translated.dot(table.entity(item)) + table.bias(item));
  }
  return best;
}

// f(u, e_T | interaction) / item_max when the path matches a pattern and ends
// on an item, else 0. Clamped to [0, 1]; a non-positive item_max gives 0.
inline double reward_pattern(const PathState& ps, const KnowledgeGraph& graph,
                             const EmbeddingTable& table, std::span<const PathPattern> patterns,
                             double item_max) {
  if (!ps.complete()) fail(ErrorCode::kIncompletePath, "reward needs a complete path");
  if (!graph.is_item(ps.terminal()) || !match_pattern(ps, graph, patterns)) return 0.0;
  if (!(item_max > 0)) return 0.0;
  double f = score_triplet(table, ps.user(), graph.interaction_relation(), ps.terminal());
  return std::clamp(f / item_max, 0.0, 1.0);
}

// 1 iff the terminal entity is one of the user's training items and fewer
// than k-1 self-loops were used.
inline double reward_binary(const PathState& ps, const std::unordered_set<EntityId>& user_items) {
  if (!ps.complete()) fail(ErrorCode::kIncompletePath, "reward needs a complete path");
  bool hit = user_items.count(ps.terminal()) > 0;
  return (hit && ps.self_loops() < ps.hop_budget() - 1) ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Policy network.
//
// state -> ReLU(hidden1) -> ReLU(hidden2) -> query (2d) ; value (scalar)
// logit(a) = <query, features(a)>; invalid actions never enter the softmax.

class PolicyModel {
 public:
  PolicyModel() = default;

  PolicyModel(int embed_dim, int hops, int hidden1, int hidden2, std::uint64_t seed)
      : embed_dim_(embed_dim), hops_(hops), hidden1_(hidden1), hidden2_(hidden2), seed_(seed) {
    if (embed_dim < 1 || hops < 1 || hidden1 < 1 || hidden2 < 1) {
      fail(ErrorCode::kInvalidConfig, "policy dimensions must be positive");
    }
    layout();
    params_ = Vector::Zero(size_);
    std::mt19937_64 rng(seed);
    auto init = [&](Eigen::Index offset, Eigen::Index count, int fan_in) {
      double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> unif(-bound, bound);
      for (Eigen::Index i = 0; i < count; ++i) params_[offset + i] = unif(rng);
    };
    init(w1_, hidden1_ * state_dim(), state_dim());
    init(w2_, hidden2_ * hidden1_, hidden1_);
    init(w3_, action_dim() * hidden2_, hidden2_);
    init(wv_, hidden2_, hidden2_);
  }

  int embed_dim() const { return embed_dim_; }
  int hops() const { return hops_; }
  int hidden1() const { return hidden1_; }
  int hidden2() const { return hidden2_; }
  std::uint64_t seed() const { return seed_; }
  int state_dim() const { return grecs::state_dim(embed_dim_, hops_); }
  int action_dim() const { return 2 * embed_dim_; }
  Eigen::Index num_params() const { return size_; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  struct Forward {
    Eigen::MatrixXd x, h1, h2, query;
    Eigen::RowVectorXd value;
  };

  // Columns of `states` are independent states.
  Forward forward(const Eigen::MatrixXd& states) const {
    Forward f;
    f.x = states;
    f.h1 = ((W1() * states).colwise() + b1()).cwiseMax(0.0);
    f.h2 = ((W2() * f.h1).colwise() + b2()).cwiseMax(0.0);
    f.query = (W3() * f.h2).colwise() + b3();
    f.value = (wv().transpose() * f.h2).array() + bv();
    return f;
  }

  // Accumulates parameter gradients given dL/dquery and dL/dvalue.
  void backward(const Forward& f, const Eigen::MatrixXd& d_query,
                const Eigen::RowVectorXd& d_value, Vector& grad) const {
    auto gW1 = map(grad, w1_, hidden1_, state_dim());
    auto gb1 = grad.segment(b1_, hidden1_);
    auto gW2 = map(grad, w2_, hidden2_, hidden1_);
    auto gb2 = grad.segment(b2_, hidden2_);
    auto gW3 = map(grad, w3_, action_dim(), hidden2_);
    auto gb3 = grad.segment(b3_, action_dim());
    auto gwv = grad.segment(wv_, hidden2_);

    gW3.noalias() += d_query * f.h2.transpose();
    gb3 += d_query.rowwise().sum();
    gwv.noalias() += f.h2 * d_value.transpose();
    grad[bv_] += d_value.sum();

    Eigen::MatrixXd d_h2 = W3().transpose() * d_query + wv() * d_value;
    d_h2 = d_h2.cwiseProduct((f.h2.array() > 0).cast<double>().matrix());
    gW2.noalias() += d_h2 * f.h1.transpose();
    gb2 += d_h2.rowwise().sum();
    Eigen::MatrixXd d_h1 = W2().transpose() * d_h2;
    d_h1 = d_h1.cwiseProduct((f.h1.array() > 0).cast<double>().matrix());
    gW1.noalias() += d_h1 * f.x.transpose();
    gb1 += d_h1.rowwise().sum();
  }

  Vector query(const Vector& state) const {
    Vector h1 = (W1() * state + b1()).cwiseMax(0.0);
    Vector h2 = (W2() * h1 + b2()).cwiseMax(0.0);
    return W3() * h2 + b3();
  }

  // Log-probabilities over the given action rows.
  Vector action_log_probs(const Vector& state, const RowMatrix& features) const {
    Vector logits = features * query(state);
    return logits.array() - log_sum_exp(logits);
  }

  Vector action_probs(const Vector& state, const RowMatrix& features) const {
    return action_log_probs(state, features).array().exp();
  }

  bool operator==(const PolicyModel& o) const {
    return embed_dim_ == o.embed_dim_ && hops_ == o.hops_ && hidden1_ == o.hidden1_ &&
           hidden2_ == o.hidden2_ && seed_ == o.seed_ && params_ == o.params_;
  }

  nlohmann::json header() const {
    return {{"format", "grecs-policy"}, {"version", 1},        {"embed_dim", embed_dim_},
            {"hops", hops_},            {"hidden1", hidden1_}, {"hidden2", hidden2_},
            {"seed", seed_},            {"num_params", size_}};
  }

  static PolicyModel from_header(const nlohmann::json& h) {
    if (h.value("format", "") != "grecs-policy" || h.value("version", 0) != 1) {
      fail(ErrorCode::kParseError, "unsupported policy snapshot");
    }
    PolicyModel p;
    p.embed_dim_ = h.at("embed_dim").get<int>();
    p.hops_ = h.at("hops").get<int>();
    p.hidden1_ = h.at("hidden1").get<int>();
    p.hidden2_ = h.at("hidden2").get<int>();
    p.seed_ = h.at("seed").get<std::uint64_t>();
    p.layout();
    if (p.size_ != h.at("num_params").get<Eigen::Index>()) {
      fail(ErrorCode::kParseError, "policy parameter count mismatch");
    }
    p.params_ = Vector::Zero(p.size_);
    return p;
  }

 private:
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using MutMap = Eigen::Map<Eigen::MatrixXd>;

  void layout() {
    Eigen::Index o = 0;
    auto take = [&o](Eigen::Index n) {
      Eigen::Index at = o;
      o += n;
      return at;
    };
    w1_ = take(static_cast<Eigen::Index>(hidden1_) * state_dim());
    b1_ = take(hidden1_);
    w2_ = take(static_cast<Eigen::Index>(hidden2_) * hidden1_);
    b2_ = take(hidden2_);
    w3_ = take(static_cast<Eigen::Index>(action_dim()) * hidden2_);
    b3_ = take(action_dim());
    wv_ = take(hidden2_);
    bv_ = take(1);
    size_ = o;
  }

  static MutMap map(Vector& v, Eigen::Index off, Eigen::Index rows, Eigen::Index cols) {
    return MutMap(v.data() + off, rows, cols);
  }
  ConstMap cmap(Eigen::Index off, Eigen::Index rows, Eigen::Index cols) const {
    return ConstMap(params_.data() + off, rows, cols);
  }

  ConstMap W1() const { return cmap(w1_, hidden1_, state_dim()); }
  Eigen::VectorBlock<const Vector> b1() const { return params_.segment(b1_, hidden1_); }
  ConstMap W2() const { return cmap(w2_, hidden2_, hidden1_); }
  Eigen::VectorBlock<const Vector> b2() const { return params_.segment(b2_, hidden2_); }
  ConstMap W3() const { return cmap(w3_, action_dim(), hidden2_); }
  Eigen::VectorBlock<const Vector> b3() const { return params_.segment(b3_, action_dim()); }
  Eigen::VectorBlock<const Vector> wv() const { return params_.segment(wv_, hidden2_); }
  double bv() const { return params_[bv_]; }

  int embed_dim_ = 0;
  int hops_ = 0;
  int hidden1_ = 0;
  int hidden2_ = 0;
  std::uint64_t seed_ = 0;
  Eigen::Index w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0, wv_ = 0, bv_ = 0;
  Eigen::Index size_ = 0;
  Vector params_;
};

// Binary snapshot: "GRECSPOL", u64 header length, JSON header, raw doubles.
inline void save_policy(const std::string& path, const PolicyModel& policy,
                        const nlohmann::json& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  auto header = policy.header();
  if (!extra.is_null()) header["meta"] = extra;
  std::string text = header.dump();
  std::uint64_t len = text.size();
  out.write("GRECSPOL", 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(policy.params().data()),
            static_cast<std::streamsize>(sizeof(double) * policy.params().size()));
}

inline PolicyModel load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, "GRECSPOL", 8) != 0 || len > (1u << 20)) {
    fail(ErrorCode::kParseError, path + " is not a policy snapshot");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  PolicyModel policy = PolicyModel::from_header(nlohmann::json::parse(text));
  in.read(reinterpret_cast<char*>(policy.params().data()),
          static_cast<std::streamsize>(sizeof(double) * policy.params().size()));
  if (!in) fail(ErrorCode::kParseError, path + " is truncated");
  return policy;
}

// ---------------------------------------------------------------------------
// REINFORCE with a learned scalar baseline and an entropy bonus.

struct AgentConfig {
  RewardMode reward = RewardMode::kBinary;
  int hops = 3;
  int max_actions = 250;
  int hidden1 = 512;
  int hidden2 = 256;
  int epochs = 50;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double entropy_coef = 1e-3;
  double gamma = 0.99;
  double value_coef = 1.0;
  bool use_baseline = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (hops < 1) fail(ErrorCode::kInvalidConfig, "hops must be >= 1");
    if (max_actions < 1) fail(ErrorCode::kInvalidConfig, "max_actions must be >= 1");
    if (epochs < 0) fail(ErrorCode::kInvalidConfig, "epochs must be >= 0");
    if (batch_size < 1) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
    if (!(learning_rate > 0)) fail(ErrorCode::kInvalidConfig, "learning_rate must be > 0");
    if (gamma < 0 || gamma > 1) fail(ErrorCode::kInvalidConfig, "gamma must be in [0,1]");
  }
};

inline void to_json(nlohmann::json& j, const AgentConfig& c) {
  j = {{"reward", std::string(to_string(c.reward))},
       {"hops", c.hops},
       {"max_actions", c.max_actions},
       {"hidden1", c.hidden1},
       {"hidden2", c.hidden2},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"entropy_coef", c.entropy_coef},
       {"gamma", c.gamma},
       {"value_coef", c.value_coef},
       {"use_baseline", c.use_baseline},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, AgentConfig& c) {
  if (j.contains("reward")) c.reward = parse_reward_mode(j.at("reward").get<std::string>());
  c.hops = j.value("hops", c.hops);
  c.max_actions = j.value("max_actions", c.max_actions);
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.gamma = j.value("gamma", c.gamma);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.use_baseline = j.value("use_baseline", c.use_baseline);
  c.seed = j.value("seed", c.seed);
}

// One decision taken during a rollout.
struct Decision {
  Vector state;
  RowMatrix features;
  int chosen = 0;
};

struct Episode {
  std::vector<Decision> decisions;
  PathState final_state;
  double reward = 0;
};

// Samples index i with probability probs[i].
template <typename Rng>
int sample_index(const Vector& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

enum class RolloutPolicy { kLearned, kUniform };

// Rolls out one episode per start user. Learned-policy states in a batch are
// evaluated together.
template <typename Rng>
std::vector<Episode> rollout_batch(const PolicyModel& policy, std::span<const EntityId> users,
                                   const KnowledgeGraph& graph, const EmbeddingTable& table,
                                   int hops, int max_actions, RolloutPolicy mode, Rng& rng) {
  std::vector<Episode> eps(users.size());
  std::vector<PathState> states;
  states.reserve(users.size());
  for (auto u : users) states.emplace_back(graph, u, hops);
  const int sdim = state_dim(table.dim(), hops);
  for (int t = 0; t < hops; ++t) {
    Eigen::MatrixXd batch(sdim, static_cast<Eigen::Index>(users.size()));
    for (std::size_t j = 0; j < users.size(); ++j) {
      batch.col(static_cast<Eigen::Index>(j)) = encode_state(states[j], table);
    }
    Eigen::MatrixXd queries;
    if (mode == RolloutPolicy::kLearned) queries = policy.forward(batch).query;
    for (std::size_t j = 0; j < users.size(); ++j) {
      auto acts = valid_actions(states[j], graph, table, max_actions);
      Decision dec;
      dec.state = batch.col(static_cast<Eigen::Index>(j));
      dec.features = action_features(states[j], acts, table);
      Vector probs;
      if (mode == RolloutPolicy::kLearned) {
        Vector logits = dec.features * queries.col(static_cast<Eigen::Index>(j));
        probs = (logits.array() - log_sum_exp(logits)).exp();
      } else {
        probs = Vector::Constant(static_cast<Eigen::Index>(acts.size()), 1.0 / acts.size());
      }
      dec.chosen = sample_index(probs, rng);
      states[j] = step(states[j], acts[static_cast<std::size_t>(dec.chosen)], graph);
      eps[j].decisions.push_back(std::move(dec));
    }
  }
  for (std::size_t j = 0; j < users.size(); ++j) eps[j].final_state = std::move(states[j]);
  return eps;
}

struct GradientOptions {
  double gamma = 0.99;
  double entropy_coef = 0.0;
  double value_coef = 1.0;
  bool use_baseline = false;
};

struct BatchStats {
  double mean_reward = 0;
  double mean_entropy = 0;
};

// Gradient of the mean per-episode loss
//   sum_t [ -(G_t - b_t) log pi(a_t|s_t) + value_coef/2 (G_t - V_t)^2 - beta H_t ]
// where b_t = V(s_t) (held constant) when the baseline is on, else 0.
inline Vector reinforce_gradient(const PolicyModel& policy, std::span<const Episode> episodes,
                                 const GradientOptions& opt, BatchStats* stats = nullptr) {
  Vector grad = Vector::Zero(policy.num_params());
  if (episodes.empty()) return grad;
  const double inv_b = 1.0 / static_cast<double>(episodes.size());
  double entropy_total = 0;
  std::size_t decisions_total = 0;
  std::size_t max_t = 0;
  for (const auto& e : episodes) max_t = std::max(max_t, e.decisions.size());
  for (std::size_t t = 0; t < max_t; ++t) {
    std::vector<const Episode*> active;
    for (const auto& e : episodes) {
      if (t < e.decisions.size()) active.push_back(&e);
    }
    const auto n = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd states(policy.state_dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) states.col(j) = active[j]->decisions[t].state;
    auto fwd = policy.forward(states);
    Eigen::MatrixXd d_query = Eigen::MatrixXd::Zero(policy.action_dim(), n);
    Eigen::RowVectorXd d_value = Eigen::RowVectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& ep = *active[j];
      const auto& dec = ep.decisions[t];
      auto steps_left = static_cast<double>(ep.decisions.size() - 1 - t);
      double ret = std::pow(opt.gamma, steps_left) * ep.reward;
      double value = fwd.value[j];
      double advantage = ret - (opt.use_baseline ? value : 0.0);
      Vector logits = dec.features * fwd.query.col(j);
      Vector logp = logits.array() - log_sum_exp(logits);
      Vector probs = logp.array().exp();
      double entropy = -(probs.array() * logp.array()).sum();
      entropy_total += entropy;
      ++decisions_total;
      // d(-A log pi_a)/dlogit = -A (onehot - pi)
      Vector d_logits = advantage * probs;
      d_logits[dec.chosen] -= advantage;
      // d(-beta H)/dlogit_i = beta pi_i (log pi_i + H)
      d_logits.array() += opt.entropy_coef * probs.array() * (logp.array() + entropy);
      d_logits *= inv_b;
      d_query.col(j) = dec.features.transpose() * d_logits;
      if (opt.use_baseline) d_value[j] = opt.value_coef * (value - ret) * inv_b;
    }
    policy.backward(fwd, d_query, d_value, grad);
  }
  if (stats) {
    double r = 0;
    for (const auto& e : episodes) r += e.reward;
    stats->mean_reward = r * inv_b;
    stats->mean_entropy = decisions_total ? entropy_total / decisions_total : 0.0;
  }
  return grad;
}

class Adam {
 public:
  explicit Adam(Eigen::Index n, double lr) : lr_(lr), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1 - beta1_) * grad;
    v_ = beta2_ * v_ + (1 - beta2_) * grad.cwiseProduct(grad);
    double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Vector m_;
  Vector v_;
};

// Terminal reward of a finished episode under `spec`. Caches per-user item
// maxima and training item sets.
class RewardOracle {
 public:
  RewardOracle(const KnowledgeGraph& graph, const EmbeddingTable& table, RewardSpec spec)
      : graph_(graph), table_(table), spec_(std::move(spec)) {}

  double operator()(const PathState& ps) {
    EntityId u = ps.user();
    if (spec_.mode == RewardMode::kBinary) return reward_binary(ps, items_of(u));
    auto it = item_max_.find(u);
    if (it == item_max_.end()) it = item_max_.emplace(u, item_score_max(table_, graph_, u)).first;
    return reward_pattern(ps, graph_, table_, spec_.patterns, it->second);
  }

  const std::unordered_set<EntityId>& items_of(EntityId u) {
    auto it = items_.find(u);
    if (it == items_.end()) {
      auto list = graph_.interacted_items(u);
      it = items_.emplace(u, std::unordered_set<EntityId>(list.begin(), list.end())).first;
    }
    return it->second;
  }

 private:
  const KnowledgeGraph& graph_;
  const EmbeddingTable& table_;
  RewardSpec spec_;
  std::unordered_map<EntityId, double> item_max_;
  std::unordered_map<EntityId, std::unordered_set<EntityId>> items_;
};

struct CurvePoint {
  int epoch = 0;
  double mean_reward = 0;
  double mean_entropy = 0;
};

struct TrainedAgent {
  PolicyModel policy;
  std::vector<CurvePoint> curve;
};

// Users with at least one interaction in the graph, ascending id.
inline std::vector<EntityId> training_users(const KnowledgeGraph& graph) {
  std::vector<EntityId> out;
  for (auto u : graph.users()) {
    if (!graph.interacted_items(u).empty()) out.push_back(u);
  }
  return out;
}

inline TrainedAgent train_agent(const KnowledgeGraph& graph, const EmbeddingTable& table,
                                const RewardSpec& reward, const AgentConfig& config) {
  config.validate();
  TrainedAgent out{PolicyModel(table.dim(), config.hops, config.hidden1, config.hidden2,
                               config.seed),
                   {}};
  auto users = training_users(graph);
  if (users.empty() || config.epochs == 0) return out;

  std::mt19937_64 rng(config.seed ^ 0xA5A5A5A5ULL);
  RewardOracle oracle(graph, table, reward);
  Adam adam(out.policy.num_params(), config.learning_rate);
  GradientOptions opt{config.gamma, config.entropy_coef, config.value_coef, config.use_baseline};
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(users.begin(), users.end(), rng);
    double reward_sum = 0, entropy_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < users.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(users.size(), start + static_cast<std::size_t>(config.batch_size));
      std::span<const EntityId> batch(users.data() + start, end - start);
      auto eps = rollout_batch(out.policy, batch, graph, table, config.hops, config.max_actions,
                               RolloutPolicy::kLearned, rng);
      for (auto& e : eps) e.reward = oracle(e.final_state);
      BatchStats stats;
      Vector grad = reinforce_gradient(out.policy, eps, opt, &stats);
      adam.step(out.policy.params(), grad);
      reward_sum += stats.mean_reward * static_cast<double>(eps.size());
      entropy_sum += stats.mean_entropy;
      ++batches;
    }
    out.curve.push_back({epoch, reward_sum / static_cast<double>(users.size()),
                         entropy_sum / static_cast<double>(batches)});
  }
  return out;
}

// Mean terminal reward of `rounds` sampled rollouts per user.
inline double mean_rollout_reward(const PolicyModel& policy, std::span<const EntityId> users,
                                  const KnowledgeGraph& graph, const EmbeddingTable& table,
                                  const RewardSpec& reward, int hops, int max_actions,
                                  RolloutPolicy mode, std::uint64_t seed, int rounds = 1) {
  if (users.empty()) return 0.0;
  std::mt19937_64 rng(seed);
  RewardOracle oracle(graph, table, reward);
  double total = 0;
  std::size_t count = 0;
  for (int r = 0; r < rounds; ++r) {
    for (std::size_t start = 0; start < users.size(); start += 64) {
      std::size_t end = std::min(users.size(), start + 64);
      auto eps = rollout_batch(policy, users.subspan(start, end - start), graph, table, hops,
                               max_actions, mode, rng);
      for (const auto& e : eps) total += oracle(e.final_state);
      count += eps.size();
    }
  }
  return total / static_cast<double>(count);
}

inline void write_training_curve(const std::string& path, std::span<const CurvePoint> curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << "epoch,mean_reward,entropy\n";
  out.precision(17);
  for (const auto& p : curve) out << p.epoch << ',' << p.mean_reward << ',' << p.mean_entropy << '\n';
}

}  // namespace grecs

#endif  // GRECS_AGENT_HPP
