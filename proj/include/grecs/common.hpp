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

#ifndef GRECS_COMMON_HPP
#define GRECS_COMMON_HPP

#include <cstdint>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace grecs {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using TypeId = std::uint32_t;

inline constexpr EntityId kNoEntity = std::numeric_limits<EntityId>::max();
// Sentinel relation used by self-loop hops. Never a registered relation.
inline constexpr RelationId kSelfLoop = std::numeric_limits<RelationId>::max();

enum class ErrorCode {
  kUnknownEntity,
  kUnknownRelation,
  kSchemaViolation,
  kNotAnItem,
  kFrozenGraph,
  kMissingEmbedding,
  kEmptyCandidates,
  kEmptyGraph,
  kBudgetExhausted,
  kInvalidAction,
  kIncompletePath,
  kUnknownUser,
  kEmptyProfile,
  kMissingNeighborEmbedding,
  kParseError,
  kEmptyUser,
  kInvalidSpec,
  kEmptyColdSet,
  kInvalidConfig,
  kInvalidAxisValue,
  kIoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownEntity: return "UnknownEntity";
    case ErrorCode::kUnknownRelation: return "UnknownRelation";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kNotAnItem: return "NotAnItem";
    case ErrorCode::kFrozenGraph: return "FrozenGraph";
    case ErrorCode::kMissingEmbedding: return "MissingEmbedding";
    case ErrorCode::kEmptyCandidates: return "EmptyCandidates";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kBudgetExhausted: return "BudgetExhausted";
    case ErrorCode::kInvalidAction: return "InvalidAction";
    case ErrorCode::kIncompletePath: return "IncompletePath";
    case ErrorCode::kUnknownUser: return "UnknownUser";
    case ErrorCode::kEmptyProfile: return "EmptyProfile";
    case ErrorCode::kMissingNeighborEmbedding: return "MissingNeighborEmbedding";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kEmptyUser: return "EmptyUser";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kEmptyColdSet: return "EmptyColdSet";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidAxisValue: return "InvalidAxisValue";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void log_warning(std::string_view message) {
  std::clog << "[grecs] warning: " << message << '\n';
}

// 64-bit FNV-1a. Used to stamp artifacts with a stable config fingerprint.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace grecs

#endif  // GRECS_COMMON_HPP
