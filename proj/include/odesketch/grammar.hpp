// Copyright 2026 The odesketch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odesketch/expression.hpp"

namespace odesketch {

struct SymbolId {
  enum class Kind : std::uint8_t { Nonterminal, Variable, Constant, Operator };
  Kind kind = Kind::Constant;
  std::uint32_t index = 0;  // nonterminal dimension or variable index
  Op op = Op::Add;          // operator token only

  friend bool operator==(const SymbolId&, const SymbolId&) = default;
};

struct ProductionRule {
  std::uint32_t lhs = 0;  // dimension of the expanded nonterminal
  std::vector<SymbolId> rhs;
  std::uint32_t arity = 0;  // nonterminals in rhs
  std::string display;      // e.g. "A1 -> (A1 + A1)"
  ExpressionTree fragment;  // what the nonterminal is replaced with
};

/// The rule vocabulary for an n-dimensional system. Rules are ordered by
/// dimension, then binary operators (+ - * /), unary operators
/// (sin cos exp log), variables x1..xn, and const. Indices are the decoder
/// vocabulary and stay fixed for a fixed configuration.
class Grammar {
 public:
  Grammar(std::vector<Op> binary_ops, std::vector<Op> unary_ops, std::size_t n_vars);

  std::size_t n_vars() const { return n_vars_; }
  std::size_t size() const { return rules_.size(); }
  const std::vector<ProductionRule>& rules() const { return rules_; }
  const ProductionRule& rule(std::size_t id) const { return rules_.at(id); }
  const std::vector<Op>& binary_ops() const { return binary_ops_; }
  const std::vector<Op>& unary_ops() const { return unary_ops_; }

  /// Stable hash of the rule listing; identifies checkpoint compatibility.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Op> binary_ops_;
  std::vector<Op> unary_ops_;
  std::size_t n_vars_;
  std::vector<ProductionRule> rules_;
};

/// Builds the grammar from operator tokens. Terminal tokens ("const", "x1",
/// ...) are accepted and ignored: every dimension always gets all variables
/// and const. Throws ConfigError on unknown tokens.
Grammar build_grammar(const std::vector<std::string>& operators, std::size_t n_vars);

using RuleSequence = std::vector<std::uint32_t>;

/// Applies rules left to right from "phi -> A1, ..., An". Each rule expands
/// the leftmost nonterminal of its dimension; a rule whose dimension has no
/// nonterminal left is a no-op. Slots are numbered densely afterwards.
OdeSystem sequence_to_system(const Grammar& grammar, const RuleSequence& seq);

/// Tracks open nonterminals per dimension while a sequence is being sampled.
class ExpansionTracker {
 public:
  explicit ExpansionTracker(const Grammar& grammar);
  /// Returns false if the rule was a no-op.
  bool apply(std::uint32_t rule_id);
  bool complete() const { return open_total_ == 0; }

 private:
  const Grammar* grammar_;
  std::vector<std::size_t> open_;
  std::size_t open_total_;
};

}  // namespace odesketch
