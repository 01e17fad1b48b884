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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odesketch/common.hpp"

namespace odesketch {

enum class Op : std::uint8_t { Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log };

int arity(Op op);
std::string_view op_name(Op op);
/// Accepts "+", "-", "*", "/", "^", "sin", "cos", "exp", "log" and the
/// aliases add/sub/mul/div/pow and the typographic forms of the basic four.
std::optional<Op> parse_op(std::string_view name);

enum class NodeKind : std::uint8_t { Operator, Variable, ConstSlot, Literal, Nonterminal };

/// One node of an expression in preorder. `index` is the variable, slot or
/// nonterminal dimension; `value` is used by literals only.
struct Node {
  NodeKind kind = NodeKind::Literal;
  Op op = Op::Add;
  std::uint32_t index = 0;
  double value = 0.0;

  static Node op_node(Op op) { return {NodeKind::Operator, op, 0, 0.0}; }
  static Node variable(std::uint32_t i) { return {NodeKind::Variable, Op::Add, i, 0.0}; }
  static Node slot(std::uint32_t k) { return {NodeKind::ConstSlot, Op::Add, k, 0.0}; }
  static Node literal(double v) { return {NodeKind::Literal, Op::Add, 0, v}; }
  static Node nonterminal(std::uint32_t dim) { return {NodeKind::Nonterminal, Op::Add, dim, 0.0}; }

  friend bool operator==(const Node&, const Node&) = default;
};

/// A symbolic expression stored as a flat preorder node list. The list
/// always describes exactly one well-formed tree.
class ExpressionTree {
 public:
  ExpressionTree() = default;
  explicit ExpressionTree(std::vector<Node> preorder);

  static ExpressionTree leaf(Node node) { return ExpressionTree({node}); }
  static ExpressionTree unary(Op op, const ExpressionTree& child);
  static ExpressionTree binary(Op op, const ExpressionTree& lhs, const ExpressionTree& rhs);

  std::span<const Node> nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }

  /// One past the last node of the subtree rooted at `i`.
  std::size_t subtree_end(std::size_t i) const;

  bool complete() const;
  std::size_t nonterminal_count() const;
  /// Largest slot index + 1, or 0 without slots.
  std::size_t slot_count() const;

  /// Position of the first (leftmost) nonterminal of dimension `dim`.
  std::optional<std::size_t> leftmost_nonterminal(std::uint32_t dim) const;
  /// Replaces the leaf at `position` with `fragment`.
  ExpressionTree replace_leaf(std::size_t position, const ExpressionTree& fragment) const;

  friend bool operator==(const ExpressionTree&, const ExpressionTree&) = default;

 private:
  std::vector<Node> nodes_;
};

/// dx_i/dt = exprs[i](x, c) for i in 0..n-1, with one coefficient per
/// constant slot. Slots are numbered densely in preorder across the
/// expressions.
class OdeSystem {
 public:
  OdeSystem() = default;
  OdeSystem(std::vector<ExpressionTree> exprs, std::vector<double> coefficients = {});

  std::size_t dims() const { return exprs_.size(); }
  const std::vector<ExpressionTree>& exprs() const { return exprs_; }
  const std::vector<double>& coefficients() const { return coefficients_; }
  std::size_t constant_count() const { return constant_count_; }
  bool complete() const { return complete_; }
  bool has_coefficients() const { return coefficients_.size() == constant_count_; }

  OdeSystem with_coefficients(std::vector<double> coefficients) const;

  /// Replaces every non-integer literal by a fresh constant slot. Returns
  /// the skeleton with the literal values as its coefficients. Integer
  /// literals (exponents, the 1 in 1 - x/K) stay fixed.
  OdeSystem to_skeleton() const;

  friend bool operator==(const OdeSystem&, const OdeSystem&) = default;

 private:
  std::vector<ExpressionTree> exprs_;
  std::vector<double> coefficients_;
  std::size_t constant_count_ = 0;
  bool complete_ = true;
};

/// Renumbers slots of `exprs` densely in preorder, expression by expression.
std::vector<ExpressionTree> renumber_slots(std::vector<ExpressionTree> exprs);

/// Postfix program for one system; evaluation is allocation free.
class CompiledSystem {
 public:
  explicit CompiledSystem(const OdeSystem& system);

  std::size_t dims() const { return starts_.size() - 1; }

  /// out[i] = f_i(state, coeffs). Non-finite results propagate.
  void eval(const double* state, const double* coeffs, double* out) const;

 private:
  enum class Code : std::uint8_t { Var, Slot, Lit, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log };
  struct Instr {
    Code code;
    std::uint32_t index;
    double value;
  };
  std::vector<Instr> program_;
  std::vector<std::size_t> starts_;
  std::size_t max_depth_ = 0;
};

/// Evaluates a complete system; throws UsageError on incomplete systems or
/// size mismatches.
std::vector<double> evaluate(const OdeSystem& system, std::span<const double> state,
                             std::span<const double> coeffs);

/// Variable names in text: x0.. (registry files) or x1.. (rendered reports).
enum class VarBase { Zero = 0, One = 1 };

/// Parses infix text: + - * / ^, unary minus, parentheses, sin/cos/exp/log,
/// variables x<k>, constant slots c<k>, numeric literals.
ExpressionTree parse_expression(std::string_view text, std::size_t n_vars,
                                VarBase base = VarBase::Zero);

/// Canonical infix text. Slots print as their coefficient when `coeffs`
/// covers them and as c<k> otherwise; nonterminals print as <A{dim+1}>.
std::string render_expression(const ExpressionTree& tree, std::span<const double> coeffs = {},
                              VarBase base = VarBase::Zero);

/// "x1' = ... ; x2' = ..." with fitted coefficients substituted.
std::string render(const OdeSystem& system);

/// Inverse of render() for complete systems.
OdeSystem parse_rendered(std::string_view text);

/// Parses "e0 ; e1 ; ..." in x0-based text into a system of literals.
OdeSystem parse_system(std::string_view text, VarBase base = VarBase::Zero);

}  // namespace odesketch
