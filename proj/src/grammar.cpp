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

#include "odesketch/grammar.hpp"

#include <algorithm>
#include <array>

namespace odesketch {

namespace {

constexpr std::array<Op, 4> kBinaryOrder = {Op::Add, Op::Sub, Op::Mul, Op::Div};
constexpr std::array<Op, 4> kUnaryOrder = {Op::Sin, Op::Cos, Op::Exp, Op::Log};

std::string nonterminal_name(std::uint32_t dim) { return "A" + std::to_string(dim + 1); }

}  // namespace

Grammar::Grammar(std::vector<Op> binary_ops, std::vector<Op> unary_ops, std::size_t n_vars)
    : n_vars_(n_vars) {
  if (n_vars == 0) throw ConfigError("grammar needs at least one variable");
  // Canonical order regardless of how the operators were listed.
  for (Op op : kBinaryOrder) {
    if (std::find(binary_ops.begin(), binary_ops.end(), op) != binary_ops.end()) binary_ops_.push_back(op);
  }
  for (Op op : kUnaryOrder) {
    if (std::find(unary_ops.begin(), unary_ops.end(), op) != unary_ops.end()) unary_ops_.push_back(op);
  }

  for (std::uint32_t d = 0; d < n_vars; ++d) {
    const SymbolId nt{SymbolId::Kind::Nonterminal, d, Op::Add};
    const std::string a = nonterminal_name(d);
    const ExpressionTree nt_leaf = ExpressionTree::leaf(Node::nonterminal(d));
    for (Op op : binary_ops_) {
      ProductionRule r;
      r.lhs = d;
      r.arity = 2;
      r.fragment = ExpressionTree::binary(op, nt_leaf, nt_leaf);
      r.rhs = {nt, {SymbolId::Kind::Operator, 0, op}, nt};
      std::string body = a + " " + std::string(op_name(op)) + " " + a;
      r.display = a + " -> " + (op == Op::Add || op == Op::Sub ? "(" + body + ")" : body);
      rules_.push_back(std::move(r));
    }
    for (Op op : unary_ops_) {
      ProductionRule r;
      r.lhs = d;
      r.arity = 1;
      r.fragment = ExpressionTree::unary(op, nt_leaf);
      r.rhs = {{SymbolId::Kind::Operator, 0, op}, nt};
      r.display = a + " -> " + std::string(op_name(op)) + "(" + a + ")";
      rules_.push_back(std::move(r));
    }
    for (std::uint32_t v = 0; v < n_vars; ++v) {
      ProductionRule r;
      r.lhs = d;
      r.arity = 0;
      r.fragment = ExpressionTree::leaf(Node::variable(v));
      r.rhs = {{SymbolId::Kind::Variable, v, Op::Add}};
      r.display = a + " -> x" + std::to_string(v + 1);
      rules_.push_back(std::move(r));
    }
    ProductionRule r;
    r.lhs = d;
    r.arity = 0;
    r.fragment = ExpressionTree::leaf(Node::slot(0));
    r.rhs = {{SymbolId::Kind::Constant, 0, Op::Add}};
    r.display = a + " -> const";
    rules_.push_back(std::move(r));
  }
}

std::uint64_t Grammar::fingerprint() const {
  // FNV-1a over the rule listing.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& r : rules_) {
    for (char c : r.display) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

Grammar build_grammar(const std::vector<std::string>& operators, std::size_t n_vars) {
  if (n_vars == 0) throw ConfigError("n_vars must be at least 1");
  std::vector<Op> binary;
  std::vector<Op> unary;
  bool any_operator = false;
  for (const auto& raw : operators) {
    std::string_view tok = trim(raw);
    if (tok == "const") continue;
    if (tok.size() >= 2 && tok[0] == 'x' &&
        std::all_of(tok.begin() + 1, tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    auto op = parse_op(tok);
    if (!op || *op == Op::Pow) throw ConfigError("unknown operator '" + std::string(tok) + "'");
    any_operator = true;
    (arity(*op) == 2 ? binary : unary).push_back(*op);
  }
  if (!any_operator) throw ConfigError("operator set is empty");
  return Grammar(std::move(binary), std::move(unary), n_vars);
}

OdeSystem sequence_to_system(const Grammar& grammar, const RuleSequence& seq) {
  std::vector<ExpressionTree> exprs;
  exprs.reserve(grammar.n_vars());
  for (std::uint32_t d = 0; d < grammar.n_vars(); ++d) {
    exprs.push_back(ExpressionTree::leaf(Node::nonterminal(d)));
  }
  for (std::uint32_t id : seq) {
    const ProductionRule& r = grammar.rule(id);
    auto pos = exprs[r.lhs].leftmost_nonterminal(r.lhs);
    if (!pos) continue;
    exprs[r.lhs] = exprs[r.lhs].replace_leaf(*pos, r.fragment);
  }
  return OdeSystem(renumber_slots(std::move(exprs)));
}

ExpansionTracker::ExpansionTracker(const Grammar& grammar)
    : grammar_(&grammar), open_(grammar.n_vars(), 1), open_total_(grammar.n_vars()) {}

bool ExpansionTracker::apply(std::uint32_t rule_id) {
  const ProductionRule& r = grammar_->rule(rule_id);
  if (open_[r.lhs] == 0) return false;
  open_[r.lhs] = open_[r.lhs] - 1 + r.arity;
  open_total_ = open_total_ - 1 + r.arity;
  return true;
}

}  // namespace odesketch
