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

#include "odesketch/expression.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace odesketch {

int arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      return 2;
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Log:
      return 1;
  }
  return 0;
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Pow: return "^";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
  }
  return "?";
}

std::optional<Op> parse_op(std::string_view name) {
  if (name == "+" || name == "add") return Op::Add;
  if (name == "-" || name == "sub" || name == "−") return Op::Sub;
  if (name == "*" || name == "mul" || name == "×") return Op::Mul;
  if (name == "/" || name == "div" || name == "÷") return Op::Div;
  if (name == "^" || name == "pow") return Op::Pow;
  if (name == "sin") return Op::Sin;
  if (name == "cos") return Op::Cos;
  if (name == "exp") return Op::Exp;
  if (name == "log") return Op::Log;
  return std::nullopt;
}

namespace {

int node_arity(const Node& n) { return n.kind == NodeKind::Operator ? arity(n.op) : 0; }

bool is_integer(double v) { return std::isfinite(v) && std::abs(v) < 1e15 && v == std::round(v); }

}  // namespace

// ---------------------------------------------------------------------------
// ExpressionTree

ExpressionTree::ExpressionTree(std::vector<Node> preorder) : nodes_(std::move(preorder)) {
  if (nodes_.empty()) return;
  if (subtree_end(0) != nodes_.size()) {
    throw UsageError("preorder node list does not describe a single tree");
  }
}

ExpressionTree ExpressionTree::unary(Op op, const ExpressionTree& child) {
  std::vector<Node> nodes;
  nodes.reserve(child.nodes_.size() + 1);
  nodes.push_back(Node::op_node(op));
  nodes.insert(nodes.end(), child.nodes_.begin(), child.nodes_.end());
  return ExpressionTree(std::move(nodes));
}

ExpressionTree ExpressionTree::binary(Op op, const ExpressionTree& lhs, const ExpressionTree& rhs) {
  std::vector<Node> nodes;
  nodes.reserve(lhs.nodes_.size() + rhs.nodes_.size() + 1);
  nodes.push_back(Node::op_node(op));
  nodes.insert(nodes.end(), lhs.nodes_.begin(), lhs.nodes_.end());
  nodes.insert(nodes.end(), rhs.nodes_.begin(), rhs.nodes_.end());
  return ExpressionTree(std::move(nodes));
}

std::size_t ExpressionTree::subtree_end(std::size_t i) const {
  std::size_t pending = 1;
  while (pending > 0) {
    if (i >= nodes_.size()) throw UsageError("truncated expression tree");
    pending += static_cast<std::size_t>(node_arity(nodes_[i])) - 1;
    ++i;
  }
  return i;
}

bool ExpressionTree::complete() const { return nonterminal_count() == 0 && !nodes_.empty(); }

std::size_t ExpressionTree::nonterminal_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) {
    return n.kind == NodeKind::Nonterminal;
  }));
}

std::size_t ExpressionTree::slot_count() const {
  std::size_t count = 0;
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::ConstSlot) count = std::max<std::size_t>(count, n.index + 1);
  }
  return count;
}

std::optional<std::size_t> ExpressionTree::leftmost_nonterminal(std::uint32_t dim) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == NodeKind::Nonterminal && nodes_[i].index == dim) return i;
  }
  return std::nullopt;
}

ExpressionTree ExpressionTree::replace_leaf(std::size_t position, const ExpressionTree& fragment) const {
  if (position >= nodes_.size() || node_arity(nodes_[position]) != 0) {
    throw UsageError("replace_leaf: position is not a leaf");
  }
  std::vector<Node> nodes;
  nodes.reserve(nodes_.size() + fragment.nodes_.size());
  nodes.insert(nodes.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(position));
  nodes.insert(nodes.end(), fragment.nodes_.begin(), fragment.nodes_.end());
  nodes.insert(nodes.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(position) + 1, nodes_.end());
  return ExpressionTree(std::move(nodes));
}

// ---------------------------------------------------------------------------
// OdeSystem

OdeSystem::OdeSystem(std::vector<ExpressionTree> exprs, std::vector<double> coefficients)
    : exprs_(std::move(exprs)), coefficients_(std::move(coefficients)) {
  complete_ = !exprs_.empty();
  for (const auto& e : exprs_) {
    constant_count_ = std::max(constant_count_, e.slot_count());
    complete_ = complete_ && e.complete();
  }
  if (!coefficients_.empty() && coefficients_.size() != constant_count_) {
    throw UsageError("coefficient vector has " + std::to_string(coefficients_.size()) +
                     " entries for " + std::to_string(constant_count_) + " constant slots");
  }
}

OdeSystem OdeSystem::with_coefficients(std::vector<double> coefficients) const {
  return OdeSystem(exprs_, std::move(coefficients));
}

OdeSystem OdeSystem::to_skeleton() const {
  std::vector<ExpressionTree> out;
  std::vector<double> values;
  for (const auto& e : exprs_) {
    std::vector<Node> nodes(e.nodes().begin(), e.nodes().end());
    for (auto& n : nodes) {
      if (n.kind == NodeKind::ConstSlot) {
        double v = has_coefficients() && constant_count_ > 0 ? coefficients_[n.index] : 1.0;
        n = Node::slot(static_cast<std::uint32_t>(values.size()));
        values.push_back(v);
      } else if (n.kind == NodeKind::Literal && !is_integer(n.value)) {
        values.push_back(n.value);
        n = Node::slot(static_cast<std::uint32_t>(values.size() - 1));
      }
    }
    out.emplace_back(std::move(nodes));
  }
  return OdeSystem(std::move(out), std::move(values));
}

std::vector<ExpressionTree> renumber_slots(std::vector<ExpressionTree> exprs) {
  std::uint32_t next = 0;
  std::vector<ExpressionTree> out;
  out.reserve(exprs.size());
  for (auto& e : exprs) {
    std::vector<Node> nodes(e.nodes().begin(), e.nodes().end());
    for (auto& n : nodes) {
      if (n.kind == NodeKind::ConstSlot) n.index = next++;
    }
    out.emplace_back(std::move(nodes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CompiledSystem

CompiledSystem::CompiledSystem(const OdeSystem& system) {
  if (!system.complete()) throw UsageError("cannot compile an incomplete system");
  starts_.push_back(0);
  for (const auto& expr : system.exprs()) {
    auto nodes = expr.nodes();
    // Reversed preorder is a valid postfix program in which every operator
    // finds its left operand on top of the stack.
    std::vector<Instr> rev;
    rev.reserve(nodes.size());
    for (std::size_t k = nodes.size(); k-- > 0;) {
      const Node& n = nodes[k];
      Instr in{Code::Lit, n.index, n.value};
      switch (n.kind) {
        case NodeKind::Variable: in.code = Code::Var; break;
        case NodeKind::ConstSlot: in.code = Code::Slot; break;
        case NodeKind::Literal: in.code = Code::Lit; break;
        case NodeKind::Nonterminal: throw UsageError("cannot compile an incomplete system");
        case NodeKind::Operator:
          switch (n.op) {
            case Op::Add: in.code = Code::Add; break;
            case Op::Sub: in.code = Code::Sub; break;
            case Op::Mul: in.code = Code::Mul; break;
            case Op::Div: in.code = Code::Div; break;
            case Op::Pow: in.code = Code::Pow; break;
            case Op::Sin: in.code = Code::Sin; break;
            case Op::Cos: in.code = Code::Cos; break;
            case Op::Exp: in.code = Code::Exp; break;
            case Op::Log: in.code = Code::Log; break;
          }
          break;
      }
      rev.push_back(in);
    }
    std::size_t depth = 0;
    for (const auto& in : rev) {
      if (in.code == Code::Var || in.code == Code::Slot || in.code == Code::Lit) {
        ++depth;
      } else if (in.code == Code::Add || in.code == Code::Sub || in.code == Code::Mul ||
                 in.code == Code::Div || in.code == Code::Pow) {
        --depth;
      }
      max_depth_ = std::max(max_depth_, depth);
    }
    program_.insert(program_.end(), rev.begin(), rev.end());
    starts_.push_back(program_.size());
  }
}

void CompiledSystem::eval(const double* state, const double* coeffs, double* out) const {
  std::array<double, 64> small;
  std::vector<double> large;
  double* stack = small.data();
  if (max_depth_ > small.size()) {
    large.resize(max_depth_);
    stack = large.data();
  }
  for (std::size_t d = 0; d + 1 < starts_.size(); ++d) {
    std::size_t top = 0;
    for (std::size_t pc = starts_[d]; pc < starts_[d + 1]; ++pc) {
      const Instr& in = program_[pc];
      switch (in.code) {
        case Code::Var: stack[top++] = state[in.index]; break;
        case Code::Slot: stack[top++] = coeffs[in.index]; break;
        case Code::Lit: stack[top++] = in.value; break;
        // Reversed preorder leaves the left operand on top of the stack.
        case Code::Add: --top; stack[top - 1] = stack[top] + stack[top - 1]; break;
        case Code::Sub: --top; stack[top - 1] = stack[top] - stack[top - 1]; break;
        case Code::Mul: --top; stack[top - 1] = stack[top] * stack[top - 1]; break;
        case Code::Div: --top; stack[top - 1] = stack[top] / stack[top - 1]; break;
        case Code::Pow: --top; stack[top - 1] = std::pow(stack[top], stack[top - 1]); break;
        case Code::Sin: stack[top - 1] = std::sin(stack[top - 1]); break;
        case Code::Cos: stack[top - 1] = std::cos(stack[top - 1]); break;
        case Code::Exp: stack[top - 1] = std::exp(stack[top - 1]); break;
        case Code::Log:
          stack[top - 1] = stack[top - 1] > 0.0 ? std::log(stack[top - 1]) : std::nan("");
          break;
      }
    }
    out[d] = stack[0];
  }
}

std::vector<double> evaluate(const OdeSystem& system, std::span<const double> state,
                             std::span<const double> coeffs) {
  if (!system.complete()) throw UsageError("evaluate: system is incomplete");
  if (state.size() != system.dims()) throw UsageError("evaluate: state dimension mismatch");
  if (coeffs.size() != system.constant_count()) {
    throw UsageError("evaluate: expected " + std::to_string(system.constant_count()) +
                     " coefficients, got " + std::to_string(coeffs.size()));
  }
  CompiledSystem compiled(system);
  std::vector<double> out(system.dims());
  compiled.eval(state.data(), coeffs.data(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Renderer {
  std::span<const Node> nodes;
  std::span<const double> coeffs;
  int base;

  // Text of the subtree at i; `end` receives one past its last node.
  std::string node(std::size_t i, std::size_t& end) const {
    const Node& n = nodes[i];
    switch (n.kind) {
      case NodeKind::Variable:
        end = i + 1;
        return "x" + std::to_string(n.index + static_cast<std::uint32_t>(base));
      case NodeKind::ConstSlot:
        end = i + 1;
        if (n.index < coeffs.size()) return format_double(coeffs[n.index]);
        return "c" + std::to_string(n.index);
      case NodeKind::Literal:
        end = i + 1;
        return format_double(n.value);
      case NodeKind::Nonterminal:
        end = i + 1;
        return "<A" + std::to_string(n.index + 1) + ">";
      case NodeKind::Operator:
        break;
    }
    if (arity(n.op) == 1) {
      std::string child = node(i + 1, end);
      return std::string(op_name(n.op)) + "(" + child + ")";
    }
    std::size_t mid = 0;
    std::string lhs = node(i + 1, mid);
    std::string rhs = node(mid, end);
    const Node& l = nodes[i + 1];
    const Node& r = nodes[mid];
    switch (n.op) {
      case Op::Add:
      case Op::Sub:
        return "(" + lhs + " " + std::string(op_name(n.op)) + " " + rhs + ")";
      case Op::Mul:
      case Op::Div:
        if (is_op(r, Op::Mul) || is_op(r, Op::Div)) rhs = "(" + rhs + ")";
        return lhs + std::string(op_name(n.op)) + rhs;
      case Op::Pow:
        if (!is_tight(l) || lhs.front() == '-') lhs = "(" + lhs + ")";
        if (!is_tight(r) || rhs.front() == '-') rhs = "(" + rhs + ")";
        return lhs + "^" + rhs;
      default:
        return {};
    }
  }

  static bool is_op(const Node& n, Op op) { return n.kind == NodeKind::Operator && n.op == op; }
  // Renders as a single atom: leaves, function calls, parenthesized sums.
  static bool is_tight(const Node& n) {
    return n.kind != NodeKind::Operator || arity(n.op) == 1 || n.op == Op::Add || n.op == Op::Sub;
  }
};

}  // namespace

std::string render_expression(const ExpressionTree& tree, std::span<const double> coeffs, VarBase base) {
  if (tree.empty()) return "";
  Renderer r{tree.nodes(), coeffs, static_cast<int>(base)};
  std::size_t end = 0;
  return r.node(0, end);
}

std::string render(const OdeSystem& system) {
  std::string out;
  for (std::size_t i = 0; i < system.dims(); ++i) {
    if (i > 0) out += " ; ";
    out += "x" + std::to_string(i + 1) + "' = ";
    out += render_expression(system.exprs()[i], system.coefficients(), VarBase::One);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::size_t n_vars, VarBase base)
      : text_(text), n_vars_(n_vars), base_(static_cast<std::size_t>(base)) {}

  ExpressionTree parse() {
    ExpressionTree tree = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return tree;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("parse error at position " + std::to_string(pos_) + ": " + msg, pos_);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  ExpressionTree expr() {
    ExpressionTree lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = ExpressionTree::binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = ExpressionTree::binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  ExpressionTree term() {
    ExpressionTree lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = ExpressionTree::binary(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = ExpressionTree::binary(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  ExpressionTree unary() {
    if (accept('+')) return unary();
    if (accept('-')) {
      // "-2.5" is one literal unless it is the base of a power.
      skip_ws();
      std::size_t save = pos_;
      if (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
        double v = number();
        if (!peek('^')) return ExpressionTree::leaf(Node::literal(-v));
        pos_ = save;
      }
      return ExpressionTree::binary(Op::Mul, ExpressionTree::leaf(Node::literal(-1.0)), unary());
    }
    return power();
  }

  ExpressionTree power() {
    ExpressionTree base = primary();
    if (accept('^')) return ExpressionTree::binary(Op::Pow, base, unary());
    return base;
  }

  double number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    double v = 0.0;
    auto res = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return v;
  }

  std::size_t index_suffix() {
    std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      ++pos_;
    }
    if (start == pos_) fail("expected an index");
    return v;
  }

  ExpressionTree primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      ExpressionTree inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return ExpressionTree::leaf(Node::literal(number()));
    }
    if (c == '<') {
      std::size_t start = pos_;
      ++pos_;
      if (pos_ >= text_.size() || text_[pos_] != 'A') fail("expected nonterminal <A<k>>");
      ++pos_;
      std::size_t k = index_suffix();
      if (k < 1 || k > n_vars_) {
        pos_ = start;
        fail("nonterminal out of range");
      }
      if (pos_ >= text_.size() || text_[pos_] != '>') fail("expected '>'");
      ++pos_;
      return ExpressionTree::leaf(Node::nonterminal(static_cast<std::uint32_t>(k - 1)));
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      std::string_view word = text_.substr(start, pos_ - start);
      if (word == "x") {
        std::size_t k = index_suffix();
        if (k < base_ || k - base_ >= n_vars_) {
          pos_ = start;
          fail("variable x" + std::to_string(k) + " out of range");
        }
        return ExpressionTree::leaf(Node::variable(static_cast<std::uint32_t>(k - base_)));
      }
      if (word == "c") {
        return ExpressionTree::leaf(Node::slot(static_cast<std::uint32_t>(index_suffix())));
      }
      if (word == "nan" || word == "inf") {
        return ExpressionTree::leaf(Node::literal(word == "nan" ? std::nan("") : INFINITY));
      }
      auto op = parse_op(word);
      if (!op || arity(*op) != 1) {
        pos_ = start;
        fail("unknown identifier '" + std::string(word) + "'");
      }
      if (!accept('(')) fail("expected '(' after " + std::string(word));
      ExpressionTree inner = expr();
      if (!accept(')')) fail("expected ')'");
      return ExpressionTree::unary(*op, inner);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t n_vars_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto p = text.find(sep, start);
    parts.push_back(text.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return parts;
}

}  // namespace

ExpressionTree parse_expression(std::string_view text, std::size_t n_vars, VarBase base) {
  return Parser(text, n_vars, base).parse();
}

OdeSystem parse_system(std::string_view text, VarBase base) {
  auto parts = split(text, ';');
  std::vector<ExpressionTree> exprs;
  exprs.reserve(parts.size());
  for (auto part : parts) exprs.push_back(parse_expression(part, parts.size(), base));
  return OdeSystem(std::move(exprs));
}

OdeSystem parse_rendered(std::string_view text) {
  auto parts = split(text, ';');
  std::vector<ExpressionTree> exprs;
  exprs.reserve(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto eq = parts[i].find('=');
    if (eq == std::string_view::npos) throw ParseError("expected \"x<k>' = ...\"", 0);
    auto lhs = trim(parts[i].substr(0, eq));
    std::string expected = "x" + std::to_string(i + 1) + "'";
    if (lhs != expected) throw ParseError("expected left-hand side " + expected, 0);
    exprs.push_back(parse_expression(parts[i].substr(eq + 1), parts.size(), VarBase::One));
  }
  return OdeSystem(std::move(exprs));
}

}  // namespace odesketch
