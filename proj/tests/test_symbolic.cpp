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

#include <cmath>

#include "doctest.h"
#include "odesketch/grammar.hpp"

using namespace odesketch;

namespace {

std::vector<double> at(const OdeSystem& s, std::vector<double> x) { return evaluate(s, x, s.coefficients()); }

}  // namespace

TEST_CASE("parsed systems evaluate like the hand-written formula") {
  const OdeSystem s = parse_system("0.23*x0 - sin(x1)/2 ; x0^2 + exp(-x1)");
  REQUIRE(s.dims() == 2);
  const auto v = at(s, {1.5, 0.7});
  CHECK(v[0] == doctest::Approx(0.23 * 1.5 - std::sin(0.7) / 2).epsilon(1e-14));
  CHECK(v[1] == doctest::Approx(2.25 + std::exp(-0.7)).epsilon(1e-14));
}

TEST_CASE("operator precedence and associativity") {
  auto one = [](const char* text, double x) { return at(parse_system(text), {x})[0]; };
  CHECK(one("2 + 3*x0^2", 2.0) == 14.0);
  CHECK(one("-x0^2", 3.0) == -9.0);
  CHECK(one("x0/2/4", 8.0) == 1.0);
  CHECK(one("x0 - 1 - 1", 5.0) == 3.0);
  CHECK(one("2^3^2", 0.0) == 512.0);
  CHECK(one("(x0 + 1)*(x0 - 1)", 3.0) == 8.0);
  CHECK(one("log(exp(x0))", 1.25) == doctest::Approx(1.25));
  CHECK(one("cos(0)*x0", 4.0) == 4.0);
}

TEST_CASE("variable bases") {
  const OdeSystem zero = parse_system("x1 ; x0", VarBase::Zero);
  const OdeSystem one = parse_system("x2 ; x1", VarBase::One);
  CHECK(at(zero, {3.0, 5.0}) == at(one, {3.0, 5.0}));
  CHECK_THROWS_AS(parse_system("x0", VarBase::One), ParseError);
  CHECK_THROWS_AS(parse_system("x2 ; x0"), ParseError);
}

TEST_CASE("malformed text is rejected with a position") {
  for (const char* bad : {"x0 +", "(x0", "x0)", "sin x0", "2 ** x0", "", "x0 $ 1", "foo(x0)"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_system(bad), ParseError);
  }
  try {
    parse_system("x0 + * 2");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() > 0);
  }
}

TEST_CASE("render and parse_rendered round-trip") {
  for (const char* text : {"0.23*x0", "9.81 - 0.0021175*x0^2", "x1 ; -x0 - 0.5*sin(x1)",
                           "0.1 - 0.55*x0 + x0^2/(1 + x0^2)", "exp(-2*(x0 - 1)^2) ; cos(x0*x1) ; x2/3"}) {
    CAPTURE(text);
    const OdeSystem s = parse_system(text);
    const std::string r = render(s);
    const OdeSystem back = parse_rendered(r);
    CHECK(render(back) == r);
    std::vector<double> x(s.dims());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 + 0.7 * static_cast<double>(i);
    const auto a = at(s, x), b = at(back, x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }
  CHECK(render(parse_system("x0 + x1 ; x0")) == "x1' = (x1 + x2) ; x2' = x1");
}

TEST_CASE("rendered doubles keep full precision") {
  const OdeSystem s = parse_system("0.1234567890123456*x0");
  CHECK(at(parse_rendered(render(s)), {1.0})[0] == 0.1234567890123456);
}

TEST_CASE("to_skeleton turns non-integer literals into slots") {
  const OdeSystem s = parse_system("9.81 - 0.0021175*x0^2");
  const OdeSystem sk = s.to_skeleton();
  CHECK(sk.constant_count() == 2);
  CHECK(sk.coefficients() == std::vector<double>{9.81, 0.0021175});
  CHECK(at(sk, {4.0})[0] == doctest::Approx(9.81 - 0.0021175 * 16.0));
  // The exponent and the 1 in the denominator stay fixed.
  CHECK(parse_system("x0^2/(1 + x0^2)").to_skeleton().constant_count() == 0);
  // Slots number densely across equations.
  const OdeSystem two = parse_system("0.5*x0 ; 1.5*x1 + 2.5").to_skeleton();
  CHECK(two.constant_count() == 3);
  CHECK(two.coefficients() == std::vector<double>{0.5, 1.5, 2.5});
  CHECK(render(two.with_coefficients({1.0, 2.0, 3.0})) == render(parse_system("1*x0 ; 2*x1 + 3")));
}

TEST_CASE("compiled evaluation agrees with the tree walker") {
  const OdeSystem s = parse_system("0.3*x0*x1 - sin(x2) ; x0/(1 + x1^2) ; exp(-x2) - log(1 + x0^2)");
  const CompiledSystem c(s);
  CHECK(c.dims() == 3);
  Rng rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> x = {u(rng), u(rng), u(rng)};
    double out[3];
    c.eval(x.data(), s.coefficients().data(), out);
    const auto ref = at(s, x);
    for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("evaluate rejects unfitted slots and wrong sizes") {
  const OdeSystem sk = parse_system("0.5*x0").to_skeleton().with_coefficients({});
  CHECK_THROWS_AS(evaluate(sk, std::vector<double>{1.0}, std::vector<double>{}), UsageError);
  const OdeSystem s = parse_system("x0");
  CHECK_THROWS_AS(evaluate(s, std::vector<double>{1.0, 2.0}, std::vector<double>{}), UsageError);
}

TEST_CASE("expression tree structure") {
  const ExpressionTree t = parse_expression("(x0 + c0)*sin(c1)", 1);
  // Preorder: *, +, x0, c0, sin, c1.
  REQUIRE(t.nodes().size() == 6);
  CHECK(t.subtree_end(0) == 6);
  CHECK(t.subtree_end(1) == 4);
  CHECK(t.subtree_end(4) == 6);
  CHECK(t.slot_count() == 2);
  CHECK(t.complete());
  const ExpressionTree open = ExpressionTree::binary(Op::Add, ExpressionTree::leaf(Node::nonterminal(0)),
                                                     ExpressionTree::leaf(Node::nonterminal(0)));
  CHECK_FALSE(open.complete());
  CHECK(open.nonterminal_count() == 2);
  CHECK(open.leftmost_nonterminal(0) == 1u);
  CHECK_FALSE(open.leftmost_nonterminal(1).has_value());
  const ExpressionTree filled = open.replace_leaf(1, ExpressionTree::leaf(Node::variable(0)));
  CHECK(filled.nonterminal_count() == 1);
  CHECK(render_expression(filled) == "(x0 + <A1>)");
}

TEST_CASE("operator table") {
  CHECK(parse_op("+") == Op::Add);
  CHECK(parse_op("mul") == Op::Mul);
  CHECK(parse_op("sin") == Op::Sin);
  CHECK_FALSE(parse_op("tan").has_value());
  CHECK(arity(Op::Sin) == 1);
  CHECK(arity(Op::Div) == 2);
  CHECK(op_name(Op::Cos) == "cos");
}

TEST_CASE("grammar lists rules by dimension, binaries, unaries, variables, const") {
  const Grammar g = build_grammar({"+", "*", "sin"}, 2);
  // Per dimension: 2 binary + 1 unary + 2 variables + const.
  REQUIRE(g.size() == 12);
  CHECK(g.rule(0).display == "A1 -> (A1 + A1)");
  CHECK(g.rule(0).arity == 2);
  CHECK(g.rule(2).arity == 1);
  CHECK(g.rule(3).display == "A1 -> x1");
  CHECK(g.rule(5).display == "A1 -> const");
  CHECK(g.rule(5).arity == 0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(g.rule(i).lhs == 0);
  for (std::size_t i = 6; i < 12; ++i) CHECK(g.rule(i).lhs == 1);
}

TEST_CASE("grammar construction errors and terminal tokens") {
  CHECK_THROWS_AS(build_grammar({"+", "tan"}, 1), ConfigError);
  CHECK_THROWS_AS(build_grammar({}, 1), ConfigError);
  CHECK_THROWS_AS(build_grammar({"+"}, 0), ConfigError);
  CHECK(build_grammar({"+", "*", "const", "x1"}, 1).size() == build_grammar({"+", "*"}, 1).size());
}

TEST_CASE("grammar fingerprint is stable and configuration specific") {
  const auto a = build_grammar({"+", "*"}, 2).fingerprint();
  CHECK(a == build_grammar({"+", "*"}, 2).fingerprint());
  CHECK(a != build_grammar({"+", "*"}, 3).fingerprint());
  CHECK(a != build_grammar({"+", "-"}, 2).fingerprint());
}

TEST_CASE("sequences expand the leftmost nonterminal of their dimension") {
  const Grammar g = build_grammar({"+", "*"}, 2);
  // Rules: 0 A1+, 1 A1*, 2 A1->x1, 3 A1->x2, 4 A1->const, 5..9 the same for A2.
  const OdeSystem s = sequence_to_system(g, {0, 2, 3, 9});
  CHECK(s.complete());
  CHECK(s.constant_count() == 1);
  CHECK(render(s) == "x1' = (x1 + x2) ; x2' = c0");
  // A rule for a dimension that is already closed changes nothing.
  CHECK(render(sequence_to_system(g, {0, 2, 3, 9, 5})) == render(s));
  // Interleaving dimensions gives the same system.
  CHECK(render(sequence_to_system(g, {9, 0, 2, 3})) == render(s));
  CHECK_FALSE(sequence_to_system(g, {0, 2}).complete());
}

TEST_CASE("expansion tracker follows open nonterminals") {
  const Grammar g = build_grammar({"+", "*"}, 1);
  ExpansionTracker tr(g);
  CHECK_FALSE(tr.complete());
  CHECK(tr.apply(0));  // A1 -> A1 + A1
  CHECK(tr.apply(2));  // x1
  CHECK_FALSE(tr.complete());
  CHECK(tr.apply(3));  // const
  CHECK(tr.complete());
  CHECK_FALSE(tr.apply(0));
}

TEST_CASE("rule counts for small operator sets") {
  CHECK(build_grammar({"+", "-", "*", "/"}, 2).size() == 14);
  CHECK(build_grammar({"+"}, 1).size() == 3);
  const Grammar g = build_grammar({"+", "sin"}, 1);
  REQUIRE(g.size() == 4);
  CHECK(g.rule(1).display == "A1 -> sin(A1)");
}

TEST_CASE("a pendulum skeleton from a rule sequence") {
  const Grammar g = build_grammar({"+", "*", "sin"}, 2);
  // Dimension 1: 0 +, 1 *, 2 sin, 3 x1, 4 x2, 5 const; dimension 2 adds 6.
  const OdeSystem s = sequence_to_system(g, {4, 7, 11, 8, 9});
  CHECK(s.complete());
  CHECK(s.constant_count() == 1);
  CHECK(render(s) == "x1' = x2 ; x2' = c0*sin(x1)");
  const auto v = evaluate(s, std::vector<double>{0.0, 1.0}, std::vector<double>{-0.9});
  CHECK(v == std::vector<double>{1.0, 0.0});
}

TEST_CASE("single-rule sequences") {
  const Grammar g = build_grammar({"+"}, 1);
  const OdeSystem c = sequence_to_system(g, {2});
  CHECK(c.complete());
  CHECK(c.constant_count() == 1);
  CHECK(render(c.with_coefficients({1.5})) == "x1' = 1.5");
  const OdeSystem open = sequence_to_system(g, {0});
  CHECK_FALSE(open.complete());
  CHECK(render(open) == "x1' = (<A1> + <A1>)");
  CHECK_THROWS_AS(evaluate(open, std::vector<double>{1.0}, std::vector<double>{}), UsageError);
}

TEST_CASE("point evaluations") {
  CHECK(at(parse_system("0.23*x0"), {2.0})[0] == doctest::Approx(0.46));
  CHECK_FALSE(std::isfinite(at(parse_system("1/x0"), {0.0})[0]));
  CHECK(render(parse_system("x1 ; -0.9*sin(x0)")) == "x1' = x2 ; x2' = -0.9*sin(x1)");
}

TEST_CASE("an unfinished call reports the end of input") {
  try {
    parse_system("sin(");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
  }
}
