#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "hvq/errors.hpp"
#include "hvq/expr.hpp"
#include "hvq/fields.hpp"

using namespace hvq;
using expr::BinaryOp;
using expr::Expression;
using expr::Node;
using expr::UnaryOp;

TEST_CASE("power over two parses as a division of a power") {
  const auto e = Expression::parse("q1^2/2", {"q1"});
  const Node& root = e.root();
  REQUIRE(root.kind == Node::Kind::binary);
  CHECK(root.binary == BinaryOp::div);
  REQUIRE(root.lhs->kind == Node::Kind::binary);
  CHECK(root.lhs->binary == BinaryOp::pow);
  CHECK(root.lhs->lhs->kind == Node::Kind::variable);
  CHECK(root.lhs->rhs->value == 2.0);
  CHECK(root.rhs->value == 2.0);
}

TEST_CASE("function call times a coordinate is a product") {
  const auto e = Expression::parse("sin(q1)*q2", {"q1", "q2"});
  REQUIRE(e.root().binary == BinaryOp::mul);
  CHECK(e.root().lhs->kind == Node::Kind::unary);
  CHECK(e.root().lhs->unary == UnaryOp::sin);
  CHECK(e.root().rhs->variable == 1);
}

TEST_CASE("unbalanced parenthesis reports position 4") {
  try {
    (void)Expression::parse("q1*(", {"q1"});
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.position() == 4);
  }
}

TEST_CASE("unknown identifiers and arity mismatches are syntax errors") {
  CHECK_THROWS_AS(Expression::parse("q3 + 1", {"q1"}), SyntaxError);
  CHECK_THROWS_AS(Expression::parse("sin(q1, q1)", {"q1"}), SyntaxError);
  CHECK_THROWS_AS(Expression::parse("sin", {"q1"}), SyntaxError);
  CHECK_THROWS_AS(Expression::parse("q1(2)", {"q1"}), SyntaxError);
  CHECK_THROWS_AS(Expression::parse("", {"q1"}), SyntaxError);
}

TEST_CASE("implicit multiplication is rejected") {
  CHECK_THROWS_AS(Expression::parse("2q1", {"q1"}), SyntaxError);
  CHECK_THROWS_AS(Expression::parse("2 q1", {"q1"}), SyntaxError);
}

TEST_CASE("t cannot name a coordinate but is always available") {
  CHECK_THROWS_AS(Expression::parse("1", {"t"}), InvalidArgument);
  const auto e = Expression::parse("q1*t", {"q1"});
  CHECK(e.depends_on_time());
  CHECK_FALSE(Expression::parse("q1", {"q1"}).depends_on_time());
}

TEST_CASE("precedence and right-associative power") {
  const std::vector<double> none;
  CHECK(Expression::parse("2^3^2", {})(none) == 512.0);
  CHECK(Expression::parse("-2^2", {})(none) == -4.0);
  CHECK(Expression::parse("1+2*3", {})(none) == 7.0);
  CHECK(Expression::parse("(1+2)*3", {})(none) == 9.0);
  CHECK(Expression::parse("8/4/2", {})(none) == 1.0);
  CHECK(Expression::parse("1.5e1", {})(none) == 15.0);
}

TEST_CASE("evaluation on a three-node grid") {
  const Grid g = Grid::line(-1.0, 1.0, 3);
  const auto f = expr::evaluate_on_grid(Expression::parse("q1^2/2", {"q1"}), g, 0.0);
  CHECK(f[0] == 0.5);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 0.5);
}

TEST_CASE("zero expression gives the zero field") {
  const Grid g({Axis{-3, 2, 7}, Axis{0, 1, 5, Boundary::periodic}});
  const auto e = Expression::parse("0", {"a", "b"});
  CHECK(e.is_zero());
  const auto f = expr::evaluate_on_grid(e, g, 0.0);
  for (double v : f.values()) CHECK(v == 0.0);
}

TEST_CASE("Gaussian matches the closed form at every node") {
  const Grid g = Grid::line(-2.0, 2.0, 101);
  const auto f = expr::evaluate_on_grid(Expression::parse("exp(-q1^2)", {"q1"}), g, 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double x = g.coordinate(k, 0);
    const double exact = std::exp(-x * x);
    CHECK(std::abs(f[k] - exact) <= 1e-15 * exact);
  }
}

TEST_CASE("domain errors name the first failing node") {
  const Grid g = Grid::line(-1.0, 1.0, 5);
  try {
    (void)expr::evaluate_on_grid(Expression::parse("log(q1)", {"q1"}), g, 0.0);
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(e.node() == 0);
  }
  try {
    (void)expr::evaluate_on_grid(Expression::parse("1/q1", {"q1"}), g, 0.0);
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(e.node() == 2);
  }
  CHECK_THROWS_AS(expr::evaluate_on_grid(Expression::parse("sqrt(q1 - 0.9)", {"q1"}), g, 0.0), DomainError);
  CHECK_THROWS_AS(expr::evaluate_on_grid(Expression::parse("exp(1000*q1)", {"q1"}), g, 0.0), DomainError);
}

TEST_CASE("time enters through t") {
  const Grid g = Grid::line(0.0, 1.0, 3);
  const auto f = expr::evaluate_on_grid(Expression::parse("q1 + 2*t", {"q1"}), g, 1.5);
  CHECK(f[2] == 4.0);
}

TEST_CASE("evaluation is pure") {
  const Grid g({Axis{-2, 2, 41}, Axis{-1, 3, 33}});
  const auto e = Expression::parse("sin(x)*cos(y) + abs(x-y)^1.5 + sqrt(x^2+1)", {"x", "y"});
  const auto a = expr::evaluate_on_grid(e, g, 0.3);
  const auto b = expr::evaluate_on_grid(e, g, 0.3);
  CHECK(a == b);
}

namespace {

std::string random_expression(std::mt19937_64& rng, int depth) {
  static const char* vars[] = {"x", "y", "t"};
  static const char* funcs[] = {"sin", "cos", "exp", "log", "sqrt", "abs"};
  static const char* ops[] = {"+", "-", "*", "/", "^"};
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 4);
  switch (pick(rng)) {
    case 0: return std::to_string(std::uniform_int_distribution<int>(0, 99)(rng)) + ".25";
    case 1: return vars[std::uniform_int_distribution<int>(0, 2)(rng)];
    case 2: return std::string(funcs[std::uniform_int_distribution<int>(0, 5)(rng)]) + "(" +
                   random_expression(rng, depth - 1) + ")";
    case 3: return "-" + random_expression(rng, depth - 1);
    default:
      return "(" + random_expression(rng, depth - 1) + ops[std::uniform_int_distribution<int>(0, 4)(rng)] +
             random_expression(rng, depth - 1) + ")";
  }
}

}  // namespace

TEST_CASE("print then parse reproduces the tree") {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 500; ++i) {
    const std::string text = random_expression(rng, 6);
    const auto e = Expression::parse(text, {"x", "y"});
    const auto back = Expression::parse(e.print(), {"x", "y"});
    CHECK_MESSAGE(back == e, text);
    CHECK(Expression::parse(back.print(), {"x", "y"}).print() == e.print());
  }
}

TEST_CASE("printing preserves exact constants") {
  const auto e = Expression::parse("0.1 + 1e-300 * x", {"x"});
  const auto back = Expression::parse(e.print(), {"x"});
  CHECK(back == e);
  CHECK(Expression::constant(1.0 / 3.0).print() == Expression::parse(Expression::constant(1.0 / 3.0).print(), {}).print());
}
