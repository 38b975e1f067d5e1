#include "hvq/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <bit>
#include <charconv>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "hvq/errors.hpp"
#include "hvq/fields.hpp"
#include "hvq/kernels.hpp"

namespace hvq::expr {

namespace {

struct FunctionName {
  std::string_view name;
  UnaryOp op;
};

constexpr std::array<FunctionName, 6> kFunctions{{
    {"sin", UnaryOp::sin},
    {"cos", UnaryOp::cos},
    {"exp", UnaryOp::exp},
    {"log", UnaryOp::log},
    {"sqrt", UnaryOp::sqrt},
    {"abs", UnaryOp::abs},
}};

const FunctionName* find_function(std::string_view name) {
  for (const auto& f : kFunctions)
    if (f.name == name) return &f;
  return nullptr;
}

std::string_view function_name(UnaryOp op) {
  for (const auto& f : kFunctions)
    if (f.op == op) return f.name;
  return "neg";
}

char binary_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return '+';
    case BinaryOp::sub: return '-';
    case BinaryOp::mul: return '*';
    case BinaryOp::div: return '/';
    case BinaryOp::pow: return '^';
  }
  return '?';
}

NodePtr make_constant(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::constant;
  n->value = v;
  return n;
}

NodePtr make_variable(int index) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::variable;
  n->variable = index;
  return n;
}

NodePtr make_unary(UnaryOp op, NodePtr operand) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::unary;
  n->unary = op;
  n->lhs = std::move(operand);
  return n;
}

NodePtr make_binary(BinaryOp op, NodePtr lhs, NodePtr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::binary;
  n->binary = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

struct Token {
  enum class Kind { number, identifier, op, lparen, rparen, comma, end } kind;
  std::size_t pos;
  std::string_view text;
  double number = 0.0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ >= src_.size()) return {Token::Kind::end, pos_, {}};
    const std::size_t start = pos_;
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number(start);
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      return {Token::Kind::identifier, start, src_.substr(start, pos_ - start)};
    }
    ++pos_;
    switch (c) {
      case '+': case '-': case '*': case '/': case '^':
        return {Token::Kind::op, start, src_.substr(start, 1)};
      case '(': return {Token::Kind::lparen, start, src_.substr(start, 1)};
      case ')': return {Token::Kind::rparen, start, src_.substr(start, 1)};
      case ',': return {Token::Kind::comma, start, src_.substr(start, 1)};
      default: break;
    }
    throw SyntaxError(fmt::format("unexpected character '{}'", c), start);
  }

 private:
  Token number(std::size_t start) {
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw SyntaxError("malformed number", start);
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw SyntaxError("malformed exponent", mark);
    }
    Token tok{Token::Kind::number, start, src_.substr(start, pos_ - start)};
    const char* first = src_.data() + start;
    const char* last = src_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, tok.number);
    if (ec != std::errc{} || ptr != last || !std::isfinite(tok.number))
      throw SyntaxError("number out of range", start);
    return tok;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// expr    := term (('+' | '-') term)*
// term    := unary (('*' | '/') unary)*
// unary   := ('-' | '+') unary | power
// power   := primary ('^' unary)?
// primary := number | name | name '(' args ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& coords)
      : lexer_(src), coords_(coords) {
    advance();
  }

  NodePtr parse() {
    NodePtr root = expression();
    if (tok_.kind != Token::Kind::end) throw SyntaxError("unexpected trailing input", tok_.pos);
    return root;
  }

 private:
  void advance() { tok_ = lexer_.next(); }

  bool at_op(char c) const {
    return tok_.kind == Token::Kind::op && tok_.text.front() == c;
  }

  NodePtr expression() {
    NodePtr lhs = term();
    while (at_op('+') || at_op('-')) {
      const BinaryOp op = at_op('+') ? BinaryOp::add : BinaryOp::sub;
      advance();
      lhs = make_binary(op, lhs, term());
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (at_op('*') || at_op('/')) {
      const BinaryOp op = at_op('*') ? BinaryOp::mul : BinaryOp::div;
      advance();
      lhs = make_binary(op, lhs, unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (at_op('-')) {
      advance();
      return make_unary(UnaryOp::neg, unary());
    }
    if (at_op('+')) {
      advance();
      return unary();
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (at_op('^')) {
      advance();
      return make_binary(BinaryOp::pow, base, unary());
    }
    return base;
  }

  NodePtr primary() {
    switch (tok_.kind) {
      case Token::Kind::number: {
        NodePtr n = make_constant(tok_.number);
        advance();
        return n;
      }
      case Token::Kind::identifier: return name();
      case Token::Kind::lparen: {
        advance();
        NodePtr inner = expression();
        expect_rparen();
        return inner;
      }
      case Token::Kind::end: throw SyntaxError("unexpected end of input", tok_.pos);
      default: throw SyntaxError(fmt::format("unexpected '{}'", tok_.text), tok_.pos);
    }
  }

  NodePtr name() {
    const Token id = tok_;
    advance();
    const bool call = tok_.kind == Token::Kind::lparen;
    if (const auto* fn = find_function(id.text)) {
      if (!call) throw SyntaxError(fmt::format("function '{}' needs an argument list", id.text), id.pos);
      advance();
      std::vector<NodePtr> args;
      if (tok_.kind != Token::Kind::rparen) {
        args.push_back(expression());
        while (tok_.kind == Token::Kind::comma) {
          advance();
          args.push_back(expression());
        }
      }
      if (args.size() != 1)
        throw SyntaxError(fmt::format("arity mismatch: '{}' takes 1 argument, got {}", id.text,
                                      args.size()),
                          id.pos);
      expect_rparen();
      return make_unary(fn->op, args.front());
    }
    if (call)
      throw SyntaxError(fmt::format("arity mismatch: '{}' is not a function", id.text), id.pos);
    if (id.text == "t") return make_variable(Node::kTime);
    if (id.text == "pi") return make_constant(std::numbers::pi);
    for (std::size_t i = 0; i < coords_.size(); ++i)
      if (coords_[i] == id.text) return make_variable(static_cast<int>(i));
    throw SyntaxError(fmt::format("unknown identifier '{}'", id.text), id.pos);
  }

  void expect_rparen() {
    if (tok_.kind != Token::Kind::rparen) {
      if (tok_.kind == Token::Kind::end) throw SyntaxError("unexpected end of input", tok_.pos);
      throw SyntaxError("expected ')'", tok_.pos);
    }
    advance();
  }

  Lexer lexer_;
  const std::vector<std::string>& coords_;
  Token tok_{};
};

void print_node(const Node& n, const std::vector<std::string>& coords, std::string& out) {
  switch (n.kind) {
    case Node::Kind::constant:
      out += fmt::format("{:.17g}", n.value);
      return;
    case Node::Kind::variable:
      out += n.variable == Node::kTime ? std::string("t") : coords[n.variable];
      return;
    case Node::Kind::unary:
      if (n.unary == UnaryOp::neg) {
        out += "(-";
        print_node(*n.lhs, coords, out);
        out += ')';
      } else {
        out += function_name(n.unary);
        out += '(';
        print_node(*n.lhs, coords, out);
        out += ')';
      }
      return;
    case Node::Kind::binary:
      out += '(';
      print_node(*n.lhs, coords, out);
      out += ' ';
      out += binary_symbol(n.binary);
      out += ' ';
      print_node(*n.rhs, coords, out);
      out += ')';
      return;
  }
}

std::size_t compile(const Node& n, std::vector<Program::Instr>& code) {
  using Op = Program::Instr::Op;
  switch (n.kind) {
    case Node::Kind::constant:
      code.push_back({Op::push_const, 0, 0, n.value});
      return 1;
    case Node::Kind::variable:
      if (n.variable == Node::kTime)
        code.push_back({Op::push_time, 0, 0, 0.0});
      else
        code.push_back({Op::push_var, 0, n.variable, 0.0});
      return 1;
    case Node::Kind::unary: {
      const std::size_t d = compile(*n.lhs, code);
      code.push_back({Op::unary, static_cast<std::uint8_t>(n.unary), 0, 0.0});
      return d;
    }
    case Node::Kind::binary: {
      const std::size_t dl = compile(*n.lhs, code);
      const std::size_t dr = compile(*n.rhs, code);
      code.push_back({Op::binary, static_cast<std::uint8_t>(n.binary), 0, 0.0});
      return std::max(dl, dr + 1);
    }
  }
  return 0;
}

bool mentions_time(const Node& n) {
  switch (n.kind) {
    case Node::Kind::constant: return false;
    case Node::Kind::variable: return n.variable == Node::kTime;
    case Node::Kind::unary: return mentions_time(*n.lhs);
    case Node::Kind::binary: return mentions_time(*n.lhs) || mentions_time(*n.rhs);
  }
  return false;
}

}  // namespace

const char* describe(EvalStatus status) noexcept {
  switch (status) {
    case EvalStatus::ok: return "ok";
    case EvalStatus::log_domain: return "log of non-positive value";
    case EvalStatus::sqrt_domain: return "sqrt of negative value";
    case EvalStatus::division_by_zero: return "division by zero";
    case EvalStatus::non_finite: return "non-finite value";
  }
  return "unknown";
}

EvalStatus Program::run(std::span<const double> coords, double t, double& out) const noexcept {
  constexpr std::size_t kInline = 32;
  double inline_stack[kInline];
  std::vector<double> heap;
  double* stack = inline_stack;
  if (depth_ > kInline) {
    heap.resize(depth_);
    stack = heap.data();
  }
  std::size_t sp = 0;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Instr::Op::push_const: stack[sp++] = ins.value; break;
      case Instr::Op::push_var: stack[sp++] = coords[static_cast<std::size_t>(ins.index)]; break;
      case Instr::Op::push_time: stack[sp++] = t; break;
      case Instr::Op::unary: {
        double& x = stack[sp - 1];
        switch (static_cast<UnaryOp>(ins.code)) {
          case UnaryOp::neg: x = -x; break;
          case UnaryOp::sin: x = std::sin(x); break;
          case UnaryOp::cos: x = std::cos(x); break;
          case UnaryOp::exp: x = std::exp(x); break;
          case UnaryOp::log:
            if (!(x > 0.0)) return EvalStatus::log_domain;
            x = std::log(x);
            break;
          case UnaryOp::sqrt:
            if (x < 0.0) return EvalStatus::sqrt_domain;
            x = std::sqrt(x);
            break;
          case UnaryOp::abs: x = std::abs(x); break;
        }
        if (!std::isfinite(x)) return EvalStatus::non_finite;
        break;
      }
      case Instr::Op::binary: {
        const double b = stack[--sp];
        double& a = stack[sp - 1];
        switch (static_cast<BinaryOp>(ins.code)) {
          case BinaryOp::add: a = a + b; break;
          case BinaryOp::sub: a = a - b; break;
          case BinaryOp::mul: a = a * b; break;
          case BinaryOp::div:
            if (b == 0.0) return EvalStatus::division_by_zero;
            a = a / b;
            break;
          case BinaryOp::pow: a = std::pow(a, b); break;
        }
        if (!std::isfinite(a)) return EvalStatus::non_finite;
        break;
      }
    }
  }
  out = stack[0];
  return EvalStatus::ok;
}

Expression::Expression(NodePtr root, std::vector<std::string> coordinates)
    : root_(std::move(root)), coordinates_(std::move(coordinates)) {
  program_.depth_ = compile(*root_, program_.code_);
}

Expression Expression::parse(std::string_view text, std::vector<std::string> coordinates) {
  for (const auto& c : coordinates) {
    if (c == "t" || c == "pi" || find_function(c))
      throw InvalidArgument(fmt::format("'{}' is reserved and cannot name a coordinate", c));
  }
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw SyntaxError("empty expression", 0);
  Parser parser(text, coordinates);
  NodePtr root = parser.parse();
  return Expression(std::move(root), std::move(coordinates));
}

Expression Expression::constant(double value, std::vector<std::string> coordinates) {
  if (!std::isfinite(value)) throw InvalidArgument("constant expression must be finite");
  NodePtr root = make_constant(std::abs(value));
  if (std::signbit(value)) root = make_unary(UnaryOp::neg, root);
  return Expression(std::move(root), std::move(coordinates));
}

std::string Expression::print() const {
  std::string out;
  print_node(*root_, coordinates_, out);
  return out;
}

double Expression::operator()(std::span<const double> coords, double t) const {
  if (coords.size() != coordinates_.size())
    throw InvalidArgument("expression evaluated with wrong number of coordinates");
  double out = 0.0;
  const EvalStatus st = evaluate(coords, t, out);
  if (st != EvalStatus::ok) throw DomainError(describe(st), 0);
  return out;
}

bool Expression::depends_on_time() const { return mentions_time(*root_); }

bool Expression::is_zero() const {
  return root_->kind == Node::Kind::constant && root_->value == 0.0;
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::constant:
      return std::bit_cast<std::uint64_t>(a.value) == std::bit_cast<std::uint64_t>(b.value);
    case Node::Kind::variable: return a.variable == b.variable;
    case Node::Kind::unary: return a.unary == b.unary && structurally_equal(*a.lhs, *b.lhs);
    case Node::Kind::binary:
      return a.binary == b.binary && structurally_equal(*a.lhs, *b.lhs) &&
             structurally_equal(*a.rhs, *b.rhs);
  }
  return false;
}

bool operator==(const Expression& a, const Expression& b) {
  return a.coordinates_ == b.coordinates_ && structurally_equal(*a.root_, *b.root_);
}

ScalarField evaluate_on_grid(const Expression& expression, const Grid& grid, double time) {
  if (expression.coordinates().size() != grid.dims())
    throw InvalidArgument(fmt::format("expression has {} coordinates but grid has {} axes",
                                      expression.coordinates().size(), grid.dims()));
  ScalarField field(grid);
  const kernels::EvalFailure failure =
      kernels::omp::evaluate_nodes(expression.program(), grid, time, field.values());
  if (failure.status != EvalStatus::ok) throw DomainError(describe(failure.status), failure.node);
  return field;
}

}  // namespace hvq::expr
