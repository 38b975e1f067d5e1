#pragma once

// Scalar expression language used for potentials, metric entries and
// initial conditions: infix arithmetic over declared coordinates and `t`.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hvq {
class Grid;
template <class T>
class Field;
using ScalarField = Field<double>;
}  // namespace hvq

namespace hvq::expr {

enum class UnaryOp : std::uint8_t { neg, sin, cos, exp, log, sqrt, abs };
enum class BinaryOp : std::uint8_t { add, sub, mul, div, pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Kind : std::uint8_t { constant, variable, unary, binary };

  Kind kind = Kind::constant;
  double value = 0.0;   // constant
  int variable = 0;     // coordinate index, or kTime
  UnaryOp unary = UnaryOp::neg;
  BinaryOp binary = BinaryOp::add;
  NodePtr lhs;          // unary operand / binary left
  NodePtr rhs;          // binary right

  static constexpr int kTime = -1;
};

/// Outcome of a pointwise evaluation. Anything but `ok` is a domain error.
enum class EvalStatus : std::uint8_t { ok, log_domain, sqrt_domain, division_by_zero, non_finite };

const char* describe(EvalStatus status) noexcept;

/// Postfix form of an expression; evaluation needs no allocation.
class Program {
 public:
  struct Instr {
    enum class Op : std::uint8_t { push_const, push_var, push_time, unary, binary };
    Op op;
    std::uint8_t code;  // UnaryOp / BinaryOp
    int index;          // variable index
    double value;       // constant
  };

  EvalStatus run(std::span<const double> coords, double t, double& out) const noexcept;
  std::size_t stack_depth() const noexcept { return depth_; }

 private:
  friend class Expression;
  std::vector<Instr> code_;
  std::size_t depth_ = 0;
};

class Expression {
 public:
  /// Parses `text` over the given coordinate names. `t` is always available
  /// and may not be used as a coordinate name. Throws SyntaxError.
  static Expression parse(std::string_view text, std::vector<std::string> coordinates);

  static Expression constant(double value, std::vector<std::string> coordinates = {});

  /// Fully parenthesised text that parses back to the same tree.
  std::string print() const;

  EvalStatus evaluate(std::span<const double> coords, double t, double& out) const noexcept {
    return program_.run(coords, t, out);
  }
  /// Throwing convenience wrapper around evaluate().
  double operator()(std::span<const double> coords, double t = 0.0) const;

  const Node& root() const { return *root_; }
  const std::vector<std::string>& coordinates() const { return coordinates_; }
  const Program& program() const { return program_; }

  bool depends_on_time() const;
  bool is_zero() const;

  /// Structural equality of the trees (coordinates must match too).
  friend bool operator==(const Expression& a, const Expression& b);

 private:
  Expression(NodePtr root, std::vector<std::string> coordinates);

  NodePtr root_;
  std::vector<std::string> coordinates_;
  Program program_;
};

bool structurally_equal(const Node& a, const Node& b);

/// Pointwise evaluation over every grid node. The expression coordinates
/// must match the grid dimension. Non-finite results or domain errors throw
/// DomainError naming the lowest failing flat index.
ScalarField evaluate_on_grid(const Expression& expression, const Grid& grid, double time);

}  // namespace hvq::expr
