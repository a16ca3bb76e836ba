#pragma once

#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "warpgeo/error.hpp"
#include "warpgeo/jet.hpp"

namespace warpgeo {

enum class NodeKind { Constant, Variable, Negate, Binary, Call };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Function { Sin, Cos, Tan, Exp, Ln, Sqrt, Abs };

struct ExprNode;

/// Immutable expression tree over real numbers.
///
/// Cheap to copy (shared ownership of the root). Built by parse() or by the
/// static factories, which the geometry code uses to assemble derived
/// formulas such as f^2 * g_ij.
class Expr {
 public:
  Expr() = default;

  static Expr constant(double value);
  static Expr named_constant(std::string name, double value);
  static Expr variable(std::string name);
  static Expr negate(Expr operand);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
  static Expr call(Function fn, Expr arg);

  bool valid() const noexcept { return node_ != nullptr; }
  const ExprNode& node() const { return *node_; }

  NodeKind kind() const;
  Span span() const;

 private:
  friend struct ExprNode;
  friend class Parser;
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  std::shared_ptr<const ExprNode> node_;
};

struct ExprNode {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;       // Constant
  std::string name;         // Variable, or named constant ("pi", "e")
  BinaryOp op = BinaryOp::Add;
  Function fn = Function::Sin;
  std::vector<Expr> children;
  Span span;
  // Set on ^ nodes whose exponent is not a constant: evaluation requires a
  // strictly positive base.
  bool requires_positive_base = false;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);

/// Name -> value table used to evaluate expressions.
class Bindings {
 public:
  Bindings() = default;
  Bindings(std::initializer_list<std::pair<std::string, double>> init);

  void set(std::string_view name, double value);
  const double* find(std::string_view name) const;
  double at(std::string_view name) const;
  void merge(const Bindings& other);

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

Expr parse(std::string_view source, std::span<const std::string> allowed_variables);
Expr parse(std::string_view source, std::initializer_list<std::string> allowed_variables);

/// Fully parenthesised text that parse() maps back to the same tree.
std::string print(const Expr& ast);

bool structurally_equal(const Expr& a, const Expr& b);

std::set<std::string> free_variables(const Expr& ast);

double evaluate(const Expr& ast, const Bindings& bindings);

/// Evaluates value, gradient and Hessian with respect to the `active`
/// variables; every other variable is read from `bindings` as a constant.
Jet2 eval_jet2(const Expr& ast, const Bindings& bindings,
               std::span<const std::string> active);

}  // namespace warpgeo
