#include "warpgeo/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <type_traits>

namespace warpgeo {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::LexError: return "E101 lex error";
    case ErrorCode::ParseError: return "E102 parse error";
    case ErrorCode::UnknownVariable: return "E103 unknown variable";
    case ErrorCode::UnknownFunction: return "E104 unknown function";
    case ErrorCode::ArityMismatch: return "E105 arity mismatch";
    case ErrorCode::UnboundVariable: return "E106 unbound variable";
    case ErrorCode::DomainError: return "E201 domain error";
    case ErrorCode::OutsideDomain: return "E202 point outside domain";
    case ErrorCode::NotPositiveDefinite: return "E203 metric not positive definite";
    case ErrorCode::DimensionMismatch: return "E204 dimension mismatch";
    case ErrorCode::NameCollision: return "E205 name collision";
    case ErrorCode::InvalidArgument: return "E206 invalid argument";
    case ErrorCode::NotOrthogonal: return "E207 restriction not orthogonal";
    case ErrorCode::NotPureLift: return "E208 not a pure lift";
    case ErrorCode::CaseMismatch: return "E209 case/input mismatch";
    case ErrorCode::AmbiguousRank: return "E210 ambiguous rank";
    case ErrorCode::NoHorizontalSpace: return "E211 no horizontal space";
    case ErrorCode::NotCoordinateAligned: return "E212 fibers not coordinate aligned";
    case ErrorCode::NotConformal: return "E213 map not conformal";
    case ErrorCode::ZeroVelocity: return "E214 zero velocity";
    case ErrorCode::FileError: return "E301 file error";
    case ErrorCode::SpecSyntax: return "E302 spec syntax error";
    case ErrorCode::SpecSemantic: return "E303 spec semantic error";
    case ErrorCode::UndefinedName: return "E304 undefined name";
    case ErrorCode::DuplicateName: return "E305 duplicate name";
  }
  return "E000 unknown";
}

// ---------------------------------------------------------------------------
// Construction

Expr Expr::constant(double value) {
  ExprNode n;
  n.kind = NodeKind::Constant;
  n.value = value;
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

Expr Expr::named_constant(std::string name, double value) {
  ExprNode n;
  n.kind = NodeKind::Constant;
  n.value = value;
  n.name = std::move(name);
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

namespace {

bool has_variables(const Expr& e) {
  if (e.kind() == NodeKind::Variable) return true;
  for (const Expr& c : e.node().children)
    if (has_variables(c)) return true;
  return false;
}

}  // namespace

Expr Expr::variable(std::string name) {
  ExprNode n;
  n.kind = NodeKind::Variable;
  n.name = std::move(name);
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

Expr Expr::negate(Expr operand) {
  ExprNode n;
  n.kind = NodeKind::Negate;
  n.children = {std::move(operand)};
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  ExprNode n;
  n.kind = NodeKind::Binary;
  n.op = op;
  n.requires_positive_base = op == BinaryOp::Pow && has_variables(rhs);
  n.children = {std::move(lhs), std::move(rhs)};
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

Expr Expr::call(Function fn, Expr arg) {
  ExprNode n;
  n.kind = NodeKind::Call;
  n.fn = fn;
  n.children = {std::move(arg)};
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

NodeKind Expr::kind() const { return node_->kind; }
Span Expr::span() const { return node_->span; }

Expr operator+(Expr a, Expr b) { return Expr::binary(BinaryOp::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(BinaryOp::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(BinaryOp::Mul, std::move(a), std::move(b)); }
Expr operator/(Expr a, Expr b) { return Expr::binary(BinaryOp::Div, std::move(a), std::move(b)); }

// ---------------------------------------------------------------------------
// Bindings

Bindings::Bindings(std::initializer_list<std::pair<std::string, double>> init) {
  for (const auto& [name, value] : init) set(name, value);
}

void Bindings::set(std::string_view name, double value) {
  for (auto& entry : entries_) {
    if (entry.first == name) {
      entry.second = value;
      return;
    }
  }
  entries_.emplace_back(std::string(name), value);
}

const double* Bindings::find(std::string_view name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return &entry.second;
  }
  return nullptr;
}

double Bindings::at(std::string_view name) const {
  if (const double* v = find(name)) return *v;
  throw Error(ErrorCode::UnboundVariable, "unbound variable '" + std::string(name) + "'");
}

void Bindings::merge(const Bindings& other) {
  for (const auto& [name, value] : other) set(name, value);
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
  Tok kind = Tok::End;
  std::string_view text;
  double number = 0.0;
  Span span;
};

std::string span_text(Span s) {
  return "[" + std::to_string(s.begin) + "," + std::to_string(s.end) + ")";
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    const unsigned char c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    Token t;
    t.span.begin = i;
    if (std::isdigit(c) || (c == '.' && i + 1 < src.size() &&
                            std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      t.kind = Tok::Number;
      t.text = src.substr(i, j - i);
      t.number = std::strtod(std::string(t.text).c_str(), nullptr);
      i = j;
    } else if (std::isalpha(c) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      t.kind = Tok::Ident;
      t.text = src.substr(i, j - i);
      i = j;
    } else {
      switch (c) {
        case '+': t.kind = Tok::Plus; break;
        case '-': t.kind = Tok::Minus; break;
        case '*': t.kind = Tok::Star; break;
        case '/': t.kind = Tok::Slash; break;
        case '^': t.kind = Tok::Caret; break;
        case '(': t.kind = Tok::LParen; break;
        case ')': t.kind = Tok::RParen; break;
        case ',': t.kind = Tok::Comma; break;
        default:
          throw Error(ErrorCode::LexError,
                      "unexpected character at position " + std::to_string(i),
                      Span{i, i + 1});
      }
      t.text = src.substr(i, 1);
      ++i;
    }
    t.span.end = i;
    out.push_back(t);
  }
  Token end;
  end.kind = Tok::End;
  end.span = {src.size(), src.size()};
  out.push_back(end);
  return out;
}

std::optional<Function> function_by_name(std::string_view name) {
  if (name == "sin") return Function::Sin;
  if (name == "cos") return Function::Cos;
  if (name == "tan") return Function::Tan;
  if (name == "exp") return Function::Exp;
  if (name == "ln") return Function::Ln;
  if (name == "sqrt") return Function::Sqrt;
  if (name == "abs") return Function::Abs;
  return std::nullopt;
}

const char* function_name(Function fn) {
  switch (fn) {
    case Function::Sin: return "sin";
    case Function::Cos: return "cos";
    case Function::Tan: return "tan";
    case Function::Exp: return "exp";
    case Function::Ln: return "ln";
    case Function::Sqrt: return "sqrt";
    case Function::Abs: return "abs";
  }
  return "?";
}

// Binding powers: + - 10, prefix - 15, * / 20, ^ 40 (right associative).
// Prefix minus sits below * so that -2*x parses as -(2*x); both readings
// have the same value.
int infix_power(Tok t) {
  switch (t) {
    case Tok::Plus:
    case Tok::Minus: return 10;
    case Tok::Star:
    case Tok::Slash: return 20;
    case Tok::Caret: return 40;
    default: return 0;
  }
}

constexpr int kPrefixPower = 15;

}  // namespace

// ---------------------------------------------------------------------------
// Parser (Pratt)

class Parser {
 public:
  Parser(std::string_view src, std::span<const std::string> allowed)
      : tokens_(lex(src)), allowed_(allowed) {}

  Expr parse_all() {
    if (peek().kind == Tok::End) {
      throw Error(ErrorCode::ParseError, "empty expression", peek().span);
    }
    Expr e = parse_expr(0);
    if (peek().kind != Tok::End) {
      throw Error(ErrorCode::ParseError,
                  "unexpected token '" + std::string(peek().text) + "' at " +
                      span_text(peek().span),
                  peek().span);
    }
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  static Expr with_span(ExprNode node, Span span) {
    node.span = span;
    return Expr(std::make_shared<const ExprNode>(std::move(node)));
  }

  Expr parse_expr(int min_power) {
    Expr lhs = parse_prefix();
    for (;;) {
      const Token& op = peek();
      const int power = infix_power(op.kind);
      if (power == 0 || power <= min_power) break;
      next();
      // Right associativity for ^: parse the exponent at power - 1.
      Expr rhs = parse_expr(op.kind == Tok::Caret ? power - 1 : power);
      ExprNode n;
      n.kind = NodeKind::Binary;
      switch (op.kind) {
        case Tok::Plus: n.op = BinaryOp::Add; break;
        case Tok::Minus: n.op = BinaryOp::Sub; break;
        case Tok::Star: n.op = BinaryOp::Mul; break;
        case Tok::Slash: n.op = BinaryOp::Div; break;
        default: n.op = BinaryOp::Pow; break;
      }
      n.requires_positive_base = n.op == BinaryOp::Pow && has_variables(rhs);
      const Span s{lhs.span().begin, rhs.span().end};
      n.children = {std::move(lhs), std::move(rhs)};
      lhs = with_span(std::move(n), s);
    }
    return lhs;
  }

  Expr parse_prefix() {
    const Token& t = next();
    switch (t.kind) {
      case Tok::Number: {
        ExprNode n;
        n.kind = NodeKind::Constant;
        n.value = t.number;
        return with_span(std::move(n), t.span);
      }
      case Tok::Minus: {
        Expr operand = parse_expr(kPrefixPower);
        ExprNode n;
        n.kind = NodeKind::Negate;
        const Span s{t.span.begin, operand.span().end};
        n.children = {std::move(operand)};
        return with_span(std::move(n), s);
      }
      case Tok::LParen: {
        Expr inner = parse_expr(0);
        expect(Tok::RParen, "')'");
        return inner;
      }
      case Tok::Ident: return parse_identifier(t);
      default:
        throw Error(ErrorCode::ParseError,
                    t.kind == Tok::End ? "unexpected end of expression"
                                       : "unexpected token '" + std::string(t.text) + "' at " +
                                             span_text(t.span),
                    t.span);
    }
  }

  Expr parse_identifier(const Token& t) {
    const std::string name(t.text);
    if (peek().kind == Tok::LParen) {
      const auto fn = function_by_name(name);
      if (!fn) {
        throw Error(ErrorCode::UnknownFunction,
                    "unknown function '" + name + "' at " + span_text(t.span), t.span);
      }
      next();
      std::vector<Expr> args;
      if (peek().kind != Tok::RParen) {
        args.push_back(parse_expr(0));
        while (peek().kind == Tok::Comma) {
          next();
          args.push_back(parse_expr(0));
        }
      }
      const Token& close = expect(Tok::RParen, "')'");
      const Span s{t.span.begin, close.span.end};
      if (args.size() != 1) {
        throw Error(ErrorCode::ArityMismatch,
                    "function '" + name + "' takes 1 argument, got " +
                        std::to_string(args.size()),
                    s);
      }
      ExprNode n;
      n.kind = NodeKind::Call;
      n.fn = *fn;
      n.children = std::move(args);
      return with_span(std::move(n), s);
    }
    if (std::find(allowed_.begin(), allowed_.end(), name) != allowed_.end()) {
      ExprNode n;
      n.kind = NodeKind::Variable;
      n.name = name;
      return with_span(std::move(n), t.span);
    }
    if (name == "pi" || name == "e") {
      ExprNode n;
      n.kind = NodeKind::Constant;
      n.name = name;
      n.value = name == "pi" ? std::numbers::pi : std::numbers::e;
      return with_span(std::move(n), t.span);
    }
    throw Error(ErrorCode::UnknownVariable,
                "unknown variable '" + name + "' at " + span_text(t.span), t.span);
  }

  const Token& expect(Tok kind, const char* what) {
    const Token& t = peek();
    if (t.kind != kind) {
      throw Error(ErrorCode::ParseError,
                  std::string("expected ") + what + " at " + span_text(t.span), t.span);
    }
    return next();
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::span<const std::string> allowed_;
};

Expr parse(std::string_view source, std::span<const std::string> allowed_variables) {
  return Parser(source, allowed_variables).parse_all();
}

Expr parse(std::string_view source, std::initializer_list<std::string> allowed_variables) {
  const std::vector<std::string> names(allowed_variables);
  return parse(source, std::span<const std::string>(names));
}

// ---------------------------------------------------------------------------
// Printing and structure

namespace {

void print_into(const Expr& e, std::string& out) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case NodeKind::Constant: {
      if (!n.name.empty()) {
        out += n.name;
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", std::abs(n.value));
      if (std::signbit(n.value)) {
        out += "(-";
        out += buf;
        out += ")";
      } else {
        out += buf;
      }
      return;
    }
    case NodeKind::Variable: out += n.name; return;
    case NodeKind::Negate:
      out += "(-";
      print_into(n.children[0], out);
      out += ")";
      return;
    case NodeKind::Binary: {
      static constexpr const char* kOps[] = {" + ", " - ", " * ", " / ", " ^ "};
      out += "(";
      print_into(n.children[0], out);
      out += kOps[static_cast<int>(n.op)];
      print_into(n.children[1], out);
      out += ")";
      return;
    }
    case NodeKind::Call:
      out += function_name(n.fn);
      out += "(";
      print_into(n.children[0], out);
      out += ")";
      return;
  }
}

void collect_variables(const Expr& e, std::set<std::string>& out) {
  const ExprNode& n = e.node();
  if (n.kind == NodeKind::Variable) out.insert(n.name);
  for (const Expr& c : n.children) collect_variables(c, out);
}

}  // namespace

std::string print(const Expr& ast) {
  std::string out;
  print_into(ast, out);
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  const ExprNode& x = a.node();
  const ExprNode& y = b.node();
  if (x.kind != y.kind || x.children.size() != y.children.size()) return false;
  switch (x.kind) {
    case NodeKind::Constant:
      if (x.name != y.name || x.value != y.value) return false;
      break;
    case NodeKind::Variable:
      if (x.name != y.name) return false;
      break;
    case NodeKind::Binary:
      if (x.op != y.op || x.requires_positive_base != y.requires_positive_base) return false;
      break;
    case NodeKind::Call:
      if (x.fn != y.fn) return false;
      break;
    case NodeKind::Negate: break;
  }
  for (std::size_t i = 0; i < x.children.size(); ++i) {
    if (!structurally_equal(x.children[i], y.children[i])) return false;
  }
  return true;
}

std::set<std::string> free_variables(const Expr& ast) {
  std::set<std::string> out;
  collect_variables(ast, out);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation over double and Jet2

namespace {

[[noreturn]] void domain_error(const ExprNode& n, const std::string& what) {
  throw Error(ErrorCode::DomainError, what + " at " + span_text(n.span), n.span);
}

template <typename T>
class Evaluator {
 public:
  Evaluator(const Bindings& bindings, std::span<const std::string> active)
      : bindings_(bindings), active_(active) {}

  T eval(const Expr& e) const {
    const ExprNode& n = e.node();
    switch (n.kind) {
      case NodeKind::Constant: return constant(n.value);
      case NodeKind::Variable: return variable(n);
      case NodeKind::Negate: return -eval(n.children[0]);
      case NodeKind::Binary: return binary(n);
      case NodeKind::Call: return call(n);
    }
    return constant(0.0);
  }

 private:
  static double value_of(const T& x) {
    if constexpr (std::is_same_v<T, double>) {
      return x;
    } else {
      return x.value();
    }
  }

  T constant(double v) const {
    if constexpr (std::is_same_v<T, double>) {
      return v;
    } else {
      return Jet2(active_.size(), v);
    }
  }

  T variable(const ExprNode& n) const {
    const double* v = bindings_.find(n.name);
    if (v == nullptr) {
      throw Error(ErrorCode::UnboundVariable,
                  "unbound variable '" + n.name + "' at " + span_text(n.span), n.span);
    }
    if constexpr (std::is_same_v<T, double>) {
      return *v;
    } else {
      for (std::size_t i = 0; i < active_.size(); ++i) {
        if (active_[i] == n.name) return Jet2::variable(active_.size(), i, *v);
      }
      return Jet2(active_.size(), *v);
    }
  }

  // f(u) with f' and f'' supplied lazily; derivatives only for jets.
  template <typename F, typename DF, typename D2F>
  static T apply(const T& u, F f, DF df, D2F d2f) {
    const double x = value_of(u);
    if constexpr (std::is_same_v<T, double>) {
      (void)df;
      (void)d2f;
      return f(x);
    } else {
      return u.compose(f(x), df(x), d2f(x));
    }
  }

  static constexpr bool kJet = !std::is_same_v<T, double>;

  T binary(const ExprNode& n) const {
    const T a = eval(n.children[0]);
    switch (n.op) {
      case BinaryOp::Add: return a + eval(n.children[1]);
      case BinaryOp::Sub: return a - eval(n.children[1]);
      case BinaryOp::Mul: return a * eval(n.children[1]);
      case BinaryOp::Div: {
        const T b = eval(n.children[1]);
        const double bv = value_of(b);
        if (bv == 0.0) domain_error(n, "division by zero");
        return a * apply(
                       b, [](double x) { return 1.0 / x; },
                       [](double x) { return -1.0 / (x * x); },
                       [](double x) { return 2.0 / (x * x * x); });
      }
      case BinaryOp::Pow: return power(n, a);
    }
    return a;
  }

  T power(const ExprNode& n, const T& base) const {
    const Expr& exponent = n.children[1];
    const double bv = value_of(base);
    if (!n.requires_positive_base) {
      // variable-free exponent such as 3^2 or 1/2
      const double c =
          exponent.kind() == NodeKind::Constant ? exponent.node().value : evaluate(exponent, Bindings{});
      const bool integral = std::floor(c) == c;
      if (bv < 0.0 && !integral) domain_error(n, "non-integer power of a negative base");
      if (bv == 0.0 && c < 0.0) domain_error(n, "negative power of zero");
      if (kJet && bv == 0.0 && !integral && c < 2.0) {
        domain_error(n, "power not differentiable at zero");
      }
      return apply(
          base, [c](double x) { return std::pow(x, c); },
          [c](double x) { return c == 0.0 ? 0.0 : c * std::pow(x, c - 1.0); },
          [c](double x) {
            const double k = c * (c - 1.0);
            return k == 0.0 ? 0.0 : k * std::pow(x, c - 2.0);
          });
    }
    // Non-constant exponent: exp(b * ln a) with a > 0.
    if (bv <= 0.0) domain_error(n, "power with variable exponent requires a positive base");
    const T log_base = apply(
        base, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; },
        [](double x) { return -1.0 / (x * x); });
    const T product = eval(exponent) * log_base;
    return apply(
        product, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); },
        [](double x) { return std::exp(x); });
  }

  T call(const ExprNode& n) const {
    const T u = eval(n.children[0]);
    const double x = value_of(u);
    switch (n.fn) {
      case Function::Sin:
        return apply(
            u, [](double v) { return std::sin(v); }, [](double v) { return std::cos(v); },
            [](double v) { return -std::sin(v); });
      case Function::Cos:
        return apply(
            u, [](double v) { return std::cos(v); }, [](double v) { return -std::sin(v); },
            [](double v) { return -std::cos(v); });
      case Function::Tan: {
        if (std::cos(x) == 0.0) domain_error(n, "tan at a pole");
        return apply(
            u, [](double v) { return std::tan(v); },
            [](double v) {
              const double t = std::tan(v);
              return 1.0 + t * t;
            },
            [](double v) {
              const double t = std::tan(v);
              return 2.0 * t * (1.0 + t * t);
            });
      }
      case Function::Exp:
        return apply(
            u, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); },
            [](double v) { return std::exp(v); });
      case Function::Ln:
        if (x <= 0.0) domain_error(n, "ln of non-positive value");
        return apply(
            u, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; },
            [](double v) { return -1.0 / (v * v); });
      case Function::Sqrt:
        if (x < 0.0) domain_error(n, "sqrt of negative value");
        if (kJet && x == 0.0) domain_error(n, "sqrt not differentiable at zero");
        return apply(
            u, [](double v) { return std::sqrt(v); },
            [](double v) { return 0.5 / std::sqrt(v); },
            [](double v) { return -0.25 / (v * std::sqrt(v)); });
      case Function::Abs:
        return apply(
            u, [](double v) { return std::abs(v); },
            [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); },
            [](double) { return 0.0; });
    }
    return u;
  }

  const Bindings& bindings_;
  std::span<const std::string> active_;
};

}  // namespace

double evaluate(const Expr& ast, const Bindings& bindings) {
  return Evaluator<double>(bindings, {}).eval(ast);
}

Jet2 eval_jet2(const Expr& ast, const Bindings& bindings, std::span<const std::string> active) {
  for (const std::string& name : active) {
    if (bindings.find(name) == nullptr) {
      throw Error(ErrorCode::UnboundVariable, "active variable '" + name + "' is not bound");
    }
  }
  return Evaluator<Jet2>(bindings, active).eval(ast);
}

}  // namespace warpgeo
