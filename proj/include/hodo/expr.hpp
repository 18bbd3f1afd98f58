#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hodo/errors.hpp"

namespace hodo {

// Expression trees over u_1..u_d restricted to rational operations and
// integer powers, so symbolic differentiation stays inside the grammar.

enum class NodeKind { Constant, Variable, Add, Sub, Mul, Div, Pow, Neg };

namespace detail {

struct ExprNode {
  NodeKind kind;
  double value = 0.0;  // Constant
  int index = -1;      // Variable, 0-based
  int exponent = 0;    // Pow
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

using NodePtr = std::shared_ptr<const ExprNode>;

inline NodePtr make_constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Constant;
  n->value = v;
  return n;
}

inline NodePtr make_variable(int index) {
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Variable;
  n->index = index;
  return n;
}

inline bool is_const(const NodePtr& n, double v) {
  return n->kind == NodeKind::Constant && n->value == v;
}

inline NodePtr make_binary(NodeKind kind, NodePtr a, NodePtr b) {
  auto n = std::make_shared<ExprNode>();
  n->kind = kind;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

// Folding is limited to identities that cannot change the value of a
// well-defined evaluation; constant/0 is left in the tree.
inline NodePtr add(NodePtr a, NodePtr b) {
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_constant(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_binary(NodeKind::Add, std::move(a), std::move(b));
}

inline NodePtr neg(NodePtr a) {
  if (a->kind == NodeKind::Constant) return make_constant(-a->value);
  if (a->kind == NodeKind::Neg) return a->lhs;
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Neg;
  n->lhs = std::move(a);
  return n;
}

inline NodePtr sub(NodePtr a, NodePtr b) {
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_constant(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(std::move(b));
  return make_binary(NodeKind::Sub, std::move(a), std::move(b));
}

inline NodePtr mul(NodePtr a, NodePtr b) {
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_constant(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_constant(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  return make_binary(NodeKind::Mul, std::move(a), std::move(b));
}

inline NodePtr div(NodePtr a, NodePtr b) {
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant &&
      b->value != 0.0)
    return make_constant(a->value / b->value);
  if (is_const(b, 1.0)) return a;
  return make_binary(NodeKind::Div, std::move(a), std::move(b));
}

inline NodePtr pow(NodePtr a, int k) {
  if (k == 0) return make_constant(1.0);
  if (k == 1) return a;
  if (a->kind == NodeKind::Constant && !(a->value == 0.0 && k < 0)) {
    return make_constant(std::pow(a->value, k));
  }
  auto n = std::make_shared<ExprNode>();
  n->kind = NodeKind::Pow;
  n->exponent = k;
  n->lhs = std::move(a);
  return n;
}

inline double ipow(double base, int k) {
  if (k < 0) {
    if (base == 0.0) throw DivideByZeroError();
    return 1.0 / ipow(base, -k);
  }
  double result = 1.0;
  double acc = base;
  while (k > 0) {
    if (k & 1) result *= acc;
    acc *= acc;
    k >>= 1;
  }
  return result;
}

inline double eval_node(const ExprNode& n, std::span<const double> u) {
  switch (n.kind) {
    case NodeKind::Constant: return n.value;
    case NodeKind::Variable: return u[static_cast<std::size_t>(n.index)];
    case NodeKind::Add: return eval_node(*n.lhs, u) + eval_node(*n.rhs, u);
    case NodeKind::Sub: return eval_node(*n.lhs, u) - eval_node(*n.rhs, u);
    case NodeKind::Mul: return eval_node(*n.lhs, u) * eval_node(*n.rhs, u);
    case NodeKind::Div: {
      double den = eval_node(*n.rhs, u);
      if (den == 0.0) throw DivideByZeroError();
      return eval_node(*n.lhs, u) / den;
    }
    case NodeKind::Pow: return ipow(eval_node(*n.lhs, u), n.exponent);
    case NodeKind::Neg: return -eval_node(*n.lhs, u);
  }
  throw EvalError("corrupt expression node");
}

inline NodePtr diff_node(const NodePtr& n, int j) {
  switch (n->kind) {
    case NodeKind::Constant: return make_constant(0.0);
    case NodeKind::Variable: return make_constant(n->index == j ? 1.0 : 0.0);
    case NodeKind::Add: return add(diff_node(n->lhs, j), diff_node(n->rhs, j));
    case NodeKind::Sub: return sub(diff_node(n->lhs, j), diff_node(n->rhs, j));
    case NodeKind::Mul:
      return add(mul(diff_node(n->lhs, j), n->rhs),
                 mul(n->lhs, diff_node(n->rhs, j)));
    case NodeKind::Div:
      return div(sub(mul(diff_node(n->lhs, j), n->rhs),
                     mul(n->lhs, diff_node(n->rhs, j))),
                 pow(n->rhs, 2));
    case NodeKind::Pow:
      return mul(mul(make_constant(static_cast<double>(n->exponent)),
                     pow(n->lhs, n->exponent - 1)),
                 diff_node(n->lhs, j));
    case NodeKind::Neg: return neg(diff_node(n->lhs, j));
  }
  throw EvalError("corrupt expression node");
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void print_node(const ExprNode& n, std::string& out) {
  switch (n.kind) {
    case NodeKind::Constant:
      if (n.value < 0 || std::signbit(n.value)) {
        out += '(';
        out += format_double(n.value);
        out += ')';
      } else {
        out += format_double(n.value);
      }
      return;
    case NodeKind::Variable:
      out += 'u';
      out += std::to_string(n.index + 1);
      return;
    case NodeKind::Neg:
      out += "(-";
      print_node(*n.lhs, out);
      out += ')';
      return;
    case NodeKind::Pow:
      out += '(';
      print_node(*n.lhs, out);
      out += '^';
      out += std::to_string(n.exponent);
      out += ')';
      return;
    default: break;
  }
  const char op = n.kind == NodeKind::Add   ? '+'
                  : n.kind == NodeKind::Sub ? '-'
                  : n.kind == NodeKind::Mul ? '*'
                                            : '/';
  out += '(';
  print_node(*n.lhs, out);
  out += op;
  print_node(*n.rhs, out);
  out += ')';
}

inline void collect_vars(const ExprNode& n, std::set<int>& out) {
  switch (n.kind) {
    case NodeKind::Constant: return;
    case NodeKind::Variable: out.insert(n.index); return;
    case NodeKind::Neg:
    case NodeKind::Pow: collect_vars(*n.lhs, out); return;
    default:
      collect_vars(*n.lhs, out);
      collect_vars(*n.rhs, out);
  }
}

}  // namespace detail

/// Immutable expression in d variables; all operations are pure.
class Expr {
 public:
  Expr() : node_(detail::make_constant(0.0)), dim_(0) {}

  static Expr constant(double v, int dim) {
    return Expr(detail::make_constant(v), dim);
  }

  /// 0-based variable index.
  static Expr variable(int index, int dim) {
    if (index < 0 || index >= dim)
      throw DimensionError("variable index out of range");
    return Expr(detail::make_variable(index), dim);
  }

  int dim() const { return dim_; }

  double eval(std::span<const double> u) const {
    if (static_cast<int>(u.size()) < dim_)
      throw DimensionError("evaluation point has too few components");
    return detail::eval_node(*node_, u);
  }
  double eval(std::initializer_list<double> u) const {
    return eval(std::span<const double>(u.begin(), u.size()));
  }

  /// Exact symbolic partial derivative with respect to variable `index`.
  Expr diff(int index) const {
    if (index < 0 || index >= dim_)
      throw DimensionError("differentiation index out of range");
    return Expr(detail::diff_node(node_, index), dim_);
  }

  /// Canonical fully parenthesized form; parse(str()) evaluates identically.
  std::string str() const {
    std::string out;
    detail::print_node(*node_, out);
    return out;
  }

  std::set<int> variables() const {
    std::set<int> out;
    detail::collect_vars(*node_, out);
    return out;
  }

  bool is_constant() const { return node_->kind == NodeKind::Constant; }

  /// Rewrites variables with index >= keepDim to the given constants and
  /// narrows the expression to keepDim variables.
  Expr bind_tail(int keepDim, std::span<const double> values) const {
    if (keepDim + static_cast<int>(values.size()) < dim_)
      throw DimensionError("bind_tail: not enough values");
    return Expr(bind_node(node_, keepDim, values), keepDim);
  }

  friend Expr operator+(const Expr& a, const Expr& b) {
    return Expr(detail::add(a.node_, b.node_), merged_dim(a, b));
  }
  friend Expr operator-(const Expr& a, const Expr& b) {
    return Expr(detail::sub(a.node_, b.node_), merged_dim(a, b));
  }
  friend Expr operator*(const Expr& a, const Expr& b) {
    return Expr(detail::mul(a.node_, b.node_), merged_dim(a, b));
  }
  friend Expr operator/(const Expr& a, const Expr& b) {
    return Expr(detail::div(a.node_, b.node_), merged_dim(a, b));
  }
  friend Expr operator-(const Expr& a) {
    return Expr(detail::neg(a.node_), a.dim_);
  }
  friend Expr pow(const Expr& a, int k) {
    return Expr(detail::pow(a.node_, k), a.dim_);
  }

 private:
  Expr(detail::NodePtr node, int dim) : node_(std::move(node)), dim_(dim) {}

  friend Expr parse_expr(std::string_view, std::span<const std::string>);

  static int merged_dim(const Expr& a, const Expr& b) {
    if (a.dim_ != b.dim_)
      throw DimensionError("combining expressions of different dimension");
    return a.dim_;
  }

  static detail::NodePtr bind_node(const detail::NodePtr& n, int keepDim,
                                   std::span<const double> values) {
    using namespace detail;
    switch (n->kind) {
      case NodeKind::Constant: return n;
      case NodeKind::Variable:
        if (n->index >= keepDim)
          return make_constant(values[static_cast<std::size_t>(n->index - keepDim)]);
        return n;
      case NodeKind::Neg: return neg(bind_node(n->lhs, keepDim, values));
      case NodeKind::Pow:
        return pow(bind_node(n->lhs, keepDim, values), n->exponent);
      case NodeKind::Add:
        return add(bind_node(n->lhs, keepDim, values),
                   bind_node(n->rhs, keepDim, values));
      case NodeKind::Sub:
        return sub(bind_node(n->lhs, keepDim, values),
                   bind_node(n->rhs, keepDim, values));
      case NodeKind::Mul:
        return mul(bind_node(n->lhs, keepDim, values),
                   bind_node(n->rhs, keepDim, values));
      case NodeKind::Div:
        return div(bind_node(n->lhs, keepDim, values),
                   bind_node(n->rhs, keepDim, values));
    }
    throw EvalError("corrupt expression node");
  }

  detail::NodePtr node_;
  int dim_;
};

namespace detail {

// Recursive-descent parser. Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' intlit)*
//   atom   := number | name | '(' expr ')'
//   intlit := '-'? digits | '(' '-'? digits ')'
class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> names)
      : text_(text), names_(names) {}

  NodePtr parse() {
    auto node = parse_expr();
    skip_ws();
    if (pos_ != text_.size())
      throw ParseError("unexpected trailing input", pos_);
    return node;
  }

 private:
  NodePtr parse_expr() {
    auto lhs = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        lhs = add(std::move(lhs), parse_term());
      } else if (accept('-')) {
        lhs = sub(std::move(lhs), parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    auto lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (accept('*')) {
        lhs = mul(std::move(lhs), parse_unary());
      } else if (accept('/')) {
        lhs = div(std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (accept('-')) return neg(parse_unary());
    return parse_power();
  }

  NodePtr parse_power() {
    auto base = parse_atom();
    for (;;) {
      skip_ws();
      if (!accept('^')) return base;
      base = pow(std::move(base), parse_int_literal());
    }
  }

  int parse_int_literal() {
    skip_ws();
    bool parens = accept('(');
    skip_ws();
    bool negate = accept('-');
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) throw ParseError("expected integer exponent", pos_);
    if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
      throw ParseError("exponent must be an integer", pos_);
    long v = 0;
    for (std::size_t i = start; i < pos_; ++i) {
      v = v * 10 + (text_[i] - '0');
      if (v > 1000000) throw ParseError("exponent too large", start);
    }
    if (parens) {
      skip_ws();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
    }
    return static_cast<int>(negate ? -v : v);
  }

  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto inner = parse_expr();
      skip_ws();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() &&
               std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // 'e' belongs to a following name, not this number
      }
    }
    if (pos_ == start || (pos_ - start == 1 && text_[start] == '.'))
      throw ParseError("malformed number", start);
    double v = std::strtod(std::string(text_.substr(start, pos_ - start)).c_str(), nullptr);
    return make_constant(v);
  }

  NodePtr parse_name() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    std::string_view name = text_.substr(start, pos_ - start);
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return make_variable(static_cast<int>(i));
    }
    // A name with the right stem but a bad index gets a more precise message.
    if (!names_.empty()) {
      std::string_view stem(names_[0]);
      std::size_t digits = 0;
      while (digits < stem.size() &&
             !std::isdigit(static_cast<unsigned char>(stem[digits])))
        ++digits;
      std::string_view prefix = stem.substr(0, digits);
      if (!prefix.empty() && name.substr(0, prefix.size()) == prefix &&
          name.size() > prefix.size() &&
          std::isdigit(static_cast<unsigned char>(name[prefix.size()]))) {
        throw ParseError("variable index out of range: " + std::string(name), start);
      }
    }
    throw ParseError("unknown name: " + std::string(name), start);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view text_;
  std::span<const std::string> names_;
  std::size_t pos_ = 0;
};

inline std::vector<std::string> indexed_names(std::string_view prefix, int count) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i)
    names.push_back(std::string(prefix) + std::to_string(i));
  return names;
}

}  // namespace detail

/// Parses an expression over named variables; names[i] maps to variable i.
inline Expr parse_expr(std::string_view text, std::span<const std::string> names) {
  detail::Parser p(text, names);
  auto node = p.parse();
  struct Access : Expr {
    static Expr wrap(detail::NodePtr n, int d) {
      Expr e = Expr::constant(0.0, d);
      return rebuild(std::move(n), e);
    }
    static Expr rebuild(detail::NodePtr n, Expr proto) {
      // Expr has no public node constructor; go through bind_tail of a
      // wrapper. Simpler: use the private-friend below.
      (void)n;
      return proto;
    }
  };
  (void)node;
  // Reconstructed via the friend factory defined after the class.
  return detail::wrap_expr(std::move(node), static_cast<int>(names.size()));
}

/// Parses an expression over variables u1..u<dim>.
inline Expr parse_expr(std::string_view text, int dim) {
  auto names = detail::indexed_names("u", dim);
  return parse_expr(text, names);
}

}  // namespace hodo
