#include "renorm/expression.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

namespace renorm {

enum class Op { constant, variable, add, sub, mul, div, pow, neg, func };
enum class Fn { sin, cos, tan, exp, log, sqrt, tanh, atan, abs, sign, erf };

struct Expression::Node {
  Op op = Op::constant;
  double value = 0.0;
  int var = 0;
  Fn fn = Fn::sin;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double v) {
  auto n = std::make_shared<Expression::Node>();
  n->op = Op::constant;
  n->value = v;
  return n;
}

NodePtr make_binary(Op op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

class Parser {
 public:
  Parser(const std::string& text, int num_vars) : s_(text), nvars_(num_vars) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ExpressionError("expression '" + s_ + "': " + msg + " at offset " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make_binary(Op::add, lhs, term());
      else if (accept('-')) lhs = make_binary(Op::sub, lhs, term());
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make_binary(Op::mul, lhs, unary());
      else if (accept('/')) lhs = make_binary(Op::div, lhs, unary());
      else return lhs;
    }
  }
  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::neg;
      n->lhs = unary();
      return n;
    }
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make_binary(Op::pow, base, unary());
    return base;
  }
  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string word = s_.substr(start, pos_ - start);
      if (word == "pi") return make_const(std::numbers::pi);
      if (word.size() > 1 && word[0] == 'x' &&
          word.find_first_not_of("0123456789", 1) == std::string::npos) {
        const int k = std::stoi(word.substr(1));
        if (k < 1 || k > nvars_) fail("variable " + word + " out of range");
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::variable;
        n->var = k - 1;
        return n;
      }
      static const std::pair<const char*, Fn> table[] = {
          {"sin", Fn::sin},   {"cos", Fn::cos},   {"tan", Fn::tan},   {"exp", Fn::exp},
          {"log", Fn::log},   {"sqrt", Fn::sqrt}, {"tanh", Fn::tanh}, {"atan", Fn::atan},
          {"abs", Fn::abs},   {"sign", Fn::sign}, {"erf", Fn::erf}};
      for (const auto& [name, fn] : table) {
        if (word == name) {
          if (!accept('(')) fail("expected '(' after " + word);
          auto n = std::make_shared<Expression::Node>();
          n->op = Op::func;
          n->fn = fn;
          n->lhs = expr();
          if (!accept(')')) fail("expected ')'");
          return n;
        }
      }
      fail("unknown identifier '" + word + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string s_;
  std::size_t pos_ = 0;
  int nvars_;
};

double apply(Fn fn, double u) {
  switch (fn) {
    case Fn::sin: return std::sin(u);
    case Fn::cos: return std::cos(u);
    case Fn::tan: return std::tan(u);
    case Fn::exp: return std::exp(u);
    case Fn::log: return std::log(u);
    case Fn::sqrt: return std::sqrt(u);
    case Fn::tanh: return std::tanh(u);
    case Fn::atan: return std::atan(u);
    case Fn::abs: return std::abs(u);
    case Fn::sign: return (u > 0) - (u < 0);
    case Fn::erf: return std::erf(u);
  }
  return 0.0;
}

double apply_derivative(Fn fn, double u) {
  switch (fn) {
    case Fn::sin: return std::cos(u);
    case Fn::cos: return -std::sin(u);
    case Fn::tan: {
      const double c = std::cos(u);
      return 1.0 / (c * c);
    }
    case Fn::exp: return std::exp(u);
    case Fn::log: return 1.0 / u;
    case Fn::sqrt: return 0.5 / std::sqrt(u);
    case Fn::tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Fn::atan: return 1.0 / (1.0 + u * u);
    case Fn::abs: return (u > 0) - (u < 0);
    case Fn::sign: return 0.0;
    case Fn::erf: return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-u * u);
  }
  return 0.0;
}

double eval_node(const Expression::Node& n, const Vector& x) {
  switch (n.op) {
    case Op::constant: return n.value;
    case Op::variable: return x[n.var];
    case Op::add: return eval_node(*n.lhs, x) + eval_node(*n.rhs, x);
    case Op::sub: return eval_node(*n.lhs, x) - eval_node(*n.rhs, x);
    case Op::mul: return eval_node(*n.lhs, x) * eval_node(*n.rhs, x);
    case Op::div: return eval_node(*n.lhs, x) / eval_node(*n.rhs, x);
    case Op::pow: return std::pow(eval_node(*n.lhs, x), eval_node(*n.rhs, x));
    case Op::neg: return -eval_node(*n.lhs, x);
    case Op::func: return apply(n.fn, eval_node(*n.lhs, x));
  }
  return 0.0;
}

struct Dual {
  double v;
  Vector d;
};

Dual eval_dual(const Expression::Node& n, const Vector& x) {
  const int dim = static_cast<int>(x.size());
  switch (n.op) {
    case Op::constant: return {n.value, Vector::Zero(dim)};
    case Op::variable: {
      Vector d = Vector::Zero(dim);
      d[n.var] = 1.0;
      return {x[n.var], d};
    }
    case Op::add: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {a.v + b.v, a.d + b.d};
    }
    case Op::sub: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {a.v - b.v, a.d - b.d};
    }
    case Op::mul: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {a.v * b.v, a.d * b.v + b.d * a.v};
    }
    case Op::div: {
      Dual a = eval_dual(*n.lhs, x), b = eval_dual(*n.rhs, x);
      return {a.v / b.v, (a.d * b.v - b.d * a.v) / (b.v * b.v)};
    }
    case Op::pow: {
      Dual a = eval_dual(*n.lhs, x);
      if (n.rhs->op == Op::constant) {
        const double c = n.rhs->value;
        return {std::pow(a.v, c), a.d * (c * std::pow(a.v, c - 1.0))};
      }
      Dual b = eval_dual(*n.rhs, x);
      const double v = std::pow(a.v, b.v);
      return {v, v * (b.d * std::log(a.v) + a.d * (b.v / a.v))};
    }
    case Op::neg: {
      Dual a = eval_dual(*n.lhs, x);
      return {-a.v, -a.d};
    }
    case Op::func: {
      Dual a = eval_dual(*n.lhs, x);
      return {apply(n.fn, a.v), a.d * apply_derivative(n.fn, a.v)};
    }
  }
  return {0.0, Vector::Zero(dim)};
}

}  // namespace

Expression Expression::parse(const std::string& text, int num_vars) {
  if (num_vars < 1) throw ExpressionError("expression needs at least one variable");
  Expression e;
  e.root_ = Parser(text, num_vars).parse();
  e.num_vars_ = num_vars;
  e.text_ = text;
  return e;
}

double Expression::eval(const Vector& x) const { return eval_node(*root_, x); }

double Expression::eval_grad(const Vector& x, Vector& grad) const {
  Dual d = eval_dual(*root_, x);
  grad = d.d;
  return d.v;
}

}  // namespace renorm
