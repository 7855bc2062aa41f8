#pragma once

// Small whitelisted expression grammar for field and kernel descriptors.
//
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := ('-'|'+') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'pi' | 'x'<k> | func '(' expr ')' | '(' expr ')'
//   func   := sin cos tan exp log sqrt tanh atan abs sign erf
//
// Variables are x1..xN (1-based). Gradients use forward-mode dual numbers.

#include "renorm/gauss_core.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace renorm {

class ExpressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Expression {
 public:
  static Expression parse(const std::string& text, int num_vars);

  double eval(const Vector& x) const;
  /// Value and gradient w.r.t. all variables.
  double eval_grad(const Vector& x, Vector& grad) const;

  int num_vars() const { return num_vars_; }
  const std::string& text() const { return text_; }

  struct Node;

 private:
  Expression() = default;
  std::shared_ptr<const Node> root_;
  int num_vars_ = 0;
  std::string text_;
};

}  // namespace renorm
