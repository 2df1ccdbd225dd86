#pragma once

#include <array>
#include <memory>
#include <string>

namespace ff {

// Arithmetic expression over the variables x, y, z (aliases x1, x2, x3) and
// t, with + - * / ^, parentheses, unary minus, the constant pi, and the
// functions sin cos tan exp log sqrt tanh abs. Parsed once, evaluated many
// times; parse errors throw std::invalid_argument.
class Expression {
public:
  struct Node;

  Expression();  // constant zero
  static Expression parse(const std::string& text);
  static Expression constant(double v);
  double eval(const std::array<double, 3>& x, double t) const;
  bool is_constant_zero() const;
  const std::string& text() const { return text_; }

private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace ff
