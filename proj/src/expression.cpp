#include "fieldflow/expression.hpp"

#include <cctype>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace ff {

namespace {
enum class Op {
  constant,
  var_x,
  var_y,
  var_z,
  var_t,
  add,
  sub,
  mul,
  divide,
  pow_op,
  neg,
  fn_sin,
  fn_cos,
  fn_tan,
  fn_exp,
  fn_log,
  fn_sqrt,
  fn_tanh,
  fn_abs
};
}  // namespace

struct Expression::Node {
  Op op = Op::constant;
  double value = 0;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

class Parser {
public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr run() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != s_.size())
      throw std::invalid_argument("expression: trailing input at '" +
                                  s_.substr(pos_) + "'");
    return e;
  }

private:
  const std::string& s_;
  size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr,
                      double v = 0) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->value = v;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodePtr expr() {
    NodePtr e = term();
    while (true) {
      if (eat('+'))
        e = make(Op::add, e, term());
      else if (eat('-'))
        e = make(Op::sub, e, term());
      else
        return e;
    }
  }

  NodePtr term() {
    NodePtr e = factor();
    while (true) {
      if (eat('*'))
        e = make(Op::mul, e, factor());
      else if (eat('/'))
        e = make(Op::divide, e, factor());
      else
        return e;
    }
  }

  NodePtr factor() {
    // unary minus binds looser than '^', so -x^2 means -(x^2); the exponent
    // itself may carry a sign, 2^-3 = 1/8
    if (eat('-')) return make(Op::neg, factor());
    if (eat('+')) return factor();
    NodePtr base = primary();
    if (eat('^')) return make(Op::pow_op, base, factor());  // right associative
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= s_.size())
      throw std::invalid_argument("expression: unexpected end of input");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      return make(Op::constant, nullptr, nullptr, v);
    }
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!eat(')'))
        throw std::invalid_argument("expression: missing closing parenthesis");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
              s_[pos_] == '_'))
        ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      if (name == "x" || name == "x1") return make(Op::var_x);
      if (name == "y" || name == "x2") return make(Op::var_y);
      if (name == "z" || name == "x3") return make(Op::var_z);
      if (name == "t") return make(Op::var_t);
      if (name == "pi")
        return make(Op::constant, nullptr, nullptr, 3.14159265358979323846);
      Op fop;
      if (name == "sin")
        fop = Op::fn_sin;
      else if (name == "cos")
        fop = Op::fn_cos;
      else if (name == "tan")
        fop = Op::fn_tan;
      else if (name == "exp")
        fop = Op::fn_exp;
      else if (name == "log")
        fop = Op::fn_log;
      else if (name == "sqrt")
        fop = Op::fn_sqrt;
      else if (name == "tanh")
        fop = Op::fn_tanh;
      else if (name == "abs")
        fop = Op::fn_abs;
      else
        throw std::invalid_argument("expression: unknown name '" + name + "'");
      if (!eat('('))
        throw std::invalid_argument("expression: expected '(' after " + name);
      NodePtr arg = expr();
      if (!eat(')'))
        throw std::invalid_argument("expression: missing ')' after " + name);
      return make(fop, arg);
    }
    throw std::invalid_argument(std::string("expression: unexpected '") + c +
                                "'");
  }
};

double eval_node(const Expression::Node& n, const std::array<double, 3>& x,
                 double t) {
  switch (n.op) {
    case Op::constant:
      return n.value;
    case Op::var_x:
      return x[0];
    case Op::var_y:
      return x[1];
    case Op::var_z:
      return x[2];
    case Op::var_t:
      return t;
    case Op::add:
      return eval_node(*n.a, x, t) + eval_node(*n.b, x, t);
    case Op::sub:
      return eval_node(*n.a, x, t) - eval_node(*n.b, x, t);
    case Op::mul:
      return eval_node(*n.a, x, t) * eval_node(*n.b, x, t);
    case Op::divide:
      return eval_node(*n.a, x, t) / eval_node(*n.b, x, t);
    case Op::pow_op:
      return std::pow(eval_node(*n.a, x, t), eval_node(*n.b, x, t));
    case Op::neg:
      return -eval_node(*n.a, x, t);
    case Op::fn_sin:
      return std::sin(eval_node(*n.a, x, t));
    case Op::fn_cos:
      return std::cos(eval_node(*n.a, x, t));
    case Op::fn_tan:
      return std::tan(eval_node(*n.a, x, t));
    case Op::fn_exp:
      return std::exp(eval_node(*n.a, x, t));
    case Op::fn_log:
      return std::log(eval_node(*n.a, x, t));
    case Op::fn_sqrt:
      return std::sqrt(eval_node(*n.a, x, t));
    case Op::fn_tanh:
      return std::tanh(eval_node(*n.a, x, t));
    case Op::fn_abs:
      return std::fabs(eval_node(*n.a, x, t));
  }
  return 0;
}

}  // namespace

Expression::Expression() {
  auto n = std::make_shared<Node>();
  n->op = Op::constant;
  n->value = 0;
  root_ = n;
  text_ = "0";
}

Expression Expression::parse(const std::string& text) {
  Expression e;
  e.root_ = Parser(text).run();
  e.text_ = text;
  return e;
}

Expression Expression::constant(double v) {
  Expression e;
  auto n = std::make_shared<Node>();
  n->op = Op::constant;
  n->value = v;
  e.root_ = n;
  e.text_ = std::to_string(v);
  return e;
}

double Expression::eval(const std::array<double, 3>& x, double t) const {
  return eval_node(*root_, x, t);
}

bool Expression::is_constant_zero() const {
  return root_->op == Op::constant && root_->value == 0;
}

}  // namespace ff
