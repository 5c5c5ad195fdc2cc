#include "rashomon/symreg/tree.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::symreg {

int arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Const:
    case Op::Var:
      return 0;
    default:
      return 1;
  }
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Square: return "square";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sin";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Const: return "const";
    case Op::Var: return "var";
  }
  return "?";
}

std::size_t Tree::subtree_end(std::size_t i) const {
  std::size_t need = 1;
  while (need > 0) {
    if (i >= nodes.size()) throw Error("malformed expression tree");
    need += static_cast<std::size_t>(arity(nodes[i].op));
    --need;
    ++i;
  }
  return i;
}

bool Tree::valid() const {
  if (nodes.empty()) return false;
  long need = 1;
  for (const auto& n : nodes) {
    if (need <= 0) return false;
    need += arity(n.op) - 1;
    if (n.op == Op::Var && n.var < 0) return false;
  }
  return need == 0;
}

int Tree::max_var() const {
  int m = -1;
  for (const auto& n : nodes)
    if (n.op == Op::Var) m = std::max(m, n.var);
  return m;
}

Tree make_unary(Op op, const Tree& a) {
  Tree t;
  t.nodes.push_back({op, 0.0, 0});
  t.nodes.insert(t.nodes.end(), a.nodes.begin(), a.nodes.end());
  return t;
}

Tree make_binary(Op op, const Tree& a, const Tree& b) {
  Tree t;
  t.nodes.push_back({op, 0.0, 0});
  t.nodes.insert(t.nodes.end(), a.nodes.begin(), a.nodes.end());
  t.nodes.insert(t.nodes.end(), b.nodes.begin(), b.nodes.end());
  return t;
}

int ComplexityTable::score(Op op) const {
  switch (op) {
    case Op::Sin: return sin;
    case Op::Exp: return exp;
    case Op::Log: return log;
    default: return other;
  }
}

int complexity(const Tree& t, const ComplexityTable& table) {
  int c = 0;
  for (const auto& n : t.nodes) c += table.score(n.op);
  return c;
}

namespace {

double apply_unary(Op op, double a) {
  switch (op) {
    case Op::Square: return a * a;
    case Op::Exp: return std::exp(a);
    case Op::Log: return std::log(a);
    case Op::Sin: return std::sin(a);
    case Op::Sqrt: return std::sqrt(a);
    case Op::Abs: return std::abs(a);
    default: throw Error("not a unary operator");
  }
}

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    default: throw Error("not a binary operator");
  }
}

// Evaluates the subtree at i; returns its end in `end`.
double eval_at(const Tree& t, std::size_t i, std::span<const double> x, std::size_t& end) {
  const Node& n = t.nodes[i];
  switch (arity(n.op)) {
    case 0:
      end = i + 1;
      if (n.op == Op::Const) return n.value;
      if (static_cast<std::size_t>(n.var) >= x.size())
        throw Error("variable z" + std::to_string(n.var) + " out of range for input of size " +
                    std::to_string(x.size()));
      return x[static_cast<std::size_t>(n.var)];
    case 1:
      return apply_unary(n.op, eval_at(t, i + 1, x, end));
    default: {
      std::size_t mid = 0;
      const double a = eval_at(t, i + 1, x, mid);
      const double b = eval_at(t, mid, x, end);
      return apply_binary(n.op, a, b);
    }
  }
}

}  // namespace

double eval_tree(const Tree& t, std::span<const double> x) {
  if (t.nodes.empty()) throw Error("empty expression tree");
  std::size_t end = 0;
  return eval_at(t, 0, x, end);
}

std::vector<double> eval_tree(const Tree& t, const std::vector<std::vector<double>>& rows) {
  // Column-wise evaluation: one value vector per node, children before parents.
  const std::size_t n = rows.size();
  for (const auto& node : t.nodes)
    if (node.op == Op::Var)
      for (const auto& r : rows)
        if (static_cast<std::size_t>(node.var) >= r.size())
          throw Error("variable z" + std::to_string(node.var) + " out of range");
  std::vector<std::vector<double>> stack;
  for (std::size_t k = t.nodes.size(); k-- > 0;) {
    const Node& node = t.nodes[k];
    const int a = arity(node.op);
    if (a == 0) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = node.op == Op::Const ? node.value : rows[i][node.var];
      stack.push_back(std::move(v));
    } else if (a == 1) {
      auto& v = stack.back();
      for (auto& e : v) e = apply_unary(node.op, e);
    } else {
      auto lhs = std::move(stack.back());
      stack.pop_back();
      auto& rhs = stack.back();
      for (std::size_t i = 0; i < n; ++i) rhs[i] = apply_binary(node.op, lhs[i], rhs[i]);
    }
  }
  if (stack.size() != 1) throw Error("malformed expression tree");
  return std::move(stack.back());
}

std::vector<double> tree_grad(const Tree& t, std::span<const double> x) {
  if (!t.valid()) throw Error("tree_grad: malformed expression tree");
  const std::size_t m = t.nodes.size();
  std::vector<double> val(m);
  std::vector<std::size_t> child1(m), child2(m);
  for (std::size_t k = m; k-- > 0;) {
    const Node& n = t.nodes[k];
    const int a = arity(n.op);
    if (a == 0) {
      if (n.op == Op::Var && static_cast<std::size_t>(n.var) >= x.size())
        throw Error("variable z" + std::to_string(n.var) + " out of range");
      val[k] = n.op == Op::Const ? n.value : x[static_cast<std::size_t>(n.var)];
    } else {
      child1[k] = k + 1;
      if (a == 1) {
        val[k] = apply_unary(n.op, val[k + 1]);
      } else {
        child2[k] = t.subtree_end(k + 1);
        val[k] = apply_binary(n.op, val[k + 1], val[child2[k]]);
      }
    }
    if (!std::isfinite(val[k]))
      throw Error("tree_grad: non-finite value at node " + std::to_string(k) + " (" + std::string(op_name(n.op)) + ")");
  }
  std::vector<double> adj(m, 0.0), grad(x.size(), 0.0);
  adj[0] = 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    const Node& n = t.nodes[k];
    const double g = adj[k];
    switch (n.op) {
      case Op::Var: grad[static_cast<std::size_t>(n.var)] += g; break;
      case Op::Const: break;
      case Op::Add:
        adj[child1[k]] += g;
        adj[child2[k]] += g;
        break;
      case Op::Sub:
        adj[child1[k]] += g;
        adj[child2[k]] -= g;
        break;
      case Op::Mul:
        adj[child1[k]] += g * val[child2[k]];
        adj[child2[k]] += g * val[child1[k]];
        break;
      case Op::Div: {
        const double b = val[child2[k]];
        adj[child1[k]] += g / b;
        adj[child2[k]] -= g * val[child1[k]] / (b * b);
        break;
      }
      case Op::Square: adj[k + 1] += g * 2.0 * val[k + 1]; break;
      case Op::Exp: adj[k + 1] += g * val[k]; break;
      case Op::Log: adj[k + 1] += g / val[k + 1]; break;
      case Op::Sin: adj[k + 1] += g * std::cos(val[k + 1]); break;
      case Op::Sqrt: adj[k + 1] += g * 0.5 / val[k]; break;
      case Op::Abs: {
        const double a = val[k + 1];
        adj[k + 1] += g * (a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0));
        break;
      }
    }
  }
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw Error("tree_grad: non-finite derivative for z" + std::to_string(i));
  return grad;
}

namespace {

void print_at(const Tree& t, std::size_t i, std::string& out, std::size_t& end) {
  const Node& n = t.nodes[i];
  switch (arity(n.op)) {
    case 0:
      end = i + 1;
      if (n.op == Op::Const)
        out += io::format_double(n.value);
      else
        out += "z" + std::to_string(n.var);
      return;
    case 1:
      out += op_name(n.op);
      out += '(';
      print_at(t, i + 1, out, end);
      out += ')';
      return;
    default: {
      std::size_t mid = 0;
      out += '(';
      print_at(t, i + 1, out, mid);
      out += ' ';
      out += op_name(n.op);
      out += ' ';
      print_at(t, mid, out, end);
      out += ')';
    }
  }
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Tree parse() {
    Tree t = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return t;
  }

 private:
  Tree expr() {
    Tree lhs = term();
    for (;;) {
      skip();
      if (peek('+') || peek('-')) {
        const Op op = s_[pos_++] == '+' ? Op::Add : Op::Sub;
        lhs = make_binary(op, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Tree term() {
    Tree lhs = power();
    for (;;) {
      skip();
      if (peek('*') || peek('/')) {
        const Op op = s_[pos_++] == '*' ? Op::Mul : Op::Div;
        lhs = make_binary(op, lhs, power());
      } else {
        return lhs;
      }
    }
  }

  Tree power() {
    Tree base = primary();
    skip();
    while (peek('^')) {
      ++pos_;
      skip();
      if (!peek('2')) fail("only ^2 is supported");
      ++pos_;
      base = make_unary(Op::Square, base);
      skip();
    }
    return base;
  }

  Tree primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Tree t = expr();
      expect(')');
      return t;
    }
    if (c == '|') {
      ++pos_;
      Tree t = expr();
      expect('|');
      return make_unary(Op::Abs, t);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view word = s_.substr(start, pos_ - start);
      if (word.size() > 1 && word[0] == 'z' && word.find_first_not_of("0123456789", 1) == std::string_view::npos)
        return Tree::variable(std::stoi(std::string(word.substr(1))));
      for (Op op : kUnaryOps) {
        if (word == op_name(op)) {
          expect('(');
          Tree arg = expr();
          expect(')');
          return make_unary(op, arg);
        }
      }
      if (word == "inf" || word == "nan") {
        pos_ = start;
        return number();
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(word) + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Tree number() {
    if (s_[pos_] == '+') ++pos_;
    const std::size_t start = pos_;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc()) {
      pos_ = start;
      fail("expected a number");
    }
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return Tree::constant(v);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) const { return pos_ < s_.size() && s_[pos_] == c; }
  void expect(char c) {
    skip();
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error("parse error at column " + std::to_string(pos_ + 1) + ": " + what + " in \"" + std::string(s_) + "\"");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_infix(const Tree& t) {
  if (!t.valid()) throw Error("to_infix: malformed expression tree");
  std::string out;
  std::size_t end = 0;
  print_at(t, 0, out, end);
  return out;
}

Tree parse_infix(std::string_view text) { return Parser(text).parse(); }

}  // namespace rashomon::symreg
