#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rashomon::symreg {

enum class Op : unsigned char {
  Add,
  Sub,
  Mul,
  Div,
  Square,
  Exp,
  Log,
  Sin,
  Sqrt,
  Abs,
  Const,
  Var,
};

inline constexpr std::array<Op, 4> kBinaryOps{Op::Add, Op::Sub, Op::Mul, Op::Div};
inline constexpr std::array<Op, 6> kUnaryOps{Op::Square, Op::Exp, Op::Log, Op::Sin, Op::Sqrt, Op::Abs};

int arity(Op op);
std::string_view op_name(Op op);

struct Node {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int var = 0;         // Var

  bool operator==(const Node&) const = default;
};

/// Expression in prefix order: every node is followed by its children's subtrees.
struct Tree {
  std::vector<Node> nodes;

  std::size_t size() const { return nodes.size(); }
  /// One past the last node of the subtree rooted at i.
  std::size_t subtree_end(std::size_t i) const;
  bool valid() const;
  int max_var() const;

  bool operator==(const Tree&) const = default;

  static Tree constant(double v) { return Tree{{Node{Op::Const, v, 0}}}; }
  static Tree variable(int k) { return Tree{{Node{Op::Var, 0.0, k}}}; }
};

Tree make_unary(Op op, const Tree& a);
Tree make_binary(Op op, const Tree& a, const Tree& b);

struct ComplexityTable {
  int sin = 3;
  int exp = 2;
  int log = 2;
  int other = 1;
  double parsimony = 0.001;
  int max_complexity = 20;

  int score(Op op) const;
};

int complexity(const Tree& t, const ComplexityTable& table = {});
inline std::size_t expression_size(const Tree& t) { return t.size(); }

/// Plain IEEE arithmetic: domain errors yield inf/nan, which propagate.
double eval_tree(const Tree& t, std::span<const double> x);
std::vector<double> eval_tree(const Tree& t, const std::vector<std::vector<double>>& rows);

/// d f / d x at x. Throws naming the node if any intermediate is non-finite.
std::vector<double> tree_grad(const Tree& t, std::span<const double> x);

/// Fully parenthesized infix, e.g. "((z0 * square(z1)) - exp(z3))".
std::string to_infix(const Tree& t);
/// Accepts to_infix output plus "|a|" for abs(a) and "a^2" for square(a).
/// Numeric literals may carry a sign; "-z1" is not accepted.
Tree parse_infix(std::string_view text);

}  // namespace rashomon::symreg
