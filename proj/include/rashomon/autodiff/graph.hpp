#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rashomon/autodiff/layers.hpp"
#include "rashomon/autodiff/tensor.hpp"
#include "rashomon/common/rng.hpp"

namespace rashomon::ad {

using NodeId = std::size_t;

enum class OpKind {
  Placeholder,
  Parameter,
  Constant,
  MatMul,
  AddBias,
  Add,
  Sub,
  Mul,
  Scale,
  Shift,
  Mish,
  Sigmoid,
  Exp,
  Square,
  BatchNorm,
  Dropout,
  Sum,
  Mean,
  Hinge,
  Mse,
  RowSse,
  WeightedSum,
  Custom,
};

std::string_view op_name(OpKind kind);

/// User-defined node. `backward` returns one gradient per parent, each shaped
/// like that parent's value.
struct CustomOp {
  std::string name;
  std::function<Tensor(std::span<const Tensor* const> in)> forward;
  std::function<std::vector<Tensor>(std::span<const Tensor* const> in, const Tensor& out, const Tensor& out_grad)>
      backward;
};

/// Define-then-run computation graph with reverse accumulation.
///
/// Nodes are appended in topological order: every builder call may only
/// reference nodes that already exist, so the node list itself is the
/// evaluation order. forward() binds placeholder values (positionally, in
/// declaration order), evaluates every node and caches the results;
/// backward() then propagates d(output)/d(node) in reverse. Gradients of
/// Parameter nodes are accumulated (+=) into Parameter::grad; gradients of
/// placeholders are readable through grad().
///
/// Placeholder shapes may use 0 for "any extent" (typically the batch dim).
class Graph {
 public:
  explicit Graph(std::uint64_t seed = 0) : rng_(seed) {}

  NodeId placeholder(std::string label, Shape shape);
  NodeId parameter(Parameter& p);
  NodeId constant(Tensor value, std::string label = {});

  NodeId matmul(NodeId a, NodeId b, std::string label = {});
  NodeId add_bias(NodeId x, NodeId bias, std::string label = {});
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId shift(NodeId a, double c);
  NodeId mish(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId square(NodeId a);
  /// Batch statistics in training mode, frozen running statistics otherwise.
  NodeId batchnorm(NodeId x, BatchNormState& state);
  /// Inverted dropout; identity outside training mode.
  NodeId dropout(NodeId x, double rate);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  /// mean_i max(0, 1 - target_i * pred_i).
  NodeId hinge(NodeId pred, NodeId target);
  /// mean over all elements of (a - b)^2.
  NodeId mse(NodeId a, NodeId b);
  /// Squared error summed within each row, averaged over rows.
  NodeId row_sse(NodeId a, NodeId b);
  NodeId weighted_sum(NodeId a, std::vector<double> weights);
  NodeId custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> parents);

  /// Root used by backward(); defaults to the most recently added node.
  void set_output(NodeId id);
  NodeId output() const;

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  Rng& rng() { return rng_; }

  const Tensor& forward(std::span<const Tensor> inputs);
  const Tensor& forward(std::initializer_list<Tensor> inputs) {
    return forward(std::span<const Tensor>(inputs.begin(), inputs.size()));
  }
  /// Re-evaluates with the placeholder values already bound.
  const Tensor& rerun();
  void backward();

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  /// Writable placeholder value (used by finite-difference checks).
  Tensor& placeholder_value(NodeId id);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).in; }
  const std::vector<NodeId>& placeholders() const { return placeholders_; }
  bool forwarded() const { return forwarded_; }

 private:
  struct Node {
    Node(OpKind k, std::string l = {}, std::vector<NodeId> parents = {})
        : kind(k), label(std::move(l)), in(std::move(parents)) {}

    OpKind kind;
    std::string label;
    std::vector<NodeId> in;
    bool requires_grad = false;
    Shape declared;
    Parameter* param = nullptr;
    BatchNormState* bn = nullptr;
    double c = 0.0;
    std::vector<double> weights;
    std::shared_ptr<const CustomOp> op;
    Tensor value;
    Tensor grad;
    Tensor cache;
    std::vector<double> aux;
  };

  NodeId push(Node node);
  NodeId unary(OpKind kind, NodeId a, double c = 0.0);
  NodeId binary(OpKind kind, NodeId a, NodeId b, std::string label = {});
  const Tensor& val(NodeId id) const;
  void eval(NodeId id);
  void propagate(NodeId id);
  [[noreturn]] void fail(NodeId id, const std::string& what) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> placeholders_;
  NodeId output_ = static_cast<NodeId>(-1);
  bool training_ = false;
  bool forwarded_ = false;
  Rng rng_;
};

/// Maximum relative error between backward() and central differences of the
/// graph output w.r.t. one placeholder, over `points` random draws of that
/// placeholder (standard normal entries). Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4). Other placeholders
/// keep their currently bound values.
double grad_check(Graph& graph, NodeId leaf, double h, Rng& rng, int points = 10);

/// Same comparison at the currently bound placeholder values only.
double grad_check_here(Graph& graph, NodeId leaf, double h);

}  // namespace rashomon::ad
