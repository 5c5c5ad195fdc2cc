#include "rashomon/autodiff/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "rashomon/common/error.hpp"

namespace rashomon::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat as_mat(const Tensor& t) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapMat as_mat(Tensor& t) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

bool shape_matches(const Shape& declared, const Shape& actual) {
  if (declared.size() != actual.size()) return false;
  for (std::size_t i = 0; i < declared.size(); ++i)
    if (declared[i] != 0 && declared[i] != actual[i]) return false;
  return true;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Placeholder: return "placeholder";
    case OpKind::Parameter: return "parameter";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Shift: return "shift";
    case OpKind::Mish: return "mish";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Square: return "square";
    case OpKind::BatchNorm: return "batchnorm";
    case OpKind::Dropout: return "dropout";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Hinge: return "hinge";
    case OpKind::Mse: return "mse";
    case OpKind::RowSse: return "row_sse";
    case OpKind::WeightedSum: return "weighted_sum";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

void Graph::fail(NodeId id, const std::string& what) const {
  const Node& n = nodes_[id];
  std::string name = "node #" + std::to_string(id) + " (" + std::string(op_name(n.kind));
  if (n.op) name += ":" + n.op->name;
  if (!n.label.empty()) name += " '" + n.label + "'";
  throw ShapeError(name + "): " + what);
}

NodeId Graph::push(Node node) {
  for (NodeId p : node.in) {
    if (p >= nodes_.size()) throw Error("graph node references unknown parent " + std::to_string(p));
    node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  }
  nodes_.push_back(std::move(node));
  forwarded_ = false;
  return nodes_.size() - 1;
}

NodeId Graph::placeholder(std::string label, Shape shape) {
  Node n{OpKind::Placeholder, std::move(label), {}};
  n.requires_grad = true;
  n.declared = shape;
  for (auto& d : shape)
    if (d == 0) d = 1;
  n.value = Tensor(shape);
  NodeId id = push(std::move(n));
  placeholders_.push_back(id);
  return id;
}

NodeId Graph::parameter(Parameter& p) {
  Node n{OpKind::Parameter, p.name, {}};
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value, std::string label) {
  Node n{OpKind::Constant, std::move(label), {}};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::unary(OpKind kind, NodeId a, double c) {
  Node n{kind, {}, {a}};
  n.c = c;
  return push(std::move(n));
}

NodeId Graph::binary(OpKind kind, NodeId a, NodeId b, std::string label) {
  return push(Node{kind, std::move(label), {a, b}});
}

NodeId Graph::matmul(NodeId a, NodeId b, std::string label) { return binary(OpKind::MatMul, a, b, std::move(label)); }
NodeId Graph::add_bias(NodeId x, NodeId bias, std::string label) {
  return binary(OpKind::AddBias, x, bias, std::move(label));
}
NodeId Graph::add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }
NodeId Graph::scale(NodeId a, double c) { return unary(OpKind::Scale, a, c); }
NodeId Graph::shift(NodeId a, double c) { return unary(OpKind::Shift, a, c); }
NodeId Graph::mish(NodeId a) { return unary(OpKind::Mish, a); }
NodeId Graph::sigmoid(NodeId a) { return unary(OpKind::Sigmoid, a); }
NodeId Graph::exp(NodeId a) { return unary(OpKind::Exp, a); }
NodeId Graph::square(NodeId a) { return unary(OpKind::Square, a); }
NodeId Graph::sum(NodeId a) { return unary(OpKind::Sum, a); }
NodeId Graph::mean(NodeId a) { return unary(OpKind::Mean, a); }
NodeId Graph::hinge(NodeId pred, NodeId target) { return binary(OpKind::Hinge, pred, target); }
NodeId Graph::mse(NodeId a, NodeId b) { return binary(OpKind::Mse, a, b); }
NodeId Graph::row_sse(NodeId a, NodeId b) { return binary(OpKind::RowSse, a, b); }

NodeId Graph::dropout(NodeId x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0,1)");
  return unary(OpKind::Dropout, x, rate);
}

NodeId Graph::batchnorm(NodeId x, BatchNormState& state) {
  NodeId gamma = parameter(state.gamma);
  NodeId beta = parameter(state.beta);
  Node n{OpKind::BatchNorm, state.gamma.name, {x, gamma, beta}};
  n.bn = &state;
  return push(std::move(n));
}

NodeId Graph::weighted_sum(NodeId a, std::vector<double> weights) {
  Node n{OpKind::WeightedSum, {}, {a}};
  n.weights = std::move(weights);
  return push(std::move(n));
}

NodeId Graph::custom(std::shared_ptr<const CustomOp> op, std::vector<NodeId> parents) {
  Node n{OpKind::Custom, {}, std::move(parents)};
  n.op = std::move(op);
  return push(std::move(n));
}

void Graph::set_output(NodeId id) {
  if (id >= nodes_.size()) throw Error("set_output: unknown node");
  output_ = id;
}

NodeId Graph::output() const {
  if (nodes_.empty()) throw Error("empty graph");
  return output_ == static_cast<NodeId>(-1) ? nodes_.size() - 1 : output_;
}

const Tensor& Graph::val(NodeId id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

const Tensor& Graph::value(NodeId id) const {
  if (id >= nodes_.size()) throw Error("value: unknown node");
  return val(id);
}

const Tensor& Graph::grad(NodeId id) const {
  if (id >= nodes_.size()) throw Error("grad: unknown node");
  return nodes_[id].grad;
}

Tensor& Graph::placeholder_value(NodeId id) {
  if (id >= nodes_.size() || nodes_[id].kind != OpKind::Placeholder) throw Error("not a placeholder");
  return nodes_[id].value;
}

const Tensor& Graph::forward(std::span<const Tensor> inputs) {
  if (inputs.size() != placeholders_.size())
    throw ShapeError("forward: " + std::to_string(inputs.size()) + " inputs for " +
                     std::to_string(placeholders_.size()) + " placeholders");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Node& n = nodes_[placeholders_[i]];
    if (!shape_matches(n.declared, inputs[i].shape()))
      fail(placeholders_[i], "expected shape " + shape_str(n.declared) + ", got " + shape_str(inputs[i].shape()));
    n.value = inputs[i];
  }
  return rerun();
}

const Tensor& Graph::rerun() {
  for (NodeId id = 0; id < nodes_.size(); ++id) eval(id);
  forwarded_ = true;
  return val(output());
}

void Graph::eval(NodeId id) {
  Node& n = nodes_[id];
  auto in = [&](std::size_t i) -> const Tensor& { return val(n.in[i]); };
  auto same_shape = [&](const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) fail(id, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  };
  auto map_unary = [&](auto f) {
    const Tensor& a = in(0);
    n.value.reshape_to(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = f(a[i]);
  };

  switch (n.kind) {
    case OpKind::Placeholder:
    case OpKind::Parameter:
    case OpKind::Constant:
      return;
    case OpKind::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        fail(id, "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
      n.value.reshape_to({a.dim(0), b.dim(1)});
      as_mat(n.value).noalias() = as_mat(a) * as_mat(b);
      return;
    }
    case OpKind::AddBias: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
        fail(id, "bias " + shape_str(b.shape()) + " does not fit " + shape_str(x.shape()));
      n.value.reshape_to(x.shape());
      const std::size_t cols = x.dim(1);
      for (std::size_t r = 0; r < x.dim(0); ++r)
        for (std::size_t c = 0; c < cols; ++c) n.value[r * cols + c] = x[r * cols + c] + b[c];
      return;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      same_shape(a, b);
      n.value.reshape_to(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.value[i] = n.kind == OpKind::Add ? a[i] + b[i] : n.kind == OpKind::Sub ? a[i] - b[i] : a[i] * b[i];
      return;
    }
    case OpKind::Scale: map_unary([&](double x) { return n.c * x; }); return;
    case OpKind::Shift: map_unary([&](double x) { return x + n.c; }); return;
    case OpKind::Mish: map_unary([](double x) { return ad::mish(x); }); return;
    case OpKind::Sigmoid: map_unary([](double x) { return ad::sigmoid(x); }); return;
    case OpKind::Exp: map_unary([](double x) { return std::exp(x); }); return;
    case OpKind::Square: map_unary([](double x) { return x * x; }); return;
    case OpKind::Dropout: {
      const Tensor& a = in(0);
      n.value.reshape_to(a.shape());
      n.cache.reshape_to(a.shape());
      if (!training_ || n.c == 0.0) {
        n.cache.fill(1.0);
      } else {
        std::bernoulli_distribution keep(1.0 - n.c);
        const double s = 1.0 / (1.0 - n.c);
        for (auto& m : n.cache.values()) m = keep(rng_) ? s : 0.0;
      }
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * n.cache[i];
      return;
    }
    case OpKind::BatchNorm: {
      const Tensor& x = in(0);
      BatchNormState& s = *n.bn;
      if (x.rank() != 2 || x.dim(1) != s.width())
        fail(id, "input " + shape_str(x.shape()) + " for batchnorm of width " + std::to_string(s.width()));
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      n.value.reshape_to(x.shape());
      n.cache.reshape_to(x.shape());  // normalized input
      n.aux.assign(cols, 0.0);        // 1/sqrt(var + eps)
      std::vector<double> mu(cols, 0.0), var(cols, 0.0);
      if (training_) {
        if (rows < 2) fail(id, "training-mode batchnorm needs at least 2 rows");
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) mu[c] += x[r * cols + c];
        for (auto& m : mu) m /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            double d = x[r * cols + c] - mu[c];
            var[c] += d * d;
          }
        for (std::size_t c = 0; c < cols; ++c) {
          double biased = var[c] / static_cast<double>(rows);
          double unbiased = var[c] / static_cast<double>(rows - 1);
          s.running_mean[c] = (1.0 - s.momentum) * s.running_mean[c] + s.momentum * mu[c];
          s.running_var[c] = (1.0 - s.momentum) * s.running_var[c] + s.momentum * unbiased;
          var[c] = biased;
        }
      } else {
        mu = s.running_mean;
        var = s.running_var;
      }
      const Tensor& gamma = in(1);
      const Tensor& beta = in(2);
      for (std::size_t c = 0; c < cols; ++c) n.aux[c] = 1.0 / std::sqrt(var[c] + s.eps);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          double xh = (x[r * cols + c] - mu[c]) * n.aux[c];
          n.cache[r * cols + c] = xh;
          n.value[r * cols + c] = xh * gamma[c] + beta[c];
        }
      n.c = training_ ? 1.0 : 0.0;  // mode used for this evaluation
      return;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double v : a.values()) s += v;
      if (n.kind == OpKind::Mean) {
        if (a.size() == 0) fail(id, "mean of empty tensor");
        s /= static_cast<double>(a.size());
      }
      n.value = Tensor::scalar(s);
      return;
    }
    case OpKind::Hinge: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      if (p.size() != t.size() || p.size() == 0)
        fail(id, "prediction " + shape_str(p.shape()) + " vs target " + shape_str(t.shape()));
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += std::max(0.0, 1.0 - t[i] * p[i]);
      n.value = Tensor::scalar(s / static_cast<double>(p.size()));
      return;
    }
    case OpKind::Mse:
    case OpKind::RowSse: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      same_shape(a, b);
      if (a.size() == 0) fail(id, "empty input");
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
      }
      double denom = n.kind == OpKind::Mse ? static_cast<double>(a.size()) : static_cast<double>(a.rows());
      n.value = Tensor::scalar(s / denom);
      return;
    }
    case OpKind::WeightedSum: {
      const Tensor& a = in(0);
      if (a.size() != n.weights.size())
        fail(id, std::to_string(n.weights.size()) + " weights for " + shape_str(a.shape()));
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * n.weights[i];
      n.value = Tensor::scalar(s);
      return;
    }
    case OpKind::Custom: {
      std::vector<const Tensor*> args;
      for (NodeId p : n.in) args.push_back(&val(p));
      n.value = n.op->forward(args);
      return;
    }
  }
}

void Graph::backward() {
  if (!forwarded_) throw Error("backward() called before forward()");
  const NodeId root = output();
  if (val(root).size() != 1) fail(root, "backward needs a scalar root, got " + shape_str(val(root).shape()));
  for (NodeId id = 0; id <= root; ++id) {
    Node& n = nodes_[id];
    n.grad.reshape_to(val(id).shape());
    n.grad.fill(0.0);
  }
  nodes_[root].grad[0] = 1.0;
  for (NodeId id = root + 1; id-- > 0;) {
    if (nodes_[id].requires_grad) propagate(id);
  }
  for (NodeId id = 0; id <= root; ++id) {
    Node& n = nodes_[id];
    if (n.param && n.param->trainable) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor(n.param->value.shape());
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    }
  }
}

void Graph::propagate(NodeId id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto in = [&](std::size_t i) -> const Tensor& { return val(n.in[i]); };
  auto wants = [&](std::size_t i) { return nodes_[n.in[i]].requires_grad; };
  auto pg = [&](std::size_t i) -> Tensor& { return nodes_[n.in[i]].grad; };
  auto chain_unary = [&](auto dfdx) {
    if (!wants(0)) return;
    const Tensor& a = in(0);
    Tensor& ga = pg(0);
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i] * dfdx(a[i], n.value[i]);
  };

  switch (n.kind) {
    case OpKind::Placeholder:
    case OpKind::Parameter:
    case OpKind::Constant:
      return;
    case OpKind::MatMul: {
      if (wants(0)) as_mat(pg(0)).noalias() += as_mat(g) * as_mat(in(1)).transpose();
      if (wants(1)) as_mat(pg(1)).noalias() += as_mat(in(0)).transpose() * as_mat(g);
      return;
    }
    case OpKind::AddBias: {
      const std::size_t cols = g.cols();
      if (wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) pg(0)[i] += g[i];
      if (wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) pg(1)[i % cols] += g[i];
      return;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sb = n.kind == OpKind::Add ? 1.0 : -1.0;
      if (wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) pg(0)[i] += g[i];
      if (wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) pg(1)[i] += sb * g[i];
      return;
    }
    case OpKind::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (wants(0))
        for (std::size_t i = 0; i < g.size(); ++i) pg(0)[i] += g[i] * b[i];
      if (wants(1))
        for (std::size_t i = 0; i < g.size(); ++i) pg(1)[i] += g[i] * a[i];
      return;
    }
    case OpKind::Scale: chain_unary([&](double, double) { return n.c; }); return;
    case OpKind::Shift: chain_unary([](double, double) { return 1.0; }); return;
    case OpKind::Mish: chain_unary([](double x, double) { return mish_grad(x); }); return;
    case OpKind::Sigmoid: chain_unary([](double, double y) { return y * (1.0 - y); }); return;
    case OpKind::Exp: chain_unary([](double, double y) { return y; }); return;
    case OpKind::Square: chain_unary([](double x, double) { return 2.0 * x; }); return;
    case OpKind::Dropout: {
      if (!wants(0)) return;
      for (std::size_t i = 0; i < g.size(); ++i) pg(0)[i] += g[i] * n.cache[i];
      return;
    }
    case OpKind::BatchNorm: {
      const Tensor& gamma = in(1);
      const std::size_t rows = g.rows(), cols = g.cols();
      if (wants(1) || wants(2)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            if (wants(1)) pg(1)[c] += g[r * cols + c] * n.cache[r * cols + c];
            if (wants(2)) pg(2)[c] += g[r * cols + c];
          }
      }
      if (!wants(0)) return;
      Tensor& gx = pg(0);
      if (n.c == 0.0) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * gamma[c] * n.aux[c];
        return;
      }
      const double m = static_cast<double>(rows);
      for (std::size_t c = 0; c < cols; ++c) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          double d = g[r * cols + c] * gamma[c];
          sum_d += d;
          sum_dx += d * n.cache[r * cols + c];
        }
        for (std::size_t r = 0; r < rows; ++r) {
          double d = g[r * cols + c] * gamma[c];
          gx[r * cols + c] += n.aux[c] / m * (m * d - sum_d - n.cache[r * cols + c] * sum_dx);
        }
      }
      return;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      if (!wants(0)) return;
      double s = g[0];
      if (n.kind == OpKind::Mean) s /= static_cast<double>(in(0).size());
      for (auto& v : pg(0).values()) v += s;
      return;
    }
    case OpKind::Hinge: {
      const Tensor& p = in(0);
      const Tensor& t = in(1);
      const double s = g[0] / static_cast<double>(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        // the boundary t*p == 1 takes the active-side subgradient
        if (t[i] * p[i] > 1.0) continue;
        if (wants(0)) pg(0)[i] += -t[i] * s;
        if (wants(1)) pg(1)[i] += -p[i] * s;
      }
      return;
    }
    case OpKind::Mse:
    case OpKind::RowSse: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      double denom = n.kind == OpKind::Mse ? static_cast<double>(a.size()) : static_cast<double>(a.rows());
      const double s = 2.0 * g[0] / denom;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (wants(0)) pg(0)[i] += s * d;
        if (wants(1)) pg(1)[i] -= s * d;
      }
      return;
    }
    case OpKind::WeightedSum: {
      if (!wants(0)) return;
      for (std::size_t i = 0; i < n.weights.size(); ++i) pg(0)[i] += g[0] * n.weights[i];
      return;
    }
    case OpKind::Custom: {
      std::vector<const Tensor*> args;
      for (NodeId p : n.in) args.push_back(&val(p));
      auto grads = n.op->backward(args, n.value, g);
      if (grads.size() != n.in.size()) fail(id, "backward returned wrong number of gradients");
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        if (!wants(i)) continue;
        if (grads[i].size() != pg(i).size()) fail(id, "backward gradient has wrong shape");
        for (std::size_t k = 0; k < grads[i].size(); ++k) pg(i)[k] += grads[i][k];
      }
      return;
    }
  }
}

double grad_check_here(Graph& graph, NodeId leaf, double h) {
  graph.rerun();
  graph.backward();
  const Tensor analytic = graph.grad(leaf);
  Tensor& x = graph.placeholder_value(leaf);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = graph.rerun().item();
    x[i] = orig - h;
    const double fm = graph.rerun().item();
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  graph.rerun();
  return worst;
}

double grad_check(Graph& graph, NodeId leaf, double h, Rng& rng, int points) {
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    Tensor& x = graph.placeholder_value(leaf);
    for (auto& v : x.values()) v = normal(rng);
    worst = std::max(worst, grad_check_here(graph, leaf, h));
  }
  return worst;
}

}  // namespace rashomon::ad
