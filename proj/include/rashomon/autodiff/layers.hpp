#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rashomon/autodiff/tensor.hpp"
#include "rashomon/common/rng.hpp"

namespace rashomon::ad {

/// Trainable array. Where `mask` is 0 the value is held at exactly 0 and the
/// gradient is discarded before every optimizer step.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  std::optional<Tensor> mask;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
  /// Zeroes value and grad wherever the mask is 0.
  void apply_mask();
  bool active(std::size_t i) const { return !mask || (*mask)[i] != 0.0; }
  std::size_t active_count() const;
};

/// Overflow-safe log(1 + e^x).
double softplus(double x);
/// x * tanh(softplus(x)).
double mish(double x);
double mish_grad(double x);
double sigmoid(double x);

/// Per-neuron batch normalization statistics and affine parameters.
struct BatchNormState {
  Parameter gamma;
  Parameter beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNormState() = default;
  BatchNormState(std::string name, std::size_t width, double eps = 1e-5);
  std::size_t width() const { return running_mean.size(); }
};

/// Frozen (inference-mode) normalization: (x - E[x]) / sqrt(Var[x] + eps) * gamma + beta.
std::vector<double> batchnorm_infer(std::span<const double> x, const BatchNormState& s);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW) shrinkage: value -= lr * weight_decay * value each step.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, AdamHyper hyper = {});

  /// One update from the currently accumulated grads. Masked entries end the
  /// step at exactly 0.
  void step();
  void zero_grad();
  /// Clears moment estimates at flat indices of params()[p] (used when a
  /// connection is regrown or dropped).
  void reset_state(std::size_t p, std::span<const std::size_t> indices);

  const std::vector<Parameter*>& params() const { return params_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_;
  AdamHyper hyper_;
  long t_ = 0;
};

/// Glorot-uniform fill for a fan_in x fan_out weight matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace rashomon::ad
