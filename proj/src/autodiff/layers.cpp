#include "rashomon/autodiff/layers.hpp"

#include <cmath>

#include "rashomon/common/error.hpp"

namespace rashomon::ad {

void Parameter::apply_mask() {
  if (!mask) return;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if ((*mask)[i] == 0.0) {
      value[i] = 0.0;
      if (grad.size() == value.size()) grad[i] = 0.0;
    }
  }
}

std::size_t Parameter::active_count() const {
  if (!mask) return value.size();
  std::size_t n = 0;
  for (double m : mask->values()) n += m != 0.0;
  return n;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_grad(double x) {
  double sp = softplus(x);
  double th = std::tanh(sp);
  // d/dx softplus(x) = sigmoid(x)
  return th + x * (1.0 - th * th) * sigmoid(x);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

BatchNormState::BatchNormState(std::string name, std::size_t width, double eps_)
    : gamma(name + ".gamma", Tensor({width}, 1.0)),
      beta(name + ".beta", Tensor({width}, 0.0)),
      running_mean(width, 0.0),
      running_var(width, 1.0),
      eps(eps_) {}

std::vector<double> batchnorm_infer(std::span<const double> x, const BatchNormState& s) {
  if (x.size() != s.width())
    throw ShapeError("batchnorm_infer: " + std::to_string(x.size()) + " inputs for width " +
                     std::to_string(s.width()));
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = (x[i] - s.running_mean[i]) / std::sqrt(s.running_var[i] + s.eps) * s.gamma.value[i] + s.beta.value[i];
  return y;
}

Adam::Adam(std::vector<Parameter*> params, double lr, AdamHyper hyper)
    : params_(std::move(params)), lr_(lr), hyper_(hyper) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Parameter& param = *params_[p];
    if (!param.trainable) continue;
    param.apply_mask();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      if (!param.active(i)) continue;
      double g = param.grad[i];
      m[i] = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * g;
      v[i] = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      param.value[i] -= lr_ * (mhat / (std::sqrt(vhat) + hyper_.eps) + hyper_.weight_decay * param.value[i]);
    }
    param.apply_mask();
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::reset_state(std::size_t p, std::span<const std::size_t> indices) {
  for (auto i : indices) {
    m_.at(p).at(i) = 0.0;
    v_.at(p).at(i) = 0.0;
  }
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.values()) v = uniform(rng, -limit, limit);
  return w;
}

}  // namespace rashomon::ad
