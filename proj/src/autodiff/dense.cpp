#include "rashomon/autodiff/dense.hpp"

#include "rashomon/common/error.hpp"

namespace rashomon::ad {

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".w", glorot_uniform(in, out, rng)), bias(name + ".b", Tensor({out}, 0.0)) {}

NodeId DenseLayer::apply(Graph& g, NodeId x) {
  return g.add_bias(g.matmul(x, g.parameter(weight), weight.name), g.parameter(bias));
}

std::vector<double> DenseLayer::forward(std::span<const double> x) const {
  if (x.size() != in())
    throw ShapeError("dense layer '" + weight.name + "' expects " + std::to_string(in()) + " inputs, got " +
                     std::to_string(x.size()));
  const std::size_t n_out = out();
  std::vector<double> y(n_out, 0.0);
  const auto& w = weight.value.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < n_out; ++j) {
      const std::size_t k = i * n_out + j;
      if (!weight.active(k)) continue;
      y[j] += xi * w[k];
    }
  }
  for (std::size_t j = 0; j < n_out; ++j) y[j] += bias.value[j];
  return y;
}

}  // namespace rashomon::ad
