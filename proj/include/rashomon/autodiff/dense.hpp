#pragma once

#include <span>
#include <string>
#include <vector>

#include "rashomon/autodiff/graph.hpp"

namespace rashomon::ad {

/// Affine layer y = x W + b with W of shape [in, out].
struct DenseLayer {
  Parameter weight;
  Parameter bias;

  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in() const { return weight.value.dim(0); }
  std::size_t out() const { return weight.value.dim(1); }

  NodeId apply(Graph& g, NodeId x);
  /// Pre-activation for a single sample. Inactive (masked) connections are
  /// skipped rather than multiplied by zero.
  std::vector<double> forward(std::span<const double> x) const;
};

}  // namespace rashomon::ad
