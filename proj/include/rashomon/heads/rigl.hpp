#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rashomon/autodiff/tensor.hpp"
#include "rashomon/heads/model.hpp"

namespace rashomon::heads {

struct RigLConfig {
  double sparsity = 0.951;
  int delta_t = 115;
  double alpha = 0.758;
  double t_end_fraction = 0.75;  // of post-warm-up iterations
  int warmup_epochs = 20;
};

inline RigLConfig reference_rigl_preset() { return {0.951, 115, 0.758, 0.75, 20}; }

/// Per-layer sparsities s^l = 1 - c (n_l + n_{l+1}) / (n_l n_{l+1}), with c
/// chosen so that sum_l s^l N^l = S N. Layers that would go negative are held
/// dense and c is re-solved over the rest.
std::vector<double> erdos_renyi_allocation(std::span<const std::size_t> widths, double sparsity);

/// round((1 - s^l) N^l) per layer.
std::vector<std::size_t> target_active_counts(std::span<const std::size_t> widths, std::span<const double> s);

/// (alpha / 2)(1 + cos(t pi / T_end)); 0 for t > T_end.
double cosine_decay(double t, double alpha, double t_end);

struct UpdateResult {
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> grown;
  std::vector<std::size_t> changed() const;
};

/// One prune/grow cycle on a layer. Keeps the (target - k) largest |w| among
/// active weights, then activates the largest |grad| among the rest until
/// `target` connections are active. Grown and dropped weights are set to 0.
/// Ties go to the lowest flat index.
UpdateResult rigl_update(ad::Tensor& weights, const ad::Tensor& grads, ad::Tensor& mask, std::size_t target,
                         std::size_t k);

struct PruneStats {
  std::size_t leaf_removed = 0;
  std::size_t bias_removed = 0;
  int rounds = 0;
};

/// Removes connections into neurons with no active outgoing connections and
/// connections out of neurons with no active incoming connections, folding
/// w * mish(bias) into the target bias, until nothing changes.
PruneStats post_prune(HeadModel& model);

}  // namespace rashomon::heads
