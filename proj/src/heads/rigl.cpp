#include "rashomon/heads/rigl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rashomon/common/error.hpp"

namespace rashomon::heads {

std::vector<double> erdos_renyi_allocation(std::span<const std::size_t> widths, double sparsity) {
  if (widths.size() < 2) throw ConfigError("Erdos-Renyi allocation needs at least 2 widths");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must be in [0, 1)");
  const std::size_t layers = widths.size() - 1;
  std::vector<double> n_l(layers), ratio(layers);
  double total = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const double a = static_cast<double>(widths[l]), b = static_cast<double>(widths[l + 1]);
    n_l[l] = a * b;
    ratio[l] = (a + b) / (a * b);
    total += n_l[l];
  }
  std::vector<bool> dense(layers, false);
  std::vector<double> s(layers, 0.0);
  for (;;) {
    // Dense layers contribute nothing to sum s^l N^l; the rest share c.
    double active_budget = (1.0 - sparsity) * total, weighted = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
      if (dense[l])
        active_budget -= n_l[l];
      else
        weighted += ratio[l] * n_l[l];
    }
    if (weighted == 0.0) {
      if (std::abs(active_budget) > 1e-9 * total) throw ConfigError("sparsity target is infeasible");
      return s;
    }
    const double c = active_budget / weighted;
    bool changed = false;
    for (std::size_t l = 0; l < layers; ++l) {
      if (dense[l]) continue;
      s[l] = 1.0 - c * ratio[l];
      if (s[l] < 0.0) {
        dense[l] = true;
        s[l] = 0.0;
        changed = true;
      }
    }
    if (!changed) {
      if (c < 0.0) throw ConfigError("sparsity target is infeasible");
      return s;
    }
  }
}

std::vector<std::size_t> target_active_counts(std::span<const std::size_t> widths, std::span<const double> s) {
  if (s.size() + 1 != widths.size()) throw ShapeError("one sparsity per layer expected");
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < s.size(); ++l)
    out.push_back(static_cast<std::size_t>(std::llround((1.0 - s[l]) * static_cast<double>(widths[l] * widths[l + 1]))));
  return out;
}

double cosine_decay(double t, double alpha, double t_end) {
  if (t < 0.0) throw Error("cosine_decay: t must be nonnegative");
  if (t > t_end) return 0.0;
  return 0.5 * alpha * (1.0 + std::cos(t * std::numbers::pi / t_end));
}

std::vector<std::size_t> UpdateResult::changed() const {
  std::vector<std::size_t> out = dropped;
  out.insert(out.end(), grown.begin(), grown.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

// Indices sorted by descending key, ascending index on ties.
std::vector<std::size_t> ranked(std::vector<std::size_t> idx, const std::vector<double>& key) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  return idx;
}

}  // namespace

UpdateResult rigl_update(ad::Tensor& weights, const ad::Tensor& grads, ad::Tensor& mask, std::size_t target,
                         std::size_t k) {
  if (weights.shape() != grads.shape() || weights.shape() != mask.shape())
    throw ShapeError("rigl_update: weights, grads and mask must share a shape");
  const std::size_t n = weights.size();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != 0.0) active.push_back(i);
  if (target > n) throw Error("rigl_update: target exceeds layer size");
  const std::size_t n_keep = std::min(active.size(), target - std::min(k, target));
  UpdateResult res;
  if (n_keep == active.size() && n_keep == target) return res;

  std::vector<double> mag(n), gmag(n);
  for (std::size_t i = 0; i < n; ++i) {
    mag[i] = std::abs(weights[i]);
    gmag[i] = std::abs(grads[i]);
  }
  auto by_mag = ranked(active, mag);
  std::vector<bool> keep(n, false);
  for (std::size_t r = 0; r < n_keep; ++r) keep[by_mag[r]] = true;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i)
    if (!keep[i]) candidates.push_back(i);
  auto by_grad = ranked(candidates, gmag);
  std::vector<bool> grow(n, false);
  for (std::size_t r = 0; r < std::min(target - n_keep, by_grad.size()); ++r) grow[by_grad[r]] = true;

  for (std::size_t i = 0; i < n; ++i) {
    const bool was = mask[i] != 0.0;
    if (keep[i]) continue;
    if (grow[i]) {
      res.grown.push_back(i);
      if (was) res.dropped.push_back(i);
      mask[i] = 1.0;
      weights[i] = 0.0;
    } else {
      if (was) res.dropped.push_back(i);
      mask[i] = 0.0;
      weights[i] = 0.0;
    }
  }
  return res;
}

PruneStats post_prune(HeadModel& model) {
  if (!model.batchnorms().empty()) throw Error("post_prune: batch-norm models cannot be pruned");
  if (!model.feature_layers().empty()) throw Error("post_prune: model has a feature stack");
  auto& layers = model.head_layers();
  if (!model.masked()) model.enable_masks();
  PruneStats st;

  // Neurons of boundary b (1..L-1) are the outputs of layers[b-1] and inputs of layers[b].
  auto has_out = [&](std::size_t b, std::size_t j) {
    const auto& w = layers[b].weight;
    const std::size_t cols = w.value.dim(1);
    for (std::size_t m = 0; m < cols; ++m)
      if (w.active(j * cols + m)) return true;
    return false;
  };
  auto has_in = [&](std::size_t b, std::size_t j) {
    const auto& w = layers[b - 1].weight;
    const std::size_t cols = w.value.dim(1);
    for (std::size_t i = 0; i < w.value.dim(0); ++i)
      if (w.active(i * cols + j)) return true;
    return false;
  };
  auto deactivate = [](ad::Parameter& w, std::size_t idx) {
    (*w.mask)[idx] = 0.0;
    w.value[idx] = 0.0;
  };

  for (bool changed = true; changed;) {
    changed = false;
    ++st.rounds;
    // Leaf rule, output side first so removals cascade toward the inputs.
    for (std::size_t b = layers.size() - 1; b >= 1; --b) {
      auto& w_in = layers[b - 1].weight;
      const std::size_t cols = w_in.value.dim(1);
      for (std::size_t j = 0; j < cols; ++j) {
        if (has_out(b, j)) continue;
        for (std::size_t i = 0; i < w_in.value.dim(0); ++i) {
          if (!w_in.active(i * cols + j)) continue;
          deactivate(w_in, i * cols + j);
          ++st.leaf_removed;
          changed = true;
        }
      }
    }
    // Bias rule, input side first.
    for (std::size_t b = 1; b < layers.size(); ++b) {
      const auto& src_bias = layers[b - 1].bias.value;
      auto& w_out = layers[b].weight;
      auto& dst_bias = layers[b].bias.value;
      const std::size_t cols = w_out.value.dim(1);
      for (std::size_t j = 0; j < w_out.value.dim(0); ++j) {
        if (has_in(b, j)) continue;
        const double constant = ad::mish(src_bias[j]);
        for (std::size_t m = 0; m < cols; ++m) {
          if (!w_out.active(j * cols + m)) continue;
          dst_bias[m] += w_out.value.at(j, m) * constant;
          deactivate(w_out, j * cols + m);
          ++st.bias_removed;
          changed = true;
        }
      }
    }
  }
  return st;
}

}  // namespace rashomon::heads
