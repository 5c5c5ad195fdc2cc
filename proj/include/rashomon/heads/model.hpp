#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rashomon/autodiff/dense.hpp"
#include "rashomon/common/io.hpp"
#include "rashomon/synthcells/synthcells.hpp"

namespace rashomon::heads {

struct HeadConfig {
  std::vector<std::size_t> widths = {8, 16, 16, 16, 1};
  double dropout = 0.0;
  bool batchnorm = false;
  // Optional dense Mish feature stack in front of the head, e.g. {256, 64, 32};
  // its last width must equal widths.front().
  std::vector<std::size_t> feature_widths;
};

HeadConfig scheme_config(int scheme, std::size_t input_dim);

/// Mish MLP with a scalar output. Hidden head layers are
/// dense -> [batch-norm] -> Mish -> [dropout]; the output layer is affine.
class HeadModel {
 public:
  HeadModel(const HeadConfig& cfg, std::uint64_t seed);

  const HeadConfig& config() const { return cfg_; }
  std::size_t input_dim() const;

  ad::NodeId build(ad::Graph& g, ad::NodeId x);
  /// Inference-mode f(x). Masked connections are skipped.
  double score(std::span<const double> x) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<ad::DenseLayer>& head_layers() { return head_; }
  const std::vector<ad::DenseLayer>& head_layers() const { return head_; }
  std::vector<ad::DenseLayer>& feature_layers() { return features_; }
  const std::vector<ad::BatchNormState>& batchnorms() const { return bn_; }

  /// Installs all-ones masks on every head weight matrix.
  void enable_masks();
  bool masked() const;
  /// Active head connection weights (biases excluded).
  std::size_t active_head_weights() const;
  std::size_t total_head_weights() const;
  /// Inputs with at least one active outgoing head connection.
  std::vector<std::size_t> input_support() const;

  io::Checkpoint to_checkpoint() const;
  static HeadModel from_checkpoint(const io::Checkpoint& ckpt);
  /// `{"layers":[{"shape":[m,n],"active":[[i,j],...]}]}`
  std::string mask_json() const;

 private:
  HeadConfig cfg_;
  std::vector<ad::DenseLayer> features_;
  std::vector<ad::DenseLayer> head_;
  std::vector<ad::BatchNormState> bn_;
};

inline constexpr std::uint32_t kHeadCheckpointKind = 2;

/// f < 0 -> interphase, f >= 0 -> metaphase.
synth::Label classify(double f);

}  // namespace rashomon::heads
