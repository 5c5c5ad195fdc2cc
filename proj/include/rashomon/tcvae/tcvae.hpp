#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "rashomon/autodiff/dense.hpp"
#include "rashomon/common/io.hpp"
#include "rashomon/synthcells/synthcells.hpp"

namespace rashomon::vae {

struct VaeConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> hidden = {64, 32};
  double alpha = 1.0;  // index-code mutual information
  double beta = 6.0;   // total correlation
  double gamma = 1.0;  // dimension-wise KL
  double recon_weight = 50.0;  // 1/(2 sigma^2) of a fixed-variance Gaussian decoder
  int epochs = 30;
  std::size_t batch_size = 64;
  double lr = 2e-3;
  bool augment = true;
};

/// Dense encoder (Mish hidden layers, separate mu and log-variance heads) and
/// mirrored decoder ending in a sigmoid.
class VaeModel {
 public:
  VaeModel(std::size_t input_dim, const VaeConfig& cfg, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t latent_dim() const { return mu_head_.out(); }
  std::vector<std::uint32_t> widths() const;

  struct EncoderNodes {
    ad::NodeId mu;
    ad::NodeId logvar;
  };
  EncoderNodes build_encoder(ad::Graph& g, ad::NodeId x);
  /// Mu path only (deterministic encoder), used by attacks.
  ad::NodeId build_encoder_mu(ad::Graph& g, ad::NodeId x);
  ad::NodeId build_decoder(ad::Graph& g, ad::NodeId z);

  void encode_moments(std::span<const double> pixels, std::vector<double>& mu, std::vector<double>& logvar) const;
  std::vector<double> decode(std::span<const double> z) const;

  std::vector<ad::Parameter*> parameters();

  io::Checkpoint to_checkpoint() const;
  static VaeModel from_checkpoint(const io::Checkpoint& ckpt);

 private:
  VaeModel() = default;

  std::size_t input_dim_ = 0;
  std::vector<ad::DenseLayer> encoder_;
  ad::DenseLayer mu_head_;
  ad::DenseLayer logvar_head_;
  std::vector<ad::DenseLayer> decoder_;
};

inline constexpr std::uint32_t kVaeCheckpointKind = 1;

/// Posterior moments plus one sample z = mu + exp(logvar/2) * noise.
struct LatentCode {
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> z;
};

/// Deterministic mode (rng == nullptr) returns z = mu.
LatentCode encode(const VaeModel& model, std::span<const double> pixels, Rng* rng = nullptr);
/// Image-shaped output in [0,1].
std::vector<double> decode(const VaeModel& model, std::span<const double> z);

/// Minibatch estimates of the KL decomposition. With B samples,
///   log q(z_i)          ~ logsumexp_j log q(z_i | x_j) - log B
///   log prod q(z_ik)    ~ sum_k [logsumexp_j log q(z_ik | x_j) - log B]
///   index_code_mi = mean_i [log q(z_i|x_i) - log q(z_i)]
///   total_corr    = mean_i [log q(z_i) - log prod q(z_ik)]
///   dimwise_kl    = mean_i [log prod q(z_ik) - log p(z_i)]
/// The three terms telescope to mean_i [log q(z_i|x_i) - log p(z_i)].
struct Decomposition {
  double index_code_mi = 0.0;
  double total_corr = 0.0;
  double dimwise_kl = 0.0;
};

/// z, mu, logvar are [B, L] with B >= 2.
Decomposition decompose_kl(const ad::Tensor& z, const ad::Tensor& mu, const ad::Tensor& logvar);
/// Graph node producing [index_code_mi, total_corr, dimwise_kl] from (z, mu, logvar).
std::shared_ptr<const ad::CustomOp> decomposition_op();
/// Batch mean of the closed-form KL(N(mu, sigma^2) || N(0, I)).
double analytic_kl(const ad::Tensor& mu, const ad::Tensor& logvar);

struct TcvaeLossTerms {
  double recon = 0.0;  // per-image squared error, averaged over the batch
  double index_code_mi = 0.0;
  double total_corr = 0.0;
  double dimwise_kl = 0.0;
  double analytic_kl = 0.0;  // reference value, not part of the objective
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;

  double recon_weight = 1.0;

  double total() const { return recon_weight * recon + alpha * index_code_mi + beta * total_corr + gamma * dimwise_kl; }
};

/// Evaluates all terms on a batch. With rng == nullptr z = mu.
TcvaeLossTerms loss_terms(VaeModel& model, std::span<const std::vector<double>> batch, const VaeConfig& cfg,
                          Rng* rng = nullptr);

struct EpochStats {
  int epoch = 0;  // 0 = before training
  double train_loss = 0.0;
  double train_recon = 0.0;
  double val_recon = 0.0;
  double index_code_mi = 0.0;
  double total_corr = 0.0;
  double dimwise_kl = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
};

/// Adam on recon + alpha*MI + beta*TC + gamma*dimwise KL over the training
/// split, with dihedral augmentation. Validation recon is measured on the test
/// split in deterministic mode.
TrainResult train_vae(VaeModel& model, const synth::Dataset& data, const VaeConfig& cfg, std::uint64_t seed);

/// Decodes copies of z with z[dim] replaced by each value.
std::vector<std::vector<double>> traverse(const VaeModel& model, std::span<const double> z, std::size_t dim,
                                          std::span<const double> values);

/// Deterministic latent means for every sample, in dataset order.
std::vector<std::vector<double>> latent_means(const VaeModel& model, const synth::Dataset& data);

/// CSV `id,z0..z{L-1},label,split`.
std::string latent_table_csv(const synth::Dataset& data, const std::vector<std::vector<double>>& latents);

struct LatentTable {
  std::vector<std::size_t> ids;
  std::vector<std::vector<double>> z;
  std::vector<synth::Label> labels;
  std::vector<bool> test;
};
LatentTable parse_latent_table(const std::string& csv);

std::string history_csv(const TrainResult& result);

}  // namespace rashomon::vae
