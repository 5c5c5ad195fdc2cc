#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rashomon/heads/model.hpp"
#include "rashomon/symreg/tree.hpp"
#include "rashomon/tcvae/tcvae.hpp"

namespace rashomon::adv {

enum class Space { Image, Latent };
Space parse_space(std::string_view s);
std::string_view space_name(Space s);

struct AttackConfig {
  double epsilon = 0.0;
  Space space = Space::Latent;
  std::optional<std::vector<std::size_t>> allowed_dims;
  std::optional<std::pair<double, double>> clip;

  void validate() const;
};

/// x + epsilon * sign(grad), sign(0) = 0, optionally clipped.
std::vector<double> fgsm_perturb(std::span<const double> x, std::span<const double> grad, double epsilon,
                                 std::optional<std::pair<double, double>> clip = std::nullopt);

/// Deterministic classifier: encoder mu path (optional) followed by a neural
/// head or a symbolic expression over the latent code. Scheme 1 has no encoder
/// and its head reads pixels directly.
class Pipeline {
 public:
  static Pipeline image_head(heads::HeadModel head);
  static Pipeline latent_head(vae::VaeModel encoder, heads::HeadModel head);
  static Pipeline latent_tree(vae::VaeModel encoder, symreg::Tree tree);

  bool has_encoder() const { return encoder_.has_value(); }
  bool supports(Space s) const { return s == Space::Image || has_encoder(); }
  std::size_t input_dim(Space s) const;
  const vae::VaeModel* encoder() const { return encoder_ ? &*encoder_ : nullptr; }

  /// Latent means (deterministic encoder). Requires an encoder.
  std::vector<double> encode(std::span<const double> pixels) const;
  /// Head score for an input living in `s`.
  double score(std::span<const double> input, Space s) const;
  /// d f / d input for each row, in `s`.
  std::vector<std::vector<double>> score_gradients(const std::vector<std::vector<double>>& inputs, Space s);

 private:
  Pipeline() = default;
  double head_score(std::span<const double> z) const;

  std::optional<vae::VaeModel> encoder_;
  std::optional<heads::HeadModel> head_;
  std::optional<symreg::Tree> tree_;
};

struct AttackResult {
  std::vector<double> original;
  std::vector<double> perturbed;
  double clean_score = 0.0;
  double score = 0.0;
  bool flipped = false;
};

/// Untargeted FGSM on the margin loss -y f(x) with y the currently predicted
/// label. Gradient entries outside allowed_dims are zeroed before the sign step.
std::vector<AttackResult> attack(Pipeline& p, const std::vector<std::vector<double>>& inputs, const AttackConfig& cfg);

struct CurveRow {
  double epsilon = 0.0;
  double accuracy = 0.0;
  std::size_t n_flipped = 0;
};

struct AttackReport {
  std::vector<CurveRow> rows;
  double clean_accuracy = 0.0;
};

/// Accuracy against `labels` (+1/-1) after attacking every input at each epsilon.
AttackReport attack_curve(Pipeline& p, const std::vector<std::vector<double>>& inputs, std::span<const double> labels,
                          std::span<const double> epsilons, const AttackConfig& base);

/// `epsilon,scheme,accuracy,n_flipped`
std::string curve_csv(const std::vector<std::pair<std::string, AttackReport>>& curves);

struct BlankProbe {
  std::vector<double> latent;
  double score = 0.0;
  synth::Label label = synth::Label::Interphase;
};

BlankProbe blank_probe(const Pipeline& p, std::size_t pixels);

/// Writes <stem>_orig.pgm, <stem>_adv.pgm and <stem>_diff.pgm; the difference is
/// mapped from [-m, m] to [0, 1] with m its largest magnitude.
void write_triplet(const std::filesystem::path& dir, const std::string& stem, const AttackResult& r,
                   std::size_t height, std::size_t width);

}  // namespace rashomon::adv
