#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rashomon/advattack/attack.hpp"
#include "rashomon/bench/config.hpp"
#include "rashomon/heads/train.hpp"
#include "rashomon/symreg/gp.hpp"

namespace rashomon::bench {

enum class Stage { GenData, TrainVae, TrainHead, Symreg, Attack, Analyze, Report };

Stage parse_stage(std::string_view s);
std::string_view stage_name(Stage s);

struct StageOptions {
  int scheme = 0;  // train-head
  symreg::LossMode mode = symreg::LossMode::Hinge;
  adv::Space space = adv::Space::Latent;
  // Comma-separated latent dims, or "unselected" for every dim outside the
  // Scheme-3 selection.
  std::optional<std::string> restrict_dims;
};

/// Manifest id of a stage invocation, e.g. "train-head-3" or "attack-latent-restricted".
std::string manifest_id(Stage s, const StageOptions& opt);

/// Runs one stage into `out`, checking its dependencies first. Progress lines
/// go to `log` when given.
void run_stage(Stage s, const RunConfig& cfg, const std::filesystem::path& out, const StageOptions& opt = {},
               std::ostream* log = nullptr);

/// Every stage needed for the report, in dependency order.
void run_all(const RunConfig& cfg, const std::filesystem::path& out, std::ostream* log = nullptr);

struct Splits {
  heads::Samples train;
  heads::Samples val;
  heads::Samples test;
  std::vector<std::size_t> train_ids, val_ids, test_ids;
};

struct Scheme3Selection {
  std::vector<std::size_t> dims;
  int model_seed = 0;
};

struct Scheme4Choice {
  int seed = 0;
  symreg::Tree tree;
  std::string expression;
  int complexity = 0;
  std::size_t expression_size = 0;
  double loss = 0.0;
  double test_accuracy = 0.0;
};

/// Read access to the artifacts of a run directory.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }

  synth::Dataset dataset() const;
  vae::VaeModel vae() const;
  /// Latent-mean rows split into train / validation / test.
  Splits latent_splits(const RunConfig& cfg) const;
  /// Same partition over raw pixels.
  Splits image_splits(const RunConfig& cfg) const;
  std::vector<heads::HeadModel> heads(int scheme) const;
  Scheme3Selection selection() const;
  std::vector<Scheme4Choice> expressions(symreg::LossMode mode) const;
  /// Seed with the smallest loss + parsimony * complexity.
  Scheme4Choice best_expression(symreg::LossMode mode, const RunConfig& cfg) const;

 private:
  std::filesystem::path root_;
};

}  // namespace rashomon::bench
