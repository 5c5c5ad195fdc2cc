#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rashomon/heads/train.hpp"
#include "rashomon/symreg/gp.hpp"
#include "rashomon/synthcells/synthcells.hpp"
#include "rashomon/tcvae/tcvae.hpp"

namespace rashomon::bench {

struct DataParams {
  std::size_t n_samples = 8000;
  synth::SynthConfig synth = [] {
    synth::SynthConfig s;
    s.angle_range = 0.0;
    s.ecc_threshold = 1.0;
    s.ecc_half_range = 1.0;
    s.max_offset = 0.5;
    return s;
  }();
};

struct HeadParams {
  int seeds = 10;
  int epochs = 100;
  int scheme1_epochs = 40;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double sparse_weight_decay = 1.0;
  double val_fraction = 0.1;
};

struct SearchParams {
  heads::SearchRanges ranges;
  int warmup_epochs = 20;
  int trials = 8;
  int runs_per_trial = 1;
};

struct SymregParams {
  int seeds = 10;
  std::size_t train_rows = 2000;
  symreg::GpConfig gp;
};

struct AttackParams {
  std::vector<double> latent_epsilons = {0.0, 0.1, 0.25, 0.5, 1.0, 2.0};
  std::vector<double> image_epsilons = {0.0, 0.01, 0.02, 0.05, 0.1};
  std::size_t triplets = 4;
};

/// Every knob of a pipeline run. Parsed from a TOML-style file: `[section]`
/// headers, `key = value` lines, `#` comments; values are numbers, booleans,
/// quoted strings or `[a, b, ...]` number lists. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int jobs = 1;
  DataParams data;
  vae::VaeConfig vae;
  HeadParams heads;
  SearchParams search;
  SymregParams symreg;
  AttackParams attack;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  /// Canonical, fully commented rendering; parse(to_text()) round-trips.
  std::string to_text() const;
  /// Hash of the canonical text with `jobs` normalised (it never affects results).
  std::string sha256() const;
  void validate() const;
};

}  // namespace rashomon::bench
