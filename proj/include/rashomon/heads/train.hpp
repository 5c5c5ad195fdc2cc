#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rashomon/heads/model.hpp"
#include "rashomon/heads/rigl.hpp"

namespace rashomon::heads {

/// Feature rows with labels in {-1, +1}.
struct Samples {
  std::vector<std::vector<double>> x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
};

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;  // decoupled, on every trainable parameter
  // Random dihedral transforms of square image inputs (Scheme 1 only).
  bool augment_images = false;
  RigLConfig rigl;
};

struct LogRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t active_weights = 0;
};

/// Called after every optimizer iteration with the global iteration index.
using StepObserver = std::function<void(long iteration, const HeadModel&)>;

struct TrainedHead {
  HeadModel model;
  std::vector<LogRow> log;
  std::vector<double> layer_sparsity;  // scheme 3
  std::vector<std::size_t> targets;    // scheme 3: active counts per layer
  PruneStats prune;                    // scheme 3
  long iterations = 0;
  long warmup_iterations = 0;
  long t_end = 0;
};

double accuracy(const HeadModel& model, const Samples& data);
double hinge_loss(const HeadModel& model, const Samples& data);

/// Schemes 1 and 2 train densely; scheme 3 runs the warm-up + RigL schedule
/// and post-prunes. `val` is only used for logging.
TrainedHead train_head(int scheme, const HeadConfig& cfg, const Samples& train, const Samples& val,
                       const TrainConfig& tc, std::uint64_t seed, const StepObserver& observer = {});

std::string log_csv(const std::vector<LogRow>& log);

struct SearchRanges {
  double sparsity_lo = 0.95, sparsity_hi = 0.97;
  int delta_t_lo = 100, delta_t_hi = 200;
  double alpha_lo = 0.7, alpha_hi = 0.9;
};

struct TrialOutcome {
  double val_accuracy = 0.0;
  double final_sparsity = 0.0;
};

struct TrialRecord {
  int trial = 0;
  RigLConfig config;
  double mean_accuracy = 0.0;
  double mean_sparsity = 0.0;
  double objective = 0.0;
};

struct SearchResult {
  RigLConfig best;
  std::vector<TrialRecord> trials;
};

using TrialFn = std::function<TrialOutcome(const RigLConfig&, std::uint64_t seed)>;

/// Uniform random search maximizing mean accuracy + mean final sparsity. Run r
/// of trial i uses seed derive_seed(seed, {i, r}). Trials may run on `jobs`
/// threads; the result does not depend on jobs.
SearchResult hparam_search(const TrialFn& fn, const SearchRanges& ranges, const RigLConfig& base, int trials,
                           int runs_per_trial, std::uint64_t seed, int jobs = 1);

std::string trial_log_csv(const SearchResult& result);

}  // namespace rashomon::heads
