#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rashomon/common/rng.hpp"
#include "rashomon/symreg/tree.hpp"

namespace rashomon::symreg {

enum class LossMode { Hinge, Mse };

LossMode parse_loss_mode(const std::string& s);
std::string loss_mode_name(LossMode m);

struct GpConfig {
  std::size_t population = 256;
  std::size_t tournament = 8;
  double tournament_p = 0.86;
  std::size_t islands = 8;
  int migration_interval = 5;
  int generations = 50;
  double mutation_rate = 0.9;  // otherwise the winner is copied unchanged
  bool crossover = false;
  double crossover_rate = 0.1;
  int init_max_depth = 3;
  ComplexityTable table;
  // Variable indices leaves may use; empty means every input column.
  std::vector<int> variables;
  int jobs = 1;
};

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
};

/// Mean loss of the tree's outputs; +inf if any output is non-finite.
double mean_loss(const Tree& t, const Dataset& d, LossMode mode);
/// Fraction of samples where the sign rule (f >= 0 -> +1) matches sign(y).
double sign_accuracy(const Tree& t, const Dataset& d);

struct Individual {
  Tree tree;
  double loss = std::numeric_limits<double>::infinity();
  int complexity = 0;
  double fitness = std::numeric_limits<double>::infinity();
};

double fitness(double loss, int complexity, const ComplexityTable& table);

/// Random tree over `vars` with depth <= max_depth.
Tree random_tree(Rng& rng, const std::vector<int>& vars, int max_depth);

/// One mutation of a random kind: replace operator, perturb constant, replace
/// a subtree with a random one, insert or delete a unary node. Returns the
/// parent unchanged if the offspring would exceed the complexity cap.
Tree mutate(const Tree& parent, Rng& rng, const std::vector<int>& vars, const ComplexityTable& table);

/// Subtree exchange; returns a copy of a when the child exceeds the cap.
Tree crossover(const Tree& a, const Tree& b, Rng& rng, const ComplexityTable& table);

/// Draws `q` members; the fittest wins with probability p_best, else the next
/// one, and so on. Non-finite fitness only wins when no entrant is finite.
/// Ties in fitness rank by lower index.
std::size_t tournament_select(const std::vector<Individual>& pop, std::size_t q, Rng& rng, double p_best = 1.0);

/// Best tree per complexity, reduced to the Pareto front over (complexity, loss).
class HallOfFame {
 public:
  void offer(const Individual& ind);
  /// Members sorted by complexity; each strictly improves loss on the previous.
  std::vector<Individual> front() const;
  /// Member minimizing loss + parsimony * complexity.
  Individual best(const ComplexityTable& table) const;
  bool empty() const { return by_complexity_.empty(); }

 private:
  std::vector<Individual> by_complexity_;
};

struct FrontMember {
  Tree tree;
  int complexity = 0;
  std::size_t expression_size = 0;
  double loss = 0.0;
  double test_accuracy = 0.0;
};

struct FitResult {
  std::vector<FrontMember> front;
  FrontMember best;
  std::vector<double> best_fitness_history;  // per generation, from the hall of fame
};

/// Evolves for cfg.generations rounds of tournament selection and mutation.
/// Deterministic in (seed, data, cfg) regardless of cfg.jobs.
FitResult fit(const Dataset& train, const Dataset& test, LossMode mode, const GpConfig& cfg, std::uint64_t seed);

/// CSV `complexity,expression_size,loss,test_accuracy,expression`.
std::string front_csv(const FitResult& r);

}  // namespace rashomon::symreg
