#include "rashomon/symreg/gp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::symreg {

LossMode parse_loss_mode(const std::string& s) {
  if (s == "hinge") return LossMode::Hinge;
  if (s == "mse") return LossMode::Mse;
  throw ConfigError("loss mode must be 'hinge' or 'mse', got '" + s + "'");
}

std::string loss_mode_name(LossMode m) { return m == LossMode::Hinge ? "hinge" : "mse"; }

double mean_loss(const Tree& t, const Dataset& d, LossMode mode) {
  if (d.size() == 0) throw Error("mean_loss: empty dataset");
  const auto f = eval_tree(t, d.x);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) return std::numeric_limits<double>::infinity();
    if (mode == LossMode::Hinge) {
      s += std::max(0.0, 1.0 - d.y[i] * f[i]);
    } else {
      const double e = f[i] - d.y[i];
      s += e * e;
    }
  }
  const double m = s / static_cast<double>(f.size());
  return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
}

double sign_accuracy(const Tree& t, const Dataset& d) {
  if (d.size() == 0) return 0.0;
  const auto f = eval_tree(t, d.x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) continue;
    if ((f[i] >= 0.0) == (d.y[i] >= 0.0)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(f.size());
}

double fitness(double loss, int complexity, const ComplexityTable& table) {
  if (!std::isfinite(loss)) return std::numeric_limits<double>::infinity();
  return loss + table.parsimony * complexity;
}

namespace {

double random_constant(Rng& rng) {
  // Mostly small values with occasional larger magnitudes.
  const double u = uniform(rng, 0.0, 1.0);
  if (u < 0.5) return std::round(uniform(rng, -3.0, 3.0) * 100.0) / 100.0;
  return normal(rng, 0.0, 2.0);
}

Tree random_leaf(Rng& rng, const std::vector<int>& vars) {
  if (!vars.empty() && uniform(rng, 0.0, 1.0) < 0.7)
    return Tree::variable(vars[std::uniform_int_distribution<std::size_t>(0, vars.size() - 1)(rng)]);
  return Tree::constant(random_constant(rng));
}

Tree splice(const Tree& t, std::size_t i, const Tree& sub) {
  Tree out;
  const std::size_t end = t.subtree_end(i);
  out.nodes.assign(t.nodes.begin(), t.nodes.begin() + static_cast<long>(i));
  out.nodes.insert(out.nodes.end(), sub.nodes.begin(), sub.nodes.end());
  out.nodes.insert(out.nodes.end(), t.nodes.begin() + static_cast<long>(end), t.nodes.end());
  return out;
}

Tree subtree(const Tree& t, std::size_t i) {
  return Tree{{t.nodes.begin() + static_cast<long>(i), t.nodes.begin() + static_cast<long>(t.subtree_end(i))}};
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

std::vector<std::size_t> nodes_where(const Tree& t, auto pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (pred(t.nodes[i])) out.push_back(i);
  return out;
}

}  // namespace

Tree random_tree(Rng& rng, const std::vector<int>& vars, int max_depth) {
  if (max_depth <= 0 || uniform(rng, 0.0, 1.0) < 0.3) return random_leaf(rng, vars);
  if (uniform(rng, 0.0, 1.0) < 0.3)
    return make_unary(kUnaryOps[pick(rng, kUnaryOps.size())], random_tree(rng, vars, max_depth - 1));
  const Op op = kBinaryOps[pick(rng, kBinaryOps.size())];
  Tree a = random_tree(rng, vars, max_depth - 1);
  Tree b = random_tree(rng, vars, max_depth - 1);
  return make_binary(op, a, b);
}

Tree mutate(const Tree& parent, Rng& rng, const std::vector<int>& vars, const ComplexityTable& table) {
  Tree child = parent;
  // Weights: operator 0.15, constant 0.3, subtree 0.3, insert 0.1, delete 0.15.
  const double u = uniform(rng, 0.0, 1.0);
  const int kind = u < 0.15 ? 0 : u < 0.45 ? 1 : u < 0.75 ? 2 : u < 0.85 ? 3 : 4;
  switch (kind) {
    case 0: {  // replace operator
      auto idx = nodes_where(parent, [](const Node& n) { return arity(n.op) > 0; });
      if (idx.empty()) {
        child = random_leaf(rng, vars);
        break;
      }
      Node& n = child.nodes[idx[pick(rng, idx.size())]];
      if (arity(n.op) == 2)
        n.op = kBinaryOps[pick(rng, kBinaryOps.size())];
      else
        n.op = kUnaryOps[pick(rng, kUnaryOps.size())];
      break;
    }
    case 1: {  // perturb constant
      auto idx = nodes_where(parent, [](const Node& n) { return n.op == Op::Const; });
      if (idx.empty()) {
        child = splice(parent, pick(rng, parent.size()), random_leaf(rng, vars));
        break;
      }
      Node& n = child.nodes[idx[pick(rng, idx.size())]];
      const double scale = uniform(rng, 0.0, 1.0) < 0.5 ? 0.1 : 1.0;
      n.value += normal(rng, 0.0, scale * std::max(0.1, std::abs(n.value)));
      if (!std::isfinite(n.value)) return parent;
      break;
    }
    case 2: {  // replace subtree
      const std::size_t i = pick(rng, parent.size());
      Tree sub;
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        sub = random_tree(rng, vars, 2);
      } else {
        // Grow: combine the old subtree with a small fresh one.
        const Op op = kBinaryOps[pick(rng, kBinaryOps.size())];
        Tree old = subtree(parent, i), leaf = random_tree(rng, vars, static_cast<int>(pick(rng, 3)));
        sub = uniform(rng, 0.0, 1.0) < 0.5 ? make_binary(op, old, leaf) : make_binary(op, leaf, old);
      }
      child = splice(parent, i, sub);
      break;
    }
    case 3: {  // insert unary
      const std::size_t i = pick(rng, parent.size());
      child = splice(parent, i, make_unary(kUnaryOps[pick(rng, kUnaryOps.size())], subtree(parent, i)));
      break;
    }
    default: {  // delete unary, or hoist a child of a binary node
      auto idx = nodes_where(parent, [](const Node& n) { return arity(n.op) > 0; });
      if (idx.empty()) return parent;
      const std::size_t i = idx[pick(rng, idx.size())];
      std::size_t c = i + 1;
      if (arity(parent.nodes[i].op) == 2 && uniform(rng, 0.0, 1.0) < 0.5) c = parent.subtree_end(i + 1);
      child = splice(parent, i, subtree(parent, c));
      break;
    }
  }
  if (complexity(child, table) > table.max_complexity) return parent;
  return child;
}

Tree crossover(const Tree& a, const Tree& b, Rng& rng, const ComplexityTable& table) {
  Tree child = splice(a, pick(rng, a.size()), subtree(b, pick(rng, b.size())));
  if (complexity(child, table) > table.max_complexity) return a;
  return child;
}

std::size_t tournament_select(const std::vector<Individual>& pop, std::size_t q, Rng& rng, double p_best) {
  if (pop.empty()) throw Error("tournament on an empty population");
  std::vector<std::size_t> entrants;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, q); ++r) entrants.push_back(pick(rng, pop.size()));
  std::sort(entrants.begin(), entrants.end(), [&](std::size_t a, std::size_t b) {
    return pop[a].fitness < pop[b].fitness || (pop[a].fitness == pop[b].fitness && a < b);
  });
  entrants.erase(std::unique(entrants.begin(), entrants.end()), entrants.end());
  // Only finite entrants compete unless none is finite.
  std::size_t finite = 0;
  while (finite < entrants.size() && std::isfinite(pop[entrants[finite]].fitness)) ++finite;
  if (finite == 0) return entrants.front();
  for (std::size_t r = 0; r + 1 < finite; ++r)
    if (uniform(rng, 0.0, 1.0) < p_best) return entrants[r];
  return entrants[finite - 1];
}

void HallOfFame::offer(const Individual& ind) {
  if (!std::isfinite(ind.loss)) return;
  auto it = std::lower_bound(by_complexity_.begin(), by_complexity_.end(), ind.complexity,
                             [](const Individual& a, int c) { return a.complexity < c; });
  if (it != by_complexity_.end() && it->complexity == ind.complexity) {
    if (ind.loss < it->loss) *it = ind;
  } else {
    by_complexity_.insert(it, ind);
  }
}

std::vector<Individual> HallOfFame::front() const {
  std::vector<Individual> out;
  for (const auto& ind : by_complexity_)
    if (out.empty() || ind.loss < out.back().loss) out.push_back(ind);
  return out;
}

Individual HallOfFame::best(const ComplexityTable& table) const {
  if (by_complexity_.empty()) throw Error("hall of fame is empty");
  auto f = front();
  Individual best = f.front();
  for (const auto& ind : f)
    if (fitness(ind.loss, ind.complexity, table) < fitness(best.loss, best.complexity, table)) best = ind;
  return best;
}

namespace {

void evaluate_all(std::vector<Individual>& pop, const std::vector<bool>& dirty, const Dataset& d, LossMode mode,
                  const ComplexityTable& table, int jobs) {
  auto eval_one = [&](std::size_t i) {
    if (!dirty[i]) return;
    auto& ind = pop[i];
    ind.complexity = complexity(ind.tree, table);
    ind.loss = mean_loss(ind.tree, d, mode);
    ind.fitness = fitness(ind.loss, ind.complexity, table);
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(pop.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < pop.size(); ++i) eval_one(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < pop.size();) eval_one(i);
    });
  for (auto& th : pool) th.join();
}

FrontMember to_member(const Individual& ind, const Dataset& test) {
  return {ind.tree, ind.complexity, expression_size(ind.tree), ind.loss, sign_accuracy(ind.tree, test)};
}

}  // namespace

FitResult fit(const Dataset& train, const Dataset& test, LossMode mode, const GpConfig& cfg, std::uint64_t seed) {
  if (train.size() == 0) throw Error("symreg fit: empty dataset");
  if (train.x.size() != train.y.size()) throw ShapeError("symreg fit: feature/target count mismatch");
  if (cfg.population == 0) throw ConfigError("population must be positive");
  const std::size_t dim = train.x.front().size();
  std::vector<int> vars = cfg.variables;
  if (vars.empty())
    for (std::size_t k = 0; k < dim; ++k) vars.push_back(static_cast<int>(k));
  for (int v : vars)
    if (v < 0 || static_cast<std::size_t>(v) >= dim)
      throw ConfigError("symreg variable z" + std::to_string(v) + " outside input dimension " + std::to_string(dim));

  const auto& table = cfg.table;
  std::vector<Individual> pop(cfg.population);
  for (std::size_t s = 0; s < pop.size(); ++s) {
    Rng rng(derive_seed(seed, {0, s}));
    const int depth = 1 + static_cast<int>(s % static_cast<std::size_t>(std::max(1, cfg.init_max_depth)));
    do {
      pop[s].tree = random_tree(rng, vars, depth);
    } while (complexity(pop[s].tree, table) > table.max_complexity);
  }
  evaluate_all(pop, std::vector<bool>(pop.size(), true), train, mode, table, cfg.jobs);

  HallOfFame hof;
  FitResult res;
  for (const auto& ind : pop) hof.offer(ind);
  auto record = [&] {
    res.best_fitness_history.push_back(hof.empty() ? std::numeric_limits<double>::infinity()
                                                   : fitness(hof.best(table).loss, hof.best(table).complexity, table));
  };
  record();

  // The population is split into contiguous islands; selection stays within an
  // island and each island's best migrates to the next one periodically.
  const std::size_t islands = std::clamp<std::size_t>(cfg.islands, 1, pop.size());
  auto island_range = [&](std::size_t k) {
    return std::pair<std::size_t, std::size_t>{k * pop.size() / islands, (k + 1) * pop.size() / islands};
  };
  auto best_in = [&](const std::vector<Individual>& p, std::size_t lo, std::size_t hi) {
    std::size_t b = lo;
    for (std::size_t i = lo + 1; i < hi; ++i)
      if (p[i].fitness < p[b].fitness) b = i;
    return b;
  };
  for (int gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<Individual> next(pop.size());
    std::vector<bool> dirty(pop.size(), false);
    for (std::size_t k = 0; k < islands; ++k) {
      const auto [lo, hi] = island_range(k);
      const std::vector<Individual> local(pop.begin() + static_cast<long>(lo), pop.begin() + static_cast<long>(hi));
      next[lo] = pop[best_in(pop, lo, hi)];
      for (std::size_t s = lo + 1; s < hi; ++s) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(gen), s}));
        const auto& parent = local[tournament_select(local, cfg.tournament, rng, cfg.tournament_p)];
        Tree child;
        if (cfg.crossover && uniform(rng, 0.0, 1.0) < cfg.crossover_rate) {
          const auto& other = local[tournament_select(local, cfg.tournament, rng, cfg.tournament_p)];
          child = crossover(parent.tree, other.tree, rng, table);
        } else if (uniform(rng, 0.0, 1.0) < cfg.mutation_rate) {
          child = mutate(parent.tree, rng, vars, table);
        } else {
          child = parent.tree;
        }
        if (child == parent.tree) {
          next[s] = parent;
        } else {
          next[s].tree = std::move(child);
          dirty[s] = true;
        }
      }
    }
    evaluate_all(next, dirty, train, mode, table, cfg.jobs);
    for (std::size_t s = 0; s < next.size(); ++s)
      if (dirty[s]) hof.offer(next[s]);
    if (islands > 1 && cfg.migration_interval > 0 && gen % cfg.migration_interval == 0) {
      std::vector<Individual> emigrants;
      for (std::size_t k = 0; k < islands; ++k) {
        const auto [lo, hi] = island_range(k);
        emigrants.push_back(next[best_in(next, lo, hi)]);
      }
      for (std::size_t k = 0; k < islands; ++k) {
        const auto [lo, hi] = island_range((k + 1) % islands);
        // Replace the worst member of the neighbouring island.
        std::size_t w = lo;
        for (std::size_t i = lo + 1; i < hi; ++i)
          if (next[i].fitness > next[w].fitness) w = i;
        next[w] = emigrants[k];
      }
    }
    pop = std::move(next);
    record();
  }

  const Dataset& eval_set = test.size() > 0 ? test : train;
  for (const auto& ind : hof.front()) res.front.push_back(to_member(ind, eval_set));
  res.best = to_member(hof.best(table), eval_set);
  return res;
}

std::string front_csv(const FitResult& r) {
  std::string out = "complexity,expression_size,loss,test_accuracy,expression\n";
  for (const auto& m : r.front)
    out += std::to_string(m.complexity) + "," + std::to_string(m.expression_size) + "," + io::format_double(m.loss) +
           "," + io::format_double(m.test_accuracy) + ",\"" + to_infix(m.tree) + "\"\n";
  return out;
}

}  // namespace rashomon::symreg
