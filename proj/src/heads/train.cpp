#include "rashomon/heads/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "rashomon/autodiff/graph.hpp"
#include "rashomon/common/error.hpp"

namespace rashomon::heads {

double accuracy(const HeadModel& model, const Samples& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (synth::label_value(classify(model.score(data.x[i]))) == data.y[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

double hinge_loss(const HeadModel& model, const Samples& data) {
  if (data.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) s += std::max(0.0, 1.0 - data.y[i] * model.score(data.x[i]));
  return s / static_cast<double>(data.size());
}

namespace {

std::vector<double> augmented_row(const std::vector<double>& row, Rng& rng) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(row.size()))));
  if (side * side != row.size()) throw ShapeError("image augmentation needs square inputs");
  return synth::augment(synth::Image{side, side, row}, rng).pixels;
}

void append_log(std::vector<LogRow>& log, int epoch, const HeadModel& m, const Samples& train, const Samples& val) {
  log.push_back({epoch, "train", hinge_loss(m, train), accuracy(m, train), m.active_head_weights()});
  if (val.size() > 0) log.push_back({epoch, "val", hinge_loss(m, val), accuracy(m, val), m.active_head_weights()});
}

}  // namespace

TrainedHead train_head(int scheme, const HeadConfig& cfg, const Samples& train, const Samples& val,
                       const TrainConfig& tc, std::uint64_t seed, const StepObserver& observer) {
  if (scheme < 1 || scheme > 3) throw ConfigError("scheme must be 1, 2 or 3");
  if (train.size() == 0) throw Error("train_head: empty training set");
  if (train.x.size() != train.y.size()) throw ShapeError("train_head: feature/label count mismatch");
  if (scheme == 3 && cfg.batchnorm) throw ConfigError("scheme 3 heads cannot use batch-norm");
  if (tc.epochs < 1 || tc.batch_size < 1) throw ConfigError("epochs and batch_size must be positive");

  TrainedHead out{HeadModel(cfg, derive_seed(seed, {0})), {}, {}, {}, {}, 0, 0, 0};
  HeadModel& model = out.model;
  const std::size_t in = model.input_dim();
  const std::size_t n = train.size();
  const std::size_t min_batch = cfg.batchnorm ? 2 : 1;
  const std::size_t batches = (n + tc.batch_size - 1) / tc.batch_size;

  ad::Graph g(derive_seed(seed, {1}));
  ad::NodeId x = g.placeholder("x", {0, in});
  ad::NodeId y = g.placeholder("y", {0, 1});
  ad::NodeId f = model.build(g, x);
  g.set_output(g.hinge(f, y));
  ad::AdamHyper hyper;
  hyper.weight_decay = tc.weight_decay;
  ad::Adam opt(model.parameters(), tc.lr, hyper);
  Rng rng(derive_seed(seed, {2}));

  const long total = static_cast<long>(tc.epochs) * static_cast<long>(batches);
  long warmup = 0, t_end = 0;
  if (scheme == 3) {
    const auto& rc = tc.rigl;
    if (rc.delta_t < 1) throw ConfigError("delta_t must be at least 1");
    if (!(rc.alpha > 0.0 && rc.alpha <= 1.0)) throw ConfigError("alpha must be in (0, 1]");
    warmup = std::min<long>(total - 1, static_cast<long>(rc.warmup_epochs) * static_cast<long>(batches));
    t_end = std::max<long>(1, std::lround(rc.t_end_fraction * static_cast<double>(total - warmup)));
    out.layer_sparsity = erdos_renyi_allocation(cfg.widths, rc.sparsity);
    out.targets = target_active_counts(cfg.widths, out.layer_sparsity);
    model.enable_masks();
  }
  out.warmup_iterations = warmup;
  out.t_end = t_end;

  // Flat parameter index of each head weight matrix inside opt.params().
  std::vector<std::size_t> head_param_index;
  for (std::size_t l = 0; l < model.head_layers().size(); ++l) {
    auto* p = &model.head_layers()[l].weight;
    const auto& ps = opt.params();
    head_param_index.push_back(static_cast<std::size_t>(std::find(ps.begin(), ps.end(), p) - ps.begin()));
  }

  g.set_training(false);
  append_log(out.log, 0, model, train, val);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<ad::Tensor> inputs(2);
  long t = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += tc.batch_size) {
      const std::size_t b = std::min(tc.batch_size, n - start);
      if (b < min_batch) continue;
      inputs[0].reshape_to({b, in});
      inputs[1].reshape_to({b, 1});
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t idx = order[start + r];
        if (train.x[idx].size() != in) throw ShapeError("train_head: row has wrong width");
        const auto row = tc.augment_images ? augmented_row(train.x[idx], rng) : train.x[idx];
        std::copy(row.begin(), row.end(), inputs[0].data().begin() + static_cast<long>(r * in));
        inputs[1][r] = train.y[idx];
      }
      g.set_training(true);
      opt.zero_grad();
      g.forward(inputs);
      g.backward();

      const long since = t - warmup;
      if (scheme == 3 && since >= 0 && since % tc.rigl.delta_t == 0 && since < t_end) {
        const double frac = cosine_decay(static_cast<double>(since), tc.rigl.alpha, static_cast<double>(t_end));
        for (std::size_t l = 0; l < model.head_layers().size(); ++l) {
          auto& w = model.head_layers()[l].weight;
          const auto k = static_cast<std::size_t>(std::floor(frac * static_cast<double>(out.targets[l])));
          auto res = rigl_update(w.value, w.grad, *w.mask, out.targets[l], k);
          opt.reset_state(head_param_index[l], res.changed());
          w.apply_mask();
        }
      } else {
        opt.step();
      }
      ++t;
      if (observer) observer(t - 1, model);
    }
    g.set_training(false);
    append_log(out.log, epoch, model, train, val);
  }
  out.iterations = t;
  if (scheme == 3) {
    out.prune = post_prune(model);
    append_log(out.log, tc.epochs + 1, model, train, val);
  }
  return out;
}

std::string log_csv(const std::vector<LogRow>& log) {
  std::string out = "epoch,split,loss,accuracy,active_weights\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + r.split + "," + io::format_double(r.loss) + "," +
           io::format_double(r.accuracy) + "," + std::to_string(r.active_weights) + "\n";
  return out;
}

SearchResult hparam_search(const TrialFn& fn, const SearchRanges& ranges, const RigLConfig& base, int trials,
                           int runs_per_trial, std::uint64_t seed, int jobs) {
  if (trials < 1) throw ConfigError("hparam_search needs at least one trial");
  if (runs_per_trial < 1) throw ConfigError("hparam_search needs at least one run per trial");
  Rng rng(seed);
  SearchResult res;
  for (int i = 0; i < trials; ++i) {
    TrialRecord rec;
    rec.trial = i;
    rec.config = base;
    rec.config.sparsity = uniform(rng, ranges.sparsity_lo, ranges.sparsity_hi);
    rec.config.delta_t = std::uniform_int_distribution<int>(ranges.delta_t_lo, ranges.delta_t_hi)(rng);
    rec.config.alpha = uniform(rng, ranges.alpha_lo, ranges.alpha_hi);
    res.trials.push_back(rec);
  }
  auto run_trial = [&](TrialRecord& rec) {
    double acc = 0.0, sp = 0.0;
    for (int r = 0; r < runs_per_trial; ++r) {
      auto o = fn(rec.config, derive_seed(seed, {static_cast<std::uint64_t>(rec.trial), static_cast<std::uint64_t>(r)}));
      acc += o.val_accuracy;
      sp += o.final_sparsity;
    }
    rec.mean_accuracy = acc / runs_per_trial;
    rec.mean_sparsity = sp / runs_per_trial;
    rec.objective = rec.mean_accuracy + rec.mean_sparsity;
  };
  const int workers = std::max(1, std::min(jobs, trials));
  if (workers == 1) {
    for (auto& rec : res.trials) run_trial(rec);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < res.trials.size();) run_trial(res.trials[i]);
      });
    for (auto& th : pool) th.join();
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.trials.size(); ++i)
    if (res.trials[i].objective > res.trials[best].objective) best = i;
  res.best = res.trials[best].config;
  return res;
}

std::string trial_log_csv(const SearchResult& result) {
  std::string out = "trial,sparsity,delta_t,alpha,mean_accuracy,mean_sparsity,objective\n";
  for (const auto& t : result.trials)
    out += std::to_string(t.trial) + "," + io::format_double(t.config.sparsity) + "," +
           std::to_string(t.config.delta_t) + "," + io::format_double(t.config.alpha) + "," +
           io::format_double(t.mean_accuracy) + "," + io::format_double(t.mean_sparsity) + "," +
           io::format_double(t.objective) + "\n";
  return out;
}

}  // namespace rashomon::heads
