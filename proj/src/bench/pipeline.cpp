#include "rashomon/bench/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"
#include "rashomon/introspect/netgraph.hpp"

namespace rashomon::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kVaeStream = 2;
constexpr std::uint64_t kSplitStream = 3;
constexpr std::uint64_t kHeadStream = 10;
constexpr std::uint64_t kSearchStream = 20;
constexpr std::uint64_t kSymregStream = 30;
constexpr std::uint64_t kSymregRowsStream = 31;

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

std::string cli_hint(const std::string& id) {
  static const std::map<std::string, std::string> hints = {
      {"train-head-1", "train-head --scheme 1"}, {"train-head-2", "train-head --scheme 2"},
      {"train-head-3", "train-head --scheme 3"}, {"symreg-hinge", "symreg --mode hinge"},
      {"symreg-mse", "symreg --mode mse"},
  };
  const auto it = hints.find(id);
  return it == hints.end() ? id : it->second;
}

// Tracks what a stage read and wrote; becomes its manifest.
class StageIo {
 public:
  StageIo(fs::path root, std::string id, const RunConfig& cfg) : root_(std::move(root)), id_(std::move(id)), cfg_(cfg) {
    fs::create_directories(root_ / "manifests");
    fs::remove(manifest_path(root_, id_));
  }

  static fs::path manifest_path(const fs::path& root, const std::string& id) {
    return root / "manifests" / (id + ".json");
  }

  void require(const std::string& dep) {
    const fs::path mp = manifest_path(root_, dep);
    if (!fs::exists(mp))
      throw DependencyError("stage '" + id_ + "' needs the outputs of '" + dep + "'; run `rashomon " + cli_hint(dep) +
                            "` first");
    const json m = json::parse(io::read_file(mp));
    for (const auto& [rel, sha] : m.at("outputs").items()) {
      const fs::path p = root_ / rel;
      if (!fs::exists(p) || io::sha256_hex(io::read_file(p)) != sha.get<std::string>())
        throw DependencyError("artifact '" + rel + "' from '" + dep + "' is missing or modified; re-run `rashomon " +
                              cli_hint(dep) + "`");
      inputs_[rel] = sha;
    }
  }

  bool available(const std::string& dep) const { return fs::exists(manifest_path(root_, dep)); }

  void write(const std::string& rel, std::string_view bytes) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    io::atomic_write(p, bytes);
    outputs_[rel] = io::sha256_hex(bytes);
  }

  // For files produced by library writers.
  void record(const std::string& rel) { outputs_[rel] = io::sha256_hex(io::read_file(root_ / rel)); }

  void clear_dir(const std::string& rel) { fs::remove_all(root_ / rel); }

  void finish() {
    json m{{"stage", id_},
           {"config_sha256", cfg_.sha256()},
           {"seed", cfg_.seed},
           {"inputs", inputs_},
           {"outputs", outputs_}};
    io::atomic_write(manifest_path(root_, id_), m.dump(2) + "\n");
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::string id_;
  const RunConfig& cfg_;
  json inputs_ = json::object();
  json outputs_ = json::object();
};

// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

struct Partition {
  std::vector<std::size_t> train, val, test;
};

Partition partition(const std::vector<bool>& test, const RunConfig& cfg) {
  Partition part;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < test.size(); ++i) (test[i] ? part.test : pool).push_back(i);
  const auto perm = permutation(pool.size(), derive_seed(cfg.seed, {kSplitStream}));
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.heads.val_fraction * static_cast<double>(pool.size())));
  for (std::size_t k = 0; k < perm.size(); ++k) (k < n_val ? part.val : part.train).push_back(pool[perm[k]]);
  std::sort(part.val.begin(), part.val.end());
  std::sort(part.train.begin(), part.train.end());
  return part;
}

Splits make_splits(const Partition& part, const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                   const std::vector<std::size_t>& ids) {
  Splits s;
  auto fill = [&](const std::vector<std::size_t>& idx, heads::Samples& out, std::vector<std::size_t>& out_ids) {
    for (auto i : idx) {
      out.x.push_back(x[i]);
      out.y.push_back(y[i]);
      out_ids.push_back(ids[i]);
    }
  };
  fill(part.train, s.train, s.train_ids);
  fill(part.val, s.val, s.val_ids);
  fill(part.test, s.test, s.test_ids);
  return s;
}

std::string seed_dir(int scheme, int k) {
  return "heads/scheme" + std::to_string(scheme) + "/seed" + std::to_string(k);
}

std::string dims_text(const std::vector<std::size_t>& dims) {
  std::string s;
  for (auto d : dims) s += (s.empty() ? "z" : " z") + std::to_string(d);
  return s;
}

std::vector<std::size_t> parse_restrict(const std::string& spec, const Scheme3Selection& sel, std::size_t latent_dim) {
  std::vector<std::size_t> dims;
  if (spec == "unselected") {
    for (std::size_t d = 0; d < latent_dim; ++d)
      if (std::find(sel.dims.begin(), sel.dims.end(), d) == sel.dims.end()) dims.push_back(d);
    if (dims.empty()) throw ConfigError("--restrict unselected: every latent dim is selected");
    return dims;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty() && (item[0] == 'z' || item[0] == 'Z')) item.erase(0, 1);
    std::size_t v = 0;
    try {
      std::size_t used = 0;
      v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--restrict: bad dim '" + item + "'");
    }
    if (v >= latent_dim) throw ConfigError("--restrict: dim " + std::to_string(v) + " out of range");
    dims.push_back(v);
  }
  if (dims.empty()) throw ConfigError("--restrict: no dims given");
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return dims;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---- stages ----------------------------------------------------------------

void gen_data(const RunConfig& cfg, StageIo& io, std::ostream* log) {
  say(log, "gen-data: " + std::to_string(cfg.data.n_samples) + " images");
  const auto ds = synth::generate_dataset(cfg.data.n_samples, derive_seed(cfg.seed, {kDataStream}), cfg.data.synth);
  io.clear_dir("data");
  fs::create_directories(io.root() / "data");
  synth::write_dataset(io.root() / "data", ds);
  for (const char* f : {"data/images.pgm", "data/images.idx", "data/factors.csv"}) io.record(f);
}

void train_vae_stage(const RunConfig& cfg, StageIo& io, std::ostream* log) {
  io.require("gen-data");
  const Workspace ws(io.root());
  const auto ds = ws.dataset();
  const std::size_t pixels = ds.samples.front().image.pixels.size();
  vae::VaeModel model(pixels, cfg.vae, derive_seed(cfg.seed, {kVaeStream, 0}));
  say(log, "train-vae: " + std::to_string(cfg.vae.epochs) + " epochs, latent dim " + std::to_string(cfg.vae.latent_dim));
  const auto res = vae::train_vae(model, ds, cfg.vae, derive_seed(cfg.seed, {kVaeStream, 1}));
  say(log, "train-vae: final val recon " + io::format_fixed(res.history.back().val_recon, 4));
  io.clear_dir("vae");
  io.write("vae/model.ckpt", io::encode_checkpoint(model.to_checkpoint()));
  io.write("vae/history.csv", vae::history_csv(res));
  io.write("vae/latents.csv", vae::latent_table_csv(ds, vae::latent_means(model, ds)));
}

Scheme3Selection choose_selection(const std::vector<std::vector<std::size_t>>& supports) {
  // Most frequent support; ties go to the earliest seed.
  Scheme3Selection sel;
  std::size_t best_count = 0;
  for (std::size_t k = 0; k < supports.size(); ++k) {
    const auto count = static_cast<std::size_t>(std::count(supports.begin(), supports.end(), supports[k]));
    if (count > best_count) {
      best_count = count;
      sel.dims = supports[k];
      sel.model_seed = static_cast<int>(k);
    }
  }
  return sel;
}

void train_head_stage(int scheme, const RunConfig& cfg, StageIo& io, std::ostream* log) {
  if (scheme < 1 || scheme > 3) throw ConfigError("train-head: --scheme must be 1, 2 or 3");
  io.require(scheme == 1 ? "gen-data" : "train-vae");
  const Workspace ws(io.root());
  const Splits sp = scheme == 1 ? ws.image_splits(cfg) : ws.latent_splits(cfg);
  const auto hc = heads::scheme_config(scheme, sp.train.x.front().size());
  heads::TrainConfig tc;
  tc.epochs = scheme == 1 ? cfg.heads.scheme1_epochs : cfg.heads.epochs;
  tc.batch_size = cfg.heads.batch_size;
  tc.lr = cfg.heads.lr;
  tc.augment_images = scheme == 1;
  if (scheme == 3) tc.weight_decay = cfg.heads.sparse_weight_decay;
  tc.rigl.warmup_epochs = cfg.search.warmup_epochs;

  const std::string dir = "heads/scheme" + std::to_string(scheme);
  io.clear_dir(dir);
  if (scheme == 3) {
    say(log, "train-head: scheme 3 search, " + std::to_string(cfg.search.trials) + " trials");
    heads::TrialFn fn = [&](const heads::RigLConfig& rc, std::uint64_t seed) {
      heads::TrainConfig t = tc;
      t.rigl = rc;
      const auto r = heads::train_head(3, hc, sp.train, sp.val, t, seed);
      const double total = static_cast<double>(r.model.total_head_weights());
      return heads::TrialOutcome{heads::accuracy(r.model, sp.val),
                                 1.0 - static_cast<double>(r.model.active_head_weights()) / total};
    };
    const auto search = heads::hparam_search(fn, cfg.search.ranges, tc.rigl, cfg.search.trials,
                                             cfg.search.runs_per_trial, derive_seed(cfg.seed, {kSearchStream}), cfg.jobs);
    tc.rigl = search.best;
    io.write(dir + "/search.csv", heads::trial_log_csv(search));
    say(log, "train-head: chose sparsity " + io::format_fixed(search.best.sparsity, 4) + ", delta_t " +
                 std::to_string(search.best.delta_t) + ", alpha " + io::format_fixed(search.best.alpha, 3));
  }

  const auto n = static_cast<std::size_t>(cfg.heads.seeds);
  std::vector<std::optional<heads::TrainedHead>> trained(n);
  say(log, "train-head: scheme " + std::to_string(scheme) + ", " + std::to_string(n) + " seeds");
  parallel_for(n, cfg.jobs, [&](std::size_t k) {
    trained[k].emplace(heads::train_head(scheme, hc, sp.train, sp.val, tc,
                                         derive_seed(cfg.seed, {kHeadStream + static_cast<std::uint64_t>(scheme), k})));
  });

  std::string summary = "seed,val_accuracy,test_accuracy,active_params,support\n";
  std::vector<std::vector<std::size_t>> supports;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& t = *trained[k];
    const std::string sd_rel = seed_dir(scheme, static_cast<int>(k));
    io.write(sd_rel + "/model.ckpt", io::encode_checkpoint(t.model.to_checkpoint()));
    io.write(sd_rel + "/log.csv", heads::log_csv(t.log));
    if (scheme == 3) io.write(sd_rel + "/masks.json", t.model.mask_json());
    const auto support = scheme == 1 ? std::vector<std::size_t>{} : t.model.input_support();
    supports.push_back(support);
    summary += std::to_string(k) + "," + io::format_double(heads::accuracy(t.model, sp.val)) + "," +
               io::format_double(heads::accuracy(t.model, sp.test)) + "," +
               std::to_string(t.model.active_head_weights()) + "," + dims_text(support) + "\n";
  }
  io.write(dir + "/summary.csv", summary);
  if (scheme == 3) {
    const auto sel = choose_selection(supports);
    say(log, "train-head: selected inputs " + dims_text(sel.dims));
    io.write(dir + "/selection.json", json{{"selected", sel.dims}, {"model_seed", sel.model_seed}}.dump() + "\n");
  }
}

void symreg_stage(symreg::LossMode mode, const RunConfig& cfg, StageIo& io, std::ostream* log) {
  io.require("train-vae");
  io.require("train-head-3");
  const Workspace ws(io.root());
  const Splits sp = ws.latent_splits(cfg);
  const auto sel = ws.selection();
  const auto heads3 = ws.heads(3);
  const auto& teacher = heads3.at(static_cast<std::size_t>(sel.model_seed));

  std::vector<std::vector<double>> pool_x = sp.train.x;
  pool_x.insert(pool_x.end(), sp.val.x.begin(), sp.val.x.end());
  std::vector<double> pool_y = sp.train.y;
  pool_y.insert(pool_y.end(), sp.val.y.begin(), sp.val.y.end());
  auto perm = permutation(pool_x.size(), derive_seed(cfg.seed, {kSymregRowsStream}));
  const std::size_t rows = cfg.symreg.train_rows == 0 ? perm.size() : std::min(cfg.symreg.train_rows, perm.size());
  perm.resize(rows);
  std::sort(perm.begin(), perm.end());
  symreg::Dataset train, test;
  for (auto i : perm) {
    train.x.push_back(pool_x[i]);
    train.y.push_back(mode == symreg::LossMode::Hinge ? pool_y[i] : teacher.score(pool_x[i]));
  }
  test.x = sp.test.x;
  test.y = sp.test.y;

  symreg::GpConfig gp = cfg.symreg.gp;
  gp.jobs = 1;
  gp.variables.clear();
  for (auto d : sel.dims) gp.variables.push_back(static_cast<int>(d));

  const std::string name = symreg::loss_mode_name(mode);
  const std::string dir = "symreg/" + name;
  io.clear_dir(dir);
  const auto n = static_cast<std::size_t>(cfg.symreg.seeds);
  say(log, "symreg: " + name + " loss over " + dims_text(sel.dims) + ", " + std::to_string(n) + " seeds");
  std::vector<std::optional<symreg::FitResult>> fits(n);
  parallel_for(n, cfg.jobs, [&](std::size_t k) {
    fits[k].emplace(symreg::fit(train, test, mode, gp,
                                derive_seed(cfg.seed, {kSymregStream, static_cast<std::uint64_t>(mode), k})));
  });
  std::string summary = "seed,complexity,expression_size,loss,test_accuracy,expression\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto& f = *fits[k];
    io.write(dir + "/seed" + std::to_string(k) + "/front.csv", symreg::front_csv(f));
    summary += std::to_string(k) + "," + std::to_string(f.best.complexity) + "," +
               std::to_string(f.best.expression_size) + "," + io::format_double(f.best.loss) + "," +
               io::format_double(f.best.test_accuracy) + ",\"" + symreg::to_infix(f.best.tree) + "\"\n";
  }
  io.write(dir + "/summary.csv", summary);
}

void attack_stage(const StageOptions& opt, const RunConfig& cfg, StageIo& io, std::ostream* log) {
  const bool image = opt.space == adv::Space::Image;
  if (image && opt.restrict_dims) throw ConfigError("--restrict applies to latent attacks only");
  io.require("train-vae");
  if (image) {
    io.require("gen-data");
    io.require("train-head-1");
  }
  io.require("train-head-2");
  io.require("train-head-3");
  io.require("symreg-hinge");
  const Workspace ws(io.root());
  const auto sel = ws.selection();
  const auto encoder = ws.vae();

  std::vector<std::pair<std::string, adv::Pipeline>> pipes;
  if (image) pipes.emplace_back("1", adv::Pipeline::image_head(ws.heads(1).at(0)));
  pipes.emplace_back("2", adv::Pipeline::latent_head(encoder, ws.heads(2).at(0)));
  pipes.emplace_back("3", adv::Pipeline::latent_head(encoder, ws.heads(3).at(static_cast<std::size_t>(sel.model_seed))));
  pipes.emplace_back("4", adv::Pipeline::latent_tree(encoder, ws.best_expression(symreg::LossMode::Hinge, cfg).tree));

  const Splits sp = image ? ws.image_splits(cfg) : ws.latent_splits(cfg);
  adv::AttackConfig base;
  base.space = opt.space;
  if (image) base.clip = std::pair{0.0, 1.0};
  if (opt.restrict_dims) base.allowed_dims = parse_restrict(*opt.restrict_dims, sel, encoder.latent_dim());
  const auto& eps = image ? cfg.attack.image_epsilons : cfg.attack.latent_epsilons;

  const std::string dir = "attack/" + std::string(adv::space_name(opt.space)) + (opt.restrict_dims ? "-restricted" : "");
  io.clear_dir(dir);
  std::vector<std::pair<std::string, adv::AttackReport>> curves;
  for (auto& [name, p] : pipes) {
    say(log, "attack: scheme " + name + " in " + std::string(adv::space_name(opt.space)) + " space" +
                 (base.allowed_dims ? " restricted to " + dims_text(*base.allowed_dims) : ""));
    curves.emplace_back(name, adv::attack_curve(p, sp.test.x, sp.test.y, eps, base));
  }
  io.write(dir + "/curve.csv", adv::curve_csv(curves));

  if (image) {
    const std::size_t h = cfg.data.synth.height, w = cfg.data.synth.width;
    const std::size_t n_trip = std::min(cfg.attack.triplets, sp.test.x.size());
    json blank = json::array();
    for (auto& [name, p] : pipes) {
      adv::AttackConfig c = base;
      c.epsilon = eps.back();
      const std::vector<std::vector<double>> xs(sp.test.x.begin(), sp.test.x.begin() + static_cast<long>(n_trip));
      const auto res = adv::attack(p, xs, c);
      for (std::size_t i = 0; i < res.size(); ++i) {
        const std::string stem = "scheme" + name + "_id" + std::to_string(sp.test_ids[i]);
        adv::write_triplet(io.root() / dir / "triplets", stem, res[i], h, w);
        for (const char* suffix : {"_orig.pgm", "_adv.pgm", "_diff.pgm"}) io.record(dir + "/triplets/" + stem + suffix);
      }
      const auto b = adv::blank_probe(p, h * w);
      blank.push_back({{"scheme", name},
                       {"latent", b.latent},
                       {"score", b.score},
                       {"label", std::string(synth::label_name(b.label))}});
    }
    io.write(dir + "/blank.json", blank.dump(2) + "\n");
  }
}

void analyze_stage(const RunConfig& cfg, StageIo& io, std::ostream* log) {
  (void)cfg;
  for (const char* dep : {"train-head-1", "train-head-2", "train-head-3"}) io.require(dep);
  const Workspace ws(io.root());
  io.clear_dir("analysis");
  json sizes = json::array();
  for (int scheme = 1; scheme <= 3; ++scheme) {
    const auto models = ws.heads(scheme);
    for (std::size_t k = 0; k < models.size(); ++k) {
      json r = json::parse(introspect::size_report_json(scheme, models[k]));
      r["seed"] = k;
      if (scheme == 3)
        r["expression_size_per_neuron"] = introspect::sparse_expression_size(introspect::NetGraph::from_head(models[k]),
                                                                             introspect::SparseSizeRule::PerNeuron);
      sizes.push_back(r);
    }
  }
  io.write("analysis/sizes.json", sizes.dump(2) + "\n");

  const auto models = ws.heads(3);
  for (std::size_t k = 0; k < models.size(); ++k)
    io.write("analysis/scheme3/seed" + std::to_string(k) + ".dot",
             introspect::export_dot(introspect::NetGraph::from_head(models[k])));

  const auto sel = ws.selection();
  const auto g = introspect::NetGraph::from_head(models.at(static_cast<std::size_t>(sel.model_seed)));
  say(log, "analyze: scheme 3 seed " + std::to_string(sel.model_seed) + " over " + dims_text(sel.dims));
  json streams = json::array();
  for (auto d : sel.dims) {
    const std::size_t one[] = {d};
    const auto s = introspect::extract_stream(g, one);
    streams.push_back({{"input", d}, {"edges", s.edges.size()}});
  }
  const auto cuts = introspect::suggest_cuts(g);
  json cut_json = json::array();
  for (const auto& c : cuts) cut_json.push_back({{"layer", c.layer}, {"index", c.index}});
  io.write("analysis/scheme3/streams.json", json{{"model_seed", sel.model_seed}, {"streams", streams}, {"cuts", cut_json}}.dump(2) + "\n");

  const std::vector<double> fixed(g.widths[0], 0.0);
  const auto grid = introspect::default_grid();
  const introspect::NeuronRef out{g.layers() - 1, 0};
  for (std::size_t i = 0; i < sel.dims.size(); ++i) {
    const std::size_t one[] = {sel.dims[i]};
    io.write("analysis/scheme3/responses/output_z" + std::to_string(sel.dims[i]) + ".csv",
             introspect::subnetwork_response(g, out, one, grid, fixed).csv());
    for (std::size_t j = i + 1; j < sel.dims.size(); ++j) {
      const std::size_t two[] = {sel.dims[i], sel.dims[j]};
      io.write("analysis/scheme3/responses/output_z" + std::to_string(sel.dims[i]) + "_z" +
                   std::to_string(sel.dims[j]) + ".csv",
               introspect::subnetwork_response(g, out, two, grid, fixed).csv());
    }
  }
  for (const auto& c : cuts) {
    std::vector<std::size_t> feeding;
    for (std::size_t d = 0; d < g.widths[0]; ++d) {
      const std::size_t one[] = {d};
      const auto s = introspect::extract_stream(g, one);
      for (const auto& e : s.edges)
        if (e.layer + 1 == c.layer && e.to == c.index) {
          feeding.push_back(d);
          break;
        }
    }
    if (feeding.empty() || feeding.size() > 2) continue;
    io.write("analysis/scheme3/responses/cut_L" + std::to_string(c.layer) + "_" + std::to_string(c.index) + ".csv",
             introspect::subnetwork_response(g, c, feeding, grid, fixed).csv());
  }
}

void report_stage(const RunConfig& cfg, StageIo& io, std::ostream* log) {
  for (const char* dep : {"gen-data", "train-vae", "train-head-1", "train-head-2", "train-head-3", "symreg-hinge", "analyze"})
    io.require(dep);
  const bool have_mse = io.available("symreg-mse");
  if (have_mse) io.require("symreg-mse");
  const Workspace ws(io.root());
  const Splits lat = ws.latent_splits(cfg);
  const Splits img = ws.image_splits(cfg);

  struct Row {
    int scheme;
    std::string encoder, head;
    std::vector<double> params, size, acc;
  };
  std::vector<Row> rows;
  const char* head_kind[] = {"", "Dense", "Dense", "Sparse"};
  for (int scheme = 1; scheme <= 3; ++scheme) {
    Row r{scheme, scheme == 1 ? "MLP" : "VAE", head_kind[scheme], {}, {}, {}};
    for (const auto& m : ws.heads(scheme)) {
      const auto& test = scheme == 1 ? img.test : lat.test;
      r.acc.push_back(heads::accuracy(m, test));
      if (scheme == 3) {
        const auto g = introspect::NetGraph::from_head(m);
        r.params.push_back(static_cast<double>(introspect::count_active_params(g)));
        r.size.push_back(static_cast<double>(introspect::sparse_expression_size(g)));
      } else {
        r.params.push_back(static_cast<double>(m.active_head_weights()));
        r.size.push_back(static_cast<double>(introspect::dense_head_expression_size(m.config().widths, scheme)));
      }
    }
    rows.push_back(r);
  }
  const auto exprs = ws.expressions(symreg::LossMode::Hinge);
  Row r4{4, "VAE", "Symbolic", {}, {}, {}};
  for (const auto& e : exprs) {
    r4.size.push_back(static_cast<double>(e.expression_size));
    r4.acc.push_back(e.test_accuracy);
  }
  rows.push_back(r4);

  std::string csv =
      "scheme,encoder,head,n_models,active_params_mean,active_params_sd,expression_size_mean,expression_size_sd,"
      "accuracy_mean,accuracy_sd\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.scheme) + "," + r.encoder + "," + r.head + "," + std::to_string(r.acc.size()) + ",";
    csv += r.params.empty() ? "NA,NA," : io::format_double(mean(r.params)) + "," + io::format_double(sd(r.params)) + ",";
    csv += io::format_double(mean(r.size)) + "," + io::format_double(sd(r.size)) + "," + io::format_double(mean(r.acc)) +
           "," + io::format_double(sd(r.acc)) + "\n";
  }

  std::ostringstream txt;
  txt << "Rashomon report (seed " << cfg.seed << ", config " << cfg.sha256().substr(0, 12) << ")\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-6s  %-7s  %-8s  %-18s  %-20s  %-16s\n", "Scheme", "Encoder", "Head",
                "Head parameters", "Head expression size", "Accuracy (%)");
  txt << line;
  for (const auto& r : rows) {
    const std::string params = r.params.empty()
                                   ? "N/A"
                                   : io::format_fixed(mean(r.params), 1) + " +- " + io::format_fixed(sd(r.params), 1);
    const std::string size = io::format_fixed(mean(r.size), 1) + " +- " + io::format_fixed(sd(r.size), 1);
    const std::string acc = io::format_fixed(100 * mean(r.acc), 2) + " +- " + io::format_fixed(100 * sd(r.acc), 2);
    std::snprintf(line, sizeof line, "%-6d  %-7s  %-8s  %-18s  %-20s  %-16s\n", r.scheme, r.encoder.c_str(),
                  r.head.c_str(), params.c_str(), size.c_str(), acc.c_str());
    txt << line;
  }
  txt << "\nScheme 3 selected inputs per model:\n";
  {
    const auto models = ws.heads(3);
    for (std::size_t k = 0; k < models.size(); ++k) txt << "  seed " << k << ": " << dims_text(models[k].input_support()) << "\n";
    const auto sel = ws.selection();
    txt << "  selection: " << dims_text(sel.dims) << " (model seed " << sel.model_seed << ")\n";
  }
  auto describe = [&](symreg::LossMode mode) {
    const auto best = ws.best_expression(mode, cfg);
    txt << "\nBest Scheme 4 expression (" << symreg::loss_mode_name(mode) << " loss, seed " << best.seed << "):\n  "
        << best.expression << "\n  complexity " << best.complexity << ", expression size " << best.expression_size
        << ", test accuracy " << io::format_fixed(100 * best.test_accuracy, 2) << "%\n";
  };
  describe(symreg::LossMode::Hinge);
  if (have_mse) describe(symreg::LossMode::Mse);

  io.clear_dir("report");
  io.write("report/rashomon.csv", csv);
  io.write("report/report.txt", txt.str());
  say(log, txt.str());
}

}  // namespace

Stage parse_stage(std::string_view s) {
  static const std::pair<std::string_view, Stage> names[] = {
      {"gen-data", Stage::GenData}, {"train-vae", Stage::TrainVae}, {"train-head", Stage::TrainHead},
      {"symreg", Stage::Symreg},    {"attack", Stage::Attack},      {"analyze", Stage::Analyze},
      {"report", Stage::Report},
  };
  for (const auto& [n, st] : names)
    if (n == s) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::GenData: return "gen-data";
    case Stage::TrainVae: return "train-vae";
    case Stage::TrainHead: return "train-head";
    case Stage::Symreg: return "symreg";
    case Stage::Attack: return "attack";
    case Stage::Analyze: return "analyze";
    case Stage::Report: return "report";
  }
  return "?";
}

std::string manifest_id(Stage s, const StageOptions& opt) {
  std::string id(stage_name(s));
  switch (s) {
    case Stage::TrainHead: return id + "-" + std::to_string(opt.scheme);
    case Stage::Symreg: return id + "-" + symreg::loss_mode_name(opt.mode);
    case Stage::Attack: return id + "-" + std::string(adv::space_name(opt.space)) + (opt.restrict_dims ? "-restricted" : "");
    default: return id;
  }
}

void run_stage(Stage s, const RunConfig& cfg, const fs::path& out, const StageOptions& opt, std::ostream* log) {
  cfg.validate();
  if (s == Stage::TrainHead && (opt.scheme < 1 || opt.scheme > 3))
    throw ConfigError("train-head: --scheme must be 1, 2 or 3");
  fs::create_directories(out);
  io::atomic_write(out / "config.toml", cfg.to_text());
  StageIo io(out, manifest_id(s, opt), cfg);
  switch (s) {
    case Stage::GenData: gen_data(cfg, io, log); break;
    case Stage::TrainVae: train_vae_stage(cfg, io, log); break;
    case Stage::TrainHead: train_head_stage(opt.scheme, cfg, io, log); break;
    case Stage::Symreg: symreg_stage(opt.mode, cfg, io, log); break;
    case Stage::Attack: attack_stage(opt, cfg, io, log); break;
    case Stage::Analyze: analyze_stage(cfg, io, log); break;
    case Stage::Report: report_stage(cfg, io, log); break;
  }
  io.finish();
}

void run_all(const RunConfig& cfg, const fs::path& out, std::ostream* log) {
  run_stage(Stage::GenData, cfg, out, {}, log);
  run_stage(Stage::TrainVae, cfg, out, {}, log);
  for (int scheme = 1; scheme <= 3; ++scheme) {
    StageOptions o;
    o.scheme = scheme;
    run_stage(Stage::TrainHead, cfg, out, o, log);
  }
  for (auto mode : {symreg::LossMode::Hinge, symreg::LossMode::Mse}) {
    StageOptions o;
    o.mode = mode;
    run_stage(Stage::Symreg, cfg, out, o, log);
  }
  StageOptions lat;
  run_stage(Stage::Attack, cfg, out, lat, log);
  lat.restrict_dims = "unselected";
  run_stage(Stage::Attack, cfg, out, lat, log);
  StageOptions img;
  img.space = adv::Space::Image;
  run_stage(Stage::Attack, cfg, out, img, log);
  run_stage(Stage::Analyze, cfg, out, {}, log);
  run_stage(Stage::Report, cfg, out, {}, log);
}

// ---- workspace ---------------------------------------------------------------

synth::Dataset Workspace::dataset() const {
  if (!fs::exists(root_ / "data" / "factors.csv")) throw DependencyError("no dataset in " + root_.string());
  return synth::read_dataset(root_ / "data");
}

vae::VaeModel Workspace::vae() const {
  return vae::VaeModel::from_checkpoint(io::decode_checkpoint(io::read_file(root_ / "vae" / "model.ckpt")));
}

Splits Workspace::latent_splits(const RunConfig& cfg) const {
  const auto table = vae::parse_latent_table(io::read_file(root_ / "vae" / "latents.csv"));
  std::vector<double> y;
  for (auto l : table.labels) y.push_back(synth::label_value(l));
  return make_splits(partition(table.test, cfg), table.z, y, table.ids);
}

Splits Workspace::image_splits(const RunConfig& cfg) const {
  const auto ds = dataset();
  std::vector<bool> test;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  std::vector<std::size_t> ids;
  for (const auto& s : ds.samples) {
    test.push_back(s.test);
    x.push_back(s.image.pixels);
    y.push_back(synth::label_value(s.label));
    ids.push_back(s.id);
  }
  return make_splits(partition(test, cfg), x, y, ids);
}

std::vector<heads::HeadModel> Workspace::heads(int scheme) const {
  std::vector<heads::HeadModel> out;
  for (int k = 0;; ++k) {
    const fs::path p = root_ / seed_dir(scheme, k) / "model.ckpt";
    if (!fs::exists(p)) break;
    out.push_back(heads::HeadModel::from_checkpoint(io::decode_checkpoint(io::read_file(p))));
  }
  if (out.empty()) throw DependencyError("no scheme " + std::to_string(scheme) + " models in " + root_.string());
  return out;
}

Scheme3Selection Workspace::selection() const {
  const json j = json::parse(io::read_file(root_ / "heads" / "scheme3" / "selection.json"));
  return {j.at("selected").get<std::vector<std::size_t>>(), j.at("model_seed").get<int>()};
}

std::vector<Scheme4Choice> Workspace::expressions(symreg::LossMode mode) const {
  const std::string text = io::read_file(root_ / "symreg" / symreg::loss_mode_name(mode) / "summary.csv");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<Scheme4Choice> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (int i = 0; i < 5; ++i) {
      const auto c = line.find(',', pos);
      if (c == std::string::npos) throw Error("malformed symreg summary line: " + line);
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    std::string expr = line.substr(pos);
    if (expr.size() >= 2 && expr.front() == '"') expr = expr.substr(1, expr.size() - 2);
    Scheme4Choice c;
    c.seed = std::stoi(f[0]);
    c.complexity = std::stoi(f[1]);
    c.expression_size = std::stoul(f[2]);
    c.loss = std::stod(f[3]);
    c.test_accuracy = std::stod(f[4]);
    c.expression = expr;
    c.tree = symreg::parse_infix(expr);
    out.push_back(std::move(c));
  }
  return out;
}

Scheme4Choice Workspace::best_expression(symreg::LossMode mode, const RunConfig& cfg) const {
  const auto all = expressions(mode);
  if (all.empty()) throw DependencyError("no symbolic expressions for " + symreg::loss_mode_name(mode) + " loss");
  const auto& t = cfg.symreg.gp.table;
  return *std::min_element(all.begin(), all.end(), [&](const Scheme4Choice& a, const Scheme4Choice& b) {
    return symreg::fitness(a.loss, a.complexity, t) < symreg::fitness(b.loss, b.complexity, t);
  });
}

}  // namespace rashomon::bench
