#include "rashomon/bench/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::bench {

namespace {

struct Value {
  std::string scalar;
  std::vector<std::string> list;
  bool is_list = false;
  int line = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + key + ": " + what);
}

template <class T>
T parse_number(const std::string& key, int line, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) bad(key, line, "expected a number, got '" + s + "'");
  return v;
}

struct Entry {
  std::string key;
  std::string comment;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const Value&)> set;
};

std::string fmt(double v) { return io::format_double(v); }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s + "]";
}

template <class T>
Entry field(std::string key, std::string comment, std::function<T&(RunConfig&)> ref) {
  return {std::move(key), std::move(comment),
          [ref](const RunConfig& c) {
            const T v = ref(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>)
              return fmt(v);
            else
              return std::to_string(v);
          },
          [ref](RunConfig& c, const Value& v) {
            if (v.is_list) bad("value", v.line, "expected a scalar");
            ref(c) = parse_number<T>("value", v.line, v.scalar);
          }};
}

Entry flag(std::string key, std::string comment, std::function<bool&(RunConfig&)> ref) {
  return {std::move(key), std::move(comment),
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref](RunConfig& c, const Value& v) {
            if (v.scalar == "true")
              ref(c) = true;
            else if (v.scalar == "false")
              ref(c) = false;
            else
              bad("value", v.line, "expected true or false");
          }};
}

template <class T>
Entry list(std::string key, std::string comment, std::function<std::vector<T>&(RunConfig&)> ref) {
  return {std::move(key), std::move(comment), [ref](const RunConfig& c) { return fmt_list(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Value& v) {
            if (!v.is_list) bad("value", v.line, "expected a [list]");
            std::vector<T> out;
            for (const auto& s : v.list) out.push_back(parse_number<T>("value", v.line, s));
            ref(c) = std::move(out);
          }};
}

const std::vector<std::pair<std::string, std::vector<Entry>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<Entry>>> s = {
      {"",
       {
           field<std::uint64_t>("seed", "master seed; every stochastic stage derives its seeds from it",
                                [](RunConfig& c) -> std::uint64_t& { return c.seed; }),
           field<int>("jobs", "worker threads for per-seed jobs (results do not depend on it)",
                      [](RunConfig& c) -> int& { return c.jobs; }),
       }},
      {"data",
       {
           field<std::size_t>("n_samples", "images generated", [](RunConfig& c) -> std::size_t& { return c.data.n_samples; }),
           field<std::size_t>("height", "image height in pixels",
                              [](RunConfig& c) -> std::size_t& { return c.data.synth.height; }),
           field<std::size_t>("width", "image width in pixels", [](RunConfig& c) -> std::size_t& { return c.data.synth.width; }),
           field<double>("size_threshold", "metaphase needs size below this (blob radius, pixels)",
                         [](RunConfig& c) -> double& { return c.data.synth.size_threshold; }),
           field<double>("size_half_range", "size is drawn from threshold +- this",
                         [](RunConfig& c) -> double& { return c.data.synth.size_half_range; }),
           field<double>("ecc_threshold", "metaphase needs eccentricity above this",
                         [](RunConfig& c) -> double& { return c.data.synth.ecc_threshold; }),
           field<double>("ecc_half_range", "eccentricity is drawn from threshold +- this",
                         [](RunConfig& c) -> double& { return c.data.synth.ecc_half_range; }),
           field<double>("angle_range", "major-axis orientation drawn from [0, angle_range) radians",
                         [](RunConfig& c) -> double& { return c.data.synth.angle_range; }),
           field<double>("axis_margin", "excluded band around each threshold, in half ranges",
                         [](RunConfig& c) -> double& { return c.data.synth.axis_margin; }),
           field<double>("linear_margin", "excluded diagonal band next to the metaphase corner, in half ranges",
                         [](RunConfig& c) -> double& { return c.data.synth.linear_margin; }),
           field<double>("max_offset", "central cell offset drawn from +- this, pixels",
                         [](RunConfig& c) -> double& { return c.data.synth.max_offset; }),
           field<double>("test_fraction", "held-out fraction, stratified by label",
                         [](RunConfig& c) -> double& { return c.data.synth.test_fraction; }),
           field<double>("noise_sd", "additive pixel noise", [](RunConfig& c) -> double& { return c.data.synth.noise_sd; }),
           field<double>("neighbor_rate", "mean neighbour count (smaller cells get more)",
                         [](RunConfig& c) -> double& { return c.data.synth.neighbor_rate; }),
           field<double>("neighbor_amplitude", "peak intensity of neighbouring cells",
                         [](RunConfig& c) -> double& { return c.data.synth.neighbor_amplitude; }),
       }},
      {"vae",
       {
           field<std::size_t>("latent_dim", "latent dimensions", [](RunConfig& c) -> std::size_t& { return c.vae.latent_dim; }),
           list<std::size_t>("hidden", "encoder hidden widths (decoder mirrors them)",
                             [](RunConfig& c) -> std::vector<std::size_t>& { return c.vae.hidden; }),
           field<double>("alpha", "index-code mutual information weight", [](RunConfig& c) -> double& { return c.vae.alpha; }),
           field<double>("beta", "total correlation weight", [](RunConfig& c) -> double& { return c.vae.beta; }),
           field<double>("gamma", "dimension-wise KL weight", [](RunConfig& c) -> double& { return c.vae.gamma; }),
           field<double>("recon_weight", "reconstruction weight, 1/(2 sigma^2) of the Gaussian decoder",
                         [](RunConfig& c) -> double& { return c.vae.recon_weight; }),
           field<int>("epochs", "training epochs", [](RunConfig& c) -> int& { return c.vae.epochs; }),
           field<std::size_t>("batch_size", "minibatch size", [](RunConfig& c) -> std::size_t& { return c.vae.batch_size; }),
           field<double>("lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.vae.lr; }),
           flag("augment", "random dihedral transforms during training",
                [](RunConfig& c) -> bool& { return c.vae.augment; }),
       }},
      {"heads",
       {
           field<int>("seeds", "models trained per scheme", [](RunConfig& c) -> int& { return c.heads.seeds; }),
           field<int>("epochs", "epochs for latent-input heads (schemes 2 and 3)",
                      [](RunConfig& c) -> int& { return c.heads.epochs; }),
           field<int>("scheme1_epochs", "epochs for the pixel-input scheme 1 network",
                      [](RunConfig& c) -> int& { return c.heads.scheme1_epochs; }),
           field<std::size_t>("batch_size", "minibatch size", [](RunConfig& c) -> std::size_t& { return c.heads.batch_size; }),
           field<double>("lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.heads.lr; }),
           field<double>("sparse_weight_decay", "decoupled Adam weight decay for scheme 3",
                         [](RunConfig& c) -> double& { return c.heads.sparse_weight_decay; }),
           field<double>("val_fraction", "share of the training split held out for validation and search",
                         [](RunConfig& c) -> double& { return c.heads.val_fraction; }),
       }},
      {"search",
       {
           field<double>("sparsity_lo", "RigL global sparsity range",
                         [](RunConfig& c) -> double& { return c.search.ranges.sparsity_lo; }),
           field<double>("sparsity_hi", "", [](RunConfig& c) -> double& { return c.search.ranges.sparsity_hi; }),
           field<int>("delta_t_lo", "iterations between RigL updates",
                      [](RunConfig& c) -> int& { return c.search.ranges.delta_t_lo; }),
           field<int>("delta_t_hi", "", [](RunConfig& c) -> int& { return c.search.ranges.delta_t_hi; }),
           field<double>("alpha_lo", "initial drop fraction", [](RunConfig& c) -> double& { return c.search.ranges.alpha_lo; }),
           field<double>("alpha_hi", "", [](RunConfig& c) -> double& { return c.search.ranges.alpha_hi; }),
           field<int>("warmup_epochs", "dense epochs before the first RigL update",
                      [](RunConfig& c) -> int& { return c.search.warmup_epochs; }),
           field<int>("trials", "random-search trials", [](RunConfig& c) -> int& { return c.search.trials; }),
           field<int>("runs_per_trial", "training runs averaged per trial",
                      [](RunConfig& c) -> int& { return c.search.runs_per_trial; }),
       }},
      {"symreg",
       {
           field<int>("seeds", "expressions searched per loss mode", [](RunConfig& c) -> int& { return c.symreg.seeds; }),
           field<std::size_t>("train_rows", "training rows subsampled for the search (0 = all)",
                              [](RunConfig& c) -> std::size_t& { return c.symreg.train_rows; }),
           field<std::size_t>("population", "individuals per generation",
                              [](RunConfig& c) -> std::size_t& { return c.symreg.gp.population; }),
           field<std::size_t>("islands", "sub-populations with periodic migration",
                              [](RunConfig& c) -> std::size_t& { return c.symreg.gp.islands; }),
           field<int>("generations", "generation cap", [](RunConfig& c) -> int& { return c.symreg.gp.generations; }),
           field<std::size_t>("tournament", "tournament size", [](RunConfig& c) -> std::size_t& { return c.symreg.gp.tournament; }),
           field<double>("tournament_p", "probability the fittest entrant wins",
                         [](RunConfig& c) -> double& { return c.symreg.gp.tournament_p; }),
           field<double>("parsimony", "complexity penalty in the fitness",
                         [](RunConfig& c) -> double& { return c.symreg.gp.table.parsimony; }),
           field<int>("max_complexity", "complexity cap", [](RunConfig& c) -> int& { return c.symreg.gp.table.max_complexity; }),
       }},
      {"attack",
       {
           list<double>("latent_epsilons", "L-infinity budgets for latent attacks (ascending, from 0)",
                        [](RunConfig& c) -> std::vector<double>& { return c.attack.latent_epsilons; }),
           list<double>("image_epsilons", "L-infinity budgets for image attacks (ascending, from 0)",
                        [](RunConfig& c) -> std::vector<double>& { return c.attack.image_epsilons; }),
           field<std::size_t>("triplets", "image triplets written per scheme",
                              [](RunConfig& c) -> std::size_t& { return c.attack.triplets; }),
       }},
  };
  return s;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  std::map<std::string, const Entry*> by_key;
  for (const auto& [section, entries] : schema())
    for (const auto& e : entries) by_key[section.empty() ? e.key : section + "." + e.key] = &e;

  RunConfig cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') bad("section", line_no, "unterminated header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("line", line_no, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    std::string val = trim(std::string_view(line).substr(eq + 1));
    const auto it = by_key.find(full);
    if (it == by_key.end()) bad(full, line_no, "unknown key");
    Value v;
    v.line = line_no;
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']') bad(full, line_no, "unterminated list");
      v.is_list = true;
      std::string body = val.substr(1, val.size() - 2);
      std::istringstream items(body);
      std::string item;
      while (std::getline(items, item, ','))
        if (!trim(item).empty()) v.list.push_back(trim(item));
    } else {
      if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
      v.scalar = val;
    }
    try {
      it->second->set(cfg, v);
    } catch (const ConfigError& e) {
      bad(full, line_no, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse(io::read_file(path));
}

std::string RunConfig::to_text() const {
  std::string out = "# rashomon run configuration\n";
  for (const auto& [section, entries] : schema()) {
    if (!section.empty()) out += "\n[" + section + "]\n";
    for (const auto& e : entries) {
      out += e.key + " = " + e.get(*this);
      if (!e.comment.empty()) out += "  # " + e.comment;
      out += "\n";
    }
  }
  return out;
}

std::string RunConfig::sha256() const {
  RunConfig c = *this;
  c.jobs = 1;
  return io::sha256_hex(c.to_text());
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(jobs >= 1, "jobs must be >= 1");
  require(data.n_samples >= 20, "data.n_samples must be >= 20");
  require(data.synth.height >= 8 && data.synth.width >= 8, "images must be at least 8x8");
  require(data.synth.test_fraction > 0.0 && data.synth.test_fraction < 1.0, "data.test_fraction must be in (0, 1)");
  require(data.synth.size_threshold > 0.0 && data.synth.size_half_range > 0.0 && data.synth.ecc_threshold > 0.0 &&
              data.synth.ecc_half_range > 0.0,
          "data thresholds and half ranges must be > 0");
  require(data.synth.angle_range >= 0.0, "data.angle_range must be >= 0");
  require(data.synth.max_offset >= 0.0, "data.max_offset must be >= 0");
  require(data.synth.axis_margin >= 0.0 && data.synth.axis_margin < 1.0 && data.synth.linear_margin >= 0.0,
          "data.axis_margin must be in [0, 1) and data.linear_margin >= 0");
  require(vae.latent_dim >= 1, "vae.latent_dim must be >= 1");
  require(vae.epochs >= 1 && vae.batch_size >= 2, "vae.epochs >= 1 and vae.batch_size >= 2 required");
  require(vae.lr > 0.0, "vae.lr must be > 0");
  require(heads.seeds >= 1, "heads.seeds must be >= 1");
  require(heads.epochs >= 1 && heads.scheme1_epochs >= 1, "head epochs must be >= 1");
  require(heads.sparse_weight_decay >= 0.0, "heads.sparse_weight_decay must be >= 0");
  require(heads.val_fraction > 0.0 && heads.val_fraction < 0.5, "heads.val_fraction must be in (0, 0.5)");
  require(search.warmup_epochs >= 0 && search.warmup_epochs < heads.epochs,
          "search.warmup_epochs must be < heads.epochs");
  require(search.ranges.sparsity_lo <= search.ranges.sparsity_hi && search.ranges.sparsity_lo >= 0.0 &&
              search.ranges.sparsity_hi < 1.0,
          "search sparsity range must satisfy 0 <= lo <= hi < 1");
  require(search.ranges.delta_t_lo >= 1 && search.ranges.delta_t_lo <= search.ranges.delta_t_hi,
          "search delta_t range must satisfy 1 <= lo <= hi");
  require(search.ranges.alpha_lo <= search.ranges.alpha_hi && search.ranges.alpha_lo >= 0.0 &&
              search.ranges.alpha_hi <= 1.0,
          "search alpha range must satisfy 0 <= lo <= hi <= 1");
  require(search.trials >= 1 && search.runs_per_trial >= 1, "search.trials and runs_per_trial must be >= 1");
  require(symreg.seeds >= 1 && symreg.gp.generations >= 1 && symreg.gp.population >= 2,
          "symreg seeds, generations and population must be positive");
  for (const auto* eps : {&attack.latent_epsilons, &attack.image_epsilons}) {
    require(!eps->empty() && eps->front() == 0.0, "attack epsilon lists must start at 0");
    for (std::size_t i = 1; i < eps->size(); ++i) require((*eps)[i] >= (*eps)[i - 1], "attack epsilons must ascend");
  }
}

}  // namespace rashomon::bench
