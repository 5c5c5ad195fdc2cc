#include "rashomon/advattack/attack.hpp"

#include <algorithm>
#include <cmath>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::adv {

namespace {

constexpr std::size_t kChunk = 256;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::shared_ptr<const ad::CustomOp> tree_op(const symreg::Tree& tree) {
  auto op = std::make_shared<ad::CustomOp>();
  op->name = "expression";
  op->forward = [tree](std::span<const ad::Tensor* const> in) {
    const ad::Tensor& z = *in[0];
    ad::Tensor out({z.rows(), 1});
    for (std::size_t b = 0; b < z.rows(); ++b)
      out[b] = symreg::eval_tree(tree, z.values().subspan(b * z.cols(), z.cols()));
    return out;
  };
  op->backward = [tree](std::span<const ad::Tensor* const> in, const ad::Tensor&, const ad::Tensor& og) {
    const ad::Tensor& z = *in[0];
    ad::Tensor g(z.shape());
    for (std::size_t b = 0; b < z.rows(); ++b) {
      const auto row = symreg::tree_grad(tree, z.values().subspan(b * z.cols(), z.cols()));
      for (std::size_t k = 0; k < row.size(); ++k) g.at(b, k) = og[b] * row[k];
    }
    return std::vector<ad::Tensor>{g};
  };
  return op;
}

}  // namespace

Space parse_space(std::string_view s) {
  if (s == "image") return Space::Image;
  if (s == "latent") return Space::Latent;
  throw ConfigError("attack space must be image or latent, got '" + std::string(s) + "'");
}

std::string_view space_name(Space s) { return s == Space::Image ? "image" : "latent"; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be finite and >= 0");
  if (allowed_dims && allowed_dims->empty()) throw ConfigError("attack allowed_dims is empty");
  if (clip && !(clip->first <= clip->second)) throw ConfigError("attack clip range is inverted");
}

std::vector<double> fgsm_perturb(std::span<const double> x, std::span<const double> grad, double epsilon,
                                 std::optional<std::pair<double, double>> clip) {
  if (x.size() != grad.size())
    throw ShapeError("fgsm: gradient has " + std::to_string(grad.size()) + " entries, input has " +
                     std::to_string(x.size()));
  if (!(epsilon >= 0.0)) throw ConfigError("fgsm: epsilon must be >= 0");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(grad[i])) throw Error("fgsm: non-finite gradient at index " + std::to_string(i));
    double v = x[i] + epsilon * sign(grad[i]);
    while (std::abs(v - x[i]) > epsilon) v = std::nextafter(v, x[i]);
    if (clip) v = std::clamp(v, clip->first, clip->second);
    out[i] = v;
  }
  return out;
}

Pipeline Pipeline::image_head(heads::HeadModel head) {
  Pipeline p;
  p.head_.emplace(std::move(head));
  return p;
}

Pipeline Pipeline::latent_head(vae::VaeModel encoder, heads::HeadModel head) {
  if (head.input_dim() != encoder.latent_dim())
    throw ShapeError("pipeline: head expects " + std::to_string(head.input_dim()) + " inputs, encoder gives " +
                     std::to_string(encoder.latent_dim()));
  Pipeline p;
  p.encoder_.emplace(std::move(encoder));
  p.head_.emplace(std::move(head));
  return p;
}

Pipeline Pipeline::latent_tree(vae::VaeModel encoder, symreg::Tree tree) {
  if (tree.max_var() >= static_cast<int>(encoder.latent_dim()))
    throw ShapeError("pipeline: expression uses a variable beyond the latent dimension");
  Pipeline p;
  p.encoder_.emplace(std::move(encoder));
  p.tree_.emplace(std::move(tree));
  return p;
}

std::size_t Pipeline::input_dim(Space s) const {
  if (!supports(s)) throw ConfigError("pipeline has no latent space to attack");
  if (s == Space::Image) return encoder_ ? encoder_->input_dim() : head_->input_dim();
  return encoder_->latent_dim();
}

std::vector<double> Pipeline::encode(std::span<const double> pixels) const {
  if (!encoder_) throw ConfigError("pipeline has no encoder");
  return vae::encode(*encoder_, pixels).mu;
}

double Pipeline::head_score(std::span<const double> z) const {
  return head_ ? head_->score(z) : symreg::eval_tree(*tree_, z);
}

double Pipeline::score(std::span<const double> input, Space s) const {
  if (input.size() != input_dim(s))
    throw ShapeError("pipeline expects " + std::to_string(input_dim(s)) + " inputs, got " +
                     std::to_string(input.size()));
  const double f = (s == Space::Image && encoder_) ? head_score(encode(input)) : head_score(input);
  if (!std::isfinite(f)) throw Error("pipeline produced a non-finite score");
  return f;
}

std::vector<std::vector<double>> Pipeline::score_gradients(const std::vector<std::vector<double>>& inputs, Space s) {
  const std::size_t d = input_dim(s);
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, inputs.size() - start);
    ad::Graph g;
    const ad::NodeId x = g.placeholder("input", {0, d});
    ad::NodeId h = x;
    if (s == Space::Image && encoder_) h = encoder_->build_encoder_mu(g, h);
    h = head_ ? head_->build(g, h) : g.custom(tree_op(*tree_), {h});
    g.sum(h);
    std::vector<double> flat;
    flat.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = inputs[start + i];
      if (row.size() != d) throw ShapeError("pipeline gradient: input row has wrong width");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    g.forward({ad::Tensor::matrix(n, d, std::move(flat))});
    g.backward();
    const ad::Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(gx.values().begin() + i * d, gx.values().begin() + (i + 1) * d);
  }
  return out;
}

std::vector<AttackResult> attack(Pipeline& p, const std::vector<std::vector<double>>& inputs, const AttackConfig& cfg) {
  cfg.validate();
  const std::size_t d = p.input_dim(cfg.space);
  if (cfg.allowed_dims)
    for (auto k : *cfg.allowed_dims)
      if (k >= d) throw ConfigError("attack: allowed dim " + std::to_string(k) + " out of range");
  std::vector<AttackResult> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i].original = inputs[i];
    out[i].clean_score = p.score(inputs[i], cfg.space);
  }
  auto grads = p.score_gradients(inputs, cfg.space);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    // Loss -y f with y the predicted label, so the step follows -y grad f.
    const double y = heads::classify(out[i].clean_score) == synth::Label::Metaphase ? 1.0 : -1.0;
    std::vector<double> g(d, 0.0);
    if (cfg.allowed_dims) {
      for (auto k : *cfg.allowed_dims) g[k] = -y * grads[i][k];
    } else {
      for (std::size_t k = 0; k < d; ++k) g[k] = -y * grads[i][k];
    }
    out[i].perturbed = fgsm_perturb(inputs[i], g, cfg.epsilon, cfg.clip);
    out[i].score = p.score(out[i].perturbed, cfg.space);
    out[i].flipped = heads::classify(out[i].score) != heads::classify(out[i].clean_score);
  }
  return out;
}

AttackReport attack_curve(Pipeline& p, const std::vector<std::vector<double>>& inputs, std::span<const double> labels,
                          std::span<const double> epsilons, const AttackConfig& base) {
  if (labels.size() != inputs.size()) throw ShapeError("attack curve: labels and inputs differ in length");
  if (epsilons.empty() || epsilons.front() != 0.0 || !std::is_sorted(epsilons.begin(), epsilons.end()))
    throw ConfigError("attack curve: epsilons must be ascending and start at 0");
  auto correct = [&](double f, double y) { return heads::classify(f) == (y > 0 ? synth::Label::Metaphase : synth::Label::Interphase); };
  AttackReport rep;
  std::size_t clean_ok = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) clean_ok += correct(p.score(inputs[i], base.space), labels[i]);
  const double n = static_cast<double>(std::max<std::size_t>(inputs.size(), 1));
  rep.clean_accuracy = static_cast<double>(clean_ok) / n;
  for (double eps : epsilons) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    const auto res = attack(p, inputs, cfg);
    CurveRow row{eps, 0.0, 0};
    std::size_t ok = 0;
    for (std::size_t i = 0; i < res.size(); ++i) {
      ok += correct(res[i].score, labels[i]);
      row.n_flipped += res[i].flipped;
    }
    row.accuracy = static_cast<double>(ok) / n;
    rep.rows.push_back(row);
  }
  return rep;
}

std::string curve_csv(const std::vector<std::pair<std::string, AttackReport>>& curves) {
  std::string out = "epsilon,scheme,accuracy,n_flipped\n";
  for (const auto& [scheme, rep] : curves)
    for (const auto& r : rep.rows)
      out += io::format_double(r.epsilon) + "," + scheme + "," + io::format_double(r.accuracy) + "," +
             std::to_string(r.n_flipped) + "\n";
  return out;
}

BlankProbe blank_probe(const Pipeline& p, std::size_t pixels) {
  const std::vector<double> blank(pixels, 0.0);
  BlankProbe b;
  if (p.has_encoder()) b.latent = p.encode(blank);
  b.score = p.score(blank, Space::Image);
  b.label = heads::classify(b.score);
  return b;
}

void write_triplet(const std::filesystem::path& dir, const std::string& stem, const AttackResult& r,
                   std::size_t height, std::size_t width) {
  if (r.original.size() != height * width || r.perturbed.size() != height * width)
    throw ShapeError("triplet: sample is not a " + std::to_string(height) + "x" + std::to_string(width) + " image");
  synth::Image orig{height, width, r.original}, adv{height, width, r.perturbed}, diff{height, width, {}};
  for (auto* img : {&orig, &adv})
    for (auto& v : img->pixels) v = std::clamp(v, 0.0, 1.0);
  double m = 0.0;
  for (std::size_t i = 0; i < r.original.size(); ++i) m = std::max(m, std::abs(r.perturbed[i] - r.original[i]));
  diff.pixels.resize(r.original.size());
  for (std::size_t i = 0; i < r.original.size(); ++i)
    diff.pixels[i] = m > 0.0 ? 0.5 + 0.5 * (r.perturbed[i] - r.original[i]) / m : 0.5;
  std::filesystem::create_directories(dir);
  io::atomic_write(dir / (stem + "_orig.pgm"), synth::encode_pgm(orig));
  io::atomic_write(dir / (stem + "_adv.pgm"), synth::encode_pgm(adv));
  io::atomic_write(dir / (stem + "_diff.pgm"), synth::encode_pgm(diff));
}

}  // namespace rashomon::adv
