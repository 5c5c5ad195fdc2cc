#include "rashomon/tcvae/tcvae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rashomon/common/error.hpp"

namespace rashomon::vae {

using ad::DenseLayer;
using ad::Graph;
using ad::NodeId;
using ad::Tensor;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::vector<double> mish_all(std::vector<double> v) {
  for (auto& x : v) x = ad::mish(x);
  return v;
}

double logsumexp(std::span<const double> v) {
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

VaeModel::VaeModel(std::size_t input_dim, const VaeConfig& cfg, std::uint64_t seed) : input_dim_(input_dim) {
  if (cfg.latent_dim == 0) throw Error("latent_dim must be positive");
  Rng rng(seed);
  std::size_t prev = input_dim;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    encoder_.emplace_back("enc" + std::to_string(i), prev, cfg.hidden[i], rng);
    prev = cfg.hidden[i];
  }
  mu_head_ = DenseLayer("mu", prev, cfg.latent_dim, rng);
  logvar_head_ = DenseLayer("logvar", prev, cfg.latent_dim, rng);
  prev = cfg.latent_dim;
  for (std::size_t i = cfg.hidden.size(); i-- > 0;) {
    decoder_.emplace_back("dec" + std::to_string(decoder_.size()), prev, cfg.hidden[i], rng);
    prev = cfg.hidden[i];
  }
  decoder_.emplace_back("dec" + std::to_string(decoder_.size()), prev, input_dim, rng);
}

std::vector<std::uint32_t> VaeModel::widths() const {
  std::vector<std::uint32_t> w{static_cast<std::uint32_t>(input_dim_)};
  for (const auto& l : encoder_) w.push_back(static_cast<std::uint32_t>(l.out()));
  w.push_back(static_cast<std::uint32_t>(latent_dim()));
  return w;
}

VaeModel::EncoderNodes VaeModel::build_encoder(Graph& g, NodeId x) {
  NodeId h = x;
  for (auto& l : encoder_) h = g.mish(l.apply(g, h));
  return {mu_head_.apply(g, h), logvar_head_.apply(g, h)};
}

NodeId VaeModel::build_encoder_mu(Graph& g, NodeId x) {
  NodeId h = x;
  for (auto& l : encoder_) h = g.mish(l.apply(g, h));
  return mu_head_.apply(g, h);
}

NodeId VaeModel::build_decoder(Graph& g, NodeId z) {
  NodeId h = z;
  for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) h = g.mish(decoder_[i].apply(g, h));
  return g.sigmoid(decoder_.back().apply(g, h));
}

void VaeModel::encode_moments(std::span<const double> pixels, std::vector<double>& mu,
                              std::vector<double>& logvar) const {
  if (pixels.size() != input_dim_)
    throw ShapeError("encode: expected " + std::to_string(input_dim_) + " pixels, got " +
                     std::to_string(pixels.size()));
  std::vector<double> h(pixels.begin(), pixels.end());
  for (const auto& l : encoder_) h = mish_all(l.forward(h));
  mu = mu_head_.forward(h);
  logvar = logvar_head_.forward(h);
}

std::vector<double> VaeModel::decode(std::span<const double> z) const {
  if (z.size() != latent_dim())
    throw ShapeError("decode: expected latent of length " + std::to_string(latent_dim()) + ", got " +
                     std::to_string(z.size()));
  std::vector<double> h(z.begin(), z.end());
  for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) h = mish_all(decoder_[i].forward(h));
  h = decoder_.back().forward(h);
  for (auto& v : h) v = ad::sigmoid(v);
  return h;
}

std::vector<ad::Parameter*> VaeModel::parameters() {
  std::vector<ad::Parameter*> out;
  auto add = [&](DenseLayer& l) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  };
  for (auto& l : encoder_) add(l);
  add(mu_head_);
  add(logvar_head_);
  for (auto& l : decoder_) add(l);
  return out;
}

io::Checkpoint VaeModel::to_checkpoint() const {
  io::Checkpoint ckpt;
  ckpt.kind = kVaeCheckpointKind;
  ckpt.widths = widths();
  auto* self = const_cast<VaeModel*>(this);
  for (auto* p : self->parameters()) ckpt.blobs.push_back(p->value.data());
  return ckpt;
}

VaeModel VaeModel::from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.kind != kVaeCheckpointKind) throw Error("checkpoint is not a VAE");
  if (ckpt.widths.size() < 2) throw Error("VAE checkpoint needs at least input and latent widths");
  VaeConfig cfg;
  cfg.latent_dim = ckpt.widths.back();
  cfg.hidden.assign(ckpt.widths.begin() + 1, ckpt.widths.end() - 1);
  VaeModel model(ckpt.widths.front(), cfg, 0);
  auto params = model.parameters();
  if (params.size() != ckpt.blobs.size()) throw Error("VAE checkpoint has wrong number of parameter blobs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.size() != ckpt.blobs[i].size())
      throw Error("VAE checkpoint blob " + std::to_string(i) + " has wrong size");
    params[i]->value.data() = ckpt.blobs[i];
  }
  return model;
}

LatentCode encode(const VaeModel& model, std::span<const double> pixels, Rng* rng) {
  LatentCode code;
  model.encode_moments(pixels, code.mu, code.logvar);
  code.z = code.mu;
  if (rng) {
    for (std::size_t k = 0; k < code.z.size(); ++k) code.z[k] += std::exp(0.5 * code.logvar[k]) * normal(*rng);
  }
  return code;
}

std::vector<double> decode(const VaeModel& model, std::span<const double> z) { return model.decode(z); }

namespace {

// Per-pair, per-dimension Gaussian log densities log q(z_ik | x_j), laid out [i][j][k].
struct PairDensities {
  std::size_t b = 0, l = 0;
  std::vector<double> ell;
  double& at(std::size_t i, std::size_t j, std::size_t k) { return ell[(i * b + j) * l + k]; }
};

void check_batch(const Tensor& z, const Tensor& mu, const Tensor& logvar) {
  if (z.rank() != 2 || mu.shape() != z.shape() || logvar.shape() != z.shape())
    throw ShapeError("decompose_kl: z, mu, logvar must share a [B, L] shape");
  if (z.dim(0) < 2) throw Error("decompose_kl: batch size must be at least 2");
}

PairDensities pair_densities(const Tensor& z, const Tensor& mu, const Tensor& logvar) {
  PairDensities pd{z.dim(0), z.dim(1), {}};
  pd.ell.resize(pd.b * pd.b * pd.l);
  for (std::size_t i = 0; i < pd.b; ++i)
    for (std::size_t j = 0; j < pd.b; ++j)
      for (std::size_t k = 0; k < pd.l; ++k) {
        double d = z.at(i, k) - mu.at(j, k);
        double lv = logvar.at(j, k);
        pd.at(i, j, k) = -0.5 * (kLog2Pi + lv + d * d * std::exp(-lv));
      }
  return pd;
}

struct PerSample {
  std::vector<double> log_qzx, log_qz, log_qprod, log_p;
};

PerSample per_sample_terms(PairDensities& pd, const Tensor& z) {
  const std::size_t b = pd.b, l = pd.l;
  const double log_b = std::log(static_cast<double>(b));
  PerSample ps;
  std::vector<double> joint(b), marg(b);
  for (std::size_t i = 0; i < b; ++i) {
    double qzx = 0.0, qprod = 0.0, p = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < l; ++k) s += pd.at(i, j, k);
      joint[j] = s;
    }
    for (std::size_t k = 0; k < l; ++k) {
      qzx += pd.at(i, i, k);
      for (std::size_t j = 0; j < b; ++j) marg[j] = pd.at(i, j, k);
      qprod += logsumexp(marg) - log_b;
      p += -0.5 * (kLog2Pi + z.at(i, k) * z.at(i, k));
    }
    ps.log_qzx.push_back(qzx);
    ps.log_qz.push_back(logsumexp(joint) - log_b);
    ps.log_qprod.push_back(qprod);
    ps.log_p.push_back(p);
  }
  return ps;
}

double mean_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
  return s / static_cast<double>(a.size());
}

}  // namespace

Decomposition decompose_kl(const Tensor& z, const Tensor& mu, const Tensor& logvar) {
  check_batch(z, mu, logvar);
  auto pd = pair_densities(z, mu, logvar);
  auto ps = per_sample_terms(pd, z);
  return {mean_diff(ps.log_qzx, ps.log_qz), mean_diff(ps.log_qz, ps.log_qprod), mean_diff(ps.log_qprod, ps.log_p)};
}

std::shared_ptr<const ad::CustomOp> decomposition_op() {
  auto op = std::make_shared<ad::CustomOp>();
  op->name = "kl_decomposition";
  op->forward = [](std::span<const Tensor* const> in) {
    auto d = decompose_kl(*in[0], *in[1], *in[2]);
    return Tensor::vector({d.index_code_mi, d.total_corr, d.dimwise_kl});
  };
  op->backward = [](std::span<const Tensor* const> in, const Tensor&, const Tensor& g) {
    const Tensor& z = *in[0];
    const Tensor& mu = *in[1];
    const Tensor& logvar = *in[2];
    auto pd = pair_densities(z, mu, logvar);
    const std::size_t b = pd.b, l = pd.l;
    const double inv_b = 1.0 / static_cast<double>(b);
    // Coefficients of each per-sample quantity in g . (mi, tc, dw).
    const double c_qzx = g[0] * inv_b;
    const double c_qz = (g[1] - g[0]) * inv_b;
    const double c_prod = (g[2] - g[1]) * inv_b;
    const double c_p = -g[2] * inv_b;
    Tensor gz(z.shape()), gmu(mu.shape()), glv(logvar.shape());
    std::vector<double> joint(b), soft_joint(b), marg(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < l; ++k) s += pd.at(i, j, k);
        joint[j] = s;
      }
      const double lse = logsumexp(joint);
      for (std::size_t j = 0; j < b; ++j) soft_joint[j] = std::exp(joint[j] - lse);
      for (std::size_t k = 0; k < l; ++k) {
        for (std::size_t j = 0; j < b; ++j) marg[j] = pd.at(i, j, k);
        const double lse_k = logsumexp(marg);
        for (std::size_t j = 0; j < b; ++j) {
          const double w = (i == j ? c_qzx : 0.0) + c_qz * soft_joint[j] + c_prod * std::exp(marg[j] - lse_k);
          const double inv_var = std::exp(-logvar.at(j, k));
          const double d = z.at(i, k) - mu.at(j, k);
          gz.at(i, k) += -w * d * inv_var;
          gmu.at(j, k) += w * d * inv_var;
          glv.at(j, k) += -0.5 * w * (1.0 - d * d * inv_var);
        }
        gz.at(i, k) += c_p * -z.at(i, k);
      }
    }
    return std::vector<Tensor>{gz, gmu, glv};
  };
  return op;
}

double analytic_kl(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape() || mu.rank() != 2) throw ShapeError("analytic_kl: mu/logvar must be [B, L]");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  return s / static_cast<double>(mu.dim(0));
}

TcvaeLossTerms loss_terms(VaeModel& model, std::span<const std::vector<double>> batch, const VaeConfig& cfg,
                          Rng* rng) {
  if (batch.size() < 2) throw Error("loss_terms: batch size must be at least 2");
  const std::size_t b = batch.size(), l = model.latent_dim();
  Tensor z({b, l}), mu({b, l}), lv({b, l});
  TcvaeLossTerms t;
  t.alpha = cfg.alpha;
  t.beta = cfg.beta;
  t.gamma = cfg.gamma;
  t.recon_weight = cfg.recon_weight;
  for (std::size_t i = 0; i < b; ++i) {
    auto code = encode(model, batch[i], rng);
    auto recon = model.decode(code.z);
    for (std::size_t p = 0; p < recon.size(); ++p) {
      double d = recon[p] - batch[i][p];
      t.recon += d * d;
    }
    for (std::size_t k = 0; k < l; ++k) {
      z.at(i, k) = code.z[k];
      mu.at(i, k) = code.mu[k];
      lv.at(i, k) = code.logvar[k];
    }
  }
  t.recon /= static_cast<double>(b);
  auto d = decompose_kl(z, mu, lv);
  t.index_code_mi = d.index_code_mi;
  t.total_corr = d.total_corr;
  t.dimwise_kl = d.dimwise_kl;
  t.analytic_kl = analytic_kl(mu, lv);
  return t;
}

namespace {

double validation_recon(const VaeModel& model, const std::vector<const synth::ImageSample*>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto* s : samples) {
    auto code = encode(model, s->image.pixels);
    auto recon = model.decode(code.z);
    for (std::size_t p = 0; p < recon.size(); ++p) {
      double d = recon[p] - s->image.pixels[p];
      total += d * d;
    }
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train_vae(VaeModel& model, const synth::Dataset& data, const VaeConfig& cfg, std::uint64_t seed) {
  auto train = data.split(false);
  auto val = data.split(true);
  if (train.empty()) throw Error("train_vae: empty training split");
  if (val.empty()) val = train;
  const std::size_t d = model.input_dim(), l = model.latent_dim();
  const std::size_t bs = std::max<std::size_t>(2, cfg.batch_size);

  Graph g(derive_seed(seed, {1}));
  NodeId x = g.placeholder("x", {0, d});
  NodeId eps = g.placeholder("eps", {0, l});
  auto enc = model.build_encoder(g, x);
  NodeId z = g.add(enc.mu, g.mul(g.exp(g.scale(enc.logvar, 0.5)), eps));
  NodeId xhat = model.build_decoder(g, z);
  NodeId recon = g.row_sse(xhat, x);
  NodeId terms = g.custom(decomposition_op(), {z, enc.mu, enc.logvar});
  NodeId kl = g.weighted_sum(terms, {cfg.alpha, cfg.beta, cfg.gamma});
  NodeId loss = g.add(g.scale(recon, cfg.recon_weight), kl);
  g.set_output(loss);
  g.set_training(true);

  ad::Adam opt(model.parameters(), cfg.lr);
  Rng rng(derive_seed(seed, {2}));
  TrainResult result;
  result.history.push_back({0, 0, 0, validation_recon(model, val), 0, 0, 0});

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> inputs(2);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st{epoch, 0, 0, 0, 0, 0, 0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      if (n < 2) break;
      inputs[0].reshape_to({n, d});
      inputs[1].reshape_to({n, l});
      for (std::size_t r = 0; r < n; ++r) {
        const auto& img = train[order[start + r]]->image;
        const auto aug = cfg.augment ? synth::augment(img, rng) : img;
        std::copy(aug.pixels.begin(), aug.pixels.end(), inputs[0].data().begin() + static_cast<long>(r * d));
      }
      for (auto& v : inputs[1].values()) v = normal(rng);
      opt.zero_grad();
      g.forward(inputs);
      g.backward();
      opt.step();
      st.train_loss += g.value(loss).item();
      st.train_recon += g.value(recon).item();
      st.index_code_mi += g.value(terms)[0];
      st.total_corr += g.value(terms)[1];
      st.dimwise_kl += g.value(terms)[2];
      ++batches;
    }
    if (batches) {
      const double inv = 1.0 / static_cast<double>(batches);
      st.train_loss *= inv;
      st.train_recon *= inv;
      st.index_code_mi *= inv;
      st.total_corr *= inv;
      st.dimwise_kl *= inv;
    }
    st.val_recon = validation_recon(model, val);
    result.history.push_back(st);
  }
  return result;
}

std::vector<std::vector<double>> traverse(const VaeModel& model, std::span<const double> z, std::size_t dim,
                                          std::span<const double> values) {
  if (dim >= z.size()) throw Error("traverse: dimension " + std::to_string(dim) + " out of range");
  std::vector<std::vector<double>> strip;
  std::vector<double> zz(z.begin(), z.end());
  for (double v : values) {
    zz[dim] = v;
    strip.push_back(model.decode(zz));
  }
  return strip;
}

std::vector<std::vector<double>> latent_means(const VaeModel& model, const synth::Dataset& data) {
  std::vector<std::vector<double>> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) out.push_back(encode(model, s.image.pixels).mu);
  return out;
}

std::string latent_table_csv(const synth::Dataset& data, const std::vector<std::vector<double>>& latents) {
  if (latents.size() != data.samples.size()) throw Error("latent table: row count mismatch");
  std::string out = "id";
  const std::size_t l = latents.empty() ? 0 : latents.front().size();
  for (std::size_t k = 0; k < l; ++k) out += ",z" + std::to_string(k);
  out += ",label,split\n";
  for (std::size_t i = 0; i < latents.size(); ++i) {
    out += std::to_string(data.samples[i].id);
    for (double v : latents[i]) out += "," + io::format_double(v);
    out += "," + std::to_string(static_cast<int>(data.samples[i].label));
    out += data.samples[i].test ? ",test\n" : ",train\n";
  }
  return out;
}

LatentTable parse_latent_table(const std::string& csv) {
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line.rfind("id,z0", 0) != 0) throw Error("latent table: bad header");
  LatentTable t;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() < 4) throw Error("latent table: short row");
    t.ids.push_back(std::stoul(f.front()));
    std::vector<double> z;
    for (std::size_t k = 1; k + 2 < f.size(); ++k) z.push_back(std::stod(f[k]));
    t.z.push_back(std::move(z));
    t.labels.push_back(std::stoi(f[f.size() - 2]) > 0 ? synth::Label::Metaphase : synth::Label::Interphase);
    t.test.push_back(f.back() == "test");
  }
  return t;
}

std::string history_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,train_recon,val_recon,index_code_mi,total_corr,dimwise_kl\n";
  for (const auto& h : result.history) {
    out += std::to_string(h.epoch) + "," + io::format_double(h.train_loss) + "," + io::format_double(h.train_recon) +
           "," + io::format_double(h.val_recon) + "," + io::format_double(h.index_code_mi) + "," +
           io::format_double(h.total_corr) + "," + io::format_double(h.dimwise_kl) + "\n";
  }
  return out;
}

}  // namespace rashomon::vae
