#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rashomon/autodiff/graph.hpp"
#include "rashomon/common/error.hpp"
#include "rashomon/tcvae/tcvae.hpp"

using namespace rashomon;
using ad::Tensor;

namespace {

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

vae::VaeConfig tiny_config() {
  vae::VaeConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden = {16, 8};
  cfg.epochs = 4;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  return cfg;
}

}  // namespace

TEST(Tcvae, EncodeDecodeShapes) {
  vae::VaeModel model(256, tiny_config(), 7);
  std::vector<double> pixels(256, 0.25);
  auto code = vae::encode(model, pixels);
  EXPECT_EQ(code.mu.size(), 3u);
  EXPECT_EQ(code.logvar.size(), 3u);
  EXPECT_EQ(code.z, code.mu);
  auto img = vae::decode(model, code.z);
  ASSERT_EQ(img.size(), 256u);
  for (double v : img) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(vae::encode(model, std::vector<double>(10, 0.0)), ShapeError);
  EXPECT_THROW(vae::decode(model, std::vector<double>(2, 0.0)), ShapeError);
}

TEST(Tcvae, SampledCodeIsSeeded) {
  vae::VaeModel model(256, tiny_config(), 7);
  std::vector<double> pixels(256, 0.5);
  Rng a(3), b(3);
  auto ca = vae::encode(model, pixels, &a);
  auto cb = vae::encode(model, pixels, &b);
  EXPECT_EQ(ca.z, cb.z);
  EXPECT_NE(ca.z, ca.mu);
}

TEST(Tcvae, AnalyticKlZeroAtPrior) {
  Tensor mu({4, 3}), lv({4, 3});
  EXPECT_DOUBLE_EQ(vae::analytic_kl(mu, lv), 0.0);
  mu.fill(1.0);
  EXPECT_NEAR(vae::analytic_kl(mu, lv), 1.5, 1e-12);
}

TEST(Tcvae, DecompositionMatchesBruteForceTwoSamples) {
  const double a = 0.8;
  Tensor z = Tensor::matrix(2, 1, {-a, a});
  Tensor mu = z;
  Tensor lv({2, 1});
  auto d = vae::decompose_kl(z, mu, lv);

  double mi = 0, tc = 0, dw = 0;
  for (int i = 0; i < 2; ++i) {
    double zi = z.at(i, 0);
    double qzx = std::log(normal_pdf(zi, mu.at(i, 0), 1.0));
    double qz = std::log(0.5 * (normal_pdf(zi, -a, 1.0) + normal_pdf(zi, a, 1.0)));
    double p = std::log(normal_pdf(zi, 0.0, 1.0));
    mi += (qzx - qz) / 2;
    tc += 0.0;  // one dimension: joint and product marginals coincide
    dw += (qz - p) / 2;
  }
  EXPECT_NEAR(d.index_code_mi, mi, 1e-12);
  EXPECT_NEAR(d.total_corr, tc, 1e-12);
  EXPECT_NEAR(d.dimwise_kl, dw, 1e-12);
}

TEST(Tcvae, TermsSumToAnalyticKlAtMeans) {
  Rng rng(11);
  Tensor mu({6, 4}), lv({6, 4});
  for (auto& v : mu.values()) v = normal(rng);
  auto d = vae::decompose_kl(mu, mu, lv);
  EXPECT_NEAR(d.index_code_mi + d.total_corr + d.dimwise_kl, vae::analytic_kl(mu, lv), 1e-10);
  EXPECT_GE(d.index_code_mi, 0.0);
  EXPECT_GE(d.total_corr, 0.0);
}

TEST(Tcvae, DecompositionRejectsBadShapes) {
  Tensor one({1, 2});
  EXPECT_THROW(vae::decompose_kl(one, one, one), Error);
  Tensor a({3, 2}), b({3, 3});
  EXPECT_THROW(vae::decompose_kl(a, b, a), ShapeError);
}

TEST(Tcvae, DecompositionGradientMatchesFiniteDifferences) {
  ad::Graph g(1);
  auto z = g.placeholder("z", {5, 3});
  auto mu = g.placeholder("mu", {5, 3});
  auto lv = g.placeholder("lv", {5, 3});
  auto terms = g.custom(vae::decomposition_op(), {z, mu, lv});
  g.set_output(g.weighted_sum(terms, {0.7, 1.3, -0.4}));
  Rng rng(5);
  std::vector<Tensor> in(3, Tensor({5, 3}));
  for (auto& t : in)
    for (auto& v : t.values()) v = 0.5 * normal(rng);
  g.forward(in);
  for (auto leaf : {z, mu, lv}) EXPECT_LT(ad::grad_check(g, leaf, 1e-6, rng, 3), 1e-5);
}

TEST(Tcvae, ZeroWeightsLeaveReconstructionOnly) {
  auto cfg = tiny_config();
  cfg.alpha = cfg.beta = cfg.gamma = 0.0;
  vae::VaeModel model(256, cfg, 2);
  auto data = synth::generate_dataset(8, 4);
  std::vector<std::vector<double>> batch;
  for (const auto& s : data.samples) batch.push_back(s.image.pixels);
  auto t = vae::loss_terms(model, batch, cfg);
  EXPECT_GT(t.recon, 0.0);
  EXPECT_DOUBLE_EQ(t.total(), cfg.recon_weight * t.recon);
  EXPECT_GE(t.analytic_kl, 0.0);
}

TEST(Tcvae, TrainingReducesReconstructionAndIsDeterministic) {
  auto cfg = tiny_config();
  auto data = synth::generate_dataset(400, 9);
  vae::VaeModel m1(256, cfg, 1), m2(256, cfg, 1);
  auto r1 = vae::train_vae(m1, data, cfg, 5);
  auto r2 = vae::train_vae(m2, data, cfg, 5);
  ASSERT_EQ(r1.history.size(), 5u);
  EXPECT_EQ(r1.history.front().epoch, 0);
  EXPECT_LT(r1.history.back().val_recon, r1.history.front().val_recon);
  EXPECT_EQ(vae::history_csv(r1), vae::history_csv(r2));
  EXPECT_EQ(io::encode_checkpoint(m1.to_checkpoint()), io::encode_checkpoint(m2.to_checkpoint()));
}

TEST(Tcvae, CheckpointRoundTrip) {
  vae::VaeModel model(256, tiny_config(), 3);
  auto bytes = io::encode_checkpoint(model.to_checkpoint());
  auto back = vae::VaeModel::from_checkpoint(io::decode_checkpoint(bytes));
  EXPECT_EQ(back.latent_dim(), 3u);
  std::vector<double> pixels(256, 0.1);
  EXPECT_EQ(vae::encode(back, pixels).mu, vae::encode(model, pixels).mu);
  auto ck = model.to_checkpoint();
  ck.kind = 99;
  EXPECT_THROW(vae::VaeModel::from_checkpoint(ck), Error);
}

TEST(Tcvae, TraverseChangesOnlyRequestedDim) {
  vae::VaeModel model(256, tiny_config(), 3);
  std::vector<double> z{0.1, -0.2, 0.3};
  std::vector<double> values{-2.0, 0.3, 2.0};
  auto strip = vae::traverse(model, z, 2, values);
  ASSERT_EQ(strip.size(), 3u);
  EXPECT_EQ(strip[1], vae::decode(model, z));
  EXPECT_NE(strip[0], strip[2]);
  EXPECT_THROW(vae::traverse(model, z, 3, values), Error);
}

TEST(Tcvae, LatentTableRoundTrip) {
  vae::VaeModel model(256, tiny_config(), 3);
  auto data = synth::generate_dataset(20, 1);
  auto lat = vae::latent_means(model, data);
  auto table = vae::parse_latent_table(vae::latent_table_csv(data, lat));
  ASSERT_EQ(table.z.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(table.z[i], lat[i]);
    EXPECT_EQ(table.labels[i], data.samples[i].label);
    EXPECT_EQ(table.test[i], data.samples[i].test);
  }
}
