#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"
#include "rashomon/synthcells/synthcells.hpp"

using namespace rashomon;
using namespace rashomon::synth;

namespace {

FactorVector centered(double size, double ecc, double angle = 0.0) {
  FactorVector f;
  f.size = size;
  f.ecc = ecc;
  f.angle = angle;
  f.noise_seed = 42;
  return f;
}

}  // namespace

TEST(Render, IsotropicBlobIgnoresAngle) {
  auto a = render(centered(2.0, 0.0, 0.0), 16, 16);
  auto b = render(centered(2.0, 0.0, 1.234), 16, 16);
  EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Render, NoNeighborsLeavesCornersAtNoiseFloor) {
  auto img = render(centered(2.5, 0.5, 0.3), 16, 16, 0.0);
  for (auto [r, c] : {std::pair{0, 0}, {0, 15}, {15, 0}, {15, 15}}) EXPECT_LT(img.at(r, c), 1e-3);
  EXPECT_GT(*std::max_element(img.pixels.begin(), img.pixels.end()), 0.9);
}

TEST(Render, Deterministic) {
  auto f = centered(2.2, 0.7, 0.4);
  f.neighbors = {{2.0, 3.0, 1.5}};
  EXPECT_EQ(render(f, 16, 16), render(f, 16, 16));
}

TEST(Render, PixelsInUnitInterval) {
  auto f = centered(3.5, 0.0);
  f.neighbors = {{7.0, 7.0, 2.0}, {8.0, 8.0, 2.0}};
  auto img = render(f, 16, 16, 0.2);
  for (double p : img.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Render, OutOfFrameCenterThrows) {
  auto f = centered(2.0, 0.0);
  f.dx = 9.0;
  EXPECT_THROW(render(f, 16, 16), Error);
  f.dx = 0.0;
  f.size = 0.0;
  EXPECT_THROW(render(f, 16, 16), Error);
}

TEST(LabelRule, Examples) {
  SynthConfig cfg;
  EXPECT_EQ(label_rule(centered(cfg.size_threshold / 2, 2 * cfg.ecc_threshold), cfg), Label::Metaphase);
  EXPECT_EQ(label_rule(centered(2 * cfg.size_threshold, 0.0), cfg), Label::Interphase);
}

TEST(LabelRule, MarginBandIsExcluded) {
  SynthConfig cfg;
  EXPECT_TRUE(in_excluded_band(centered(cfg.size_threshold, 0.9), cfg));
  EXPECT_TRUE(in_excluded_band(centered(1.6, cfg.ecc_threshold), cfg));
  EXPECT_FALSE(in_excluded_band(centered(1.6, 0.9), cfg));
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    auto label = i % 2 ? Label::Metaphase : Label::Interphase;
    auto f = sample_factors(rng, cfg, label);
    EXPECT_FALSE(in_excluded_band(f, cfg));
    EXPECT_EQ(label_rule(f, cfg), label);
  }
}

TEST(Dataset, ByteIdenticalAcrossRuns) {
  auto a = generate_dataset(1000, 7);
  auto b = generate_dataset(1000, 7);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
    EXPECT_EQ(a.samples[i].test, b.samples[i].test);
  }
  auto dir = std::filesystem::temp_directory_path() / "rashomon_synth_test";
  std::filesystem::remove_all(dir);
  write_dataset(dir / "a", a);
  write_dataset(dir / "b", b);
  for (auto name : {"images.pgm", "images.idx", "factors.csv"})
    EXPECT_EQ(io::read_file(dir / "a" / name), io::read_file(dir / "b" / name));
  std::filesystem::remove_all(dir);
}

TEST(Dataset, ClassBalanceAndLabels) {
  auto ds = generate_dataset(1000, 7);
  std::size_t meta = 0;
  for (const auto& s : ds.samples) {
    meta += s.label == Label::Metaphase;
    EXPECT_EQ(s.label, label_rule(s.factors, ds.config));
  }
  double frac = static_cast<double>(meta) / 1000.0;
  EXPECT_GE(frac, 0.45);
  EXPECT_LE(frac, 0.55);
}

TEST(Dataset, StratifiedNinetyTenSplit) {
  auto ds = generate_dataset(1000, 3);
  for (Label cls : {Label::Interphase, Label::Metaphase}) {
    double n = 0, test = 0;
    for (const auto& s : ds.samples)
      if (s.label == cls) {
        ++n;
        test += s.test;
      }
    EXPECT_NEAR(test / n, 0.1, 0.005);
  }
}

TEST(Dataset, LogisticRegressionOnFactorsSeparates) {
  // Oracle: plain gradient-descent logistic regression on standardized
  // (size, ecc). The margin construction must make the classes separable.
  auto ds = generate_dataset(2000, 11);
  const std::size_t n = ds.samples.size();
  std::vector<std::array<double, 2>> x(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = {ds.samples[i].factors.size, ds.samples[i].factors.ecc};
    y[i] = ds.samples[i].label == Label::Metaphase ? 1.0 : 0.0;
  }
  for (int d = 0; d < 2; ++d) {
    double m = 0, v = 0;
    for (auto& r : x) m += r[d];
    m /= n;
    for (auto& r : x) v += (r[d] - m) * (r[d] - m);
    double sd = std::sqrt(v / n);
    for (auto& r : x) r[d] = (r[d] - m) / sd;
  }
  double w0 = 0, w1 = 0, b = 0;
  for (int it = 0; it < 5000; ++it) {
    double g0 = 0, g1 = 0, gb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = 1.0 / (1.0 + std::exp(-(w0 * x[i][0] + w1 * x[i][1] + b)));
      g0 += (p - y[i]) * x[i][0];
      g1 += (p - y[i]) * x[i][1];
      gb += p - y[i];
    }
    w0 -= 0.5 * g0 / n;
    w1 -= 0.5 * g1 / n;
    b -= 0.5 * gb / n;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += ((w0 * x[i][0] + w1 * x[i][1] + b) >= 0) == (y[i] > 0.5);
  EXPECT_GE(static_cast<double>(correct) / n, 0.99);
}

TEST(Dataset, EachFactorAloneIsInsufficient) {
  auto ds = generate_dataset(2000, 11);
  auto best_threshold_acc = [&](auto feature) {
    std::vector<std::pair<double, int>> v;
    for (const auto& s : ds.samples) v.emplace_back(feature(s.factors), s.label == Label::Metaphase);
    std::sort(v.begin(), v.end());
    int pos_total = 0;
    for (auto& p : v) pos_total += p.second;
    int best = 0, below_pos = 0;
    for (std::size_t i = 0; i <= v.size(); ++i) {
      int n = static_cast<int>(v.size());
      int below = static_cast<int>(i);
      int a = below_pos + (n - below - (pos_total - below_pos));  // below -> positive
      int b = (below - below_pos) + (pos_total - below_pos);       // above -> positive
      best = std::max({best, a, b});
      if (i < v.size()) below_pos += v[i].second;
    }
    return static_cast<double>(best) / static_cast<double>(v.size());
  };
  EXPECT_LT(best_threshold_acc([](const FactorVector& f) { return f.size; }), 0.95);
  EXPECT_LT(best_threshold_acc([](const FactorVector& f) { return f.ecc; }), 0.95);
}

TEST(Augment, IdentityAndGroupLaw) {
  auto img = render(centered(2.0, 0.8, 0.5), 16, 16);
  EXPECT_EQ(dihedral(img, 0), img);
  EXPECT_EQ(dihedral(dihedral(img, 1), 1), dihedral(img, 2));
  EXPECT_EQ(dihedral(dihedral(img, 4), 4), img);
}

TEST(Augment, IsotropicCenteredBlobIsFixedByAllTransforms) {
  auto img = render(centered(2.0, 0.0), 16, 16, 0.0);
  for (int t = 0; t < 8; ++t) EXPECT_EQ(dihedral(img, t), img) << t;
}

TEST(Augment, EightTransformsFormTheDihedralOrbit) {
  auto f = centered(2.0, 0.8, 0.5);
  f.dx = 1.0;
  f.dy = -0.5;
  auto img = render(f, 16, 16);
  std::vector<Image> orbit;
  for (int t = 0; t < 8; ++t) orbit.push_back(dihedral(img, t));
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) EXPECT_NE(orbit[a], orbit[b]);
  for (const auto& o : orbit)
    for (int t = 0; t < 8; ++t) EXPECT_NE(std::find(orbit.begin(), orbit.end(), dihedral(o, t)), orbit.end());
  Rng rng(4);
  for (int i = 0; i < 20; ++i)
    EXPECT_NE(std::find(orbit.begin(), orbit.end(), augment(img, rng)), orbit.end());
}

TEST(Augment, NonSquareThrows) {
  Image img{4, 5, std::vector<double>(20, 0.0)};
  EXPECT_THROW(dihedral(img, 1), Error);
}

TEST(Pgm, QuantizedRoundTrip) {
  auto img = render(centered(2.0, 0.3), 16, 16);
  auto back = decode_pgm(encode_pgm(img));
  ASSERT_EQ(back.pixels.size(), img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 65535 + 1e-12);
  EXPECT_EQ(encode_pgm(back), encode_pgm(img));
}

TEST(Dataset, DiskRoundTrip) {
  auto ds = generate_dataset(50, 5);
  auto dir = std::filesystem::temp_directory_path() / "rashomon_synth_rt";
  write_dataset(dir, ds);
  auto back = read_dataset(dir);
  ASSERT_EQ(back.samples.size(), 50u);
  EXPECT_EQ(io::read_file(dir / "factors.csv").substr(0, 48), "id,label,size,ecc,angle,dx,dy,n_neighbors,split\n");
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].test, ds.samples[i].test);
    EXPECT_EQ(back.samples[i].factors.size, ds.samples[i].factors.size);
    EXPECT_EQ(back.samples[i].factors.neighbors.size(), ds.samples[i].factors.neighbors.size());
  }
  std::filesystem::remove_all(dir);
}
