#include <gtest/gtest.h>

#include <cmath>

#include "rashomon/autodiff/graph.hpp"
#include "rashomon/common/error.hpp"
#include "support/random_graph.hpp"

using namespace rashomon;
using namespace rashomon::ad;

TEST(Forward, IdentityAffine) {
  Graph g;
  auto x = g.placeholder("x", {1, 2});
  Parameter w("w", Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Parameter b("b", Tensor::vector({0, 0}));
  g.add_bias(g.matmul(x, g.parameter(w)), g.parameter(b));
  auto y = g.forward({Tensor::matrix(1, 2, {2, 3})});
  EXPECT_EQ(y.data(), (std::vector<double>{2, 3}));
}

TEST(Forward, ScaleShift) {
  Graph g;
  auto x = g.placeholder("x", {1});
  g.shift(g.scale(x, 2.0), 1.0);
  EXPECT_EQ(g.forward({Tensor::vector({3})}).item(), 7.0);
}

TEST(Forward, MishAtZero) {
  Graph g;
  g.mish(g.placeholder("x", {1}));
  EXPECT_EQ(g.forward({Tensor::vector({0})}).item(), 0.0);
}

TEST(Forward, ShapeMismatchNamesNode) {
  Graph g;
  auto x = g.placeholder("x", {0, 3});
  Parameter w("enc1.w", Tensor({4, 2}));
  g.matmul(x, g.parameter(w), "enc1");
  try {
    g.forward({Tensor({5, 3})});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("enc1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos) << e.what();
  }
  EXPECT_THROW(g.forward({Tensor({5, 4, 1})}), ShapeError);
}

TEST(Forward, DynamicBatchDimension) {
  Graph g;
  auto x = g.placeholder("x", {0, 2});
  g.sum(x);
  EXPECT_EQ(g.forward({Tensor({7, 2}, 1.0)}).item(), 14.0);
  EXPECT_EQ(g.forward({Tensor({2, 2}, 1.0)}).item(), 4.0);
}

TEST(Backward, Square) {
  Graph g;
  auto x = g.placeholder("x", {1});
  g.square(x);
  g.forward({Tensor::vector({3})});
  g.backward();
  EXPECT_EQ(g.grad(x)[0], 6.0);
}

TEST(Backward, MishMatchesCentralDifference) {
  Graph g;
  auto x = g.placeholder("x", {1});
  g.mish(x);
  g.forward({Tensor::vector({1.0})});
  g.backward();
  const double h = 1e-5;
  const double numeric = (mish(1.0 + h) - mish(1.0 - h)) / (2 * h);
  EXPECT_NEAR(g.grad(x)[0], numeric, 1e-6 * std::abs(numeric));
}

TEST(Backward, HingeActiveSide) {
  Graph g;
  auto y = g.placeholder("y", {1});
  auto t = g.constant(Tensor::vector({1.0}));
  g.hinge(y, t);
  g.forward({Tensor::vector({0.5})});
  g.backward();
  EXPECT_EQ(g.grad(y)[0], -1.0);
}

TEST(Backward, HingeBoundaryTakesActiveSide) {
  Graph g;
  auto y = g.placeholder("y", {1});
  g.hinge(y, g.constant(Tensor::vector({-1.0})));
  g.forward({Tensor::vector({-1.0})});
  g.backward();
  EXPECT_EQ(g.grad(y)[0], 1.0);
  g.forward({Tensor::vector({-1.5})});
  g.backward();
  EXPECT_EQ(g.grad(y)[0], 0.0);
}

TEST(Backward, BeforeForwardThrows) {
  Graph g;
  g.square(g.placeholder("x", {1}));
  EXPECT_THROW(g.backward(), Error);
}

TEST(Backward, NonScalarRootThrows) {
  Graph g;
  g.square(g.placeholder("x", {2}));
  g.forward({Tensor::vector({1, 2})});
  EXPECT_THROW(g.backward(), ShapeError);
}

TEST(Backward, ParameterGradAccumulates) {
  Graph g;
  auto x = g.placeholder("x", {1, 2});
  Parameter w("w", Tensor::matrix(2, 1, {0.5, -1.0}));
  g.sum(g.matmul(x, g.parameter(w)));
  g.forward({Tensor::matrix(1, 2, {3, 4})});
  g.backward();
  EXPECT_EQ(w.grad.data(), (std::vector<double>{3, 4}));
  g.backward();
  EXPECT_EQ(w.grad.data(), (std::vector<double>{6, 8}));
}

TEST(Mish, ReferenceValues) {
  EXPECT_EQ(mish(0.0), 0.0);
  EXPECT_NEAR(mish(1.0), 0.86509, 1e-4);
  EXPECT_NEAR(mish(-20.0), -4.1e-8, 1e-9);
}

TEST(Mish, ApproachesIdentityForLargeInputs) {
  for (double x = 20.5; x < 800.0; x *= 1.7) EXPECT_LT(std::abs(mish(x) - x), 1e-6) << x;
  EXPECT_TRUE(std::isfinite(mish(1e6)));
  EXPECT_TRUE(std::isfinite(mish(-1e6)));
}

TEST(BatchNormInfer, Examples) {
  BatchNormState s("bn", 1, 0.0);
  EXPECT_EQ(batchnorm_infer(std::vector<double>{1.7}, s)[0], 1.7);
  s.running_mean = {1.0};
  s.running_var = {1.0};
  s.gamma.value[0] = 2.0;
  s.beta.value[0] = 1.0;
  EXPECT_EQ(batchnorm_infer(std::vector<double>{2.0}, s)[0], 3.0);
  s.gamma.value[0] = -7.3;
  EXPECT_EQ(batchnorm_infer(std::vector<double>{1.0}, s)[0], 1.0);
}

TEST(BatchNormGraph, InferenceMatchesStandalone) {
  BatchNormState s("bn", 3, 1e-5);
  s.running_mean = {0.1, -0.2, 0.3};
  s.running_var = {1.5, 0.5, 2.0};
  s.gamma.value = Tensor::vector({1.1, 0.9, -0.4});
  s.beta.value = Tensor::vector({0.0, 0.2, 0.5});
  Graph g;
  g.batchnorm(g.placeholder("x", {1, 3}), s);
  auto y = g.forward({Tensor::matrix(1, 3, {0.3, 0.7, -1.0})});
  auto ref = batchnorm_infer(std::vector<double>{0.3, 0.7, -1.0}, s);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], ref[i]);
}

TEST(BatchNormGraph, TrainingModeGradient) {
  Rng rng(3);
  BatchNormState s("bn", 2);
  s.gamma.value = Tensor::vector({1.3, -0.7});
  Graph g;
  g.set_training(true);
  auto x = g.placeholder("x", {4, 2});
  g.weighted_sum(g.batchnorm(x, s), {0.3, -1.2, 0.5, 2.0, -0.4, 0.9, 1.1, 0.2});
  g.forward({Tensor({4, 2})});
  EXPECT_LT(grad_check(g, x, 1e-5, rng), 1e-6);
}

TEST(Adam, ZeroGradientLeavesValues) {
  Parameter p("p", Tensor::vector({1.0, -2.0}));
  Adam opt({&p}, 1e-3);
  opt.step();
  EXPECT_EQ(p.value.data(), (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, MaskedEntryStaysZero) {
  Parameter p("p", Tensor::vector({0.5, 0.5}));
  p.mask = Tensor::vector({1.0, 0.0});
  p.apply_mask();
  Adam opt({&p}, 1e-1);
  for (int i = 0; i < 5; ++i) {
    p.grad = Tensor::vector({1.0, 4.0});
    opt.step();
    EXPECT_EQ(p.value[1], 0.0);
  }
  EXPECT_LT(p.value[0], 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat / sqrt(v_hat) = g / |g| = 1 after bias correction.
  Parameter p("p", Tensor::vector({2.0}));
  p.grad = Tensor::vector({1.0});
  Adam opt({&p}, 1e-3);
  opt.step();
  EXPECT_NEAR(2.0 - p.value[0], 1e-3, 1e-10);
}

TEST(Adam, DecoupledDecayWithZeroGradient) {
  Parameter p("p", Tensor::vector({2.0, 0.0}));
  AdamHyper h;
  h.weight_decay = 0.5;
  Adam opt({&p}, 0.1, h);
  opt.step();
  EXPECT_NEAR(p.value[0], 2.0 * (1.0 - 0.05), 1e-12);
  EXPECT_EQ(p.value[1], 0.0);
}

TEST(GradCheck, AffineMishStack) {
  Rng rng(11);
  Graph g;
  auto x = g.placeholder("x", {2, 3});
  Parameter w1("w1", glorot_uniform(3, 4, rng));
  Parameter b1("b1", Tensor::vector({0.1, -0.2, 0.3, 0.0}));
  Parameter w2("w2", glorot_uniform(4, 1, rng));
  g.sum(g.matmul(g.mish(g.add_bias(g.matmul(x, g.parameter(w1)), g.parameter(b1))), g.parameter(w2)));
  EXPECT_LT(grad_check(g, x, 1e-5, rng), 1e-4);
}

TEST(GradCheck, LinearGraphIsExact) {
  Rng rng(5);
  Graph g;
  auto x = g.placeholder("x", {1, 3});
  Parameter w("w", Tensor::matrix(3, 1, {0.7, -1.3, 2.1}));
  g.sum(g.shift(g.matmul(x, g.parameter(w)), 0.25));
  EXPECT_LT(grad_check(g, x, 1e-5, rng), 1e-10);
}

TEST(GradCheck, HingeAwayFromKink) {
  // With target 1, points with y > 1 sit on the flat side and points with
  // y < 1 on the active side; y = 1 itself is never sampled.
  Graph g;
  auto y = g.placeholder("y", {3});
  g.hinge(y, g.constant(Tensor::vector({1.0, 1.0, 1.0})));
  g.forward({Tensor::vector({0.2, 1.0 + 1e-5 * 10, 2.5})});
  EXPECT_LT(grad_check_here(g, y, 1e-5), 1e-8);
}

TEST(Invariants, RandomGraphsMatchFiniteDifferences) {
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    auto rg = test_support::make_random_graph(rng);
    double err = grad_check(*rg.graph, rg.input, 1e-5, rng, 2);
    EXPECT_LT(err, 1e-4) << "graph " << i;
  }
}

TEST(Invariants, ForwardDeterministicWithoutDropout) {
  Rng rng(9);
  auto rg = test_support::make_random_graph(rng);
  Tensor x({3, 4});
  for (auto& v : x.values()) v = normal(rng);
  double a = rg.graph->forward({x}).item();
  double b = rg.graph->forward({x}).item();
  EXPECT_EQ(a, b);
}

TEST(Dropout, InvertedScalingAndInferenceIdentity) {
  Graph g(1);
  auto x = g.placeholder("x", {1, 1000});
  g.sum(g.dropout(x, 0.3));
  Tensor ones({1, 1000}, 1.0);
  EXPECT_EQ(g.forward({ones}).item(), 1000.0);
  g.set_training(true);
  double s = g.forward({ones}).item();
  EXPECT_NEAR(s, 1000.0, 100.0);
  EXPECT_NE(s, 1000.0);
}
