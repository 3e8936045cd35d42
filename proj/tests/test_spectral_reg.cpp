#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dkm/cluster.hpp"
#include "dkm/error.hpp"
#include "dkm/linalg.hpp"
#include "dkm/reshape.hpp"
#include "dkm/spectral_reg.hpp"
#include "test_util.hpp"

using namespace dkm;

namespace {

OrthonormalFactor factor(Matrix m) { return OrthonormalFactor(std::move(m)); }

Matrix indicator(const std::vector<std::uint32_t>& a, std::size_t k) {
  std::vector<double> counts(k, 0.0);
  for (auto c : a) counts[c] += 1.0;
  Matrix f(a.size(), k);
  for (std::size_t j = 0; j < a.size(); ++j) f(j, a[j]) = 1.0 / std::sqrt(counts[a[j]]);
  return f;
}

double half_penalty(const Matrix& w, const OrthonormalFactor& f, double lambda) {
  return 0.5 * lambda * penalty(w, f);
}

}  // namespace

TEST(OrthonormalFactor, Validates) {
  EXPECT_THROW(OrthonormalFactor(Matrix(3, 0)), ContractError);
  EXPECT_THROW(OrthonormalFactor(Matrix::from_rows({{1, 1}, {0, 1}})), ContractError);
  EXPECT_NO_THROW(OrthonormalFactor(Matrix::identity(3)));
}

TEST(Penalty, IdentityWithOneVector) {
  EXPECT_NEAR(penalty(Matrix::identity(2), factor(Matrix::from_rows({{1}, {0}}))), 1.0, 1e-15);
}

TEST(Penalty, FullRowSpaceGivesZero) {
  std::mt19937_64 rng(1);
  const auto w = test::random_matrix(3, 12, rng);
  const auto f = update_f(w, 3);
  EXPECT_NEAR(penalty(w, f), 0.0, 1e-8);
}

TEST(Penalty, NonNegativeForRandomF) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto w = test::random_matrix(4, 20, rng);
    EXPECT_GE(penalty(w, factor(test::random_orthonormal(20, 1 + t % 6, rng))), -1e-8);
  }
}

TEST(Penalty, DimensionMismatchThrows) {
  EXPECT_THROW(penalty(Matrix(2, 3), factor(Matrix::identity(4))), ContractError);
}

TEST(Penalty, IndicatorGivesWithinClusterSumOfSquares) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto w = test::random_matrix(3, 15, rng);
    const auto cb = kmeans(w, 4, {.seed = static_cast<std::uint64_t>(t)});
    EXPECT_NEAR(penalty(w, factor(indicator(cb.assignments, 4))), cb.inertia, 1e-8 * std::max(1.0, cb.inertia));
  }
}

TEST(RegGradient, ZeroCases) {
  std::mt19937_64 rng(4);
  const auto w = test::random_matrix(3, 9, rng);
  const auto g = reg_gradient(w, update_f(w, 5), 0.5);
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-10);
  const auto g0 = reg_gradient(w, factor(test::random_orthonormal(9, 2, rng)), 0.0);
  for (double v : g0.data()) EXPECT_EQ(v, 0.0);
}

TEST(RegGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto w = test::random_matrix(3, 7, rng);
  const auto f = factor(test::random_orthonormal(7, 2, rng));
  const double lambda = 0.3, h = 1e-5;
  const auto g = reg_gradient(w, f, lambda);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w.data()[i];
    w.data()[i] = saved + h;
    const double up = half_penalty(w, f, lambda);
    w.data()[i] = saved - h;
    const double down = half_penalty(w, f, lambda);
    w.data()[i] = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_LE(std::abs(fd - g.data()[i]), 1e-6 * std::max(std::abs(g.data()[i]), 1e-3));
  }
}

TEST(UpdateF, HandExample) {
  const auto w = Matrix::from_rows({{3, 0, 0}, {0, 1, 0}});
  const auto f = update_f(w, 1);
  ASSERT_EQ(f.width(), 1u);
  EXPECT_NEAR(std::abs(f.columns()(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(penalty(w, f), 1.0, 1e-12);
}

TEST(UpdateF, KAtLeastSCapturesEverything) {
  std::mt19937_64 rng(6);
  const auto w = test::random_matrix(5, 40, rng);
  const auto f = update_f(w, 12);
  EXPECT_EQ(f.width(), 5u);
  EXPECT_NEAR(penalty(w, f), 0.0, 1e-8);
}

TEST(UpdateF, KyFanOptimalAgainstRandomF) {
  std::mt19937_64 rng(7);
  const auto w = test::random_matrix(5, 30, rng);
  const auto f = update_f(w, 2);
  const auto svd = truncated_svd(w, 5);
  const double tail = svd.singular_values[2] * svd.singular_values[2] + svd.singular_values[3] * svd.singular_values[3] +
                      svd.singular_values[4] * svd.singular_values[4];
  const double best = penalty(w, f);
  EXPECT_NEAR(best, tail, 1e-8);
  for (int t = 0; t < 100; ++t) EXPECT_LE(best, penalty(w, factor(test::random_orthonormal(30, 2, rng))) + 1e-12);
}

TEST(UpdateF, ZeroMatrixFallsBackToFirstBasisVector) {
  const auto f = update_f(Matrix(3, 6), 2);
  EXPECT_EQ(f.width(), 1u);
  EXPECT_EQ(f.columns()(0, 0), 1.0);
}

TEST(RegConfig, Bounds) {
  RegConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c.lambda = 1e-8;
  EXPECT_THROW(c.validate(), ContractError);
  c.lambda = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.refresh_every_epochs = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Hook, MissingLayerIsConfigError) {
  const auto arch = lenet5();
  RegConfig c;
  c.per_layer_k[0] = 4;
  EXPECT_THROW(make_hook(c, arch), ConfigError);
}

TEST(Hook, FactorWidthBoundedByFilterSide) {
  const Architecture arch({1, 8, 8}, {LayerSpec::conv(5, 1, 6), LayerSpec::fc(96, 2), LayerSpec::softmax_xent()});
  auto model = init_model(arch, 1);
  for (std::size_t k : {3u, 5u, 25u}) {
    RegConfig c;
    c.per_layer_k[0] = k;
    auto hook = make_hook(c, arch);
    hook->on_epoch_begin(0, model);
    EXPECT_EQ(hook->factor(0).width(), std::min<std::size_t>(k, 5));
  }
}

TEST(Hook, RefreshScheduleIsLazy) {
  const Architecture arch({1, 8, 8}, {LayerSpec::conv(3, 1, 4), LayerSpec::fc(144, 2), LayerSpec::softmax_xent()});
  auto model = init_model(arch, 2);
  RegConfig c;
  c.per_layer_k[0] = 2;
  c.refresh_every_epochs = 5;
  auto hook = make_hook(c, arch);
  for (std::size_t e = 0; e < 12; ++e) {
    hook->on_epoch_begin(e, model);
    EXPECT_EQ(hook->factor(0).source_epoch(), e / 5 * 5);
  }
}

TEST(Hook, PenaltyDescendsUnderRegularizerOnly) {
  // Frozen task gradient: only the regulariser moves the weights.
  const Architecture arch({1, 8, 8}, {LayerSpec::conv(5, 1, 6), LayerSpec::fc(96, 2), LayerSpec::softmax_xent()});
  auto model = init_model(arch, 3);
  RegConfig c;
  c.lambda = 1e-1;
  c.refresh_every_epochs = 1;
  c.per_layer_k[0] = 2;
  auto hook = make_hook(c, arch);
  TrainConfig cfg;
  cfg.momentum = 0.0;
  MomentumState st;
  Gradients zero;
  for (const auto& l : model.layers())
    zero.layers.push_back({std::vector<double>(l.weights.size()), std::vector<double>(l.bias.size())});

  std::vector<double> per_epoch;
  for (std::size_t e = 0; e < 8; ++e) {
    hook->on_epoch_begin(e, model);
    for (int step = 0; step < 10; ++step) {
      ExtraGradients extra(model.layers().size());
      hook->extra_gradients(model, extra);
      sgd_step(model, zero, &extra, cfg, 0.5, st);
    }
    per_epoch.push_back(hook->penalties(model)[0]);
  }
  for (std::size_t e = 1; e < per_epoch.size(); ++e) EXPECT_LT(per_epoch[e], per_epoch[e - 1]);
}

TEST(Hook, PenaltyNonIncreasingOverTenStepsWithFixedF) {
  std::mt19937_64 rng(8);
  auto w = test::random_matrix(3, 20, rng);
  const auto f = factor(test::random_orthonormal(20, 2, rng));
  const double lambda = 1e-1, lr = 0.01, mu = 0.9;
  Matrix v(3, 20);
  double prev = penalty(w, f);
  for (int step = 0; step < 10; ++step) {
    const auto g = reg_gradient(w, f, lambda);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v.data()[i] = mu * v.data()[i] + g.data()[i];
      w.data()[i] -= lr * v.data()[i];
    }
    const double now = penalty(w, f);
    EXPECT_LE(now, prev + 1e-15);
    prev = now;
  }
}

TEST(Hook, ExtraGradientMatchesReshapedRegGradient) {
  const Architecture arch({2, 7, 7}, {LayerSpec::conv(3, 2, 4), LayerSpec::fc(100, 2), LayerSpec::softmax_xent()});
  auto model = init_model(arch, 4);
  RegConfig c;
  c.lambda = 1e-2;
  c.per_layer_k[0] = 2;
  auto hook = make_hook(c, arch);
  hook->on_epoch_begin(0, model);
  // Move W off the captured subspace so the gradient is non-trivial.
  auto& w = model.layer(0).weights;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 1.0 + 0.1 * static_cast<double>(i % 3);
  ExtraGradients extra(model.layers().size());
  hook->extra_gradients(model, extra);
  const auto expected = unreshape_rows(reg_gradient(reshape_rows(model.conv_tensor(0)), hook->factor(0), 1e-2),
                                       model.conv_dims(0));
  ASSERT_EQ(extra[0].size(), expected.data().size());
  for (std::size_t i = 0; i < extra[0].size(); ++i) EXPECT_DOUBLE_EQ(extra[0][i], expected.data()[i]);
  EXPECT_TRUE(extra[1].empty());
}
