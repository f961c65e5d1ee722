#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "l4/data_io.hpp"
#include "l4/errors.hpp"
#include "l4/problems.hpp"
#include "oracles.hpp"

using namespace l4;

namespace {

Vector random_params(std::size_t n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  Vector p(n);
  for (double& x : p) x = d(rng);
  return p;
}

// W1 W2 - A computed directly from the flat layout.
Matrix residual_matrix(const ConditionedRegression& prob, const Vector& p) {
  const std::size_t m = prob.config().outputs, d = prob.config().inputs;
  const Matrix w1(m, d, Vector(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(m * d)));
  const Matrix w2(d, d, Vector(p.begin() + static_cast<std::ptrdiff_t>(m * d), p.end()));
  Matrix e = matmul(w1, w2);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) e(r, c) -= prob.target()(r, c);
  return e;
}

std::shared_ptr<Dataset> small_data(std::size_t n, std::size_t dim, std::size_t classes,
                                    std::uint64_t seed) {
  return std::make_shared<Dataset>(synthetic_classification(Seed{seed}, n, dim, classes));
}

}  // namespace

TEST(Regression, ParamCounts) {
  EXPECT_EQ(ConditionedRegression(RegressionConfig{}, Seed{1}).param_count(), 96u);
  EXPECT_EQ(ConditionedRegression(RegressionConfig::scaled(2), Seed{1}).param_count(), 192u);
  EXPECT_THROW(RegressionConfig::scaled(3), ContractError);
}

TEST(Regression, OptimumHasZeroLossAndGradient) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const ConditionedRegression prob(RegressionConfig{}, Seed{s});
    const Vector opt = prob.optimum();
    EXPECT_LT(prob.full_loss(opt), 1e-20);
    EXPECT_LT(prob.sample_mean_loss(opt), 1e-20);
    const LossGrad lg = prob.loss_grad(opt, Batch::all());
    for (double g : lg.grad) EXPECT_LT(std::abs(g), 1e-10);
  }
}

TEST(Regression, ZeroFirstFactorGivesSpectrumEnergy) {
  const ConditionedRegression prob(RegressionConfig{}, Seed{2});
  Vector p = random_params(96, 3, 1.0);
  std::fill(p.begin(), p.begin() + 60, 0.0);
  double energy = 0.0;
  for (double s : prob.factors().singular_values) energy += s * s;
  EXPECT_NEAR(prob.frobenius_loss(p), energy, 1e-14);
}

TEST(Regression, FrobeniusIsExpectedSampleLoss) {
  const ConditionedRegression prob(RegressionConfig{}, Seed{4});
  const Vector p = random_params(96, 5, 0.5);
  const Matrix e = residual_matrix(prob, p);
  const Matrix x = gaussian_sample(6, 100000, Seed{1234});
  double sum = 0.0;
  for (std::size_t s = 0; s < x.cols(); ++s) {
    for (std::size_t r = 0; r < e.rows(); ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < e.cols(); ++c) v += e(r, c) * x(c, s);
      sum += v * v;
    }
  }
  const double mc = sum / static_cast<double>(x.cols());
  EXPECT_LT(oracle::rel_diff(prob.frobenius_loss(p), mc), 0.02);
}

TEST(Regression, FullLossMatchesPerSampleMean) {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const ConditionedRegression prob(RegressionConfig::scaled(s % 2 ? 1 : 2), Seed{s});
    const Vector p = random_params(prob.param_count(), s + 10, 0.7);
    EXPECT_LE(oracle::rel_diff(prob.full_loss(p), prob.sample_mean_loss(p)), 1e-12);
    std::vector<std::size_t> all(prob.sample_count());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const LossGrad by_index = prob.loss_grad(p, Batch::of(all));
    const LossGrad full = prob.loss_grad(p, Batch::all());
    EXPECT_LE(oracle::rel_diff(by_index.loss, full.loss), 1e-12);
    EXPECT_LE(oracle::max_relative_error(by_index.grad, full.grad), 1e-12);
  }
}

TEST(Regression, GradientMatchesFiniteDifferences) {
  const ConditionedRegression prob(RegressionConfig{}, Seed{7});
  const std::vector<std::size_t> batch{3, 17, 17, 999, 500};
  for (std::uint64_t point = 0; point < 20; ++point) {
    const Vector p = random_params(96, 100 + point, 0.5);
    const LossGrad full = prob.loss_grad(p, Batch::all());
    const auto fd = oracle::fd_gradient([&](const Vector& x) { return prob.full_loss(x); }, p);
    EXPECT_LT(oracle::max_relative_error(full.grad, fd), 1e-5) << point;
    const LossGrad sub = prob.loss_grad(p, Batch::of(batch));
    const auto fd_sub = oracle::fd_gradient(
        [&](const Vector& x) { return prob.loss_grad(x, Batch::of(batch)).loss; }, p);
    EXPECT_LT(oracle::max_relative_error(sub.grad, fd_sub), 1e-5) << point;
  }
}

TEST(Regression, JacobianMatchesNormalEquations) {
  RegressionConfig cfg;
  cfg.samples = 50;
  const ConditionedRegression prob(cfg, Seed{9});
  const Vector p = random_params(96, 8, 0.3);
  const Matrix j = prob.jacobian(p);
  const Vector r = prob.residuals(p);
  const NormalEquations ne = prob.normal_equations(p);
  const Matrix jtj = matmul_tn(j, j);
  EXPECT_LT(max_abs_diff(jtj, ne.jtj), 1e-12 * (1.0 + std::abs(jtj(0, 0))));
  const Vector jtr = matvec(transpose(j), r);
  EXPECT_LT(oracle::max_relative_error(ne.jtr, jtr), 1e-12);
  // 0.5 |r|^2 is the loss, so J^T r is half its gradient.
  EXPECT_LE(oracle::rel_diff(0.0 + squared_norm(r), prob.full_loss(p)), 1e-12);
  const LossGrad lg = prob.loss_grad(p, Batch::all());
  for (std::size_t i = 0; i < jtr.size(); ++i) EXPECT_NEAR(2.0 * jtr[i], lg.grad[i], 1e-11);
}

TEST(Regression, ErrorPaths) {
  const ConditionedRegression prob(RegressionConfig{}, Seed{1});
  const Vector short_p(10, 0.0);
  EXPECT_THROW(prob.full_loss(short_p), ContractError);
  Vector p(96, 0.0);
  const std::vector<std::size_t> none;
  EXPECT_THROW(prob.loss_grad(p, Batch::of(none)), ContractError);
  const std::vector<std::size_t> out_of_range{1000};
  EXPECT_THROW(prob.loss_grad(p, Batch::of(out_of_range)), ContractError);
  p[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(prob.loss_grad(p, Batch::all()), DivergenceError);
  RegressionConfig bad;
  bad.kappa = 0.1;
  EXPECT_THROW(ConditionedRegression(bad, Seed{1}), ContractError);
}

TEST(Regression, InitialParamsAreSmallAndSeeded) {
  const ConditionedRegression prob(RegressionConfig{}, Seed{1});
  const Vector a = prob.initial_params(Seed{5});
  EXPECT_EQ(a, prob.initial_params(Seed{5}));
  EXPECT_NE(a, prob.initial_params(Seed{6}));
  double sq = 0.0;
  for (double x : a) sq += x * x;
  EXPECT_NEAR(std::sqrt(sq / 96.0), 1e-3, 3e-4);
}

TEST(Mlp, UniformLogitsGiveLogClassCount) {
  auto data = small_data(30, 5, 10, 1);
  const MlpClassifier mlp({5, 7, 10}, data);
  const Vector zeros(mlp.param_count(), 0.0);
  EXPECT_NEAR(mlp.full_loss(zeros), std::log(10.0), 1e-14);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  auto data = small_data(40, 4, 2, 3);
  const MlpClassifier mlp({4, 5, 3, 2}, data);
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> pick(0, 39);
  int checked = 0;
  for (std::uint64_t attempt = 0; checked < 20 && attempt < 1000; ++attempt) {
    const Vector p = random_params(mlp.param_count(), 500 + attempt, 0.8);
    std::vector<std::size_t> batch(8);
    for (auto& b : batch) b = pick(rng);
    bool near_kink = false;
    for (double z : mlp.hidden_preactivations(p, Batch::of(batch))) near_kink |= std::abs(z) < 1e-4;
    if (near_kink) continue;
    const LossGrad lg = mlp.loss_grad(p, Batch::of(batch));
    const auto fd = oracle::fd_gradient(
        [&](const Vector& x) { return mlp.loss_grad(x, Batch::of(batch)).loss; }, p);
    EXPECT_LT(oracle::max_relative_error(lg.grad, fd), 1e-5) << attempt;
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Mlp, DuplicatedBatchLeavesLossAndGradient) {
  auto data = small_data(20, 6, 3, 4);
  const MlpClassifier mlp({6, 8, 3}, data);
  const Vector p = mlp.initial_params(Seed{3});
  const std::vector<std::size_t> once{0, 4, 9, 13};
  const std::vector<std::size_t> twice{0, 4, 9, 13, 0, 4, 9, 13};
  const LossGrad a = mlp.loss_grad(p, Batch::of(once));
  const LossGrad b = mlp.loss_grad(p, Batch::of(twice));
  EXPECT_LE(oracle::rel_diff(a.loss, b.loss), 1e-14);
  EXPECT_LE(oracle::max_relative_error(b.grad, a.grad), 1e-14);
}

TEST(Mlp, LossIsNonNegativeAndAccuracyInRange) {
  auto data = small_data(50, 6, 3, 5);
  const MlpClassifier mlp({6, 8, 3}, data);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector p = random_params(mlp.param_count(), s, 3.0);
    EXPECT_GE(mlp.full_loss(p), 0.0);
    const double acc = mlp.accuracy(p);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
  }
}

TEST(Mlp, ConfidentCorrectLogitsGiveTinyLoss) {
  // One-layer model whose weights make the true class dominate by a wide margin.
  auto data = std::make_shared<Dataset>();
  data->num_classes = 2;
  data->inputs = Matrix(2, 2);
  data->inputs(0, 0) = 1.0;
  data->inputs(1, 1) = 1.0;
  data->labels = {0, 1};
  const MlpClassifier mlp({2, 2}, data);
  const Vector p{40.0, 0.0, 0.0, 40.0, 0.0, 0.0};
  const double loss = mlp.full_loss(p);
  EXPECT_GT(loss, 0.0);
  EXPECT_NEAR(loss, std::exp(-40.0), 1e-30);
  EXPECT_EQ(mlp.accuracy(p), 1.0);
}

TEST(Mlp, ErrorPaths) {
  auto data = small_data(10, 4, 2, 1);
  EXPECT_THROW(MlpClassifier({4}, data), ContractError);
  EXPECT_THROW(MlpClassifier({5, 2}, data), ContractError);
  EXPECT_THROW(MlpClassifier({4, 3}, data), ContractError);
  EXPECT_THROW(MlpClassifier({4, 2}, nullptr), ContractError);
  const MlpClassifier mlp({4, 3, 2}, data);
  Vector p(mlp.param_count(), 0.1);
  const std::vector<std::size_t> none;
  EXPECT_THROW(mlp.loss_grad(p, Batch::of(none)), ContractError);
  p[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(mlp.loss_grad(p, Batch::all()), DivergenceError);
}
