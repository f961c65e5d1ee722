#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "l4/errors.hpp"
#include "l4/l4.hpp"
#include "oracles.hpp"

using namespace l4;

namespace {

L4Config mom_config() {
  L4Config c;
  c.flavor = Flavor::Mom;
  return c;
}

// sum_i c_i x_i^2
struct Bowl {
  std::vector<double> curv;
  double loss(const Vector& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += curv[i] * x[i] * x[i];
    return s;
  }
  Vector grad(const Vector& x) const {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * curv[i] * x[i];
    return g;
  }
};

}  // namespace

TEST(L4Init, ExamplesFromDefaults) {
  L4Optimizer opt(L4Config{}, 1);
  opt.init(1.0);
  EXPECT_EQ(opt.lmin(), 0.75);
  opt.init(0.0);
  EXPECT_EQ(opt.lmin(), 0.0);
  L4Config c;
  c.gamma0 = 1.0;
  L4Optimizer full(c, 1);
  full.init(3.25);
  EXPECT_EQ(full.lmin(), 3.25);
}

TEST(L4Init, RejectsBadLoss) {
  L4Optimizer opt(L4Config{}, 1);
  EXPECT_THROW(opt.init(-1.0), ContractError);
  EXPECT_THROW(opt.init(std::numeric_limits<double>::infinity()), DivergenceError);
  EXPECT_FALSE(opt.initialized());
}

TEST(L4Config, Validation) {
  auto bad = [](auto mutate) {
    L4Config c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(L4Optimizer(bad([](L4Config& c) { c.alpha = 0; }), 1), ContractError);
  EXPECT_THROW(L4Optimizer(bad([](L4Config& c) { c.gamma = 1.5; }), 1), ContractError);
  EXPECT_THROW(L4Optimizer(bad([](L4Config& c) { c.gamma0 = 0; }), 1), ContractError);
  EXPECT_THROW(L4Optimizer(bad([](L4Config& c) { c.tau = 0.5; }), 1), ContractError);
  EXPECT_THROW(L4Optimizer(bad([](L4Config& c) { c.epsilon = 0; }), 1), ContractError);
}

TEST(L4Step, HandEvaluatedStep) {
  // gamma0 = 0.5 with first loss 1.0 puts the prior minimum at exactly 0.5.
  L4Config c = mom_config();
  c.gamma0 = 0.5;
  L4Optimizer opt(c, 1);
  opt.init(1.0);
  Vector theta{0.0};
  const Vector grad{2.0};
  const StepRecord rec = opt.step(1.0, grad, theta);
  EXPECT_EQ(rec.gv, 4.0);
  EXPECT_EQ(rec.lmin_used, 0.45);
  const double eta = 0.15 * (1.0 - 0.45) / (4.0 + 1e-12);  // ~0.020625
  EXPECT_NEAR(rec.eta, eta, 1e-16);
  EXPECT_NEAR(effective_lr(rec), eta, 1e-16);
  EXPECT_NEAR(theta[0], -2.0 * eta, 1e-16);
  EXPECT_NEAR(opt.lmin(), 0.5 * 1.001, 1e-15);
}

TEST(L4Step, ZeroLossGivesZeroStep) {
  for (Flavor f : {Flavor::Mom, Flavor::Adam}) {
    L4Config c;
    c.flavor = f;
    L4Optimizer opt(c, 3);
    opt.init(0.4);
    Vector theta{1.0, -2.0, 3.0};
    const Vector before = theta;
    const Vector grad{0.3, 0.1, -0.2};
    const StepRecord rec = opt.step(0.0, grad, theta);
    EXPECT_EQ(rec.eta, 0.0);
    EXPECT_EQ(theta, before);
    EXPECT_EQ(opt.lmin(), 0.0);
  }
}

TEST(L4Step, FirstStepInitializesFromLoss) {
  L4Optimizer opt(mom_config(), 1);
  Vector theta{0.0};
  const Vector grad{1.0};
  const StepRecord rec = opt.step(2.0, grad, theta);
  EXPECT_TRUE(opt.initialized());
  EXPECT_EQ(rec.lmin_used, 0.9 * 1.5);
}

TEST(L4Rule, DirectionMagnitudeIndependence) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vector g(8), v(8);
    for (int i = 0; i < 8; ++i) {
      g[i] = n(rng);
      v[i] = g[i] + 0.3 * n(rng);
    }
    const double gv = dot(g, v);
    if (gv <= 0.0) continue;
    const double c = std::exp(4.0 * n(rng));
    const double eta1 = linearized_stepsize(0.15, 2.0, 0.9, gv, 0.0);
    const double eta2 = linearized_stepsize(0.15, 2.0, 0.9, c * gv, 0.0);
    for (int i = 0; i < 8; ++i) EXPECT_LE(oracle::rel_diff(eta1 * v[i], eta2 * c * v[i]), 1e-9);
  }
}

TEST(L4Rule, InverseProportionalToInnerProduct) {
  const double num_eta = linearized_stepsize(0.2, 1.0, 0.5, 1.0, 0.0);
  for (double gv : {1e-6, 1e-3, 0.5, 10.0, 1e5}) {
    EXPECT_LE(oracle::rel_diff(linearized_stepsize(0.2, 1.0, 0.5, gv, 0.0) * gv, num_eta), 1e-12);
  }
}

TEST(L4Rule, AffineInvarianceWithTransformedMinimum) {
  // L' = a L + b with the target transformed the same way leaves the step unchanged.
  const double alpha = 0.15, loss = 3.0, target = 1.2, gv = 0.7;
  const double base = linearized_stepsize(alpha, loss, target, gv, 0.0);
  for (double a : {0.01, 2.0, 100.0}) {
    for (double b : {0.0, 0.5, 10.0}) {
      const double eta = linearized_stepsize(alpha, a * loss + b, a * target + b, a * a * gv, 0.0);
      // Gradients scale by a, so v scales by a and the step eta * v by a * eta.
      EXPECT_LE(oracle::rel_diff(a * eta, base), 1e-12) << a << " " << b;
    }
  }
}

TEST(L4Step, PlateauStepGrowsAsGradientShrinks) {
  // Constant loss, constant gradient: eta * gv stays fixed at alpha (L - gamma Lmin).
  L4Config c = mom_config();
  c.epsilon = 1e-300;
  for (double gscale : {1e-1, 1e-3, 1e-5}) {
    L4Optimizer opt(c, 2);
    Vector theta{0.0, 0.0};
    const Vector grad{gscale, -gscale};
    const StepRecord rec = opt.step(1.0, grad, theta);
    EXPECT_LE(oracle::rel_diff(rec.eta * rec.gv, 0.15 * (1.0 - 0.9 * 0.75)), 1e-12);
  }
}

TEST(L4Step, LminFollowsClosedFormAndEtaIsNonNegative) {
  // Unrolled: lmin_t = min(gamma0 L_1 r^t, min_s L_s r^(t - s + 1)) with r = 1 + 1/tau.
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Flavor f : {Flavor::Mom, Flavor::Adam}) {
    L4Config c;
    c.flavor = f;
    c.tau = 50.0;
    const double r = 1.0 + 1.0 / c.tau;
    L4Optimizer opt(c, 4);
    Vector theta{1, 1, 1, 1};
    std::vector<double> losses;
    for (int t = 1; t <= 500; ++t) {
      const double loss = 0.1 + u(rng) * std::exp(-t / 100.0);
      losses.push_back(loss);
      Vector grad{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
      const StepRecord rec = opt.step(loss, grad, theta);
      EXPECT_GE(rec.eta, 0.0);
      EXPECT_GE(rec.gv, 0.0);
      double expected = c.gamma0 * losses[0] * std::pow(r, t);
      double seen_min = losses[0];
      for (int s = 1; s <= t; ++s) {
        expected = std::min(expected, losses[s - 1] * std::pow(r, t - s + 1));
        seen_min = std::min(seen_min, losses[s - 1]);
      }
      EXPECT_LE(oracle::rel_diff(opt.lmin(), expected), 1e-12) << t;
      EXPECT_GE(opt.lmin(), std::min(c.gamma0 * losses[0], seen_min));
    }
  }
}

TEST(L4Step, LminNeverFallsBelowSmallestLossOnceReached) {
  L4Optimizer opt(mom_config(), 1);
  Vector theta{0.0};
  const Vector grad{1.0};
  opt.step(1.0, grad, theta);  // lmin 0.75 -> forgetting
  for (int t = 0; t < 400; ++t) opt.step(0.5, grad, theta);
  EXPECT_GE(opt.lmin(), 0.5);
}

TEST(L4Step, ScaledLossStreamGivesSameTrajectory) {
  const Bowl bowl{{1.0, 0.1, 0.01, 5.0}};
  for (Flavor f : {Flavor::Mom, Flavor::Adam}) {
    for (double a : {0.01, 100.0}) {
      L4Config c;
      c.flavor = f;
      c.alpha = 0.1;
      c.epsilon = 1e-300;
      c.directions.denominator_guard = 0.0;
      L4Optimizer plain(c, 4), scaled(c, 4);
      Vector x{1.0, -2.0, 0.5, 0.3}, y = x;
      for (int t = 0; t < 300; ++t) {
        const Vector gx = bowl.grad(x);
        Vector gy = bowl.grad(y);
        for (double& v : gy) v *= a;
        plain.step(bowl.loss(x), gx, x);
        scaled.step(a * bowl.loss(y), gy, y);
        for (int i = 0; i < 4; ++i) ASSERT_LE(oracle::rel_diff(x[i], y[i]), 1e-9) << t;
      }
    }
  }
}

TEST(L4Step, DivergenceErrorsCarryStep) {
  L4Optimizer opt(mom_config(), 2);
  Vector theta{0.0, 0.0};
  const Vector grad{1.0, 1.0};
  opt.step(1.0, grad, theta);
  opt.step(0.9, grad, theta);
  try {
    opt.step(std::numeric_limits<double>::quiet_NaN(), grad, theta);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 3u);
    EXPECT_EQ(e.last_finite_loss(), 0.9);
  }
  const Vector bad{std::numeric_limits<double>::infinity(), 0.0};
  EXPECT_THROW(opt.step(0.5, bad, theta), DivergenceError);
  EXPECT_THROW(opt.step(-0.1, grad, theta), ContractError);
  Vector short_params{0.0};
  EXPECT_THROW(opt.step(0.5, grad, short_params), ContractError);
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(L4Step, OverflowingStepIsReportedAsDivergence) {
  L4Config c = mom_config();
  c.alpha = 1e300;
  L4Optimizer opt(c, 1);
  Vector theta{0.0};
  const Vector grad{1e-300};
  EXPECT_THROW(opt.step(1e300, grad, theta), DivergenceError);
}

TEST(L4Step, ConvergesOnQuadratic) {
  const Bowl bowl{{1.0, 0.5, 2.0}};
  for (Flavor f : {Flavor::Mom, Flavor::Adam}) {
    L4Config c;
    c.flavor = f;
    L4Optimizer opt(c, 3);
    Vector x{1.0, 1.0, 1.0};
    const double start = bowl.loss(x);
    for (int t = 0; t < 2000; ++t) opt.step(bowl.loss(x), bowl.grad(x), x);
    EXPECT_LT(bowl.loss(x), 1e-6 * start) << to_string(f);
  }
}
