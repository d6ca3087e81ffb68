#include "pwou/sim.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace pwou;

namespace {

PiecewiseOUParams scalar_model(double nu, double alpha, double beta, double sigma2) {
  PiecewiseOUParams m;
  m.alpha = alpha;
  m.beta = beta;
  m.R = Matrix::Constant(1, 1, nu);
  m.p = Vector::Ones(1);
  m.Sigma = Matrix::Constant(1, 1, sigma2);
  return m;
}

double terminal_mean(const PiecewiseOUParams& m, SimConfig cfg) {
  const auto ys = terminal_states(m, cfg);
  double s = 0.0;
  for (const auto& y : ys) s += y(0);
  return s / static_cast<double>(ys.size());
}

}  // namespace

TEST(Simulate, Deterministic) {
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.horizon = 5.0;
  cfg.seed = 99;
  const auto a = simulate(m, cfg, 3, 10), b = simulate(m, cfg, 3, 10);
  ASSERT_EQ(a.y.size(), b.y.size());
  for (std::size_t i = 0; i < a.y.size(); ++i) ASSERT_EQ(a.y[i], b.y[i]);
  const auto c = simulate(m, cfg, 4, 10);
  EXPECT_NE(a.y.back(), c.y.back());
  EXPECT_DOUBLE_EQ(a.t.back(), 5.0);
}

TEST(Simulate, IndependentOfWorkerCount) {
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.horizon = 20.0;
  cfg.replicas = 6;
  cfg.threads = 1;
  const auto s1 = stationary_stats(m, cfg);
  const auto t1 = terminal_states(m, cfg);
  cfg.threads = 4;
  const auto s4 = stationary_stats(m, cfg);
  const auto t4 = terminal_states(m, cfg);
  EXPECT_EQ(s1.mean, s4.mean);
  EXPECT_EQ(s1.covariance, s4.covariance);
  EXPECT_EQ(s1.hist_x.counts, s4.hist_x.counts);
  for (std::size_t i = 0; i < t1.size(); ++i) EXPECT_EQ(t1[i], t4[i]);
}

TEST(Simulate, FluidConvergesToFixedPoint) {
  auto m = scalar_model(1.5, 1.5, 0.6, 0.0);
  m.fluid = true;
  SimConfig cfg;
  cfg.horizon = 30.0;
  cfg.y0 = Vector::Constant(1, 4.0);
  const auto tr = simulate(m, cfg, 0, 1000);
  EXPECT_NEAR(tr.y.back()(0), -0.6 / 1.5, 1e-9);
}

TEST(Simulate, WeakOrderOne) {
  // Exact mean at T = 1 from y0 = 2 is 2 e^{-1}; Euler gives 2 (1 - dt)^{1/dt}.
  const auto m = scalar_model(1.0, 1.0, 0.0, 0.01);
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.replicas = 10000;
  cfg.y0 = Vector::Constant(1, 2.0);
  cfg.dt = 0.1;
  const double bias1 = terminal_mean(m, cfg) - 2.0 * std::exp(-1.0);
  cfg.dt = 0.05;
  const double bias2 = terminal_mean(m, cfg) - 2.0 * std::exp(-1.0);
  EXPECT_LT(bias1, 0.0);
  EXPECT_GT(bias1 / bias2, 1.5);
  EXPECT_LT(bias1 / bias2, 2.5);
}

TEST(Simulate, InputErrors) {
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.replicas = 0;
  EXPECT_THROW(stationary_stats(m, cfg), InvalidInput);
  cfg = {};
  cfg.dt = -1.0;
  EXPECT_THROW(simulate(m, cfg), InvalidInput);
  cfg = {};
  cfg.horizon = 10.0;
  cfg.burn_in = 10.0;
  EXPECT_THROW(simulate(m, cfg), InvalidInput);
  EXPECT_THROW(stationary_stats(gen::hyperexp(0.0, 0.0), SimConfig{}), InvalidInput);
}

TEST(Simulate, OverflowRaises) {
  // dt far beyond 1/nu makes the Euler map expansive.
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.dt = 10.0;
  cfg.horizon = 1e4;
  cfg.y0 = Vector::Constant(2, 1.0);
  EXPECT_THROW(simulate(m, cfg, 0, 1000), NumericError);
}

TEST(Stationary, ScalarOrnsteinUhlenbeck) {
  const auto m = scalar_model(1.0, 1.0, 0.0, 2.0);
  SimConfig cfg;
  cfg.horizon = 400.0;
  cfg.replicas = 16;
  cfg.dt = 2e-3;
  const auto st = stationary_stats(m, cfg);
  EXPECT_NEAR(st.mean(0), 0.0, 5.0 * st.mean_se(0));
  EXPECT_NEAR(st.covariance(0, 0), 1.0, 5.0 * st.variance_se(0) + 2e-3);
  EXPECT_GE(st.mean_se(0), 0.0);
  EXPECT_TRUE(st.covariance.allFinite());
  EXPECT_EQ(st.batches_total, 16 * 20);
}

TEST(Stationary, HyperexpSeedsAgree) {
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.horizon = 300.0;
  cfg.replicas = 8;
  cfg.seed = 1;
  const auto a = stationary_stats(m, cfg);
  cfg.seed = 2;
  const auto b = stationary_stats(m, cfg);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const double pooled = std::hypot(a.mean_se(i), b.mean_se(i));
    EXPECT_LT(std::abs(a.mean(i) - b.mean(i)), 4.0 * pooled);
  }
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(a.covariance).eigenvalues().minCoeff(), 0.0);
}

TEST(Hitting, InsideBallIsZero) {
  const auto m = gen::hyperexp(1.0, 0.5);
  const auto h = hitting_time(m, Vector::Zero(2), 1.0, SimConfig{});
  EXPECT_EQ(h.mean, 0.0);
  EXPECT_EQ(h.censored, 0);
}

TEST(Hitting, ScalarTwoDiscretizations) {
  const auto m = scalar_model(1.0, 1.0, 0.0, 2.0);
  SimConfig cfg;
  cfg.replicas = 2000;
  cfg.dt = 2e-3;
  const auto a = hitting_time(m, Vector::Constant(1, 5.0), 1.0, cfg, 100.0);
  cfg.dt = 1e-3;
  cfg.seed = 2;
  const auto b = hitting_time(m, Vector::Constant(1, 5.0), 1.0, cfg, 100.0);
  EXPECT_EQ(a.censored, 0);
  EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.se, b.se) + 0.02);
}

TEST(Hitting, HyperexpFinite) {
  const auto m = gen::hyperexp(1.0, 0.5);
  SimConfig cfg;
  cfg.replicas = 200;
  Vector y0(2);
  y0 << 10.0 / std::sqrt(2.0), 10.0 / std::sqrt(2.0);
  const auto h = hitting_time(m, y0, 1.0, cfg, 200.0);
  EXPECT_LT(h.censor_fraction, 0.01);
  EXPECT_TRUE(std::isfinite(h.mean));
}

TEST(Ergodicity, StartsNearOneAndNoiseFloorShrinks) {
  const auto m = scalar_model(1.0, 1.0, 0.0, 2.0);
  SimConfig cfg;
  cfg.dt = 5e-3;
  cfg.y0 = Vector::Constant(1, 10.0);
  ErgodicityOptions opt;
  opt.horizon = 15.0;
  opt.bins = 20;
  opt.replicas = 500;
  const auto small = ergodicity_diagnostic(m, cfg, opt);
  opt.replicas = 4000;
  const auto big = ergodicity_diagnostic(m, cfg, opt);
  EXPECT_GT(small.distance.front(), 0.99);
  EXPECT_LT(big.noise_floor, small.noise_floor);
  // ~1/sqrt(replicas): a factor 8 in replicas should give roughly 2.8.
  EXPECT_GT(small.noise_floor / big.noise_floor, 1.8);
  EXPECT_TRUE(big.fit_ok);
  EXPECT_LT(big.slope, 0.0);

  opt.replicas = 100;
  EXPECT_THROW(ergodicity_diagnostic(m, cfg, opt), InvalidInput);
}
