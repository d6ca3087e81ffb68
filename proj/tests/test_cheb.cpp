#include "pwou/cheb.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace pwou;
using namespace pwou::cheb;

TEST(ChebU, Values) {
  for (double z : {-1.0, -0.3, 0.0, 0.7, 1.0}) EXPECT_EQ(cheb_u(0, z), 1.0);
  EXPECT_NEAR(cheb_u(1, std::cos(std::numbers::pi / 3.0)), 1.0, 1e-15);
  EXPECT_EQ(cheb_u(3, 1.0), 4.0);
  EXPECT_EQ(cheb_u(3, -1.0), -4.0);
  EXPECT_THROW(cheb_u(-1, 0.0), InvalidInput);
  EXPECT_THROW(cheb_u(2, 1.5), InvalidInput);
}

TEST(ChebU, RecurrenceMatchesTrigonometricForm) {
  double worst = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double theta = 0.01 + (std::numbers::pi - 0.02) * i / 400.0;
    for (int n = 0; n <= 100; ++n) {
      // The sine quotient computed here, not through cheb_u_trig.
      const double ref = std::sin((n + 1.0) * theta) / std::sin(theta);
      worst = std::max(worst, std::abs(cheb_u(n, std::cos(theta)) - ref));
    }
  }
  EXPECT_LE(worst, 1e-9);
  EXPECT_NEAR(cheb_u_trig(5, 1e-9), 6.0, 1e-9);
}

TEST(Coefficients, LowOrders) {
  for (double y : {0.1, 0.5, 0.9}) {
    const auto c = series_coefficients(y, 3);
    EXPECT_EQ(c.c[0], 1.0);
    EXPECT_DOUBLE_EQ(c.c[1], 2.0 * y);
    // C_n = U_n(sqrt y) y^(n/2)
    EXPECT_NEAR(c.c[3], cheb_u(3, std::sqrt(y)) * std::pow(y, 1.5), 1e-14);
  }
  EXPECT_THROW(series_coefficients(1.0, 3), InvalidInput);
}

TEST(GeneratingFunction, FixedPointAndGrid) {
  // Direct sum to n = 60 with its own recurrence.
  const double z = 0.6, t = 0.5;
  double sum = 0.0, u_prev = 0.0, u = 1.0, tn = 1.0;
  for (int n = 0; n <= 60; ++n) {
    sum += u * tn;
    const double next = n == 0 ? 2.0 * z : 2.0 * z * u - u_prev;
    u_prev = u;
    u = next;
    tn *= t;
  }
  EXPECT_NEAR(sum, 1.0 / (1.0 - 2.0 * t * z + t * t), 1e-10);
  EXPECT_LE(generating_function_residual(z, t), 1e-10);
  for (double zz = -1.0; zz <= 1.0; zz += 0.125)
    for (double tt = -0.9; tt <= 0.9; tt += 0.15) EXPECT_LE(generating_function_residual(zz, tt), 1e-10);
}

TEST(PartialSum, Examples) {
  for (double y : {0.1, 0.3, 0.8}) {
    const auto ps = partial_sum_closed_form(y, 1);
    EXPECT_NEAR(ps.sum, 2.0 * y, 1e-15);
    EXPECT_NEAR(ps.closed_form, 2.0 * y, 1e-14);
  }
  const auto ps = partial_sum_closed_form(0.25, 10);
  EXPECT_NEAR(ps.sum, ps.closed_form, 1e-12);
}

TEST(PartialSum, RandomPositive) {
  CounterRng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double y = gen::uniform(rng, 1e-3, 1.0 - 1e-3);
    const int m = 1 + static_cast<int>(gen::uniform(rng) * 200.0) % 200;
    const auto ps = partial_sum_closed_form(y, m);
    EXPECT_LE(std::abs(ps.sum - ps.closed_form), 1e-12 * std::max(1.0, std::abs(ps.sum)));
    EXPECT_GT(ps.closed_form, 0.0);
    EXPECT_GT(ps.sum, 0.0);
  }
}

TEST(ScalarExpansion, Residuals) {
  EXPECT_NEAR(scalar_expansion_check(1e-12, 0.5, 0), 0.0, 1e-11);
  EXPECT_LE(scalar_expansion_check(0.5, 0.5, 80), 1e-10);
  EXPECT_LE(scalar_expansion_check(0.9, 0.9, 500), 1e-8);
  EXPECT_GT(scalar_expansion_check(0.9, 0.9, 5), scalar_expansion_check(0.9, 0.9, 50));
}

TEST(Resolvent, ZeroAndNilpotent) {
  const auto z = resolvent_row_positivity(Matrix::Zero(3, 3), 0.4);
  EXPECT_EQ(z.direct, Eigen::RowVectorXd::Ones(3));
  EXPECT_TRUE(z.positive);

  Matrix n(2, 2);
  n << 0, 1, 0, 0;
  const double y = 0.5;
  const auto r = resolvent_row_positivity(n, y);
  // By hand: A = y(I - N)^2 + (1 - y)I = [[1, -2y], [0, 1]], so e'A^{-1} = (1, 1 + 2y).
  EXPECT_NEAR(r.direct(0), 1.0, 1e-15);
  EXPECT_NEAR(r.direct(1), 1.0 + 2.0 * y, 1e-15);
  EXPECT_LE(r.agreement, 1e-15);
  EXPECT_TRUE(r.positive);
}

TEST(Resolvent, RejectsInvalid) {
  Matrix n = Matrix::Constant(2, 2, 0.6);  // column sums 1.2
  EXPECT_THROW(resolvent_row_positivity(n, 0.5), InvalidInput);
  EXPECT_THROW(resolvent_row_positivity(Matrix::Zero(2, 2), 1.0), InvalidInput);
}

TEST(Resolvent, RandomSweep) {
  CounterRng rng(32);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Index k = 1 + i % 6;
    const Matrix n = random_substochastic(k, rng);
    const double y = gen::uniform(rng, 0.01, 0.99);
    const auto r = resolvent_row_positivity(n, y);
    EXPECT_GE(r.min_component, 1.0 - 1e-10);
    EXPECT_LE(r.agreement, 1e-8);
  }
}

TEST(Resolvent, MonotoneRows) {
  CounterRng rng(33);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Index k = 1 + i % 6;
    const Matrix n = random_substochastic(k, rng);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Ones(k);
    for (int j = 0; j <= 50; ++j) {
      const Eigen::RowVectorXd next = row * n;
      EXPECT_GE((row - next).minCoeff(), -1e-12);
      EXPECT_GE(next.minCoeff(), 0.0);
      row = next;
    }
  }
}

TEST(SelfTest, Passes) {
  const auto st = run_selftest(200);
  EXPECT_TRUE(st.ok());
}
