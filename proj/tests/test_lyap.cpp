#include "pwou/lyap.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace pwou;
using pwou::gen::uniform;

namespace {

// The smoothstep written out in x rather than u.
double phi_ref(double x, double eps) {
  if (x >= 0.0) return x;
  if (x <= -eps) return -eps / 2.0;
  const double s = x + eps;
  return -eps / 2.0 + s * s * s / (eps * eps) - s * s * s * s / (2.0 * eps * eps * eps);
}

double v_ref(const SmoothedLyapunov& v, const Vector& y) {
  double x = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) x += y(i);
  const double f = phi_ref(x, v.epsilon);
  double quad = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    for (Eigen::Index j = 0; j < y.size(); ++j)
      quad += (y(i) - v.p(i) * f) * v.Qtilde(i, j) * (y(j) - v.p(j) * f);
  return x * x + v.kappa * quad;
}

SmoothedLyapunov random_smoothed(CounterRng& rng, Eigen::Index k, double eps) {
  SmoothedLyapunov v;
  v.Qtilde = gen::random_psd(rng, k) + 0.1 * identity(k);
  v.Qtilde /= norm_abs(v.Qtilde);
  v.kappa = uniform(rng, 1.0, 10.0);
  v.epsilon = eps;
  v.p = gen::random_probability(rng, k);
  return v;
}

// A point with e'y placed in [lo, hi].
Vector point_with_sum(CounterRng& rng, Eigen::Index k, double lo, double hi, double scale) {
  Vector y = scale * gen::gaussian_matrix(rng, k, 1);
  y.array() += (uniform(rng, lo, hi) - y.sum()) / static_cast<double>(k);
  return y;
}

double rel_err(const Matrix& got, const Matrix& ref) {
  return (got - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff());
}

PiecewiseOUParams scalar_model(double nu, double alpha, double beta) {
  PiecewiseOUParams m;
  m.alpha = alpha;
  m.beta = beta;
  m.R = Matrix::Constant(1, 1, nu);
  m.p = Vector::Ones(1);
  m.Sigma = Matrix::Constant(1, 1, 2.0);
  return m;
}

DriftOptions fast() {
  DriftOptions o;
  o.samples_per_shell = 1024;
  return o;
}

}  // namespace

TEST(Phi, EndpointValues) {
  const double eps = 0.2;
  EXPECT_EQ(phi(1.0, eps), 1.0);
  EXPECT_EQ(phi_dot(1.0, eps), 1.0);
  EXPECT_EQ(phi_ddot(1.0, eps), 0.0);
  EXPECT_DOUBLE_EQ(phi(-eps, eps), -eps / 2.0);
  EXPECT_EQ(phi_dot(-eps, eps), 0.0);
  EXPECT_NEAR(phi(-eps / 2.0, eps), -13.0 * eps / 32.0, 1e-15);
  EXPECT_NEAR(phi(0.0, eps), 0.0, 1e-15);
  // C2 at both joins.
  EXPECT_NEAR(phi_dot(-1e-12, eps), 1.0, 1e-9);
  EXPECT_NEAR(phi_ddot(-1e-12, eps), 0.0, 1e-8);
  EXPECT_NEAR(phi_ddot(-eps + 1e-12, eps), 0.0, 1e-8);
  EXPECT_THROW(phi(0.0, 0.0), InvalidInput);
}

TEST(Phi, BoundsAndAgreement) {
  CounterRng rng(51);
  for (int i = 0; i < 100000; ++i) {
    const double eps = std::exp(uniform(rng, -6.0, 1.0));
    const double x = uniform(rng, -3.0, 2.0) * eps;
    const double f = phi(x, eps), d = phi_dot(x, eps);
    ASSERT_GE(f, -eps / 2.0);
    ASSERT_LE(f, std::max(x, 0.0));
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 1.0);
    ASSERT_NEAR(f, phi_ref(x, eps), 1e-14 * std::max(1.0, eps));
  }
}

TEST(Smoothed, ValueIdentities) {
  CounterRng rng(52);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index k = 1 + trial % 4;
    const auto v = random_smoothed(rng, k, 0.05);
    EXPECT_NEAR(v_eval(v, Vector::Zero(k)), 0.0, 1e-15);
    EXPECT_LT(v_grad(v, Vector::Zero(k)).norm(), 1e-15);

    const Vector y = 3.0 * gen::gaussian_matrix(rng, k, 1);
    EXPECT_NEAR(v_eval(v, y), v_ref(v, y), 1e-12 * (1.0 + v_ref(v, y)));

    const Vector pos = point_with_sum(rng, k, 0.0, 5.0, 2.0);
    const double x = pos.sum();
    const Vector w = pos - v.p * x;
    EXPECT_NEAR(v_eval(v, pos), x * x + v.kappa * w.dot(v.Qtilde * w), 1e-12 * (1.0 + v_eval(v, pos)));
  }
}

TEST(Smoothed, BranchDerivatives) {
  CounterRng rng(53);
  const double eps = 0.05;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index k = 1 + trial % 4;
    const auto v = random_smoothed(rng, k, eps);
    const Vector e = Vector::Ones(k);
    const Matrix c = identity(k) - v.p * e.transpose();

    const Vector neg = point_with_sum(rng, k, -5.0, -eps * 1.01, 2.0);
    const Vector g_ref = 2.0 * neg.sum() * e + 2.0 * v.kappa * v.Qtilde * (neg + 0.5 * eps * v.p);
    EXPECT_LT(rel_err(v_grad(v, neg), g_ref), 1e-12);
    EXPECT_LT(rel_err(v_hess(v, neg), 2.0 * e * e.transpose() + 2.0 * v.kappa * v.Qtilde), 1e-12);

    const Vector pos = point_with_sum(rng, k, 1e-3, 5.0, 2.0);
    EXPECT_LT(rel_err(v_hess(v, pos), 2.0 * e * e.transpose() + 2.0 * v.kappa * c.transpose() * v.Qtilde * c), 1e-12);
  }
}

TEST(Smoothed, FiniteDifferences) {
  CounterRng rng(54);
  const double eps = 1e-2;
  double worst_g = 0.0, worst_h = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index k = 1 + trial % 4;
    const auto v = random_smoothed(rng, k, eps);
    // A third of the points sit inside the smoothing band.
    const Vector y = trial % 3 == 0 ? point_with_sum(rng, k, -eps, 0.0, 0.5)
                                    : point_with_sum(rng, k, -3.0, 3.0, uniform(rng, 0.01, 5.0));
    const double h = 1e-6;
    Vector fd_g(k);
    Matrix fd_h(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      Vector a = y, b = y;
      a(i) += h;
      b(i) -= h;
      fd_g(i) = (v_ref(v, a) - v_ref(v, b)) / (2.0 * h);
      fd_h.col(i) = (v_grad(v, a) - v_grad(v, b)) / (2.0 * h);
    }
    worst_g = std::max(worst_g, rel_err(v_grad(v, y), fd_g));
    worst_h = std::max(worst_h, rel_err(v_hess(v, y), 0.5 * (fd_h + fd_h.transpose())));
  }
  EXPECT_LE(worst_g, 1e-6);
  EXPECT_LE(worst_h, 1e-5);
}

TEST(Smoothed, Coercivity) {
  CounterRng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index k = 1 + trial % 4;
    const auto v = random_smoothed(rng, k, uniform(rng, 1e-3, 1.0));
    const auto c = coercivity_constants(v);
    EXPECT_GT(c.c1, 0.0);
    const Vector dir = gen::gaussian_matrix(rng, k, 1).normalized();
    for (double t : {0.0, 1e-3, 0.1, 1.0, 10.0, 1e3}) {
      const Vector y = t * dir;
      EXPECT_GE(v_eval(v, y), c.c1 * y.squaredNorm() - c.c2 * v.epsilon * v.epsilon - 1e-12 * (1.0 + t * t));
    }
  }
}

TEST(Restricted, PositiveOnHyperplane) {
  CounterRng rng(56);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index k = 2 + trial % 4;
    const Matrix r = gen::random_m_matrix(rng, k);
    const Vector p = gen::random_probability(rng, k);
    const Matrix qt = construct_cqlf(second_pair(r, p)).Q;
    const auto rf = restricted_form(r, p, qt);
    ASSERT_GT(rf.c_z, 0.0);
    const Matrix c = identity(k) - p * Vector::Ones(k).transpose();
    const Matrix form = qt * c * r + r.transpose() * c.transpose() * qt;
    for (int i = 0; i < 50; ++i) {
      Vector z = gen::gaussian_matrix(rng, k, 1);
      z.array() -= z.mean();
      EXPECT_GE(z.dot(form * z), rf.c_z * z.squaredNorm() * (1.0 - 1e-9));
    }
  }
}

TEST(Kappa, DecreasesWithAlpha) {
  auto m = gen::hyperexp(0.1, 0.0);
  const Matrix qt = construct_cqlf(second_pair(m.R, m.p)).Q;
  double prev = std::numeric_limits<double>::infinity();
  for (double a : {0.01, 0.1, 1.0, 10.0}) {
    m.alpha = a;
    const double k = kappa_lower_bound(m, qt);
    EXPECT_GE(k, 1.0);
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(BuildQuadratic, Examples) {
  const auto q1 = build_quadratic(scalar_model(2.0, 0.0, 0.5));
  EXPECT_NEAR(q1.Q(0, 0), 1.0, 1e-12);

  const auto m = gen::hyperexp(0.0, 0.5);
  const auto q = build_quadratic(m);
  EXPECT_LE(q.certificate.res_strict, -1e-8);
  EXPECT_LE(q.certificate.res_semi, 1e-10);

  EXPECT_THROW(build_quadratic(gen::hyperexp(0.1, 0.5)), InvalidInput);
  EXPECT_THROW(build_quadratic(gen::hyperexp(0.0, 0.0)), InvalidInput);
}

TEST(VerifyDrift, QuadraticRegimePasses) {
  const auto m = gen::hyperexp(0.0, 0.5);
  const auto rep = verify_drift_auto(m, build_quadratic(m), fast());
  EXPECT_TRUE(rep.pass) << rep.diagnostic;
  ASSERT_TRUE(rep.M);
  EXPECT_GE(rep.shells_beyond_M, 4);
  for (const auto& s : rep.shells)
    if (s.radius >= *rep.M) {
      EXPECT_LE(s.worst_gv, -1.0);
    }
}

TEST(VerifyDrift, SignFlippedQuadraticFails) {
  const auto m = gen::hyperexp(0.0, 0.5);
  auto q = build_quadratic(m);
  q.Q = -q.Q;
  const auto rep = verify_drift_auto(m, q, fast());
  EXPECT_FALSE(rep.pass);
  ASSERT_TRUE(rep.witness);
  QuadraticLyapunov l;
  l.Q = q.Q;
  EXPECT_GT(generator_apply(m, l, *rep.witness), -1.0);
}

TEST(VerifyDrift, SmoothedRegimePasses) {
  const auto m = gen::hyperexp(1.0, 0.5);
  const auto v = build_smoothed(m, 1e-2, {}, fast());
  EXPECT_GE(v.kappa, 1.0);
  const auto rep = verify_drift_auto(m, v, fast());
  EXPECT_TRUE(rep.pass) << rep.diagnostic;
  EXPECT_GE(rep.fitted_C, 1e-6);
  EXPECT_GT(rep.c_global, 0.0);
  EXPECT_TRUE(std::isfinite(rep.d_global));
}

TEST(VerifyDrift, SmoothedScalarAndThreePhase) {
  const auto s = scalar_model(1.0, 2.0, 0.3);
  const auto v1 = build_smoothed(s, 1e-2, {}, fast());
  EXPECT_TRUE(verify_drift_auto(s, v1, fast()).pass);
  // K = 1: V(y) = y^2 + kappa Qt (y - phi(y))^2
  for (double y : {-1.0, -0.005, 0.5}) {
    const double w = y - phi(y, 1e-2);
    EXPECT_NEAR(v_eval(v1, Vector::Constant(1, y)), y * y + v1.kappa * v1.Qtilde(0, 0) * w * w, 1e-14);
  }

  const auto m = counterexample_model();
  const auto v = build_smoothed(m, 1e-2, {}, fast());
  EXPECT_TRUE(verify_drift_auto(m, v, fast()).pass);
}

TEST(VerifyDrift, SoundOnRandomCertifiedModels) {
  CounterRng rng(57);
  for (int trial = 0; trial < 6; ++trial) {
    const Eigen::Index k = 2 + trial % 2;
    if (trial % 2 == 0) {
      const auto m = gen::random_model(rng, k, 0.0, uniform(rng, 0.2, 1.0));
      EXPECT_TRUE(verify_drift_auto(m, build_quadratic(m), fast()).pass) << "trial " << trial;
    } else {
      const auto m = gen::random_model(rng, k, uniform(rng, 0.2, 2.0), uniform(rng, -1.0, 1.0));
      EXPECT_TRUE(verify_drift_auto(m, build_smoothed(m, 1e-2, {}, fast()), fast()).pass) << "trial " << trial;
    }
  }
}

TEST(VerifyDrift, RejectsMismatchedShapes) {
  const auto m = gen::hyperexp(0.0, 0.5);
  QuadraticLyapunov q;
  q.Q = identity(3);
  EXPECT_THROW(verify_drift_auto(m, q), InvalidInput);
  EXPECT_THROW(verify_drift(m, build_quadratic(m), {}, fast()), InvalidInput);
}

TEST(QuadraticFailure, ThreePhaseIdentity) {
  const auto f = quadratic_failure_witness(counterexample_model(), identity(3));
  ASSERT_TRUE(f.found) << f.diagnostic;
  EXPECT_TRUE(f.grid_ok);
  EXPECT_EQ(f.beta, 0.0);
  EXPECT_EQ(f.grid.front().t, 0.0);
  EXPECT_NEAR(f.grid.back().t, 1e3, 1e-9);
}

TEST(QuadraticFailure, ZeroQAndScalar) {
  const auto z = quadratic_failure_witness(counterexample_model(), Matrix::Zero(3, 3));
  EXPECT_TRUE(z.found);
  EXPECT_TRUE(z.grid_ok);

  const auto s = quadratic_failure_witness(scalar_model(1.0, 2.0, 0.0), Matrix::Identity(1, 1));
  EXPECT_FALSE(s.found);
}

TEST(QuadraticFailure, RejectsBadInput) {
  EXPECT_THROW(quadratic_failure_witness(counterexample_model(), -identity(3)), InvalidInput);
  EXPECT_THROW(quadratic_failure_witness(gen::hyperexp(0.0, 0.5), identity(2)), InvalidInput);
}
