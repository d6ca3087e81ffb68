#include "pwou/matkit.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace pwou;
using pwou::gen::uniform;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// det(lambda I - A) by LU on the complexified matrix.
Complex char_poly(const Matrix& a, Complex l) {
  Eigen::MatrixXcd m = l * Eigen::MatrixXcd::Identity(a.rows(), a.cols()) - a.cast<Complex>();
  return m.partialPivLu().determinant();
}

}  // namespace

TEST(EigGeneral, Identity) {
  const auto s = eig_general(identity(3));
  ASSERT_EQ(s.size(), 3u);
  for (const auto& l : s.eigenvalues) EXPECT_NEAR(std::abs(l - Complex(1.0)), 0.0, 1e-14);
}

TEST(EigGeneral, ThreePhaseProduct) {
  const auto v = eig_general(gen::three_phase_product()).sorted();
  ASSERT_EQ(v.size(), 3u);
  EXPECT_NEAR(v[0].real(), -7.0, 1e-9);
  EXPECT_NEAR(v[1].real(), 5.0 - std::sqrt(82.0), 1e-9);
  EXPECT_NEAR(v[2].real(), 5.0 + std::sqrt(82.0), 1e-9);
  for (const auto& l : v) EXPECT_LT(std::abs(l.imag()), 1e-9);
}

TEST(EigGeneral, Rotation) {
  const auto v = eig_general(m2(0, 1, -1, 0)).sorted();
  EXPECT_NEAR(std::abs(v[0] - Complex(0, -1)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(v[1] - Complex(0, 1)), 0.0, 1e-14);
}

TEST(EigGeneral, CharacteristicPolynomialVanishes) {
  CounterRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index k = 1 + trial % 6;
    const Matrix a = gen::gaussian_matrix(rng, k, k);
    const double scale = std::pow(1.0 + a.norm(), static_cast<double>(k));
    for (const auto& l : eig_general(a).eigenvalues) EXPECT_LT(std::abs(char_poly(a, l)), 1e-9 * scale);
  }
}

TEST(EigGeneral, RejectsNonSquareAndNonFinite) {
  EXPECT_THROW(eig_general(Matrix(2, 3)), InvalidInput);
  Matrix a = identity(2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(eig_general(a), InvalidInput);
}

TEST(PositiveDefinite, Examples) {
  EXPECT_TRUE(is_positive_definite(identity(3)));
  EXPECT_FALSE(is_positive_definite(-identity(3)));
  EXPECT_TRUE(is_positive_definite(m2(2, 1, 1, 2)));
  EXPECT_FALSE(is_positive_definite(m2(1, 1, 1, 1)));
}

TEST(SpectralRadius, ZeroAndNilpotent) {
  EXPECT_EQ(spectral_radius(Matrix::Zero(3, 3)), 0.0);
  EXPECT_NEAR(spectral_radius(m2(0, 1, 0, 0)), 0.0, 1e-12);
}

TEST(SpectralRadius, MatchesPowerIterationAndRowSumBound) {
  CounterRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix n(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i)
      for (Eigen::Index j = 0; j < 5; ++j) n(i, j) = uniform(rng, 0.01, 1.0);
    // Positive matrix: power iteration converges to the Perron root.
    Vector v = Vector::Ones(5);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      const Vector w = n * v;
      lambda = w.norm() / v.norm();
      v = w.normalized();
    }
    const double rho = spectral_radius(n);
    EXPECT_NEAR(rho, lambda, 1e-8);
    EXPECT_LE(rho, n.rowwise().sum().maxCoeff() + 1e-12);
  }
}

TEST(MMatrix, ThreePhase) {
  Matrix r(3, 3);
  r << 1, -1, 0, 0, 1, -1, 0, 0, 1;
  const auto d = m_matrix_decompose(r);
  ASSERT_TRUE(d);
  EXPECT_DOUBLE_EQ(d->s, 1.0);
  EXPECT_NEAR(d->rho, 0.0, 1e-12);
  EXPECT_TRUE(d->nonsingular);
  EXPECT_LT((d->s * identity(3) - d->N - r).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MMatrix, DiagonalAndRejection) {
  Matrix r = Vector::LinSpaced(4, 1.0, 4.0).asDiagonal();
  const auto d = m_matrix_decompose(r);
  ASSERT_TRUE(d);
  EXPECT_TRUE(d->nonsingular);
  EXPECT_GE(d->N.minCoeff(), 0.0);
  EXPECT_LT((d->s * identity(4) - d->N - r).cwiseAbs().maxCoeff(), 1e-12);

  const auto bad = m_matrix_decompose(m2(1, 0.5, 0, 1));
  EXPECT_FALSE(bad);
  EXPECT_NE(bad.rejection.find("off-diagonal"), std::string::npos);
}

TEST(MMatrix, SingularDetected) {
  const auto d = m_matrix_decompose(m2(1, -1, -1, 1));
  ASSERT_TRUE(d);
  EXPECT_FALSE(d->nonsingular);
}

TEST(MMatrix, RandomReconstruction) {
  CounterRng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix r = gen::random_m_matrix(rng, 2 + trial % 5);
    const auto d = m_matrix_decompose(r);
    ASSERT_TRUE(d);
    EXPECT_TRUE(d->nonsingular);
    EXPECT_GE(d->N.minCoeff(), 0.0);
    EXPECT_LT((d->s * identity(r.rows()) - d->N - r).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, norm_abs(r)));
  }
}

TEST(Lyapunov, Examples) {
  EXPECT_LT((lyapunov_solve(-identity(3), identity(3)) - 0.5 * identity(3)).cwiseAbs().maxCoeff(), 1e-14);
  Matrix a(1, 1), w(1, 1);
  a << -3.0;
  w << 2.0;
  EXPECT_NEAR(lyapunov_solve(a, w)(0, 0), 2.0 / 6.0, 1e-15);
}

TEST(Lyapunov, AgreesWithKroneckerSolve) {
  CounterRng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index k = 1 + trial % 5;
    const Matrix a = gen::random_hurwitz(rng, k);
    const Matrix w = gen::random_psd(rng, k);
    // (I kron A + A kron I) vec X = -vec W
    Matrix big = Matrix::Zero(k * k, k * k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) {
        big.block(i * k, j * k, k, k) += a(i, j) * identity(k);
        if (i == j) big.block(i * k, j * k, k, k) += a;
      }
    const Vector x = big.partialPivLu().solve(-w.reshaped());
    const Matrix ref = x.reshaped(k, k);
    const Matrix got = lyapunov_solve(a, w);
    EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    EXPECT_LT((a * got + got * a.transpose() + w).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, norm_abs(w)));
  }
}

TEST(Lyapunov, SharedEigenvalueRaises) {
  EXPECT_THROW(lyapunov_solve(m2(1, 0, 0, -1), identity(2)), NumericError);
}

TEST(ComplementBasis, Orthonormal) {
  const Matrix b = complement_basis(Vector::Ones(4));
  EXPECT_LT((b.transpose() * b - identity(3)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((b.transpose() * Vector::Ones(4)).cwiseAbs().maxCoeff(), 1e-14);
}
