#pragma once

// Random instance generators shared by the unit tests and the acceptance run.

#include "pwou/cqlf.hpp"
#include "pwou/oumodel.hpp"
#include "pwou/rng.hpp"

#include <random>

namespace pwou::gen {

inline double uniform(CounterRng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix gaussian_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n;
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = n(rng);
  return a;
}

inline Matrix random_orthogonal(CounterRng& rng, Eigen::Index k) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(rng, k, k));
  return qr.householderQ() * identity(k);
}

inline Matrix random_psd(CounterRng& rng, Eigen::Index k) {
  const Matrix a = gaussian_matrix(rng, k, k);
  return a * a.transpose();
}

// Dirichlet(1,..,1); with probability 1/3 some coordinates are zeroed.
inline Vector random_probability(CounterRng& rng, Eigen::Index k) {
  Vector p(k);
  std::exponential_distribution<double> ex(1.0);
  for (Eigen::Index i = 0; i < k; ++i) p(i) = ex(rng);
  if (k > 1 && uniform(rng) < 1.0 / 3.0) {
    const auto keep = static_cast<Eigen::Index>(uniform(rng) * static_cast<double>(k)) % k;
    for (Eigen::Index i = 0; i < k; ++i)
      if (i != keep && uniform(rng) < 0.5) p(i) = 0.0;
  }
  return p / p.sum();
}

// Transient substochastic routing: row sums <= 1, spectral radius < 1.
inline Matrix random_routing(CounterRng& rng, Eigen::Index k) {
  Matrix p = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (uniform(rng) < 0.6) p(i, j) = uniform(rng);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double s = p.row(i).sum();
    if (s > 0.0) p.row(i) *= uniform(rng, 0.0, 0.95) / s;
  }
  return p;
}

// R = (I - P') diag(nu): a nonsingular M-matrix with e'R = ((I - P) e)' diag(nu) >= 0'.
inline Matrix random_m_matrix(CounterRng& rng, Eigen::Index k) {
  Vector nu(k);
  for (Eigen::Index i = 0; i < k; ++i) nu(i) = std::exp(uniform(rng, -1.5, 1.5));
  return (identity(k) - random_routing(rng, k).transpose()) * nu.asDiagonal();
}

inline Matrix random_hurwitz(CounterRng& rng, Eigen::Index k) {
  const Matrix a = gaussian_matrix(rng, k, k);
  const double shift = eig_general(a).max_real() + uniform(rng, 0.2, 2.0);
  return a - shift * identity(k);
}

// Hurwitz B with g, h such that B - g h' is Hurwitz as well; redraws h
// until it is.
inline MatrixPair random_strong_pair(CounterRng& rng, Eigen::Index k) {
  for (;;) {
    const Matrix b = random_hurwitz(rng, k);
    const Vector g = gaussian_matrix(rng, k, 1);
    const Vector h = 0.5 * gaussian_matrix(rng, k, 1);
    auto pair = make_rank1_pair(b, g, h);
    if (eig_general(pair.B2).hurwitz()) return pair;
  }
}

// PiecewiseOUParams with random (R, p), identity covariance.
inline PiecewiseOUParams random_model(CounterRng& rng, Eigen::Index k, double alpha, double beta) {
  PiecewiseOUParams m;
  m.alpha = alpha;
  m.beta = beta;
  m.R = random_m_matrix(rng, k);
  m.p = random_probability(rng, k);
  m.Sigma = identity(k);
  return m;
}

inline PiecewiseOUParams hyperexp(double alpha, double beta, double c = 2.0) {
  HyperexpSpec s;
  s.p1 = 0.5;
  s.nu1 = 2.0;
  s.nu2 = 2.0 / 3.0;
  s.c = c;
  s.alpha = alpha;
  s.beta = beta;
  return hyperexp_model(s);
}

// R(R(I - pe') + alpha pe') for the three-phase example, built by hand.
inline Matrix three_phase_product() {
  Matrix r(3, 3);
  r << 1, -1, 0, 0, 1, -1, 0, 0, 1;
  Matrix pe = Matrix::Zero(3, 3);
  pe.row(2).setOnes();
  return r * (r * (identity(3) - pe) + 133.0 * pe);
}

// A pair (B, B - g h') that is reducible by construction: in the basis O,
// B = [[B1, B2], [0, B3]] and g = O (g1, 0). B3 has a real spectrum so B3^2
// adds no real negative eigenvalue to the product. With `singular`, h1 is
// scaled so that h1' B1^{-1} g1 = 1, i.e. B1 - g1 h1' is singular.
struct Reducible {
  MatrixPair pair;
  Matrix O;
  Eigen::Index r = 0;
  Matrix B1, B3;
  Vector g1, h1;
};

inline Reducible random_reducible(CounterRng& rng, Eigen::Index k, Eigen::Index r, bool singular) {
  Reducible out;
  out.r = r;
  out.O = random_orthogonal(rng, k);
  out.B1 = random_hurwitz(rng, r);
  const Matrix s = gaussian_matrix(rng, k - r, k - r) + 3.0 * identity(k - r);
  Vector d(k - r);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = -uniform(rng, 0.3, 3.0);
  out.B3 = s * d.asDiagonal() * s.inverse();
  Matrix blk = Matrix::Zero(k, k);
  blk.topLeftCorner(r, r) = out.B1;
  blk.topRightCorner(r, k - r) = gaussian_matrix(rng, r, k - r);
  blk.bottomRightCorner(k - r, k - r) = out.B3;
  out.g1 = gaussian_matrix(rng, r, 1);
  Vector h = gaussian_matrix(rng, k, 1);
  out.h1 = h.head(r);
  if (singular) {
    const double q = out.h1.dot(out.B1.partialPivLu().solve(out.g1));
    out.h1 /= q;
    h.head(r) = out.h1;
  }
  Vector g = Vector::Zero(k);
  g.head(r) = out.g1;
  out.pair = make_rank1_pair(out.O * blk * out.O.transpose(), out.O * g, out.O * h);
  return out;
}

}  // namespace pwou::gen
