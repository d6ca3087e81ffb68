#pragma once

// Piecewise Ornstein-Uhlenbeck model:
//
//   dY = b(Y) dt + sigma dW,   b(y) = -beta p - R (y - p (e'y)^+) - alpha p (e'y)^+
//
// with R a nonsingular M-matrix, e'R >= 0', p a probability vector and
// Sigma = sigma sigma' constant and nonsingular.

#include "pwou/assumptions.hpp"
#include "pwou/matkit.hpp"

#include <cmath>
#include <concepts>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pwou {

struct PiecewiseOUParams {
  double alpha = 0.0;  // abandonment rate
  double beta = 0.0;   // arrival slack
  Matrix R;            // phase dynamics
  Vector p;            // initial-phase distribution
  Matrix Sigma;        // diffusion covariance sigma sigma'
  // Fluid (sigma = 0) mode skips the nonsingular-covariance requirement.
  bool fluid = false;

  Eigen::Index dim() const { return p.size(); }
};

// M/H2/n+M primitives: hyperexponential service with mean one.
struct HyperexpSpec {
  double p1 = 0.5;
  double nu1 = 1.0;
  double nu2 = 1.0;
  double c = 1.0;  // service-time variability constant in the covariance
  double alpha = 0.0;
  double beta = 0.0;
};

struct Diagnostics {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

inline Diagnostics validate(const PiecewiseOUParams& m) {
  Diagnostics d;
  d.violations = rp_violations(m.R, m.p);
  if (!std::isfinite(m.alpha) || !std::isfinite(m.beta)) d.violations.push_back("alpha/beta must be finite");
  if (m.alpha < 0.0) d.violations.push_back("alpha must be >= 0");
  const Eigen::Index k = m.p.size();
  if (m.Sigma.rows() != k || m.Sigma.cols() != k) {
    d.violations.push_back("Sigma shape does not match p");
  } else if (!m.Sigma.allFinite()) {
    d.violations.push_back("Sigma has non-finite entries");
  } else {
    if ((m.Sigma - m.Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, norm_abs(m.Sigma)))
      d.violations.push_back("Sigma is not symmetric");
    if (!m.fluid && !is_positive_definite(m.Sigma, 0.0)) d.violations.push_back("Sigma is not positive definite");
  }
  return d;
}

inline void require_valid(const PiecewiseOUParams& m) {
  const auto d = validate(m);
  if (!d.ok()) throw InvalidInput("invalid model: " + d.violations.front());
}

inline Vector drift(const PiecewiseOUParams& m, const Vector& y) {
  const double x = y.sum();
  const double xp = x > 0.0 ? x : 0.0;
  return -m.beta * m.p - m.R * (y - m.p * xp) - m.alpha * m.p * xp;
}

// Anything exposing gradient and Hessian at a point.
template <class V>
concept TwiceDifferentiable = requires(const V& v, const Vector& y) {
  { v.value(y) } -> std::convertible_to<double>;
  { v.gradient(y) } -> std::convertible_to<Vector>;
  { v.hessian(y) } -> std::convertible_to<Matrix>;
};

// GV(y) = grad V(y)' b(y) + 1/2 sum_ij Sigma_ij d2V/dy_i dy_j
template <TwiceDifferentiable V>
double generator_apply(const PiecewiseOUParams& m, const V& v, const Vector& y) {
  const Vector g = v.gradient(y);
  const Matrix h = v.hessian(y);
  return g.dot(drift(m, y)) + 0.5 * (m.Sigma.array() * h.array()).sum();
}

// Bound on the Lipschitz constant of b in the Euclidean norm.
inline double drift_lipschitz_bound(const PiecewiseOUParams& m) {
  const Eigen::Index k = m.dim();
  const Matrix pe = m.p * ones(k).transpose();
  return m.R.norm() + (m.R * pe).norm() + m.alpha * pe.norm();
}

// R = (I - P') diag(nu) from a transient substochastic routing matrix P.
inline PiecewiseOUParams from_phase_type(const Matrix& routing, const Vector& nu, const Vector& p, double alpha,
                                         double beta, const std::optional<Matrix>& sigma = std::nullopt) {
  require_square(routing, "from_phase_type");
  const Eigen::Index k = routing.rows();
  if (nu.size() != k || p.size() != k) throw InvalidInput("from_phase_type: nu/p length mismatch");
  if ((routing.array() < 0.0).any()) throw InvalidInput("from_phase_type: P has a negative entry");
  if ((routing.rowwise().sum().array() > 1.0 + 1e-12).any())
    throw InvalidInput("from_phase_type: a row sum of P exceeds 1");
  if (!(spectral_radius(routing) < 1.0 - kTolZero)) throw InvalidInput("from_phase_type: P is not transient");
  if ((nu.array() <= 0.0).any()) throw InvalidInput("from_phase_type: rates must be positive");
  PiecewiseOUParams m;
  m.alpha = alpha;
  m.beta = beta;
  m.R = (identity(k) - routing.transpose()) * nu.asDiagonal();
  m.p = p;
  m.Sigma = sigma ? *sigma : identity(k);
  return m;
}

inline Matrix hyperexp_covariance(double p1, double c) {
  const double p2 = 1.0 - p1;
  Matrix s(2, 2);
  s << p1 * (p1 * c * c - p1 + 2.0), p1 * p2 * (c * c - 1.0),
       p1 * p2 * (c * c - 1.0), p2 * (p2 * c * c - p2 + 2.0);
  return s;
}

inline PiecewiseOUParams hyperexp_model(const HyperexpSpec& spec) {
  if (!(spec.p1 > 0.0 && spec.p1 < 1.0)) throw InvalidInput("hyperexp_model: p1 must lie in (0, 1)");
  if (!(spec.nu1 > 0.0 && spec.nu2 > 0.0)) throw InvalidInput("hyperexp_model: rates must be positive");
  const double p2 = 1.0 - spec.p1;
  const double mean = spec.p1 / spec.nu1 + p2 / spec.nu2;
  if (std::abs(mean - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "hyperexp_model: mean service time p1/nu1 + p2/nu2 = " << mean << ", expected 1";
    throw InvalidInput(os.str());
  }
  PiecewiseOUParams m;
  m.alpha = spec.alpha;
  m.beta = spec.beta;
  m.R = Matrix::Zero(2, 2);
  m.R(0, 0) = spec.nu1;
  m.R(1, 1) = spec.nu2;
  m.p = Vector(2);
  m.p << spec.p1, p2;
  m.Sigma = hyperexp_covariance(spec.p1, spec.c);
  if (!is_positive_definite(m.Sigma, 0.0)) throw InvalidInput("hyperexp_model: covariance is not positive definite for this c");
  return m;
}

// The three-phase example with R upper bidiagonal (1 on the diagonal, -1
// above), p = (0, 0, 1) and alpha = 133.
inline PiecewiseOUParams counterexample_model(double beta = 0.0) {
  PiecewiseOUParams m;
  m.alpha = 133.0;
  m.beta = beta;
  m.R = Matrix(3, 3);
  m.R << 1, -1, 0,
         0, 1, -1,
         0, 0, 1;
  m.p = Vector(3);
  m.p << 0, 0, 1;
  m.Sigma = identity(3);
  return m;
}

}  // namespace pwou
