#pragma once

// Small dense LMI margin maximizer used by the CQLF construction.
//
//   maximize t  subject to  F_k(x, t) = C_k + sum_i x_i A_ki - t w_k I  >= 0
//
// solved with a primal log-barrier path-following method (damped Newton on
// -tau t - sum_k logdet F_k, tau increased geometrically). Sizes are desk
// scale, so the Hessian is formed densely from Cholesky-whitened terms.

#include "pwou/matkit.hpp"

#include <cmath>
#include <vector>

namespace pwou::detail {

struct LmiBlock {
  Matrix constant;
  std::vector<Matrix> terms;  // one per decision variable
  double weight = 1.0;
};

struct LmiOptions {
  double tau0 = 1.0;
  double tau_growth = 8.0;
  double gap_tol = 1e-9;
  int max_newton = 4000;
  // Stop as soon as a centered iterate has t >= stop_at (infinite: never).
  double stop_at = std::numeric_limits<double>::infinity();
};

struct LmiResult {
  Vector x;
  double t = -std::numeric_limits<double>::infinity();
  int newton_steps = 0;
  bool converged = false;
};

namespace lmi_impl {

inline Matrix evaluate(const LmiBlock& b, const Vector& x, double t) {
  Matrix f = b.constant;
  for (std::size_t i = 0; i < b.terms.size(); ++i) f += x(static_cast<Eigen::Index>(i)) * b.terms[i];
  f.diagonal().array() -= t * b.weight;
  return symmetrize(f);
}

// Returns false if some block is not positive definite.
inline bool barrier_value(const std::vector<LmiBlock>& blocks, const Vector& x, double t, double tau,
                          double& value) {
  value = -tau * t;
  for (const auto& b : blocks) {
    if (b.constant.rows() == 0) continue;
    Eigen::LLT<Matrix> llt(evaluate(b, x, t));
    if (llt.info() != Eigen::Success) return false;
    const Vector d = Matrix(llt.matrixL()).diagonal();
    if ((d.array() <= 0.0).any()) return false;
    value -= 2.0 * d.array().log().sum();
  }
  return std::isfinite(value);
}

}  // namespace lmi_impl

inline LmiResult maximize_margin(const std::vector<LmiBlock>& blocks, Eigen::Index nvars,
                                 const LmiOptions& opt = {}) {
  using namespace lmi_impl;
  LmiResult res;
  res.x = Vector::Zero(nvars);

  double t = std::numeric_limits<double>::infinity();
  double total_dim = 0.0;
  for (const auto& b : blocks) {
    if (b.constant.rows() == 0) continue;
    total_dim += static_cast<double>(b.constant.rows());
    t = std::min(t, min_eig(b.constant) / b.weight);
  }
  if (total_dim == 0.0) {
    res.t = std::numeric_limits<double>::infinity();
    res.converged = true;
    return res;
  }
  t -= 1.0;

  const Eigen::Index nz = nvars + 1;
  double tau = opt.tau0;
  Vector x = res.x;
  int steps = 0;

  while (steps < opt.max_newton) {
    // Centering.
    for (;;) {
      if (steps >= opt.max_newton) break;
      ++steps;
      Vector grad = Vector::Zero(nz);
      Matrix hess = Matrix::Zero(nz, nz);
      grad(nvars) = -tau;
      for (const auto& b : blocks) {
        const Eigen::Index m = b.constant.rows();
        if (m == 0) continue;
        Eigen::LLT<Matrix> llt(evaluate(b, x, t));
        const Matrix l = llt.matrixL();
        const auto ltri = l.triangularView<Eigen::Lower>();
        std::vector<Matrix> g(static_cast<std::size_t>(nz));
        for (Eigen::Index i = 0; i < nvars; ++i) {
          Matrix tmp = ltri.solve(b.terms[static_cast<std::size_t>(i)]);
          g[static_cast<std::size_t>(i)] = ltri.solve(tmp.transpose()).transpose();
        }
        const Matrix linv = ltri.solve(Matrix::Identity(m, m));
        g[static_cast<std::size_t>(nvars)] = -b.weight * (linv * linv.transpose());
        for (Eigen::Index i = 0; i < nz; ++i) {
          const Matrix& gi = g[static_cast<std::size_t>(i)];
          grad(i) -= gi.trace();
          for (Eigen::Index j = 0; j <= i; ++j) {
            const double h = (gi.array() * g[static_cast<std::size_t>(j)].array()).sum();
            hess(i, j) += h;
            if (j != i) hess(j, i) += h;
          }
        }
      }
      Eigen::LDLT<Matrix> ldlt(hess);
      Vector dz = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !dz.allFinite()) {
        hess.diagonal().array() += 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
        dz = hess.ldlt().solve(-grad);
      }
      const double decrement2 = -grad.dot(dz);
      if (!(decrement2 > 1e-12)) break;

      double f0 = 0.0;
      barrier_value(blocks, x, t, tau, f0);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        const Vector xn = x + step * dz.head(nvars);
        const double tn = t + step * dz(nvars);
        double f1 = 0.0;
        if (barrier_value(blocks, xn, tn, tau, f1) && f1 <= f0 - 0.25 * step * decrement2) {
          x = xn;
          t = tn;
          moved = true;
          break;
        }
      }
      if (!moved || decrement2 < 1e-10) break;
    }
    res.x = x;
    res.t = t;
    if (t >= opt.stop_at || total_dim / tau < opt.gap_tol) {
      res.converged = true;
      break;
    }
    tau *= opt.tau_growth;
  }
  res.newton_steps = steps;
  return res;
}

}  // namespace pwou::detail
