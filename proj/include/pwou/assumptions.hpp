#pragma once

// Checks on the (R, p) data shared by the CQLF and model layers.

#include "pwou/matkit.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace pwou {

inline constexpr double kProbabilityTol = 1e-9;

inline Vector ones(Eigen::Index k) { return Vector::Ones(k); }

// I - p e'
inline Matrix centering(const Vector& p) {
  const Eigen::Index k = p.size();
  return identity(k) - p * ones(k).transpose();
}

// Every violated condition on (R, p), named; empty when R is a nonsingular
// M-matrix with e'R >= 0' and p is a probability vector.
inline std::vector<std::string> rp_violations(const Matrix& r, const Vector& p, double tol_zero = kTolZero) {
  std::vector<std::string> out;
  if (r.rows() != r.cols() || r.rows() == 0) {
    out.push_back("R is not a nonempty square matrix");
    return out;
  }
  if (r.rows() > kMaxDim) {
    out.push_back("dimension exceeds the dense cap");
    return out;
  }
  if (!r.allFinite()) out.push_back("R has non-finite entries");
  if (p.size() != r.rows()) {
    out.push_back("p length does not match R");
    return out;
  }
  if (!p.allFinite()) out.push_back("p has non-finite entries");
  if (!out.empty()) return out;

  const auto mm = m_matrix_decompose(r, tol_zero);
  if (!mm)
    out.push_back("R is not an M-matrix: " + mm.rejection);
  else if (!mm->nonsingular) {
    std::ostringstream os;
    os << "R is a singular M-matrix (rho(N) = " << mm->rho << ", s = " << mm->s << ")";
    out.push_back(os.str());
  }
  const Eigen::RowVectorXd colsum = ones(r.rows()).transpose() * r;
  const double ctol = tol_zero * std::max(1.0, norm_abs(r));
  for (Eigen::Index j = 0; j < colsum.size(); ++j)
    if (colsum(j) < -ctol) {
      std::ostringstream os;
      os << "Assumption e'R >= 0' violated at column " << j << " (" << colsum(j) << ")";
      out.push_back(os.str());
      break;
    }
  if ((p.array() < -kProbabilityTol).any()) out.push_back("p has a negative component");
  if (std::abs(p.sum() - 1.0) > kProbabilityTol * static_cast<double>(p.size())) {
    std::ostringstream os;
    os << "p does not sum to 1 (sum = " << p.sum() << ")";
    out.push_back(os.str());
  }
  return out;
}

}  // namespace pwou
