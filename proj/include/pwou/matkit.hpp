#pragma once

// Dense square-matrix numerics shared by the rest of the library:
// spectra, definiteness, M-matrix splitting and continuous Lyapunov solves.
// Everything here is desk scale (dimension <= kMaxDim) and dense.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pwou {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

inline constexpr int kMaxDim = 64;
inline constexpr double kTolZero = 1e-8;

// Thrown when a numerical routine cannot produce a trustworthy answer
// (non-convergence, near-singular operator, exhausted iteration budget).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on malformed input: wrong shapes, non-finite entries, violated
// preconditions that the caller is expected to check.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Entrywise absolute norm |M| = sum_ij |M_ij|.
inline double norm_abs(const Matrix& m) { return m.cwiseAbs().sum(); }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a nonempty square matrix, got " << a.rows() << "x" << a.cols();
    throw InvalidInput(os.str());
  }
  if (a.rows() > kMaxDim) {
    std::ostringstream os;
    os << what << ": dimension " << a.rows() << " exceeds the dense cap " << kMaxDim;
    throw InvalidInput(os.str());
  }
  if (!a.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entry");
}

inline Matrix symmetrize(const Matrix& s) { return 0.5 * (s + s.transpose()); }

inline Matrix identity(Eigen::Index k) { return Matrix::Identity(k, k); }

// Lyapunov image Q B + B' Q.
inline Matrix lyap_form(const Matrix& q, const Matrix& b) {
  return symmetrize(q * b + b.transpose() * q);
}

// Eigenvalues of a real square matrix, multiplicities counted.
struct Spectrum {
  std::vector<Complex> eigenvalues;
  // Absolute radius of the "counts as zero" disc: tol_zero * max(1, |A|).
  double zero_tolerance = 0.0;

  std::size_t size() const { return eigenvalues.size(); }

  bool is_zero(const Complex& l) const { return std::abs(l) <= zero_tolerance; }

  bool is_real_negative(const Complex& l) const {
    return l.real() < -zero_tolerance && std::abs(l.imag()) <= zero_tolerance;
  }

  std::size_t zero_count() const {
    return static_cast<std::size_t>(
        std::count_if(eigenvalues.begin(), eigenvalues.end(), [&](const Complex& l) { return is_zero(l); }));
  }

  std::vector<Complex> real_negative() const {
    std::vector<Complex> out;
    for (const auto& l : eigenvalues)
      if (is_real_negative(l)) out.push_back(l);
    return out;
  }

  // All eigenvalues have Re < -tol.
  bool hurwitz() const {
    return std::all_of(eigenvalues.begin(), eigenvalues.end(),
                       [&](const Complex& l) { return l.real() < -zero_tolerance; });
  }

  // All eigenvalues have Re < -tol except exactly one inside the zero disc.
  bool hurwitz_except_simple_zero() const {
    std::size_t zeros = 0;
    for (const auto& l : eigenvalues) {
      if (is_zero(l))
        ++zeros;
      else if (l.real() >= -zero_tolerance)
        return false;
    }
    return zeros == 1;
  }

  double max_real() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& l : eigenvalues) m = std::max(m, l.real());
    return m;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& l : eigenvalues) m = std::max(m, std::abs(l));
    return m;
  }

  // Sorted by (real, imag) for stable reporting.
  std::vector<Complex> sorted() const {
    auto v = eigenvalues;
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
      return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return v;
  }
};

inline Spectrum eig_general(const Matrix& a, double tol_zero = kTolZero) {
  require_square(a, "eig_general");
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericError("eig_general: real Schur QR iteration did not converge");
  Spectrum s;
  s.zero_tolerance = tol_zero * std::max(1.0, norm_abs(a));
  const auto& ev = es.eigenvalues();
  s.eigenvalues.reserve(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) s.eigenvalues.push_back(ev(i));
  return s;
}

inline Vector sym_eigenvalues(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolve did not converge");
  return es.eigenvalues();
}

inline double min_eig(const Matrix& s) { return sym_eigenvalues(s).minCoeff(); }
inline double max_eig(const Matrix& s) { return sym_eigenvalues(s).maxCoeff(); }

// Spectral norm of a symmetric matrix (largest |eigenvalue|).
inline double sym_norm2(const Matrix& s) { return sym_eigenvalues(s).cwiseAbs().maxCoeff(); }

// True iff the smallest eigenvalue exceeds tol * |S|_2.
inline bool is_positive_definite(const Matrix& s, double tol = 0.0) {
  require_square(s, "is_positive_definite");
  const Vector ev = sym_eigenvalues(s);
  const double scale = ev.cwiseAbs().maxCoeff();
  return ev.minCoeff() > tol * scale && ev.minCoeff() > 0.0;
}

inline double spectral_radius(const Matrix& n) { return eig_general(n).max_abs(); }

// R = s I - N with N >= 0 entrywise.
struct MMatrixDecomposition {
  double s = 0.0;
  Matrix N;
  double rho = 0.0;
  bool nonsingular = false;
};

struct MMatrixResult {
  std::optional<MMatrixDecomposition> decomposition;
  std::string rejection;

  explicit operator bool() const { return decomposition.has_value(); }
  const MMatrixDecomposition& operator*() const { return *decomposition; }
  const MMatrixDecomposition* operator->() const { return &*decomposition; }
};

inline MMatrixResult m_matrix_decompose(const Matrix& r, double tol_zero = kTolZero) {
  require_square(r, "m_matrix_decompose");
  const Eigen::Index k = r.rows();
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (i != j && r(i, j) > 0.0) {
        std::ostringstream os;
        os << "positive off-diagonal entry R(" << i << "," << j << ") = " << r(i, j);
        return {std::nullopt, os.str()};
      }
  MMatrixDecomposition d;
  d.s = r.diagonal().maxCoeff();
  // With a nonpositive diagonal any positive shift works; R is then singular.
  if (d.s <= 0.0) d.s = 1.0;
  d.N = d.s * identity(k) - r;
  d.N = d.N.cwiseMax(0.0);  // clears -0.0 on the diagonal
  d.rho = spectral_radius(d.N);
  d.nonsingular = d.rho < d.s - tol_zero * std::max(1.0, norm_abs(r));
  return {std::move(d), {}};
}

// Solves A X + X A' = -W for symmetric X by the complex Schur form of A
// (Bartels-Stewart with one triangular factor).
inline Matrix lyapunov_solve(const Matrix& a, const Matrix& w) {
  require_square(a, "lyapunov_solve");
  if (w.rows() != a.rows() || w.cols() != a.cols()) throw InvalidInput("lyapunov_solve: W shape mismatch");
  const Eigen::Index n = a.rows();
  Eigen::ComplexSchur<Matrix> schur(a);
  if (schur.info() != Eigen::Success) throw NumericError("lyapunov_solve: Schur decomposition failed");
  const Eigen::MatrixXcd& u = schur.matrixU();
  const Eigen::MatrixXcd& t = schur.matrixT();

  // Separation of the Sylvester operator: min |t_ii + conj(t_jj)|.
  double sep = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sep = std::min(sep, std::abs(t(i, i) + std::conj(t(j, j))));
  const double scale = std::max(1.0, norm_abs(a));
  if (sep <= 1e-13 * scale) {
    std::ostringstream os;
    os << "lyapunov_solve: A and -A share an eigenvalue (condition estimate " << scale / sep << ")";
    throw NumericError(os.str());
  }

  const Eigen::MatrixXcd c = u.adjoint() * w.cast<Complex>() * u;
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    Eigen::VectorXcd rhs = -c.col(j);
    for (Eigen::Index k = j + 1; k < n; ++k) rhs -= std::conj(t(j, k)) * y.col(k);
    Eigen::MatrixXcd shifted = t;
    shifted.diagonal().array() += std::conj(t(j, j));
    y.col(j) = shifted.triangularView<Eigen::Upper>().solve(rhs);
  }
  const Matrix x = (u * y * u.adjoint()).real();
  return symmetrize(x);
}

// Orthonormal basis of the orthogonal complement of span(v) (v nonzero).
inline Matrix complement_basis(const Vector& v) {
  const Eigen::Index k = v.size();
  Eigen::HouseholderQR<Matrix> qr(v);
  const Matrix q = qr.householderQ() * identity(k);
  return q.rightCols(k - 1);
}

}  // namespace pwou
