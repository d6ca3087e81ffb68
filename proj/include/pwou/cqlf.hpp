#pragma once

// Common quadratic Lyapunov functions for pairs (B1, B2) whose difference
// has rank one, with B1 Hurwitz and B2 either Hurwitz or Hurwitz up to a
// simple zero eigenvalue.
//
// Existence is decided spectrally from B1 B2. Certificates are built by a
// barrier-method LMI solve; when B2 is singular the solve is restricted to
// the subspace {Q : Q v parallel to w} (v, w the right/left kernel vectors
// of B2), which every CQLF must lie in, so the semidefinite constraint is
// met exactly rather than to a tolerance. Non-existence is certified by a
// dual pair (X, Z) >= 0 with B1 X + X B1' + B2 Z + Z B2' = 0.

#include "pwou/assumptions.hpp"
#include "pwou/detail/lmi.hpp"
#include "pwou/matkit.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pwou {

struct Rank1 {
  Vector g;
  Vector h;
};

// B2 = B1 - g h' when rank1 is present.
struct MatrixPair {
  Matrix B1;
  Matrix B2;
  std::optional<Rank1> rank1;

  Eigen::Index dim() const { return B1.rows(); }
};

inline MatrixPair make_rank1_pair(const Matrix& b, const Vector& g, const Vector& h) {
  require_square(b, "make_rank1_pair");
  if (g.size() != b.rows() || h.size() != b.rows()) throw InvalidInput("make_rank1_pair: g/h length mismatch");
  return {b, b - g * h.transpose(), Rank1{g, h}};
}

// Factor B1 - B2 = g h' from its dominant singular pair; nullopt when the
// difference is not numerically rank one.
inline std::optional<Rank1> extract_rank1(const Matrix& b1, const Matrix& b2) {
  const Matrix d = b1 - b2;
  Eigen::JacobiSVD<Matrix> svd(d, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return std::nullopt;
  if (sv.size() > 1 && sv(1) > 1e-8 * sv(0)) return std::nullopt;
  return Rank1{sv(0) * svd.matrixU().col(0), svd.matrixV().col(0)};
}

inline void validate_pair(const MatrixPair& pair) {
  require_square(pair.B1, "pair.B1");
  require_square(pair.B2, "pair.B2");
  if (pair.B1.rows() != pair.B2.rows()) throw InvalidInput("pair: B1 and B2 differ in dimension");
  if (pair.rank1) {
    const auto& r = *pair.rank1;
    if (r.g.size() != pair.dim() || r.h.size() != pair.dim()) throw InvalidInput("pair: g/h length mismatch");
    const double err = norm_abs(pair.B1 - pair.B2 - r.g * r.h.transpose());
    if (err > 1e-10 * (norm_abs(pair.B1) + norm_abs(pair.B2)))
      throw InvalidInput("pair: B1 - B2 does not equal g h'");
  }
}

inline Rank1 rank1_of(const MatrixPair& pair) {
  if (pair.rank1) return *pair.rank1;
  auto r = extract_rank1(pair.B1, pair.B2);
  if (!r) throw InvalidInput("pair: B1 - B2 is not rank one");
  return *r;
}

struct PairSpectra {
  bool ok = false;
  bool b2_hurwitz = false;  // strong setting: both constituents Hurwitz
  Spectrum b1;
  Spectrum b2;
  std::string diagnostic;
};

// B1 Hurwitz, B2 Hurwitz except for one simple zero eigenvalue.
inline PairSpectra check_pair_spectra(const MatrixPair& pair, double tol_zero = kTolZero) {
  validate_pair(pair);
  PairSpectra out;
  out.b1 = eig_general(pair.B1, tol_zero);
  out.b2 = eig_general(pair.B2, tol_zero);
  out.b2_hurwitz = out.b2.hurwitz();
  const bool b1_ok = out.b1.hurwitz();
  const bool b2_ok = out.b2.hurwitz_except_simple_zero();
  out.ok = b1_ok && b2_ok;
  std::ostringstream os;
  if (!b1_ok) os << "B1 is not Hurwitz (max Re = " << out.b1.max_real() << "); ";
  if (!b2_ok) {
    if (out.b2.zero_count() != 1)
      os << "B2 has " << out.b2.zero_count() << " eigenvalues in the zero disc; ";
    else
      os << "B2 has a nonzero eigenvalue with Re >= 0; ";
  }
  out.diagnostic = os.str();
  return out;
}

enum class Verdict { exists, not_exists, precondition_failed };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::exists: return "exists";
    case Verdict::not_exists: return "not_exists";
    case Verdict::precondition_failed: return "precondition_failed";
  }
  return "?";
}

struct DualWitness {
  Matrix X;
  Matrix Z;
  double residual = 0.0;       // |B1 X + X B1' + B2 Z + Z B2'|_F with tr(X + Z) = 1
  double lyap_x_norm = 0.0;    // |B1 X + X B1'|_F, nonzero in a proper witness
  double lyap_z_norm = 0.0;    // |B2 Z + Z B2'|_F
  double exclusion_distance = 1.0;  // relative distance of Z from span(B1^{-1} g g' B1^{-T})
  std::string method;
};

struct ExistenceReport {
  Verdict verdict = Verdict::precondition_failed;
  Spectrum product_spectrum;
  std::optional<Complex> failing_eigenvalue;
  std::optional<DualWitness> witness;
  std::string diagnostic;
};

struct CqlfCertificate {
  Matrix Q;                 // normalized to |Q| = 1 (entrywise absolute norm)
  double res_strict = 0.0;  // max eig of Q B1 + B1' Q
  double res_semi = 0.0;    // max eig of Q B2 + B2' Q
  double min_eig_Q = 0.0;
  double margin = 0.0;      // optimal LMI margin reached by the solver
  int solver_steps = 0;
};

struct CqlfOptions {
  double tol_zero = kTolZero;
  double strict_margin = 1e-8;  // require res_strict <= -strict_margin |B1|
  double tol_semi = 1e-9;       // require res_semi <= tol_semi |B2|
  int max_newton = 4000;
  double gap_tol = 1e-9;
};

class ConstructionFailure : public NumericError {
 public:
  ConstructionFailure(const std::string& what, CqlfCertificate best)
      : NumericError(what), best_(std::move(best)) {}
  const CqlfCertificate& best() const { return best_; }

 private:
  CqlfCertificate best_;
};

inline CqlfCertificate certify(const Matrix& q, const MatrixPair& pair) {
  CqlfCertificate c;
  c.Q = symmetrize(q);
  const double n = norm_abs(c.Q);
  if (n > 0.0) c.Q /= n;
  c.res_strict = max_eig(lyap_form(c.Q, pair.B1));
  c.res_semi = max_eig(lyap_form(c.Q, pair.B2));
  c.min_eig_Q = min_eig(c.Q);
  return c;
}

// Def.-style acceptance of a certificate at the given tolerances.
inline bool certificate_passes(const CqlfCertificate& c, const MatrixPair& pair, const CqlfOptions& opt = {}) {
  return c.min_eig_Q > 0.0 && c.res_strict <= -opt.strict_margin * norm_abs(pair.B1) &&
         c.res_semi <= opt.tol_semi * norm_abs(pair.B2);
}

// Both forms strictly negative.
inline bool strong_certificate_passes(const CqlfCertificate& c, const MatrixPair& pair,
                                      const CqlfOptions& opt = {}) {
  return c.min_eig_Q > 0.0 && c.res_strict <= -opt.strict_margin * norm_abs(pair.B1) &&
         c.res_semi <= -opt.strict_margin * norm_abs(pair.B2);
}

inline ExistenceReport cqlf_exists(const MatrixPair& pair, double tol_zero = kTolZero) {
  ExistenceReport rep;
  const auto spectra = check_pair_spectra(pair, tol_zero);
  if (!pair.rank1 && !extract_rank1(pair.B1, pair.B2)) {
    rep.diagnostic = "B1 - B2 is not rank one";
    return rep;
  }
  if (!spectra.ok) {
    rep.diagnostic = spectra.diagnostic;
    return rep;
  }
  rep.product_spectrum = eig_general(pair.B1 * pair.B2, tol_zero);
  const auto negatives = rep.product_spectrum.real_negative();
  const std::size_t zeros = rep.product_spectrum.zero_count();
  if (!negatives.empty()) {
    rep.verdict = Verdict::not_exists;
    rep.failing_eigenvalue = negatives.front();
    std::ostringstream os;
    os << negatives.size() << " real negative eigenvalue(s) of B1 B2";
    rep.diagnostic = os.str();
  } else if (zeros != 1) {
    rep.verdict = Verdict::not_exists;
    for (const auto& l : rep.product_spectrum.eigenvalues)
      if (rep.product_spectrum.is_zero(l)) rep.failing_eigenvalue = l;
    std::ostringstream os;
    os << "zero eigenvalue of B1 B2 is not simple (" << zeros << " in the zero disc)";
    rep.diagnostic = os.str();
  } else {
    rep.verdict = Verdict::exists;
  }
  return rep;
}

struct StrongReport {
  bool precondition_ok = false;
  bool exists = false;
  Spectrum product_spectrum;
  std::vector<Complex> real_negative;
  std::string diagnostic;
};

// Both constituents Hurwitz with a rank-one difference: a strong CQLF exists
// iff B1 B2 has no real negative eigenvalue.
inline StrongReport strong_cqlf_exists(const MatrixPair& pair, double tol_zero = kTolZero) {
  validate_pair(pair);
  StrongReport rep;
  if (!pair.rank1 && !extract_rank1(pair.B1, pair.B2)) {
    rep.diagnostic = "B1 - B2 is not rank one";
    return rep;
  }
  if (!eig_general(pair.B1, tol_zero).hurwitz() || !eig_general(pair.B2, tol_zero).hurwitz()) {
    rep.diagnostic = "B1 and B2 must both be Hurwitz";
    return rep;
  }
  rep.precondition_ok = true;
  rep.product_spectrum = eig_general(pair.B1 * pair.B2, tol_zero);
  rep.real_negative = rep.product_spectrum.real_negative();
  rep.exists = rep.real_negative.empty();
  if (!rep.exists) {
    std::ostringstream os;
    os << "B1 B2 has " << rep.real_negative.size() << " real negative eigenvalue(s)";
    rep.diagnostic = os.str();
  }
  return rep;
}

namespace cqlf_impl {

// Frobenius-orthonormal basis of symmetric k x k matrices.
inline std::vector<Matrix> sym_basis(Eigen::Index k) {
  std::vector<Matrix> out;
  const double r = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      Matrix e = Matrix::Zero(k, k);
      if (i == j)
        e(i, i) = 1.0;
      else
        e(i, j) = e(j, i) = r;
      out.push_back(std::move(e));
    }
  return out;
}

// Orthonormal basis of the null space of the rows of c (n columns).
inline Matrix null_space(const Matrix& c) {
  const Eigen::Index n = c.cols();
  if (c.rows() == 0) return identity(n);
  Eigen::ColPivHouseholderQR<Matrix> qr(c.transpose());
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  const Matrix q = qr.householderQ() * identity(n);
  return q.rightCols(n - rank);
}

struct Parametrization {
  Matrix q0;                  // feasible-subspace point with trace k
  std::vector<Matrix> basis;  // traceless directions inside the subspace
};

// Q restricted to {Q sym : (I - w w') Q v = 0}; unrestricted when v is empty.
inline Parametrization parametrize(Eigen::Index k, const Vector& v, const Vector& w) {
  const auto full = sym_basis(k);
  const Eigen::Index n = static_cast<Eigen::Index>(full.size());
  Matrix sub = identity(n);
  if (v.size() == k) {
    const Matrix proj = identity(k) - w * w.transpose();
    Matrix c(k, n);
    for (Eigen::Index i = 0; i < n; ++i) c.col(i) = proj * full[static_cast<std::size_t>(i)] * v;
    sub = null_space(c);
  }
  Vector coef_identity(n);
  Vector trace(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    coef_identity(i) = full[static_cast<std::size_t>(i)].trace();
    trace(i) = full[static_cast<std::size_t>(i)].trace();
  }
  Parametrization out;
  const Vector proj_identity = sub * (sub.transpose() * coef_identity);
  auto assemble = [&](const Vector& coef) {
    Matrix m = Matrix::Zero(k, k);
    for (Eigen::Index i = 0; i < n; ++i) m += coef(i) * full[static_cast<std::size_t>(i)];
    return m;
  };
  out.q0 = assemble(proj_identity);
  out.q0 *= static_cast<double>(k) / out.q0.trace();
  const Vector trace_sub = sub.transpose() * trace;
  const Matrix traceless = null_space(trace_sub.transpose());
  const Matrix dirs = sub * traceless;
  for (Eigen::Index j = 0; j < dirs.cols(); ++j) out.basis.push_back(assemble(dirs.col(j)));
  return out;
}

inline detail::LmiBlock make_block(const Parametrization& par, double weight,
                                   const std::function<Matrix(const Matrix&)>& op) {
  detail::LmiBlock b;
  b.constant = op(par.q0);
  b.weight = weight;
  for (const auto& e : par.basis) b.terms.push_back(op(e));
  return b;
}

struct KernelVectors {
  Vector right;  // B2 v = 0
  Vector left;   // B2' w = 0
};

inline KernelVectors kernel_vectors(const Matrix& b2) {
  Eigen::JacobiSVD<Matrix> svd(b2, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Index k = b2.rows();
  return {svd.matrixV().col(k - 1), svd.matrixU().col(k - 1)};
}

inline CqlfCertificate solve(const MatrixPair& pair, bool singular, const CqlfOptions& opt) {
  const Eigen::Index k = pair.dim();
  Vector v, w;
  Matrix p2 = identity(k);
  if (singular) {
    const auto kv = kernel_vectors(pair.B2);
    v = kv.right;
    w = kv.left;
    p2 = complement_basis(v);
  }
  const auto par = parametrize(k, v, w);
  const double w1 = std::max(1e-300, pair.B1.norm());
  const double w2 = std::max(1e-300, pair.B2.norm());
  std::vector<detail::LmiBlock> blocks;
  blocks.push_back(make_block(par, 1.0, [](const Matrix& q) { return q; }));
  blocks.push_back(make_block(par, w1, [&](const Matrix& q) { return Matrix(-lyap_form(q, pair.B1)); }));
  if (p2.cols() > 0)
    blocks.push_back(make_block(par, w2, [&](const Matrix& q) {
      return Matrix(-p2.transpose() * lyap_form(q, pair.B2) * p2);
    }));
  detail::LmiOptions lo;
  lo.max_newton = opt.max_newton;
  lo.gap_tol = opt.gap_tol;
  const auto res = detail::maximize_margin(blocks, static_cast<Eigen::Index>(par.basis.size()), lo);
  Matrix q = par.q0;
  for (std::size_t i = 0; i < par.basis.size(); ++i) q += res.x(static_cast<Eigen::Index>(i)) * par.basis[i];
  auto cert = certify(q, pair);
  cert.margin = res.t;
  cert.solver_steps = res.newton_steps;
  return cert;
}

}  // namespace cqlf_impl

// Builds Q > 0 with Q B1 + B1' Q < 0 and Q B2 + B2' Q <= 0. Throws
// ConstructionFailure (carrying the best iterate) if the tolerances are not
// met; that signals conditioning trouble, not non-existence.
inline CqlfCertificate construct_cqlf(const MatrixPair& pair, const CqlfOptions& opt = {}) {
  const auto spectra = check_pair_spectra(pair, opt.tol_zero);
  if (!spectra.b1.hurwitz()) throw InvalidInput("construct_cqlf: B1 is not Hurwitz");
  const bool singular = !spectra.b2_hurwitz;
  if (singular && !spectra.ok) throw InvalidInput("construct_cqlf: " + spectra.diagnostic);
  auto cert = cqlf_impl::solve(pair, singular, opt);
  if (!certificate_passes(cert, pair, opt)) {
    std::ostringstream os;
    os << "construct_cqlf: feasibility search ended with res_strict = " << cert.res_strict
       << ", res_semi = " << cert.res_semi << ", margin = " << cert.margin;
    throw ConstructionFailure(os.str(), cert);
  }
  return cert;
}

// Strict (strong) variant: both forms negative definite. Returns nullopt
// when the optimal margin is not positive.
inline std::optional<CqlfCertificate> construct_strong_cqlf(const MatrixPair& pair, const CqlfOptions& opt = {}) {
  validate_pair(pair);
  auto cert = cqlf_impl::solve(pair, /*singular=*/false, opt);
  if (!strong_certificate_passes(cert, pair, opt)) return std::nullopt;
  return cert;
}

// R' Q R, normalized. A CQLF for (-R, -R(I - p e')) maps to one for
// (-R, -(I - p e') R).
inline Matrix transfer_cqlf(const Matrix& q, const Matrix& r) {
  Matrix t = symmetrize(r.transpose() * q * r);
  const double n = norm_abs(t);
  return n > 0.0 ? Matrix(t / n) : t;
}

// -R(I - p e') - alpha p e', the overload-side drift matrix with abandonment.
inline Matrix overload_drift_matrix(const Matrix& r, const Vector& p, double alpha) {
  return -r * centering(p) - alpha * p * ones(p.size()).transpose();
}

inline bool drift_matrix_hurwitz(const Matrix& r, const Vector& p, double alpha, double tol_zero = kTolZero) {
  return eig_general(overload_drift_matrix(r, p, alpha), tol_zero).hurwitz();
}

// (-R, -R(I - p e')): B1 - B2 = -R p e', so g = -R p, h = e.
inline MatrixPair first_pair(const Matrix& r, const Vector& p) {
  return make_rank1_pair(-r, -r * p, ones(p.size()));
}

// (-R, -(I - p e') R): B1 - B2 = -p e' R, so g = -p, h = R' e.
inline MatrixPair second_pair(const Matrix& r, const Vector& p) {
  return make_rank1_pair(-r, -p, r.transpose() * ones(p.size()));
}

// (-R, -R(I - p e') - alpha p e'): B1 - B2 = (alpha I - R) p e'.
inline MatrixPair abandonment_pair(const Matrix& r, const Vector& p, double alpha) {
  const Eigen::Index k = p.size();
  return make_rank1_pair(-r, (alpha * identity(k) - r) * p, ones(k));
}

struct Theorem1Pairs {
  MatrixPair first;
  MatrixPair second;
  ExistenceReport first_report;
  ExistenceReport second_report;
};

inline Theorem1Pairs theorem1_pairs(const Matrix& r, const Vector& p, double tol_zero = kTolZero) {
  const auto bad = rp_violations(r, p, tol_zero);
  if (!bad.empty()) throw InvalidInput("theorem1_pairs: " + bad.front());
  Theorem1Pairs out{first_pair(r, p), second_pair(r, p), {}, {}};
  out.first_report = cqlf_exists(out.first, tol_zero);
  out.second_report = cqlf_exists(out.second, tol_zero);
  return out;
}

// Orthonormal change of basis exposing the controllable part of (B, g):
//   O' B O = [[B1, B2], [0, B3]],  O' g = (g1, 0),  O' h = (h1, h2).
struct KalmanReduction {
  Matrix basis;  // O; the first `rank` columns span the Krylov space of (B, g)
  Eigen::Index rank = 0;
  Matrix transformed;  // O' B O
  Matrix B1, B2, B3;
  Vector g1, h1;
  double leak = 0.0;  // |lower-left block|, zero up to rounding

  MatrixPair reduced_pair() const { return make_rank1_pair(B1, g1, h1); }
};

inline KalmanReduction kalman_reduce(const Matrix& b, const Vector& g, const Vector& h, double rank_tol = 1e-10) {
  require_square(b, "kalman_reduce");
  const Eigen::Index k = b.rows();
  if (g.size() != k || h.size() != k) throw InvalidInput("kalman_reduce: g/h length mismatch");
  if (g.norm() == 0.0) throw InvalidInput("kalman_reduce: g = 0 is degenerate");

  Matrix u(k, k);
  Eigen::Index r = 0;
  u.col(r++) = g.normalized();
  const double scale = std::max(1.0, b.norm());
  while (r < k) {
    Vector next = b * u.col(r - 1);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < r; ++j) next -= u.col(j).dot(next) * u.col(j);
    if (next.norm() <= rank_tol * scale) break;
    u.col(r++) = next.normalized();
  }
  KalmanReduction out;
  out.rank = r;
  Matrix basis(k, k);
  basis.leftCols(r) = u.leftCols(r);
  if (r < k) {
    Eigen::HouseholderQR<Matrix> qr(u.leftCols(r));
    const Matrix q = qr.householderQ() * identity(k);
    basis.rightCols(k - r) = q.rightCols(k - r);
  }
  out.basis = basis;
  out.transformed = basis.transpose() * b * basis;
  out.B1 = out.transformed.topLeftCorner(r, r);
  out.B2 = out.transformed.topRightCorner(r, k - r);
  out.B3 = out.transformed.bottomRightCorner(k - r, k - r);
  out.leak = out.transformed.bottomLeftCorner(k - r, r).norm();
  out.g1 = (basis.transpose() * g).head(r);
  out.h1 = (basis.transpose() * h).head(r);
  return out;
}

// Observability side: the Krylov space of (B', h). In this basis B is block
// lower triangular, and the reduced pair is (U'BU, U'BU - (U'g)(U'h)').
inline KalmanReduction kalman_reduce_observable(const Matrix& b, const Vector& g, const Vector& h,
                                                double rank_tol = 1e-10) {
  if (h.norm() == 0.0) throw InvalidInput("kalman_reduce_observable: h = 0 is degenerate");
  auto t = kalman_reduce(b.transpose(), h, g, rank_tol);
  KalmanReduction out = t;
  const Eigen::Index r = t.rank;
  out.transformed = t.basis.transpose() * b * t.basis;
  out.B1 = out.transformed.topLeftCorner(r, r);
  out.B2 = out.transformed.bottomLeftCorner(b.rows() - r, r);
  out.B3 = out.transformed.bottomRightCorner(b.rows() - r, b.rows() - r);
  out.leak = out.transformed.topRightCorner(r, b.rows() - r).norm();
  out.g1 = (t.basis.transpose() * g).head(r);
  out.h1 = (t.basis.transpose() * h).head(r);
  return out;
}

struct WitnessOptions {
  CqlfOptions cqlf;
  int max_iterations = 20000;
  double tol = 1e-6;  // residual tolerance relative to |B1| + |B2|
  bool allow_closed_form = true;
};

struct WitnessSearch {
  enum class Status { found, none, inconclusive };
  Status status = Status::inconclusive;
  std::optional<DualWitness> witness;
  std::optional<CqlfCertificate> certificate;  // populated when status == none
  std::string detail;
};

inline const char* to_string(WitnessSearch::Status s) {
  switch (s) {
    case WitnessSearch::Status::found: return "found";
    case WitnessSearch::Status::none: return "none";
    case WitnessSearch::Status::inconclusive: return "inconclusive";
  }
  return "?";
}

namespace cqlf_impl {

inline Matrix lyap_image(const Matrix& b, const Matrix& x) { return b * x + x * b.transpose(); }

// Normalizes to tr(X + Z) = 1 and fills the diagnostics.
inline DualWitness finish_witness(Matrix x, Matrix z, const MatrixPair& pair, bool singular,
                                  std::string method) {
  x = symmetrize(x);
  z = symmetrize(z);
  const double tr = x.trace() + z.trace();
  if (tr > 0.0) {
    x /= tr;
    z /= tr;
  }
  DualWitness w;
  w.X = x;
  w.Z = z;
  const Matrix lx = lyap_image(pair.B1, x);
  const Matrix lz = lyap_image(pair.B2, z);
  w.residual = (lx + lz).norm();
  w.lyap_x_norm = lx.norm();
  w.lyap_z_norm = lz.norm();
  if (singular) {
    const Rank1 r = rank1_of(pair);
    const Vector bg = pair.B1.partialPivLu().solve(r.g);
    const Matrix e = bg * bg.transpose();
    const double c = (z.array() * e.array()).sum() / e.squaredNorm();
    const double zn = z.norm();
    w.exclusion_distance = zn > 0.0 ? (z - c * e).norm() / zn : 0.0;
  }
  w.method = std::move(method);
  return w;
}

inline bool witness_valid(const DualWitness& w, const MatrixPair& pair, bool singular, double tol) {
  const double scale = norm_abs(pair.B1) + norm_abs(pair.B2);
  const double floor = -1e-10;
  if (min_eig(w.X) < floor || min_eig(w.Z) < floor) return false;
  if (w.X.norm() <= 1e-12 || w.Z.norm() <= 1e-12) return false;
  if (w.residual > tol * scale) return false;
  if (singular && w.exclusion_distance <= 1e-6) return false;
  return true;
}

// From a real negative eigenvalue -gamma of B1 B2 with eigenvector w:
// X = u u' with u = B2 w and Z = gamma w w' cancel exactly.
inline std::optional<DualWitness> closed_form_witness(const MatrixPair& pair, bool singular, double tol_zero) {
  Eigen::EigenSolver<Matrix> es(pair.B1 * pair.B2);
  if (es.info() != Eigen::Success) return std::nullopt;
  const double ztol = tol_zero * std::max(1.0, norm_abs(pair.B1 * pair.B2));
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const Complex l = es.eigenvalues()(i);
    if (!(l.real() < -ztol && std::abs(l.imag()) <= ztol)) continue;
    Vector w = es.eigenvectors().col(i).real();
    if (w.norm() == 0.0) w = es.eigenvectors().col(i).imag();
    w.normalize();
    const double gamma = -l.real();
    const Vector u = pair.B2 * w;
    return finish_witness(u * u.transpose(), gamma * w * w.transpose(), pair, singular, "closed_form");
  }
  return std::nullopt;
}

inline Vector project_simplex(const Vector& v, double total) {
  Vector s = v;
  std::sort(s.data(), s.data() + s.size(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    cum += s(i);
    const double t = (cum - total) / static_cast<double>(i + 1);
    if (s(i) - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

inline Matrix project_psd(const Matrix& m, std::optional<double> trace) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  Vector ev = es.eigenvalues();
  ev = trace ? project_simplex(ev, *trace) : Vector(ev.cwiseMax(0.0));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Range basis of a PSD matrix (eigenvalues above rel * max).
inline Matrix psd_range(const Matrix& m, double rel) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  const double top = es.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > rel * top) keep.push_back(i);
  Matrix out(m.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
  return out;
}

// Least-squares refinement on the faces spanned by ux and uz with tr(X) = 1.
inline std::optional<std::pair<Matrix, Matrix>> polish_on_face(const MatrixPair& pair, const Matrix& ux,
                                                               const Matrix& uz) {
  const auto bx = sym_basis(ux.cols());
  const auto bz = sym_basis(uz.cols());
  const Eigen::Index nx = static_cast<Eigen::Index>(bx.size()), nz = static_cast<Eigen::Index>(bz.size());
  const Eigen::Index k = pair.dim();
  Matrix a(k * k, nx + nz);
  Vector trace_row = Vector::Zero(nx + nz);
  for (Eigen::Index i = 0; i < nx; ++i) {
    const Matrix x = ux * bx[static_cast<std::size_t>(i)] * ux.transpose();
    a.col(i) = lyap_image(pair.B1, x).reshaped();
    trace_row(i) = x.trace();
  }
  for (Eigen::Index i = 0; i < nz; ++i)
    a.col(nx + i) = lyap_image(pair.B2, uz * bz[static_cast<std::size_t>(i)] * uz.transpose()).reshaped();
  // min |a c| subject to trace_row' c = 1 via the KKT system.
  const Eigen::Index n = nx + nz;
  Matrix kkt = Matrix::Zero(n + 1, n + 1);
  kkt.topLeftCorner(n, n) = a.transpose() * a;
  kkt.block(0, n, n, 1) = trace_row;
  kkt.block(n, 0, 1, n) = trace_row.transpose();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  Matrix x = Matrix::Zero(k, k), z = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < nx; ++i) x += sol(i) * (ux * bx[static_cast<std::size_t>(i)] * ux.transpose());
  for (Eigen::Index i = 0; i < nz; ++i)
    z += sol(nx + i) * (uz * bz[static_cast<std::size_t>(i)] * uz.transpose());
  if (!x.allFinite() || !z.allFinite()) return std::nullopt;
  return std::make_pair(symmetrize(x), symmetrize(z));
}

// Accelerated projected gradient on 1/2 |L_B1(X) + L_B2(Z)|^2 over
// {X >= 0, tr X = 1} x {Z >= 0}, then a least-squares polish on the face.
// Fixing tr X = 1 excludes the trivial X = 0, Z ~ B1^{-1} g g' B1^{-T}
// solution when B2 is singular.
inline std::optional<DualWitness> searched_witness(const MatrixPair& pair, bool singular, const WitnessOptions& opt) {
  const Eigen::Index k = pair.dim();
  const double s = std::max(norm_abs(pair.B1), norm_abs(pair.B2));
  const Matrix b1 = pair.B1 / s, b2 = pair.B2 / s;
  const double lip = 4.0 * (std::pow(b1.norm(), 2) + std::pow(b2.norm(), 2));
  Matrix x = identity(k) / static_cast<double>(k), z = identity(k) / static_cast<double>(k);
  Matrix xm = x, zm = z;
  double tk = 1.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Matrix r = lyap_image(b1, xm) + lyap_image(b2, zm);
    const Matrix gx = b1.transpose() * r + r * b1;
    const Matrix gz = b2.transpose() * r + r * b2;
    const Matrix xn = project_psd(xm - gx / lip, 1.0);
    const Matrix zn = project_psd(zm - gz / lip, std::nullopt);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    xm = xn + ((tk - 1.0) / tn) * (xn - x);
    zm = zn + ((tk - 1.0) / tn) * (zn - z);
    x = xn;
    z = zn;
    tk = tn;
  }
  if (z.norm() == 0.0) return std::nullopt;
  for (double rel : {1e-3, 1e-5, 1e-8}) {
    auto face = polish_on_face(pair, psd_range(x, rel), psd_range(z, rel));
    if (!face) continue;
    auto w = finish_witness(face->first, face->second, pair, singular, "projected_gradient");
    if (witness_valid(w, pair, singular, opt.tol)) return w;
  }
  auto w = finish_witness(x, z, pair, singular, "projected_gradient");
  if (witness_valid(w, pair, singular, opt.tol)) return w;
  return std::nullopt;
}

}  // namespace cqlf_impl

// Searches for a nonzero pair X, Z >= 0 with B1 X + X B1' + B2 Z + Z B2' = 0
// (and, when B2 is singular, Z not proportional to B1^{-1} g g' B1^{-T}).
// Returns none when a CQLF certificate is found instead.
inline WitnessSearch dual_witness(const MatrixPair& pair, const WitnessOptions& opt = {}) {
  WitnessSearch out;
  const auto spectra = check_pair_spectra(pair, opt.cqlf.tol_zero);
  const bool strong = spectra.b1.hurwitz() && spectra.b2_hurwitz;
  if (!strong && !spectra.ok) throw InvalidInput("dual_witness: " + spectra.diagnostic);
  const bool singular = !strong;

  if (strong) {
    if (auto cert = construct_strong_cqlf(pair, opt.cqlf)) {
      out.status = WitnessSearch::Status::none;
      out.certificate = cert;
      out.detail = "strong CQLF certificate found";
      return out;
    }
  } else {
    try {
      out.certificate = construct_cqlf(pair, opt.cqlf);
      out.status = WitnessSearch::Status::none;
      out.detail = "CQLF certificate found";
      return out;
    } catch (const ConstructionFailure&) {
      out.certificate.reset();
    }
  }
  if (opt.allow_closed_form) {
    if (auto w = cqlf_impl::closed_form_witness(pair, singular, opt.cqlf.tol_zero);
        w && cqlf_impl::witness_valid(*w, pair, singular, opt.tol)) {
      out.status = WitnessSearch::Status::found;
      out.witness = w;
      out.detail = "witness from a real negative eigenvalue of B1 B2";
      return out;
    }
  }
  if (auto w = cqlf_impl::searched_witness(pair, singular, opt)) {
    out.status = WitnessSearch::Status::found;
    out.witness = w;
    out.detail = "witness from projected-gradient search";
    return out;
  }
  out.detail = "search budget exhausted without certificate or witness";
  return out;
}

}  // namespace pwou
