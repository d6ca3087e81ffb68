#pragma once

// Lyapunov functions for the piecewise OU model and a sampled check of the
// drift inequalities.
//
//   alpha = 0, beta > 0:  L(y) = y'Qy with Q a CQLF for (-R, -R(I - pe'))
//   alpha > 0:            V(y) = (e'y)^2 + kappa w'Qt w,  w = y - p phi(e'y)
//
// with Qt a CQLF for (-R, -(I - pe')R) and phi a C^2 smoothing of x^+.

#include "pwou/cqlf.hpp"
#include "pwou/detail/parallel.hpp"
#include "pwou/oumodel.hpp"
#include "pwou/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pwou {

// phi(x) = x for x >= 0, -eps/2 for x <= -eps; on the band, with
// u = (x + eps)/eps, phi = -eps/2 + eps u^3 (1 - u/2) and phi' = 3u^2 - 2u^3.
inline double phi(double x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("phi: eps must be positive");
  if (x >= 0.0) return x;
  if (x <= -eps) return -0.5 * eps;
  const double u = (x + eps) / eps;
  return -0.5 * eps + eps * u * u * u * (1.0 - 0.5 * u);
}

inline double phi_dot(double x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("phi_dot: eps must be positive");
  if (x >= 0.0) return 1.0;
  if (x <= -eps) return 0.0;
  const double u = (x + eps) / eps;
  return u * u * (3.0 - 2.0 * u);
}

inline double phi_ddot(double x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("phi_ddot: eps must be positive");
  if (x >= 0.0 || x <= -eps) return 0.0;
  const double u = (x + eps) / eps;
  return 6.0 * u * (1.0 - u) / eps;
}

struct QuadraticLyapunov {
  Matrix Q;
  CqlfCertificate certificate;

  double value(const Vector& y) const { return y.dot(Q * y); }
  Vector gradient(const Vector& y) const { return 2.0 * (Q * y); }
  Matrix hessian(const Vector&) const { return 2.0 * Q; }
};

struct SmoothedLyapunov {
  Matrix Qtilde;
  double kappa = 1.0;
  double epsilon = 1e-2;
  Vector p;
  CqlfCertificate certificate;

  double value(const Vector& y) const {
    const double x = y.sum();
    const Vector w = y - p * phi(x, epsilon);
    return x * x + kappa * w.dot(Qtilde * w);
  }

  // 2(e'y)e + 2 kappa (I - phi' e p') Qt w
  Vector gradient(const Vector& y) const {
    const double x = y.sum();
    const Vector w = y - p * phi(x, epsilon);
    const Vector qw = Qtilde * w;
    Vector g = 2.0 * kappa * qw;
    g.array() += 2.0 * x - 2.0 * kappa * phi_dot(x, epsilon) * p.dot(qw);
    return g;
  }

  // 2ee' + 2 kappa [Qt - phi'(Qt p e' + e p'Qt) + (phi'^2 p'Qt p - phi'' p'Qt w) ee']
  Matrix hessian(const Vector& y) const {
    const Eigen::Index k = y.size();
    const double x = y.sum();
    const double d1 = phi_dot(x, epsilon), d2 = phi_ddot(x, epsilon);
    const Vector w = y - p * phi(x, epsilon);
    const Vector qp = Qtilde * p;
    const Vector e = Vector::Ones(k);
    const double scalar = d1 * d1 * p.dot(qp) - d2 * qp.dot(w);
    Matrix h = Qtilde - d1 * (qp * e.transpose() + e * qp.transpose());
    h.array() += scalar;
    h *= 2.0 * kappa;
    h.array() += 2.0;
    return symmetrize(h);
  }
};

inline double v_eval(const SmoothedLyapunov& v, const Vector& y) { return v.value(y); }
inline Vector v_grad(const SmoothedLyapunov& v, const Vector& y) { return v.gradient(y); }
inline Matrix v_hess(const SmoothedLyapunov& v, const Vector& y) { return v.hessian(y); }

using LyapunovSpec = std::variant<QuadraticLyapunov, SmoothedLyapunov>;

// V(y) >= c1 |y|^2 - c2 eps^2. From V >= x^2 + kappa l |w|^2, |w|^2 >= |z|^2/2 - |p|^2 eps^2/4
// with z = y - p x^+, and |y|^2 <= 2|z|^2 + 2|p|^2 x^2.
struct Coercivity {
  double c1 = 0.0;
  double c2 = 0.0;
};

inline Coercivity coercivity_constants(const SmoothedLyapunov& v) {
  const double l = min_eig(v.Qtilde);
  const double pp = v.p.squaredNorm();
  Coercivity c;
  c.c1 = std::min(0.5 / pp, 0.25 * v.kappa * l);
  c.c2 = 0.25 * v.kappa * l * pp;
  return c;
}

inline QuadraticLyapunov build_quadratic(const PiecewiseOUParams& m, const CqlfOptions& opt = {}) {
  require_valid(m);
  if (m.alpha != 0.0)
    throw InvalidInput("build_quadratic: alpha must be 0; with abandonment no quadratic Lyapunov function need exist");
  if (!(m.beta > 0.0)) throw InvalidInput("build_quadratic: requires beta > 0");
  QuadraticLyapunov out;
  out.certificate = construct_cqlf(first_pair(m.R, m.p), opt);
  out.Q = out.certificate.Q;
  return out;
}

// Constants of the restricted form on e-perp:
//   s   = sup_{e'z=0} |e'Rz| / |z|
//   c_z = min_{e'z=0} z'[Qt(I - pe')R + R'(I - ep')Qt]z / |z|^2
struct RestrictedForm {
  double s = 0.0;
  double c_z = std::numeric_limits<double>::infinity();
};

inline RestrictedForm restricted_form(const Matrix& r, const Vector& p, const Matrix& qt) {
  const Eigen::Index k = r.rows();
  RestrictedForm out;
  if (k < 2) return out;
  const Vector e = ones(k);
  const Matrix basis = complement_basis(e);  // orthonormal basis of e-perp
  out.s = (basis.transpose() * (r.transpose() * e)).norm();
  const Matrix c = centering(p);
  const Matrix form = qt * c * r + r.transpose() * c.transpose() * qt;
  out.c_z = min_eig(symmetrize(basis.transpose() * form * basis));
  return out;
}

// Explicit Case-1 bound max(1, 2 s^2 / (alpha c_z)).
inline double kappa_lower_bound(const PiecewiseOUParams& m, const Matrix& qt) {
  if (!(m.alpha > 0.0)) throw InvalidInput("kappa_lower_bound: alpha must be positive");
  const auto rf = restricted_form(m.R, m.p, qt);
  if (m.dim() < 2 || rf.s == 0.0) return 1.0;
  if (!(rf.c_z > 0.0)) {
    std::ostringstream os;
    os << "kappa_lower_bound: restricted form is not positive definite (c_z = " << rf.c_z << ")";
    throw NumericError(os.str());
  }
  return std::max(1.0, 2.0 * rf.s * rf.s / (m.alpha * rf.c_z));
}

// ---------------------------------------------------------------- sampling

struct DriftOptions {
  int samples_per_shell = 4096;
  int min_shells = 4;           // shells at or beyond M required for a pass
  int scan_samples = 256;       // per radius in the threshold scan
  double min_fitted_c = 1e-6;   // smoothed target: -max GV/|y|^2 >= this
  std::uint64_t seed = 0x5eed;
  unsigned threads = 0;         // 0: hardware concurrency
};

struct ShellResult {
  double radius = 0.0;
  int samples = 0;
  double worst_gv = -std::numeric_limits<double>::infinity();
  double worst_ratio = -std::numeric_limits<double>::infinity();  // GV/|y|^2
  std::string worst_regime;
  Vector worst_point;
  bool pass = false;
};

struct DriftReport {
  std::string kind;  // "quadratic" or "smoothed"
  std::vector<ShellResult> shells;
  std::optional<double> M;
  int shells_beyond_M = 0;
  bool pass = false;
  std::optional<Vector> witness;
  std::string witness_regime;
  // Smoothed target only.
  double fitted_C = 0.0;
  double c_global = 0.0;
  double d_global = std::numeric_limits<double>::infinity();
  double kappa = 0.0;
  double epsilon = 0.0;
  std::string diagnostic;
};

namespace lyap_impl {

inline const char* regime_of(double x, double eps, bool smoothed) {
  if (x >= 0.0) return "e'y>=0";
  if (!smoothed) return "e'y<0";
  return x <= -eps ? "e'y<=-eps" : "band";
}

inline Vector unit_direction(CounterRng& rng, Eigen::Index k) {
  std::normal_distribution<double> normal;
  Vector d(k);
  do {
    for (Eigen::Index i = 0; i < k; ++i) d(i) = normal(rng);
  } while (d.norm() < 1e-12);
  return d / d.norm();
}

// Points on the sphere of radius r, stratified by regime. The quadratic
// split is 1/2 : 1/2 on the sign of e'y; the smoothed split is 2/5 e'y >= 0,
// 2/5 e'y <= -eps, 1/5 band (band drawn directly when reachable).
inline std::vector<Vector> shell_points(double r, int n, Eigen::Index k, bool smoothed, double eps,
                                        std::uint64_t seed) {
  CounterRng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  if (r == 0.0) {
    out.push_back(Vector::Zero(k));
    return out;
  }
  const double sk = std::sqrt(static_cast<double>(k));
  const Vector ehat = Vector::Ones(k) / sk;
  int n_band = 0;
  if (smoothed && k >= 2) n_band = n / 5;
  const int n_pos = (n - n_band) / 2;
  const int n_neg = n - n_band - n_pos;

  for (int i = 0; i < n_pos; ++i) {
    Vector d = unit_direction(rng, k);
    if (d.sum() < 0.0) d = -d;
    out.push_back(r * d);
  }
  for (int i = 0; i < n_neg; ++i) {
    Vector y;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Vector d = unit_direction(rng, k);
      if (d.sum() > 0.0) d = -d;
      y = r * d;
      if (!smoothed || y.sum() <= -eps) break;
    }
    out.push_back(y);
  }
  for (int i = 0; i < n_band; ++i) {
    const double smax = std::min(eps, 0.999 * r * sk);
    const double s = -smax * unif(rng);
    const double a = s / sk;
    Vector xi = unit_direction(rng, k);
    xi -= xi.dot(ehat) * ehat;
    if (xi.norm() < 1e-12) xi = Vector::Unit(k, 0) - ehat / sk;
    xi *= std::sqrt(std::max(0.0, r * r - a * a)) / xi.norm();
    out.push_back(a * ehat + xi);
  }
  return out;
}

struct Target {
  bool smoothed = false;
  double eps = 1.0;
  double min_c = 0.0;
};

inline Target target_of(const LyapunovSpec& v, const DriftOptions& opt) {
  Target t;
  if (const auto* s = std::get_if<SmoothedLyapunov>(&v)) {
    t.smoothed = true;
    t.eps = s->epsilon;
    t.min_c = opt.min_fitted_c;
  }
  return t;
}

inline double generator(const PiecewiseOUParams& m, const LyapunovSpec& v, const Vector& y) {
  return std::visit([&](const auto& f) { return generator_apply(m, f, y); }, v);
}

inline double lyap_value(const LyapunovSpec& v, const Vector& y) {
  return std::visit([&](const auto& f) { return f.value(y); }, v);
}

inline ShellResult evaluate_shell(const PiecewiseOUParams& m, const LyapunovSpec& v, const Target& tg, double r,
                                  int n, std::uint64_t seed) {
  ShellResult s;
  s.radius = r;
  const auto pts = shell_points(r, n, m.dim(), tg.smoothed, tg.eps, seed);
  s.samples = static_cast<int>(pts.size());
  s.pass = true;
  double worst_key = -std::numeric_limits<double>::infinity();
  for (const auto& y : pts) {
    const double gv = generator(m, v, y);
    const double r2 = y.squaredNorm();
    const double ratio = r2 > 0.0 ? gv / r2 : gv;
    const bool ok = std::isfinite(gv) && gv <= -1.0 && (!tg.smoothed || ratio <= -tg.min_c);
    if (!ok) s.pass = false;
    s.worst_gv = std::max(s.worst_gv, gv);
    s.worst_ratio = std::max(s.worst_ratio, ratio);
    // The reported worst point is the one with the largest GV/|y|^2.
    if (ratio > worst_key || !std::isfinite(gv)) {
      worst_key = std::isfinite(gv) ? ratio : std::numeric_limits<double>::infinity();
      s.worst_point = y;
      s.worst_regime = regime_of(y.sum(), tg.eps, tg.smoothed);
    }
  }
  return s;
}

}  // namespace lyap_impl

// Threshold scan on the doubling grid r0 2^j, j < 45 (up to about 1e10 r0):
// the smallest grid radius from which every larger grid radius passes a
// coarse check, doubled. Empty if the largest grid radius fails.
inline std::optional<double> estimate_threshold(const PiecewiseOUParams& m, const LyapunovSpec& v,
                                                const DriftOptions& opt = {}) {
  const auto tg = lyap_impl::target_of(v, opt);
  const double r0 = tg.smoothed ? std::max(1e-3, tg.eps) : 1e-3;
  constexpr int kGrid = 45;
  std::vector<char> ok(kGrid, 0);
  detail::parallel_for(
      kGrid,
      [&](std::size_t j) {
        ok[j] = lyap_impl::evaluate_shell(m, v, tg, std::ldexp(r0, static_cast<int>(j)), opt.scan_samples,
                                          derive_seed(opt.seed ^ 0xa11ce, j))
                    .pass;
      },
      opt.threads);
  int first = kGrid;
  while (first > 0 && ok[static_cast<std::size_t>(first - 1)]) --first;
  if (first == kGrid) return std::nullopt;
  return 2.0 * std::ldexp(r0, first);
}

inline std::vector<double> default_radii(double m_hat) { return {10 * m_hat, 20 * m_hat, 50 * m_hat, 100 * m_hat}; }

inline void check_consistency(const PiecewiseOUParams& m, const LyapunovSpec& v) {
  require_valid(m);
  const Eigen::Index k = m.dim();
  if (const auto* q = std::get_if<QuadraticLyapunov>(&v)) {
    if (m.alpha != 0.0 || !(m.beta > 0.0))
      throw InvalidInput("verify_drift: the quadratic function applies only when alpha = 0 and beta > 0");
    if (q->Q.rows() != k || q->Q.cols() != k) throw InvalidInput("verify_drift: Q shape does not match the model");
  } else {
    const auto& s = std::get<SmoothedLyapunov>(v);
    if (!(m.alpha > 0.0)) throw InvalidInput("verify_drift: the smoothed function requires alpha > 0");
    if (s.Qtilde.rows() != k || s.Qtilde.cols() != k || s.p.size() != k)
      throw InvalidInput("verify_drift: Qtilde/p shape does not match the model");
    if (!(s.kappa >= 1.0) || !(s.epsilon > 0.0)) throw InvalidInput("verify_drift: need kappa >= 1 and eps > 0");
  }
}

inline DriftReport verify_drift(const PiecewiseOUParams& m, const LyapunovSpec& v, std::vector<double> radii,
                                const DriftOptions& opt = {}) {
  check_consistency(m, v);
  if (radii.empty()) throw InvalidInput("verify_drift: no radii");
  if (opt.samples_per_shell < 1) throw InvalidInput("verify_drift: samples_per_shell must be positive");
  for (double r : radii)
    if (!(r > 0.0) || !std::isfinite(r)) throw InvalidInput("verify_drift: radii must be positive and finite");
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());

  const auto tg = lyap_impl::target_of(v, opt);
  DriftReport rep;
  rep.kind = tg.smoothed ? "smoothed" : "quadratic";
  if (const auto* s = std::get_if<SmoothedLyapunov>(&v)) {
    rep.kappa = s->kappa;
    rep.epsilon = s->epsilon;
  }
  rep.shells.resize(radii.size());
  detail::parallel_for(
      radii.size(),
      [&](std::size_t i) {
        rep.shells[i] = lyap_impl::evaluate_shell(m, v, tg, radii[i], opt.samples_per_shell,
                                                  derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
      },
      opt.threads);

  // M: smallest radius from which every shell passes.
  std::size_t first = rep.shells.size();
  while (first > 0 && rep.shells[first - 1].pass) --first;
  if (first < rep.shells.size()) {
    rep.M = rep.shells[first].radius;
    rep.shells_beyond_M = static_cast<int>(rep.shells.size() - first);
  }
  rep.pass = rep.M && rep.shells_beyond_M >= opt.min_shells;

  if (first > 0) {
    const auto& bad = rep.shells[first - 1];
    rep.witness = bad.worst_point;
    rep.witness_regime = bad.worst_regime;
  }

  std::ostringstream diag;
  if (!rep.M)
    diag << "no passing shell at the largest radius";
  else if (!rep.pass)
    diag << "only " << rep.shells_beyond_M << " shell(s) beyond M, need " << opt.min_shells;

  if (tg.smoothed && rep.M) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = first; i < rep.shells.size(); ++i) worst = std::max(worst, rep.shells[i].worst_ratio);
    rep.fitted_C = -worst;

    // Global GV <= -cV + d. Beyond M: GV <= -C|y|^2 and V <= rho |y|^2, so
    // c = C/rho makes GV + cV <= 0 there; d is the max of GV + cV inside.
    double rho = 0.0;
    for (std::size_t i = first; i < rep.shells.size(); ++i) {
      const auto pts = lyap_impl::shell_points(rep.shells[i].radius, 256, m.dim(), true, tg.eps,
                                               derive_seed(opt.seed ^ 0xb0b, static_cast<std::uint64_t>(i)));
      for (const auto& y : pts) rho = std::max(rho, lyap_impl::lyap_value(v, y) / y.squaredNorm());
    }
    rep.c_global = rho > 0.0 ? 0.5 * rep.fitted_C / rho : 0.0;
    const double fractions[] = {0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> inner(std::size(fractions), -std::numeric_limits<double>::infinity());
    detail::parallel_for(
        std::size(fractions),
        [&](std::size_t i) {
          const auto pts = lyap_impl::shell_points(fractions[i] * *rep.M, 512, m.dim(), true, tg.eps,
                                                   derive_seed(opt.seed ^ 0xd00d, static_cast<std::uint64_t>(i)));
          for (const auto& y : pts)
            inner[i] = std::max(inner[i], lyap_impl::generator(m, v, y) + rep.c_global * lyap_impl::lyap_value(v, y));
        },
        opt.threads);
    rep.d_global = std::max(0.0, *std::max_element(inner.begin(), inner.end()));
    if (rep.pass && !(rep.fitted_C >= opt.min_fitted_c && rep.c_global > 0.0 && std::isfinite(rep.d_global))) {
      rep.pass = false;
      diag << "global fit failed (C = " << rep.fitted_C << ", c = " << rep.c_global << ", d = " << rep.d_global << ")";
    }
  }
  rep.diagnostic = diag.str();
  return rep;
}

// Drift check on {10, 20, 50, 100} times the scanned threshold; if the scan
// never passes, the radii fall back to a fixed ladder and the report fails.
inline DriftReport verify_drift_auto(const PiecewiseOUParams& m, const LyapunovSpec& v, const DriftOptions& opt = {}) {
  check_consistency(m, v);
  const auto m_hat = estimate_threshold(m, v, opt);
  auto rep = verify_drift(m, v, m_hat ? default_radii(*m_hat) : std::vector<double>{1.0, 10.0, 100.0, 1000.0}, opt);
  if (!m_hat) {
    rep.pass = false;
    if (!rep.diagnostic.empty()) rep.diagnostic += "; ";
    rep.diagnostic += "threshold scan found no passing radius";
  }
  return rep;
}

inline double select_kappa(const PiecewiseOUParams& m, const Matrix& qt, double eps, const DriftOptions& opt = {}) {
  const double k0 = kappa_lower_bound(m, qt);
  SmoothedLyapunov v;
  v.Qtilde = qt;
  v.epsilon = eps;
  v.p = m.p;
  v.kappa = k0;
  std::string last;
  for (int doubling = 0; doubling <= 40; ++doubling, v.kappa *= 2.0) {
    const auto rep = verify_drift_auto(m, v, opt);
    if (rep.pass) return v.kappa;
    last = rep.diagnostic;
  }
  std::ostringstream os;
  os << "select_kappa: no kappa up to 2^40 * " << k0 << " passes the drift check (" << last
     << "); check the tolerances used for Qtilde";
  throw NumericError(os.str());
}

inline SmoothedLyapunov build_smoothed(const PiecewiseOUParams& m, double eps, const CqlfOptions& copt = {},
                                       const DriftOptions& dopt = {}) {
  require_valid(m);
  if (!(m.alpha > 0.0)) throw InvalidInput("build_smoothed: alpha must be positive");
  if (!(eps > 0.0)) throw InvalidInput("build_smoothed: eps must be positive");
  SmoothedLyapunov v;
  v.certificate = construct_cqlf(second_pair(m.R, m.p), copt);
  v.Qtilde = v.certificate.Q / norm_abs(v.certificate.Q);
  v.epsilon = eps;
  v.p = m.p;
  v.kappa = select_kappa(m, v.Qtilde, eps, dopt);
  return v;
}

// ------------------------------------------------- failure of quadratics

struct GridPoint {
  double t = 0.0;
  double gl = 0.0;
};

struct QuadraticFailure {
  bool found = false;
  double beta = 0.0;
  Vector v;
  double lambda = 0.0;
  std::string form;  // "Q(-R)+(-R)'Q" or the overload form
  std::vector<GridPoint> grid;
  bool grid_ok = false;
  double lambda_max_first = 0.0;
  double lambda_max_second = 0.0;
  std::string diagnostic;
};

inline std::vector<double> witness_grid(int points = 61, double t_max = 1e3) {
  std::vector<double> t{0.0};
  for (int i = 0; i < points; ++i) t.push_back(t_max * std::pow(10.0, -6.0 + 6.0 * i / (points - 1)));
  return t;
}

// Given Q >= 0 with one of Q(-R) + (-R)'Q and QD + D'Q, D = -R(I - pe') - alpha pe',
// not negative definite, exhibits v with GL(tv) >= 0 along the whole ray at beta = 0.
inline QuadraticFailure quadratic_failure_witness(const PiecewiseOUParams& m, const Matrix& q) {
  require_valid(m);
  if (!(m.alpha > 0.0)) throw InvalidInput("quadratic_failure_witness: alpha must be positive");
  const Eigen::Index k = m.dim();
  if (q.rows() != k || q.cols() != k || !q.allFinite()) throw InvalidInput("quadratic_failure_witness: Q shape mismatch");
  const Matrix qs = symmetrize(q);
  if (min_eig(qs) < -1e-12 * std::max(1.0, norm_abs(qs))) throw InvalidInput("quadratic_failure_witness: Q is not PSD");

  const Matrix a1 = lyap_form(qs, -m.R);
  const Matrix a2 = lyap_form(qs, overload_drift_matrix(m.R, m.p, m.alpha));
  Eigen::SelfAdjointEigenSolver<Matrix> s1(a1), s2(a2);
  QuadraticFailure out;
  out.lambda_max_first = s1.eigenvalues()(k - 1);
  out.lambda_max_second = s2.eigenvalues()(k - 1);
  // Rounding leaves a zero eigenvalue at about -1e-16 |Q||R|; treat that as zero.
  const double scale = std::max(1.0, norm_abs(qs)) * std::max({1.0, norm_abs(m.R), m.alpha});
  const double tol = 1e-12 * scale;
  const bool f1 = out.lambda_max_first >= -tol, f2 = out.lambda_max_second >= -tol;
  if (!f1 && !f2) {
    out.diagnostic = "no witness from this Q: both forms are negative definite";
    return out;
  }
  const bool use_first = f1 && (!f2 || out.lambda_max_first >= out.lambda_max_second);
  Vector v = use_first ? Vector(s1.eigenvectors().col(k - 1)) : Vector(s2.eigenvectors().col(k - 1));
  // Select the branch: e'v <= 0 for the first form, e'v >= 0 for the second.
  if (use_first ? v.sum() > 0.0 : v.sum() < 0.0) v = -v;
  out.found = true;
  out.beta = 0.0;
  out.v = v;
  out.lambda = use_first ? out.lambda_max_first : out.lambda_max_second;
  out.form = use_first ? "Q(-R)+(-R)'Q" : "Q(-R(I-pe')-alpha pe')+(.)'Q";

  PiecewiseOUParams m0 = m;
  m0.beta = 0.0;
  QuadraticLyapunov l;
  l.Q = qs;
  out.grid_ok = true;
  for (double t : witness_grid()) {
    const double gl = generator_apply(m0, l, Vector(t * v));
    out.grid.push_back({t, gl});
    if (!(gl >= -tol * std::max(1.0, t * t))) out.grid_ok = false;
  }
  if (!out.grid_ok) out.diagnostic = "GL(tv) < 0 somewhere on the grid";
  return out;
}

}  // namespace pwou
