#pragma once

// Second-kind Chebyshev machinery behind the positivity of
// e'(y(I - N)^2 + (1 - y) I)^{-1} for nonnegative N with e' >= e'N.
//
//   1 / (y(1 - x)^2 + 1 - y) = sum_n C_n(y) x^n,   C_n(y) = U_n(sqrt y) sqrt(y)^n

#include "pwou/matkit.hpp"
#include "pwou/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

namespace pwou::cheb {

// U_n(z) by the three-term recurrence U_{n+1} = 2 z U_n - U_{n-1}.
inline double cheb_u(int n, double z) {
  if (n < 0) throw InvalidInput("cheb_u: negative order");
  if (std::abs(z) > 1.0 + 1e-15) throw InvalidInput("cheb_u: |z| > 1");
  if (z >= 1.0) return n + 1.0;
  if (z <= -1.0) return (n % 2 == 0 ? 1.0 : -1.0) * (n + 1.0);
  double prev = 1.0, cur = 2.0 * z;
  if (n == 0) return prev;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * z * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// sin((n+1) theta) / sin(theta), falling back to the recurrence near the
// endpoints where the quotient cancels catastrophically.
inline double cheb_u_trig(int n, double theta) {
  const double s = std::sin(theta);
  if (std::abs(s) < 1e-6) return cheb_u(n, std::cos(theta));
  return std::sin((n + 1.0) * theta) / s;
}

struct ChebCoefficients {
  double y = 0.0;
  std::vector<double> c;  // C_0 .. C_m

  int order() const { return static_cast<int>(c.size()) - 1; }
};

// C_n(y) = U_n(t) t^n with t = sqrt(y). With c_n = U_n(t) t^n the
// recurrence becomes c_{n+1} = 2 t^2 c_n - t^2 c_{n-1}.
inline ChebCoefficients series_coefficients(double y, int m) {
  if (!(y > 0.0 && y < 1.0)) throw InvalidInput("series_coefficients: y must lie in (0, 1)");
  if (m < 0) throw InvalidInput("series_coefficients: negative order");
  ChebCoefficients out;
  out.y = y;
  out.c.resize(static_cast<std::size_t>(m) + 1);
  out.c[0] = 1.0;
  if (m >= 1) out.c[1] = 2.0 * y;
  for (int n = 1; n < m; ++n)
    out.c[static_cast<std::size_t>(n) + 1] = 2.0 * y * out.c[static_cast<std::size_t>(n)] - y * out.c[static_cast<std::size_t>(n) - 1];
  return out;
}

struct PartialSum {
  double sum = 0.0;
  double closed_form = 0.0;
};

// sum_{n=1}^m C_n(y) directly and as (cos^2/sin^2)[1 - cos^{m-1} cos((m+1) theta)].
inline PartialSum partial_sum_closed_form(double y, int m) {
  if (m < 1) throw InvalidInput("partial_sum_closed_form: m must be positive");
  const auto coef = series_coefficients(y, m);
  PartialSum out;
  for (int n = 1; n <= m; ++n) out.sum += coef.c[static_cast<std::size_t>(n)];
  const double theta = std::acos(std::sqrt(y));
  const double c = std::cos(theta), s = std::sin(theta);
  out.closed_form = (c * c) / (s * s) * (1.0 - std::pow(c, m - 1) * std::cos((m + 1.0) * theta));
  return out;
}

// |1/(y(1-x)^2 + 1 - y) - sum_{n<=m} C_n(y) x^n|
inline double scalar_expansion_check(double x, double y, int m) {
  if (!(x > 0.0 && x < 1.0)) throw InvalidInput("scalar_expansion_check: x must lie in (0, 1)");
  const auto coef = series_coefficients(y, m);
  double sum = 0.0, xn = 1.0;
  for (int n = 0; n <= m; ++n, xn *= x) sum += coef.c[static_cast<std::size_t>(n)] * xn;
  return std::abs(1.0 / (y * (1.0 - x) * (1.0 - x) + 1.0 - y) - sum);
}

// sup_n |C_n(y)|, bounded by sup_n (n + 1) t^n.
inline double max_coefficient(double y) {
  const double t = std::sqrt(y);
  double best = 1.0, c_prev = 1.0, c = 2.0 * y;
  double bound = 1.0, tn = 1.0;
  for (int n = 1; n < 1000000; ++n) {
    best = std::max(best, std::abs(c));
    tn *= t;
    const double b = (n + 1.0) * tn;
    bound = std::max(bound, b);
    if (b < 1e-3 * best && n > 4) break;
    const double next = 2.0 * y * c - y * c_prev;
    c_prev = c;
    c = next;
  }
  return best;
}

struct ResolventRow {
  Eigen::RowVectorXd direct;  // e'(y(I-N)^2 + (1-y)I)^{-1} by a linear solve
  Eigen::RowVectorXd series;  // sum_n C_n(y) e'N^n, truncated
  int truncation = 0;
  double agreement = 0.0;     // max |direct - series|
  double min_component = 0.0;
  bool positive = false;      // every component >= 1 - 1e-10
};

inline ResolventRow resolvent_row_positivity(const Matrix& n, double y) {
  require_square(n, "resolvent_row_positivity");
  if (!(y > 0.0 && y < 1.0)) throw InvalidInput("resolvent_row_positivity: y must lie in (0, 1)");
  if ((n.array() < 0.0).any()) throw InvalidInput("resolvent_row_positivity: N has a negative entry");
  const Eigen::Index k = n.rows();
  const Eigen::RowVectorXd e = Eigen::RowVectorXd::Ones(k);
  const Eigen::RowVectorXd en = e * n;
  for (Eigen::Index j = 0; j < k; ++j)
    if (en(j) > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "resolvent_row_positivity: e' >= e'N fails at column " << j;
      throw InvalidInput(os.str());
    }
  const double rho = spectral_radius(n);
  if (!(rho < 1.0)) throw InvalidInput("resolvent_row_positivity: rho(N) >= 1");

  ResolventRow out;
  const Matrix im = identity(k) - n;
  const Matrix a = y * im * im + (1.0 - y) * identity(k);
  out.direct = a.transpose().partialPivLu().solve(e.transpose()).transpose();

  // Tail bound rho^m max C / (1 - rho) < 1e-12; at least k terms so nilpotent
  // parts are summed exactly, and continue until the terms are negligible.
  const double rho_hat = rho + 1e-12;
  const double cmax = max_coefficient(y);
  int m = 1;
  while (m < 1000000 && std::pow(rho_hat, m) * cmax / (1.0 - rho_hat) >= 1e-12) ++m;
  m = std::max<int>(m, static_cast<int>(k));

  double c_prev = 0.0, c = 1.0;  // C_{-1} placeholder, C_0
  Eigen::RowVectorXd term = e;   // e'N^n
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k);
  int nterm = 0;
  for (;; ++nterm) {
    sum += c * term;
    const bool past_rule = nterm >= m;
    if (past_rule && (std::abs(c) * term.cwiseAbs().maxCoeff() < 1e-17 || nterm > 10 * m + 1000)) break;
    if (term.isZero(0.0) && past_rule) break;
    const double next = nterm == 0 ? 2.0 * y : 2.0 * y * c - y * c_prev;
    c_prev = c;
    c = next;
    term = term * n;
  }
  out.series = sum;
  out.truncation = nterm;
  out.agreement = (out.direct - out.series).cwiseAbs().maxCoeff();
  out.min_component = out.direct.minCoeff();
  out.positive = out.min_component >= 1.0 - 1e-10;
  return out;
}

// sum_n U_n(z) t^n against 1/(1 - 2zt + t^2), truncated once the terms
// (bounded by (n+1)|t|^n) fall below 1e-17.
inline double generating_function_residual(double z, double t) {
  if (std::abs(z) > 1.0 || !(std::abs(t) < 1.0)) throw InvalidInput("generating_function_residual: need |z| <= 1, |t| < 1");
  double sum = 0.0, tn = 1.0, u_prev = 0.0, u = 1.0;
  for (int n = 0; n < 100000; ++n) {
    sum += u * tn;
    if ((n + 1.0) * std::abs(tn) < 1e-17) break;
    const double next = n == 0 ? 2.0 * z : 2.0 * z * u - u_prev;
    u_prev = u;
    u = next;
    tn *= t;
  }
  return std::abs(sum - 1.0 / (1.0 - 2.0 * z * t + t * t));
}

// Random nonnegative N with column sums at most 1 and rho(N) < 1. Every
// fourth draw is strictly upper triangular (nilpotent) with column sums
// exactly 1 where possible, the boundary case of e' >= e'N.
inline Matrix random_substochastic(Eigen::Index k, CounterRng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix n(k, k);
  const bool nilpotent = u(rng) < 0.25;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) n(i, j) = (!nilpotent || i < j) && u(rng) < 0.7 ? u(rng) : 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double c = n.col(j).sum();
    if (c > 0.0) n.col(j) /= c;
  }
  if (!nilpotent) n *= 0.05 + 0.9 * u(rng);
  return n;
}

struct SelfTest {
  double generating_residual = 0.0;    // max over the (z, t) grid
  double partial_sum_error = 0.0;      // max relative |direct - closed form|
  double partial_sum_min = 0.0;        // smallest closed-form value seen
  double resolvent_min = 0.0;          // smallest component over all cases
  double resolvent_agreement = 0.0;    // max |direct - series|
  int cases = 0;
  bool generating_ok = false, partial_ok = false, resolvent_ok = false;

  bool ok() const { return generating_ok && partial_ok && resolvent_ok; }
};

inline SelfTest run_selftest(int cases = 1000, std::uint64_t seed = 7) {
  SelfTest st;
  st.cases = cases;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 36; ++j) {
      const double z = -1.0 + i / 20.0, t = -0.9 + j / 20.0;
      st.generating_residual = std::max(st.generating_residual, generating_function_residual(z, t));
    }
  st.generating_ok = st.generating_residual <= 1e-10;

  CounterRng rng(seed, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  st.partial_sum_min = std::numeric_limits<double>::infinity();
  for (int c = 0; c < cases; ++c) {
    const double y = 1e-3 + (1.0 - 2e-3) * u(rng);
    const int m = 1 + static_cast<int>(u(rng) * 200.0) % 200;
    const auto ps = partial_sum_closed_form(y, m);
    st.partial_sum_error = std::max(st.partial_sum_error, std::abs(ps.sum - ps.closed_form) / std::max(1.0, std::abs(ps.sum)));
    st.partial_sum_min = std::min(st.partial_sum_min, ps.closed_form);
  }
  st.partial_ok = st.partial_sum_error <= 1e-12 && st.partial_sum_min > 0.0;

  CounterRng rng2(seed, 2);
  st.resolvent_min = std::numeric_limits<double>::infinity();
  for (int c = 0; c < cases; ++c) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(u(rng2) * 6.0) % 6;
    const Matrix n = random_substochastic(k, rng2);
    const double y = 0.01 + 0.98 * u(rng2);
    const auto row = resolvent_row_positivity(n, y);
    st.resolvent_min = std::min(st.resolvent_min, row.min_component);
    st.resolvent_agreement = std::max(st.resolvent_agreement, row.agreement);
  }
  st.resolvent_ok = st.resolvent_min >= 1.0 - 1e-10 && st.resolvent_agreement <= 1e-8;
  return st;
}

}  // namespace pwou::cheb
