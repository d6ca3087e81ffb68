#pragma once

// JSON configuration and report serialization. Matrices are arrays of rows,
// complex numbers are [re, im] pairs.

#include "pwou/cheb.hpp"
#include "pwou/cqlf.hpp"
#include "pwou/lyap.hpp"
#include "pwou/oumodel.hpp"
#include "pwou/sim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace pwou {

using Json = nlohmann::json;

// Malformed or schema-violating configuration (as opposed to a well-formed
// model that fails the assumptions).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ primitives

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const Complex& z) { return Json::array({z.real(), z.imag()}); }

inline Json to_json(const std::vector<Complex>& zs) {
  Json out = Json::array();
  for (const auto& z : zs) out.push_back(to_json(z));
  return out;
}

inline double number_from_json(const Json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(what + ": not finite");
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError(what + ": expected a nonempty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ConfigError(what + ": rows must be nonempty arrays");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          number_from_json(j[i][c], what + "[" + std::to_string(i) + "][" + std::to_string(c) + "]");
  }
  return m;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ConfigError(what + ": expected a nonempty array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = number_from_json(j[i], what + "[" + std::to_string(i) + "]");
  return v;
}

// ---------------------------------------------------------------- config

struct Numerics {
  double tol_zero = kTolZero;
  double tol_semi = 1e-9;
  double strict_margin = 1e-8;
  std::vector<double> shells;  // empty: {10, 20, 50, 100} x scanned threshold
  int samples_per_shell = 4096;
  double eps = 1e-2;
  double dt = 0.0;  // 0: 1e-3 min(1, 1/|R|)
  double horizon = 1e4;
  double burn_in = -1.0;  // negative: 10% of the horizon
  int replicas = 64;
};

struct Config {
  PiecewiseOUParams model;
  Numerics numerics;
  std::string source;  // "R", "hyperexp" or "phase_type"
  Json raw;
};

inline Numerics numerics_from_json(const Json& j) {
  Numerics n;
  if (j.is_null()) return n;
  if (!j.is_object()) throw ConfigError("numerics: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const std::string what = "numerics." + key;
    if (key == "tol_zero") n.tol_zero = number_from_json(*it, what);
    else if (key == "tol_semi") n.tol_semi = number_from_json(*it, what);
    else if (key == "strict_margin") n.strict_margin = number_from_json(*it, what);
    else if (key == "shells") {
      const Vector v = vector_from_json(*it, what);
      n.shells.assign(v.data(), v.data() + v.size());
    }
    else if (key == "samples_per_shell") n.samples_per_shell = static_cast<int>(number_from_json(*it, what));
    else if (key == "eps") n.eps = number_from_json(*it, what);
    else if (key == "dt") n.dt = number_from_json(*it, what);
    else if (key == "horizon") n.horizon = number_from_json(*it, what);
    else if (key == "burn_in") n.burn_in = number_from_json(*it, what);
    else if (key == "replicas") n.replicas = static_cast<int>(number_from_json(*it, what));
    else throw ConfigError("numerics: unknown key '" + key + "'");
  }
  return n;
}

inline Json to_json(const Numerics& n) {
  return Json{{"tol_zero", n.tol_zero},
              {"tol_semi", n.tol_semi},
              {"strict_margin", n.strict_margin},
              {"shells", n.shells},
              {"samples_per_shell", n.samples_per_shell},
              {"eps", n.eps},
              {"dt", n.dt},
              {"horizon", n.horizon},
              {"burn_in", n.burn_in},
              {"replicas", n.replicas}};
}

inline Json to_json(const PiecewiseOUParams& m) {
  return Json{{"alpha", m.alpha}, {"beta", m.beta}, {"R", to_json(m.R)},
              {"p", to_json(m.p)},  {"sigma_cov", to_json(m.Sigma)}, {"fluid", m.fluid}};
}

// Structural parse only. Hyperexponential and phase-type builders can still
// reject their primitives (InvalidInput); the assumptions on (R, p, Sigma)
// are left to validate().
inline Config config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const char* known[] = {"alpha", "beta", "R", "p", "sigma_cov", "hyperexp", "phase_type", "numerics", "fluid"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) == std::end(known))
      throw ConfigError("config: unknown key '" + it.key() + "'");
  Config c;
  c.raw = j;
  const int specs = int(j.contains("R")) + int(j.contains("hyperexp")) + int(j.contains("phase_type"));
  if (specs != 1) throw ConfigError("config: exactly one of R, hyperexp, phase_type must be present");
  if (!j.contains("alpha") || !j.contains("beta")) throw ConfigError("config: alpha and beta are required");
  const double alpha = number_from_json(j["alpha"], "alpha");
  const double beta = number_from_json(j["beta"], "beta");
  const bool fluid = j.value("fluid", false);
  std::optional<Matrix> sigma;
  if (j.contains("sigma_cov")) sigma = matrix_from_json(j["sigma_cov"], "sigma_cov");

  if (j.contains("R")) {
    c.source = "R";
    if (!j.contains("p")) throw ConfigError("config: p is required with R");
    c.model.R = matrix_from_json(j["R"], "R");
    c.model.p = vector_from_json(j["p"], "p");
    c.model.alpha = alpha;
    c.model.beta = beta;
    c.model.Sigma = sigma ? *sigma : identity(c.model.p.size());
  } else if (j.contains("hyperexp")) {
    c.source = "hyperexp";
    const Json& h = j["hyperexp"];
    if (!h.is_object()) throw ConfigError("hyperexp: expected an object");
    if (j.contains("p") || sigma) throw ConfigError("hyperexp: p and sigma_cov are derived and must not be given");
    HyperexpSpec hs;
    for (const char* key : {"p1", "nu1", "nu2", "c"})
      if (!h.contains(key)) throw ConfigError(std::string("hyperexp: missing ") + key);
    hs.p1 = number_from_json(h["p1"], "hyperexp.p1");
    hs.nu1 = number_from_json(h["nu1"], "hyperexp.nu1");
    hs.nu2 = number_from_json(h["nu2"], "hyperexp.nu2");
    hs.c = number_from_json(h["c"], "hyperexp.c");
    hs.alpha = alpha;
    hs.beta = beta;
    c.model = hyperexp_model(hs);
  } else {
    c.source = "phase_type";
    const Json& ph = j["phase_type"];
    if (!ph.is_object()) throw ConfigError("phase_type: expected an object");
    for (const char* key : {"P", "nu", "p"})
      if (!ph.contains(key)) throw ConfigError(std::string("phase_type: missing ") + key);
    c.model = from_phase_type(matrix_from_json(ph["P"], "phase_type.P"), vector_from_json(ph["nu"], "phase_type.nu"),
                              vector_from_json(ph["p"], "phase_type.p"), alpha, beta, sigma);
  }
  c.model.fluid = fluid;
  c.numerics = numerics_from_json(j.contains("numerics") ? j["numerics"] : Json());
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON in '") + path + "': " + e.what());
  }
  return config_from_json(j);
}

// --------------------------------------------------------------- reports

inline Json to_json(const Spectrum& s) {
  Json out{{"eigenvalues", to_json(s.sorted())}, {"zero_tolerance", s.zero_tolerance}};
  out["real_negative"] = to_json(s.real_negative());
  return out;
}

inline Json to_json(const CqlfCertificate& c) {
  return Json{{"Q", to_json(c.Q)},
              {"res_strict", c.res_strict},
              {"res_semi", c.res_semi},
              {"min_eig_Q", c.min_eig_Q},
              {"margin", c.margin},
              {"solver_steps", c.solver_steps}};
}

inline Json to_json(const DualWitness& w) {
  return Json{{"X", to_json(w.X)},
              {"Z", to_json(w.Z)},
              {"residual", w.residual},
              {"lyap_x_norm", w.lyap_x_norm},
              {"lyap_z_norm", w.lyap_z_norm},
              {"exclusion_distance", w.exclusion_distance},
              {"method", w.method}};
}

inline Json to_json(const ExistenceReport& r) {
  Json out{{"verdict", to_string(r.verdict)}, {"product_spectrum", to_json(r.product_spectrum)}, {"diagnostic", r.diagnostic}};
  out["failing_eigenvalue"] = r.failing_eigenvalue ? to_json(*r.failing_eigenvalue) : Json();
  out["witness"] = r.witness ? to_json(*r.witness) : Json();
  return out;
}

inline Json to_json(const StrongReport& r) {
  return Json{{"precondition_ok", r.precondition_ok},
              {"exists", r.exists},
              {"product_spectrum", to_json(r.product_spectrum)},
              {"real_negative", to_json(r.real_negative)},
              {"diagnostic", r.diagnostic}};
}

inline Json to_json(const ShellResult& s) {
  return Json{{"radius", s.radius},     {"samples", s.samples},           {"worst_gv", s.worst_gv},
              {"worst_ratio", s.worst_ratio}, {"worst_regime", s.worst_regime}, {"worst_point", to_json(s.worst_point)},
              {"pass", s.pass}};
}

inline Json to_json(const DriftReport& r) {
  Json shells = Json::array();
  for (const auto& s : r.shells) shells.push_back(to_json(s));
  Json out{{"kind", r.kind},
           {"verdict", r.pass ? "pass" : "fail"},
           {"shells", shells},
           {"M", r.M ? Json(*r.M) : Json()},
           {"shells_beyond_M", r.shells_beyond_M},
           {"witness", r.witness ? to_json(*r.witness) : Json()},
           {"witness_regime", r.witness_regime},
           {"diagnostic", r.diagnostic}};
  if (r.kind == "smoothed") {
    out["fitted_C"] = r.fitted_C;
    out["c_global"] = r.c_global;
    out["d_global"] = r.d_global;
    out["kappa"] = r.kappa;
    out["epsilon"] = r.epsilon;
  }
  return out;
}

inline Json to_json(const QuadraticFailure& f) {
  Json grid = Json::array();
  for (const auto& g : f.grid) grid.push_back(Json::array({g.t, g.gl}));
  return Json{{"found", f.found},
              {"beta", f.beta},
              {"v", to_json(f.v)},
              {"lambda", f.lambda},
              {"form", f.form},
              {"grid_ok", f.grid_ok},
              {"grid", grid},
              {"lambda_max_first", f.lambda_max_first},
              {"lambda_max_second", f.lambda_max_second},
              {"diagnostic", f.diagnostic}};
}

inline Json to_json(const Histogram& h) {
  return Json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
}

inline Json to_json(const SimStats& s) {
  Json hy = Json::array();
  for (const auto& h : s.hist_y) hy.push_back(to_json(h));
  return Json{{"mean", to_json(s.mean)},
              {"covariance", to_json(s.covariance)},
              {"mean_se", to_json(s.mean_se)},
              {"variance_se", to_json(s.variance_se)},
              {"ess", to_json(s.ess)},
              {"x", {{"mean", s.x_mean}, {"variance", s.x_var}, {"mean_se", s.x_mean_se}, {"variance_se", s.x_var_se}}},
              {"hist_x", to_json(s.hist_x)},
              {"hist_y", hy},
              {"samples", s.samples},
              {"batches", s.batches_total},
              {"converged", s.converged},
              {"warning", s.warning},
              {"dt", s.dt},
              {"horizon", s.horizon},
              {"burn_in", s.burn_in}};
}

inline Json to_json(const HittingEstimate& h) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(); };
  return Json{{"radius", h.radius},     {"mean", num(h.mean)}, {"se", num(h.se)},
              {"replicas", h.replicas}, {"censored", h.censored}, {"censor_fraction", h.censor_fraction},
              {"cap", h.cap},           {"warning", h.warning}};
}

inline Json to_json(const ErgodicityReport& e) {
  return Json{{"times", e.times},
              {"distance", e.distance},
              {"bin_lo", e.bin_lo},
              {"bin_hi", e.bin_hi},
              {"bins", e.bins},
              {"noise_floor", e.noise_floor},
              {"fit_begin", e.fit_begin},
              {"fit_end", e.fit_end},
              {"slope", e.slope},
              {"intercept", e.intercept},
              {"r2", e.r2},
              {"fit_ok", e.fit_ok},
              {"diagnostic", e.diagnostic}};
}

}  // namespace pwou
