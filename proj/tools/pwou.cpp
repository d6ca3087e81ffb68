// pwou: stability certification for piecewise Ornstein-Uhlenbeck models.
//
// Exit codes: 0 success, 1 analytic failure, 2 input error,
// 3 statistical non-convergence.

#include "pwou/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace pwou;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kAnalytic = 1, kInput = 2, kStatistical = 3 };

// A config that parses but whose primitives the model builders reject.
struct ModelRejected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0x5eed;
  bool json = false;
  std::string out;
  std::function<void(Numerics&)> tune;  // command-line overrides of the numerics block
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Session {
 public:
  Session(const Globals& g, std::string command) : g_(g), command_(std::move(command)), started_(utc_now()) {}

  Config load() {
    if (g_.config.empty()) throw ConfigError(command_ + ": --config is required");
    try {
      cfg_ = load_config(g_.config);
      if (g_.tune) g_.tune(cfg_->numerics);
    } catch (const InvalidInput& e) {
      throw ModelRejected(e.what());
    }
    have_cfg_ = true;
    return *cfg_;
  }

  // Named assumption violations, printed; true if the model is usable.
  bool require_valid_model(Json& report) {
    const auto d = validate(cfg_->model);
    report["valid"] = d.ok();
    report["violations"] = d.violations;
    if (!d.ok() && !g_.json) {
      std::cout << "model is invalid:\n";
      for (const auto& v : d.violations) std::cout << "  - " << v << "\n";
    }
    return d.ok();
  }

  std::string write(const std::string& name, const std::string& content) {
    if (g_.out.empty()) return {};
    fs::create_directories(g_.out);
    const fs::path path = fs::path(g_.out) / name;
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << content;
    outputs_.push_back(path.string());
    return path.string();
  }

  int finish(Json report, int code) {
    Json manifest{{"config_path", g_.config},
                  {"command", command_},
                  {"tool_version", kVersion},
                  {"seed", g_.seed},
                  {"started", started_},
                  {"finished", utc_now()},
                  {"exit_code", code}};
    if (have_cfg_) {
      manifest["parameters"] = to_json(cfg_->model);
      manifest["numerics"] = to_json(cfg_->numerics);
      manifest["config"] = cfg_->raw;
    }
    if (!g_.out.empty()) outputs_.push_back((fs::path(g_.out) / (command_ + ".json")).string());
    manifest["outputs"] = outputs_;
    report["manifest"] = manifest;
    if (!g_.out.empty()) {
      fs::create_directories(g_.out);
      std::ofstream(fs::path(g_.out) / (command_ + ".json")) << report.dump(2) << "\n";
    }
    if (g_.json) std::cout << report.dump(2) << "\n";
    return code;
  }

  bool json() const { return g_.json; }
  std::uint64_t seed() const { return g_.seed; }
  Config& cfg() { return *cfg_; }

 private:
  const Globals& g_;
  std::string command_;
  std::string started_;
  std::optional<Config> cfg_;
  bool have_cfg_ = false;
  std::vector<std::string> outputs_;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fmt(const Complex& z) {
  std::ostringstream os;
  os << std::setprecision(12) << z.real();
  if (z.imag() != 0.0) os << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
  return os.str();
}

void print_spectrum(const char* label, const Spectrum& s) {
  std::cout << "  " << label << ":";
  for (const auto& l : s.sorted()) std::cout << "  " << fmt(l);
  std::cout << "\n";
}

CqlfOptions cqlf_options(const Numerics& n) {
  CqlfOptions o;
  o.tol_zero = n.tol_zero;
  o.tol_semi = n.tol_semi;
  o.strict_margin = n.strict_margin;
  return o;
}

// ------------------------------------------------------------- commands

int cmd_validate(const Globals& g) {
  Session s(g, "validate");
  Json rep;
  try {
    s.load();
  } catch (const ModelRejected& e) {
    rep["valid"] = false;
    rep["violations"] = {e.what()};
    if (!g.json) std::cout << "model is invalid:\n  - " << e.what() << "\n";
    return s.finish(rep, kAnalytic);
  }
  const bool ok = s.require_valid_model(rep);
  if (ok && !g.json) std::cout << "model is valid (K = " << s.cfg().model.dim() << ")\n";
  return s.finish(rep, ok ? kOk : kAnalytic);
}

int cmd_check_cqlf(const Globals& g, const std::string& pair, bool strong) {
  Session s(g, "check-cqlf");
  s.load();
  Json rep;
  if (!s.require_valid_model(rep)) return s.finish(rep, kAnalytic);
  const auto& m = s.cfg().model;
  const double tz = s.cfg().numerics.tol_zero;

  if (strong) {
    const auto sr = strong_cqlf_exists(abandonment_pair(m.R, m.p, m.alpha), tz);
    rep["strong"] = to_json(sr);
    if (!g.json) {
      std::cout << "strong CQLF for (-R, -R(I-pe')-alpha pe'): "
                << (!sr.precondition_ok ? "precondition failed" : sr.exists ? "exists" : "does not exist") << "\n";
      if (sr.precondition_ok) print_spectrum("eigenvalues of B1 B2", sr.product_spectrum);
      if (!sr.real_negative.empty()) {
        std::cout << "  real negative:";
        for (const auto& l : sr.real_negative) std::cout << "  " << fmt(l);
        std::cout << "\n";
      }
      if (!sr.diagnostic.empty()) std::cout << "  " << sr.diagnostic << "\n";
    }
    return s.finish(rep, sr.precondition_ok && sr.exists ? kOk : kAnalytic);
  }

  const auto pairs = theorem1_pairs(m.R, m.p, tz);
  bool all = true;
  auto show = [&](const char* name, const ExistenceReport& r) {
    rep[name] = to_json(r);
    all = all && r.verdict == Verdict::exists;
    if (!g.json) {
      std::cout << name << " pair: " << to_string(r.verdict) << "\n";
      if (r.verdict != Verdict::precondition_failed) print_spectrum("eigenvalues of B1 B2", r.product_spectrum);
      if (!r.diagnostic.empty()) std::cout << "  " << r.diagnostic << "\n";
    }
  };
  if (pair == "first" || pair == "both") show("first", pairs.first_report);
  if (pair == "second" || pair == "both") show("second", pairs.second_report);
  return s.finish(rep, all ? kOk : kAnalytic);
}

int cmd_construct(const Globals& g) {
  Session s(g, "construct");
  s.load();
  Json rep;
  if (!s.require_valid_model(rep)) return s.finish(rep, kAnalytic);
  const auto& m = s.cfg().model;
  const auto opt = cqlf_options(s.cfg().numerics);
  const auto first = first_pair(m.R, m.p);
  const auto second = second_pair(m.R, m.p);
  CqlfCertificate cert;
  try {
    cert = construct_cqlf(first, opt);
  } catch (const ConstructionFailure& e) {
    rep["error"] = e.what();
    rep["best"] = to_json(e.best());
    if (!g.json)
      std::cout << "construction failed: " << e.what() << "\n  best residuals: strict " << fmt(e.best().res_strict)
                << ", semi " << fmt(e.best().res_semi) << "\n";
    return s.finish(rep, kAnalytic);
  }
  const auto transfer = certify(transfer_cqlf(cert.Q, m.R), second);
  const bool ok1 = certificate_passes(cert, first, opt), ok2 = certificate_passes(transfer, second, opt);
  rep["first"] = to_json(cert);
  rep["first"]["passes"] = ok1;
  rep["transfer"] = to_json(transfer);
  rep["transfer"]["passes"] = ok2;
  rep["thresholds"] = {{"strict_first", -opt.strict_margin * norm_abs(first.B1)},
                       {"semi_first", opt.tol_semi * norm_abs(first.B2)},
                       {"strict_second", -opt.strict_margin * norm_abs(second.B1)},
                       {"semi_second", opt.tol_semi * norm_abs(second.B2)}};
  s.write("certificate.json", Json{{"Q", to_json(cert.Q)}, {"RtQR", to_json(transfer.Q)}}.dump(2) + "\n");
  if (!g.json) {
    std::cout << "Q (|Q| = 1) for (-R, -R(I-pe')):\n" << cert.Q << "\n";
    std::cout << "  max eig QB1+B1'Q = " << fmt(cert.res_strict) << ", max eig QB2+B2'Q = " << fmt(cert.res_semi)
              << ", min eig Q = " << fmt(cert.min_eig_Q) << (ok1 ? "  [pass]" : "  [FAIL]") << "\n";
    std::cout << "R'QR for (-R, -(I-pe')R):\n" << transfer.Q << "\n";
    std::cout << "  max eig = " << fmt(transfer.res_strict) << ", semi = " << fmt(transfer.res_semi)
              << (ok2 ? "  [pass]" : "  [FAIL]") << "\n";
  }
  return s.finish(rep, ok1 && ok2 ? kOk : kAnalytic);
}

void print_drift_table(const DriftReport& r) {
  std::cout << std::left << std::setw(14) << "radius" << std::setw(16) << "worst GV" << std::setw(18)
            << "worst GV/|y|^2" << std::setw(12) << "regime" << "ok\n";
  for (const auto& sh : r.shells)
    std::cout << std::setw(14) << fmt(sh.radius) << std::setw(16) << fmt(sh.worst_gv) << std::setw(18)
              << fmt(sh.worst_ratio) << std::setw(12) << sh.worst_regime << (sh.pass ? "yes" : "no") << "\n";
  std::cout << std::right;
}

int cmd_verify_drift(const Globals& g, std::string kind) {
  Session s(g, "verify-drift");
  s.load();
  Json rep;
  if (!s.require_valid_model(rep)) return s.finish(rep, kAnalytic);
  const auto& m = s.cfg().model;
  const auto& num = s.cfg().numerics;
  if (kind == "auto") kind = m.alpha > 0.0 ? "smoothed" : "quadratic";
  if (kind == "quadratic" && (m.alpha != 0.0 || !(m.beta > 0.0))) {
    const std::string msg = m.alpha != 0.0
                                ? "the quadratic Lyapunov function applies only when alpha = 0"
                                : "refusing: with alpha = 0 the drift certificate needs beta > 0 (got beta = " + fmt(m.beta) + ")";
    rep["error"] = msg;
    if (!g.json) std::cerr << msg << "\n";
    return s.finish(rep, kInput);
  }
  if (kind == "smoothed" && !(m.alpha > 0.0)) {
    rep["error"] = "the smoothed Lyapunov function needs alpha > 0";
    if (!g.json) std::cerr << rep["error"].get<std::string>() << "\n";
    return s.finish(rep, kInput);
  }
  DriftOptions dopt;
  dopt.samples_per_shell = num.samples_per_shell;
  dopt.seed = s.seed();
  LyapunovSpec spec;
  if (kind == "quadratic") {
    auto q = build_quadratic(m, cqlf_options(num));
    rep["certificate"] = to_json(q.certificate);
    spec = q;
  } else {
    auto v = build_smoothed(m, num.eps, cqlf_options(num), dopt);
    rep["certificate"] = to_json(v.certificate);
    rep["kappa_lower_bound"] = kappa_lower_bound(m, v.Qtilde);
    spec = v;
  }
  const auto dr = num.shells.empty() ? verify_drift_auto(m, spec, dopt) : verify_drift(m, spec, num.shells, dopt);
  rep["drift"] = to_json(dr);
  if (!g.json) {
    std::cout << kind << " Lyapunov function";
    if (kind == "smoothed") std::cout << " (kappa = " << fmt(dr.kappa) << ", eps = " << fmt(dr.epsilon) << ")";
    std::cout << "\n";
    print_drift_table(dr);
    std::cout << "M = " << (dr.M ? fmt(*dr.M) : std::string("none")) << ", shells beyond M: " << dr.shells_beyond_M << "\n";
    if (kind == "smoothed" && dr.M)
      std::cout << "fitted C = " << fmt(dr.fitted_C) << ", global fit GV <= -" << fmt(dr.c_global) << " V + "
                << fmt(dr.d_global) << "\n";
    if (dr.witness) std::cout << "witness (" << dr.witness_regime << "): " << dr.witness->transpose() << "\n";
    if (!dr.diagnostic.empty()) std::cout << dr.diagnostic << "\n";
    std::cout << "verdict: " << (dr.pass ? "pass" : "FAIL") << "\n";
  }
  return s.finish(rep, dr.pass ? kOk : kAnalytic);
}

struct SimFlags {
  std::optional<double> dt, horizon, burn_in;
  std::optional<int> replicas;
  std::optional<double> hitting_radius;
  std::vector<double> hitting_from;
  double hitting_cap = 1e3;
  bool ergodicity = false;
  int ergodicity_replicas = 2000;
  double ergodicity_horizon = 30.0;
  std::vector<double> ergodicity_from;
  long trace_stride = 0;
};

std::string histogram_csv(const Histogram& h, std::size_t total) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count,density\n" << std::setprecision(10);
  const double w = h.width();
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    os << h.lo + i * w << "," << h.lo + (i + 1) * w << "," << h.counts[i] << ","
       << static_cast<double>(h.counts[i]) / (static_cast<double>(total) * w) << "\n";
  return os.str();
}

int cmd_simulate(const Globals& g, const SimFlags& f) {
  Session s(g, "simulate");
  s.load();
  Json rep;
  if (!s.require_valid_model(rep)) return s.finish(rep, kAnalytic);
  auto& num = s.cfg().numerics;
  if (f.dt) num.dt = *f.dt;
  if (f.horizon) num.horizon = *f.horizon;
  if (f.burn_in) num.burn_in = *f.burn_in;
  if (f.replicas) num.replicas = *f.replicas;
  if (num.replicas < 1) throw InvalidInput("simulate: replicas must be >= 1");
  const auto& m = s.cfg().model;
  const Eigen::Index k = m.dim();

  SimConfig sc;
  sc.dt = num.dt;
  sc.horizon = num.horizon;
  sc.burn_in = num.burn_in;
  sc.replicas = num.replicas;
  sc.seed = s.seed();
  int code = kOk;

  const auto st = stationary_stats(m, sc);
  rep["stats"] = to_json(st);
  if (!st.converged) code = kStatistical;
  s.write("histogram_x.csv", histogram_csv(st.hist_x, static_cast<std::size_t>(st.samples)));
  for (Eigen::Index i = 0; i < k; ++i)
    s.write("histogram_y" + std::to_string(i + 1) + ".csv",
            histogram_csv(st.hist_y[static_cast<std::size_t>(i)], static_cast<std::size_t>(st.samples)));
  if (!g.json) {
    std::cout << "stationary statistics (" << st.samples << " samples, dt = " << fmt(st.dt) << ")\n";
    for (Eigen::Index i = 0; i < k; ++i)
      std::cout << "  Y" << i + 1 << ": mean " << fmt(st.mean(i)) << " +- " << fmt(st.mean_se(i), 3) << ", var "
                << fmt(st.covariance(i, i)) << " +- " << fmt(st.variance_se(i), 3) << ", ess " << fmt(st.ess(i), 4)
                << "\n";
    std::cout << "  e'Y: mean " << fmt(st.x_mean) << " +- " << fmt(st.x_mean_se, 3) << ", var " << fmt(st.x_var)
              << " +- " << fmt(st.x_var_se, 3) << "\n";
    if (!st.converged) std::cout << "  warning: " << st.warning << "\n";
  }

  auto point_from = [&](const std::vector<double>& v, double radius) {
    if (v.empty()) return Vector(Vector::Ones(k) * (radius / std::sqrt(static_cast<double>(k))));
    if (static_cast<Eigen::Index>(v.size()) != k) throw InvalidInput("simulate: starting point has the wrong length");
    return Vector(Eigen::Map<const Vector>(v.data(), k));
  };

  if (f.hitting_radius) {
    const Vector y0 = point_from(f.hitting_from, 10.0 * *f.hitting_radius);
    const auto h = hitting_time(m, y0, *f.hitting_radius, sc, f.hitting_cap);
    rep["hitting"] = to_json(h);
    rep["hitting"]["y0"] = to_json(y0);
    if (h.censor_fraction > 0.05) code = kStatistical;
    if (!g.json) {
      std::cout << "hitting time of |y| <= " << fmt(h.radius) << " from |y0| = " << fmt(y0.norm()) << ": " << fmt(h.mean)
                << " +- " << fmt(h.se, 3) << " (censored " << h.censored << "/" << h.replicas << ")\n";
      if (!h.warning.empty()) std::cout << "  warning: " << h.warning << "\n";
    }
  }

  if (f.ergodicity) {
    ErgodicityOptions eo;
    eo.replicas = f.ergodicity_replicas;
    eo.horizon = f.ergodicity_horizon;
    SimConfig ec = sc;
    ec.y0 = point_from(f.ergodicity_from, 10.0);
    const auto er = ergodicity_diagnostic(m, ec, eo);
    rep["ergodicity"] = to_json(er);
    std::ostringstream csv;
    csv << "t,d\n" << std::setprecision(10);
    for (std::size_t i = 0; i < er.times.size(); ++i) csv << er.times[i] << "," << er.distance[i] << "\n";
    s.write("ergodicity.csv", csv.str());
    if (!er.fit_ok || !(er.slope < 0.0)) code = kStatistical;
    if (!g.json) {
      std::cout << "ergodicity: d(0) = " << fmt(er.distance.front()) << ", noise floor " << fmt(er.noise_floor, 3);
      if (er.fit_ok)
        std::cout << ", log d(t) slope " << fmt(er.slope) << " (R^2 = " << fmt(er.r2, 4) << ", t in ["
                  << fmt(er.times[er.fit_begin]) << ", " << fmt(er.times[er.fit_end - 1]) << "])\n";
      else
        std::cout << ", " << er.diagnostic << "\n";
    }
  }

  if (f.trace_stride > 0) {
    const auto tr = simulate(m, sc, 0, f.trace_stride);
    std::ostringstream csv;
    csv << "t";
    for (Eigen::Index i = 0; i < k; ++i) csv << ",y" << i + 1;
    csv << "\n" << std::setprecision(10);
    for (std::size_t n = 0; n < tr.t.size(); ++n) {
      csv << tr.t[n];
      for (Eigen::Index i = 0; i < k; ++i) csv << "," << tr.y[n](i);
      csv << "\n";
    }
    s.write("trace.csv", csv.str());
  }
  return s.finish(rep, code);
}

Matrix random_psd(Eigen::Index k, CounterRng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> rank(1, static_cast<int>(k));
  const int r = rank(rng);
  Matrix gm(k, r);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int j = 0; j < r; ++j) gm(i, j) = normal(rng);
  return gm * gm.transpose();
}

int cmd_counterexample(const Globals& g, double tolerance, int samples) {
  Session s(g, "counterexample");
  Json rep;
  const auto m = counterexample_model();
  const Matrix& r = m.R;
  rep["model"] = to_json(m);
  bool ok = true;

  const auto sr = strong_cqlf_exists(abandonment_pair(r, m.p, m.alpha));
  const double root = std::sqrt(82.0);
  const std::vector<double> expected{-7.0, 5.0 - root, 5.0 + root};
  const auto got = sr.product_spectrum.sorted();
  Json table = Json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double err = i < got.size() ? std::abs(got[i] - Complex(expected[i], 0.0)) : INFINITY;
    worst = std::max(worst, err);
    table.push_back({{"expected", expected[i]}, {"computed", i < got.size() ? to_json(got[i]) : Json()}, {"error", err}});
  }
  const bool eig_ok = got.size() == 3 && worst <= tolerance;
  ok = ok && eig_ok;
  rep["eigenvalues"] = table;
  rep["tolerance"] = tolerance;
  rep["eigenvalues_match"] = eig_ok;
  rep["strong"] = to_json(sr);
  const bool strong_ok = sr.precondition_ok && !sr.exists && sr.real_negative.size() == 2;
  ok = ok && strong_ok;

  CounterRng rng(s.seed(), 0xce);
  int found = 0;
  Json witnesses = Json::array();
  for (int i = 0; i <= samples; ++i) {
    const Matrix q = i == 0 ? identity(3) : random_psd(3, rng);
    const auto w = quadratic_failure_witness(m, q);
    if (w.found && w.grid_ok) ++found;
    witnesses.push_back({{"Q", to_json(q)}, {"found", w.found}, {"grid_ok", w.grid_ok}, {"form", w.form},
                         {"lambda", w.lambda}, {"v", to_json(w.v)}});
  }
  const bool wit_ok = found == samples + 1;
  ok = ok && wit_ok;
  rep["witnesses"] = witnesses;
  rep["witnesses_found"] = found;

  DriftOptions dopt;
  dopt.seed = s.seed();
  const auto v = build_smoothed(m, 1e-2, {}, dopt);
  const auto dr = verify_drift_auto(m, v, dopt);
  ok = ok && dr.pass;
  rep["smoothed_drift"] = to_json(dr);
  rep["pass"] = ok;

  if (!g.json) {
    std::cout << "R =\n" << r << "\np = " << m.p.transpose() << ", alpha = " << m.alpha << "\n\n";
    std::cout << "eigenvalues of R(R(I-pe') + alpha pe'):\n";
    std::cout << std::left << std::setw(24) << "  expected" << std::setw(36) << "computed" << "|error|\n";
    for (std::size_t i = 0; i < expected.size(); ++i)
      std::cout << "  " << std::setw(22) << fmt(expected[i], 15) << std::setw(36) << (i < got.size() ? fmt(got[i]) : "-")
                << fmt(table[i]["error"].get<double>(), 3) << "\n";
    std::cout << std::right << "  match within " << fmt(tolerance, 3) << ": " << (eig_ok ? "yes" : "NO") << "\n";
    std::cout << "strong CQLF for (-R, -R(I-pe')-alpha pe'): " << (sr.exists ? "exists" : "does not exist") << " ("
              << sr.diagnostic << ")\n";
    std::cout << "quadratic failure witnesses: " << found << "/" << samples + 1 << " (Q = I and " << samples
              << " random PSD Q)\n";
    std::cout << "smoothed V (kappa = " << fmt(v.kappa) << "): drift " << (dr.pass ? "pass" : "FAIL") << ", fitted C = "
              << fmt(dr.fitted_C) << "\n";
    std::cout << (ok ? "counterexample reproduced\n" : "MISMATCH\n");
  }
  return s.finish(rep, ok ? kOk : kAnalytic);
}

int cmd_chebyshev(const Globals& g, int cases) {
  Session s(g, "chebyshev-selftest");
  const auto st = cheb::run_selftest(cases, s.seed());
  Json rep{{"cases", st.cases},
           {"generating_residual", st.generating_residual},
           {"generating_ok", st.generating_ok},
           {"partial_sum_error", st.partial_sum_error},
           {"partial_sum_min", st.partial_sum_min},
           {"partial_ok", st.partial_ok},
           {"resolvent_min", st.resolvent_min},
           {"resolvent_agreement", st.resolvent_agreement},
           {"resolvent_ok", st.resolvent_ok}};
  if (!g.json) {
    std::cout << "generating function residual " << fmt(st.generating_residual, 3) << (st.generating_ok ? "  ok" : "  FAIL")
              << "\npartial sums: max rel error " << fmt(st.partial_sum_error, 3) << ", min value "
              << fmt(st.partial_sum_min, 3) << (st.partial_ok ? "  ok" : "  FAIL") << "\nresolvent rows: min component "
              << fmt(st.resolvent_min, 12) << ", series agreement " << fmt(st.resolvent_agreement, 3)
              << (st.resolvent_ok ? "  ok" : "  FAIL") << "\n";
  }
  return s.finish(rep, st.ok() ? kOk : kAnalytic);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability certificates for piecewise Ornstein-Uhlenbeck models"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "model configuration (JSON)");
  app.add_option("--seed", g.seed, "random seed");
  app.add_flag("--json", g.json, "print the machine-readable report");
  app.add_option("--out", g.out, "directory for report files");
  app.fallthrough();

  auto* validate_cmd = app.add_subcommand("validate", "check the model assumptions");

  std::string pair = "both";
  bool strong = false;
  auto* check = app.add_subcommand("check-cqlf", "decide CQLF existence for the two pairs");
  check->add_option("--pair", pair, "first, second or both")->check(CLI::IsMember({"first", "second", "both"}));
  check->add_flag("--strong", strong, "strong CQLF test on the pair with abandonment");

  auto* construct = app.add_subcommand("construct", "construct a CQLF and its R'QR transfer");

  std::string lyap = "auto";
  std::optional<int> samples_flag;
  std::optional<double> eps_flag, tol_zero_flag, tol_semi_flag;
  auto* drift = app.add_subcommand("verify-drift", "sampled check of the Lyapunov drift inequality");
  drift->add_option("--lyapunov", lyap, "auto, quadratic or smoothed")
      ->check(CLI::IsMember({"auto", "quadratic", "smoothed"}));
  drift->add_option("--samples-per-shell", samples_flag)->check(CLI::PositiveNumber);
  drift->add_option("--eps", eps_flag)->check(CLI::PositiveNumber);
  std::vector<double> shells_flag;
  drift->add_option("--shells", shells_flag, "shell radii (default: 10, 20, 50, 100 x scanned threshold)");

  for (auto* sc : {check, construct, drift}) {
    sc->add_option("--tol-zero", tol_zero_flag)->check(CLI::PositiveNumber);
    sc->add_option("--tol-semi", tol_semi_flag)->check(CLI::NonNegativeNumber);
  }

  SimFlags sf;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo statistics");
  sim->add_option("--dt", sf.dt)->check(CLI::PositiveNumber);
  sim->add_option("--horizon", sf.horizon)->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", sf.burn_in)->check(CLI::NonNegativeNumber);
  sim->add_option("--replicas", sf.replicas)->check(CLI::PositiveNumber);
  sim->add_option("--hitting-radius", sf.hitting_radius)->check(CLI::PositiveNumber);
  sim->add_option("--hitting-from", sf.hitting_from, "start point (default: 10 x radius along e)");
  sim->add_option("--hitting-cap", sf.hitting_cap)->check(CLI::PositiveNumber);
  sim->add_flag("--ergodicity", sf.ergodicity, "estimate the TV decay of e'Y");
  sim->add_option("--ergodicity-replicas", sf.ergodicity_replicas)->check(CLI::PositiveNumber);
  sim->add_option("--ergodicity-horizon", sf.ergodicity_horizon)->check(CLI::PositiveNumber);
  sim->add_option("--ergodicity-from", sf.ergodicity_from, "start point (default: |y0| = 10 along e)");
  sim->add_option("--trace-stride", sf.trace_stride, "write replica 0 every N steps to trace.csv")
      ->check(CLI::NonNegativeNumber);

  double tolerance = 1e-9;
  int witness_samples = 50;
  auto* cex = app.add_subcommand("counterexample", "reproduce the three-phase example");
  cex->add_option("--tolerance", tolerance, "eigenvalue tolerance")->check(CLI::PositiveNumber);
  cex->add_option("--samples", witness_samples, "random PSD Q to test")->check(CLI::NonNegativeNumber);

  int cheb_cases = 1000;
  auto* cheb_cmd = app.add_subcommand("chebyshev-selftest", "Chebyshev identities and resolvent positivity");
  cheb_cmd->add_option("--cases", cheb_cases)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInput;
  }

  // Flags override the config's numerics block.
  g.tune = [&](Numerics& n) {
    if (samples_flag) n.samples_per_shell = *samples_flag;
    if (eps_flag) n.eps = *eps_flag;
    if (tol_zero_flag) n.tol_zero = *tol_zero_flag;
    if (tol_semi_flag) n.tol_semi = *tol_semi_flag;
    if (!shells_flag.empty()) n.shells = shells_flag;
  };

  try {
    if (*validate_cmd) return cmd_validate(g);
    if (*check) return cmd_check_cqlf(g, pair, strong);
    if (*construct) return cmd_construct(g);
    if (*drift) return cmd_verify_drift(g, lyap);
    if (*sim) return cmd_simulate(g, sf);
    if (*cex) return cmd_counterexample(g, tolerance, witness_samples);
    if (*cheb_cmd) return cmd_chebyshev(g, cheb_cases);
  } catch (const ConfigError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const ModelRejected& e) {
    std::cerr << "model rejected: " << e.what() << "\n";
    return kAnalytic;
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kAnalytic;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kInput;
}
