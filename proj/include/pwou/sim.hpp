#pragma once

// Euler-Maruyama simulation of the piecewise OU diffusion,
//
//   Y_{n+1} = Y_n + b(Y_n) dt + sqrt(dt) L xi_n,   LL' = Sigma,
//
// with one counter-based random stream per replica, so every output is a
// function of (params, cfg) alone and not of the worker count.

#include "pwou/detail/parallel.hpp"
#include "pwou/oumodel.hpp"
#include "pwou/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pwou {

struct SimConfig {
  double dt = 0.0;  // 0: default_dt(params)
  double horizon = 1e4;
  double burn_in = -1.0;  // negative: 10% of the horizon
  int replicas = 64;
  std::uint64_t seed = 1;
  Vector y0;  // empty: origin
  int batches = 20;  // batch-means batches per replica
  int bins = 50;
  double max_state = 1e12;
  unsigned threads = 0;
};

// 1e-3 min(1, 1/|R|_2)
inline double default_dt(const PiecewiseOUParams& m) {
  const double r = Eigen::JacobiSVD<Matrix>(m.R).singularValues()(0);
  return 1e-3 * std::min(1.0, r > 0.0 ? 1.0 / r : 1.0);
}

struct ResolvedConfig {
  double dt = 0.0;
  double horizon = 0.0;
  double burn_in = 0.0;
  long steps = 0;
  long burn_steps = 0;
  Vector y0;
};

inline ResolvedConfig resolve(const PiecewiseOUParams& m, const SimConfig& cfg) {
  ResolvedConfig r;
  r.dt = cfg.dt == 0.0 ? default_dt(m) : cfg.dt;
  r.horizon = cfg.horizon;
  r.burn_in = cfg.burn_in >= 0.0 ? cfg.burn_in : 0.1 * cfg.horizon;
  if (!(r.dt > 0.0) || !std::isfinite(r.dt)) throw InvalidInput("sim: dt must be positive");
  if (!(r.horizon > 0.0) || !std::isfinite(r.horizon)) throw InvalidInput("sim: horizon must be positive");
  if (!(r.burn_in < r.horizon)) throw InvalidInput("sim: burn_in must be less than the horizon");
  if (cfg.replicas < 1) throw InvalidInput("sim: replicas must be >= 1");
  if (cfg.batches < 2) throw InvalidInput("sim: need at least 2 batches");
  if (cfg.bins < 1) throw InvalidInput("sim: bins must be >= 1");
  r.steps = std::lround(r.horizon / r.dt);
  r.burn_steps = std::lround(r.burn_in / r.dt);
  r.y0 = cfg.y0.size() ? cfg.y0 : Vector::Zero(m.dim());
  if (r.y0.size() != m.dim() || !r.y0.allFinite()) throw InvalidInput("sim: y0 has the wrong length");
  return r;
}

namespace sim_impl {

// One replica's state: position, random stream and the normal sampler
// (which caches its spare deviate). Plain arrays keep the inner loop free of
// expression-template overhead at K of a few.
class Stepper {
 public:
  Stepper(const PiecewiseOUParams& m, double dt, std::uint64_t seed, std::uint64_t replica, const Vector& y0,
          double max_state)
      : k_(static_cast<std::size_t>(m.dim())),
        dt_(dt),
        sdt_(std::sqrt(dt)),
        alpha_(m.alpha),
        beta_(m.beta),
        fluid_(m.fluid),
        rng_(seed, replica),
        max_state_(max_state),
        replica_(replica) {
    r_.resize(k_ * k_);
    l_.assign(k_ * k_, 0.0);
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) r_[i * k_ + j] = m.R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (!fluid_) {
      Eigen::LLT<Matrix> llt(m.Sigma);
      if (llt.info() != Eigen::Success) throw InvalidInput("sim: Sigma is not positive definite");
      const Matrix l = llt.matrixL();
      for (std::size_t i = 0; i < k_; ++i)
        for (std::size_t j = 0; j <= i; ++j) l_[i * k_ + j] = l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    p_.assign(m.p.data(), m.p.data() + k_);
    y_.assign(y0.data(), y0.data() + k_);
    tmp_.resize(k_);
    b_.resize(k_);
    z_.resize(k_);
  }

  void step() {
    double x = 0.0;
    for (std::size_t i = 0; i < k_; ++i) x += y_[i];
    const double xp = x > 0.0 ? x : 0.0;
    const double shift = beta_ + alpha_ * xp;
    for (std::size_t i = 0; i < k_; ++i) tmp_[i] = y_[i] - p_[i] * xp;
    for (std::size_t i = 0; i < k_; ++i) {
      double acc = shift * p_[i];
      const double* row = &r_[i * k_];
      for (std::size_t j = 0; j < k_; ++j) acc += row[j] * tmp_[j];
      b_[i] = -acc;
    }
    for (std::size_t i = 0; i < k_; ++i) y_[i] += dt_ * b_[i];
    if (!fluid_) {
      for (std::size_t i = 0; i < k_; ++i) z_[i] = sdt_ * normal_(rng_);
      for (std::size_t i = 0; i < k_; ++i) {
        double acc = 0.0;
        const double* row = &l_[i * k_];
        for (std::size_t j = 0; j <= i; ++j) acc += row[j] * z_[j];
        y_[i] += acc;
      }
    }
    ++n_;
    for (std::size_t i = 0; i < k_; ++i)
      if (!(std::abs(y_[i]) <= max_state_)) overflow();
  }

  std::size_t dim() const { return k_; }
  double operator[](std::size_t i) const { return y_[i]; }
  double sum() const {
    double x = 0.0;
    for (double v : y_) x += v;
    return x;
  }
  double squared_norm() const {
    double x = 0.0;
    for (double v : y_) x += v * v;
    return x;
  }
  Vector y() const { return Eigen::Map<const Vector>(y_.data(), static_cast<Eigen::Index>(k_)); }
  long steps() const { return n_; }

 private:
  [[noreturn]] void overflow() const {
    std::ostringstream os;
    os << "sim: state overflow (|Y| > " << max_state_ << ") in replica " << replica_ << " at t = " << n_ * dt_
       << "; the model may be unstable or dt too large";
    throw NumericError(os.str());
  }

  std::size_t k_;
  double dt_, sdt_, alpha_, beta_;
  bool fluid_;
  CounterRng rng_;
  std::normal_distribution<double> normal_;
  std::vector<double> r_, l_, p_, y_, tmp_, b_, z_;
  double max_state_;
  std::uint64_t replica_;
  long n_ = 0;
};

inline void check_model(const PiecewiseOUParams& m) { require_valid(m); }

}  // namespace sim_impl

struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> y;
};

// Path of one replica, recorded every `stride` steps (and at the horizon).
inline Trajectory simulate(const PiecewiseOUParams& m, const SimConfig& cfg, std::uint64_t replica = 0,
                           long stride = 1) {
  sim_impl::check_model(m);
  const auto rc = resolve(m, cfg);
  if (stride < 1) throw InvalidInput("simulate: stride must be >= 1");
  sim_impl::Stepper s(m, rc.dt, cfg.seed, replica, rc.y0, cfg.max_state);
  Trajectory out;
  out.t.push_back(0.0);
  out.y.push_back(s.y());
  for (long n = 1; n <= rc.steps; ++n) {
    s.step();
    if (n % stride == 0 || n == rc.steps) {
      out.t.push_back(static_cast<double>(n) * rc.dt);
      out.y.push_back(s.y());
    }
  }
  return out;
}

// Y at the horizon for every replica.
inline std::vector<Vector> terminal_states(const PiecewiseOUParams& m, const SimConfig& cfg) {
  sim_impl::check_model(m);
  const auto rc = resolve(m, cfg);
  std::vector<Vector> out(static_cast<std::size_t>(cfg.replicas));
  detail::parallel_for(
      out.size(),
      [&](std::size_t r) {
        sim_impl::Stepper s(m, rc.dt, cfg.seed, r, rc.y0, cfg.max_state);
        for (long n = 0; n < rc.steps; ++n) s.step();
        out[r] = s.y();
      },
      cfg.threads);
  return out;
}

// ------------------------------------------------------------- statistics

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;

  void add(double v) {
    if (v < lo) {
      ++underflow;
    } else if (v >= hi) {
      ++overflow;
    } else {
      auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(counts.size()));
      ++counts[std::min(i, counts.size() - 1)];
    }
  }
  void merge(const Histogram& o) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    underflow += o.underflow;
    overflow += o.overflow;
  }
  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

struct SimStats {
  Vector mean;
  Matrix covariance;
  Vector mean_se;      // batch-means standard errors of the mean
  Vector variance_se;  // batch-means standard errors of the variances
  Vector ess;          // effective sample sizes, per component
  double x_mean = 0.0, x_var = 0.0, x_mean_se = 0.0, x_var_se = 0.0;  // x = e'Y
  Histogram hist_x;
  std::vector<Histogram> hist_y;
  long samples = 0;
  int batches_total = 0;
  bool converged = true;
  std::string warning;
  double dt = 0.0, horizon = 0.0, burn_in = 0.0;
};

namespace sim_impl {

// Moments of one batch; the observation is (y_1..y_K, e'y).
struct Batch {
  Vector s1;  // sum of obs
  Vector s2;  // sum of obs^2, componentwise
  Matrix cross;  // sum of y y'
  long n = 0;
};

struct Range {
  Vector lo, hi;  // for (y_1..y_K, x)
};

struct ReplicaRun {
  std::vector<Batch> batches;
  std::vector<Histogram> hist;  // K + 1
};

inline double sample_sd(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double a : v) s += (a - mean) * (a - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace sim_impl

inline SimStats stationary_stats(const PiecewiseOUParams& m, const SimConfig& cfg) {
  using namespace sim_impl;
  check_model(m);
  if (!(m.alpha > 0.0 || m.beta > 0.0))
    throw InvalidInput("stationary_stats: needs alpha > 0, or alpha = 0 and beta > 0, for a stationary law");
  const auto rc = resolve(m, cfg);
  const Eigen::Index k = m.dim();
  const long main_steps = rc.steps - rc.burn_steps;
  if (main_steps < cfg.batches) throw InvalidInput("stationary_stats: fewer steps than batches");
  const auto nrep = static_cast<std::size_t>(cfg.replicas);

  // Phase 1: burn-in, tracking the range seen over its second half.
  std::vector<std::unique_ptr<Stepper>> steppers(nrep);
  std::vector<Range> ranges(nrep);
  detail::parallel_for(
      nrep,
      [&](std::size_t r) {
        auto s = std::make_unique<Stepper>(m, rc.dt, cfg.seed, r, rc.y0, cfg.max_state);
        Range rg;
        rg.lo = Vector::Constant(k + 1, std::numeric_limits<double>::infinity());
        rg.hi = -rg.lo;
        for (long n = 0; n < rc.burn_steps; ++n) {
          s->step();
          if (2 * n >= rc.burn_steps) {
            for (Eigen::Index i = 0; i < k; ++i) {
              rg.lo(i) = std::min(rg.lo(i), (*s)[static_cast<std::size_t>(i)]);
              rg.hi(i) = std::max(rg.hi(i), (*s)[static_cast<std::size_t>(i)]);
            }
            const double x = s->sum();
            rg.lo(k) = std::min(rg.lo(k), x);
            rg.hi(k) = std::max(rg.hi(k), x);
          }
        }
        steppers[r] = std::move(s);
        ranges[r] = std::move(rg);
      },
      cfg.threads);

  std::vector<Histogram> proto(static_cast<std::size_t>(k + 1));
  for (Eigen::Index i = 0; i <= k; ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& rg : ranges) {
      lo = std::min(lo, rg.lo(i));
      hi = std::max(hi, rg.hi(i));
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {  // no burn-in samples
      const double c = i < k ? rc.y0(i) : rc.y0.sum();
      lo = c - 1.0;
      hi = c + 1.0;
    }
    const double pad = 0.25 * std::max(hi - lo, 1e-9);
    auto& h = proto[static_cast<std::size_t>(i)];
    h.lo = lo - pad;
    h.hi = hi + pad;
    h.counts.assign(static_cast<std::size_t>(cfg.bins), 0);
  }

  // Phase 2: batch moments after burn-in.
  std::vector<ReplicaRun> runs(nrep);
  const long per_batch = main_steps / cfg.batches;
  detail::parallel_for(
      nrep,
      [&](std::size_t r) {
        auto& s = *steppers[r];
        ReplicaRun run;
        run.hist = proto;
        run.batches.resize(static_cast<std::size_t>(cfg.batches));
        const auto kk = static_cast<std::size_t>(k);
        std::vector<double> obs(kk + 1), s1(kk + 1), s2(kk + 1), cross(kk * kk);
        for (int b = 0; b < cfg.batches; ++b) {
          std::fill(s1.begin(), s1.end(), 0.0);
          std::fill(s2.begin(), s2.end(), 0.0);
          std::fill(cross.begin(), cross.end(), 0.0);
          const long len = b + 1 == cfg.batches ? main_steps - per_batch * (cfg.batches - 1) : per_batch;
          for (long n = 0; n < len; ++n) {
            s.step();
            double x = 0.0;
            for (std::size_t i = 0; i < kk; ++i) {
              obs[i] = s[i];
              x += obs[i];
            }
            obs[kk] = x;
            for (std::size_t i = 0; i <= kk; ++i) {
              s1[i] += obs[i];
              s2[i] += obs[i] * obs[i];
              run.hist[i].add(obs[i]);
            }
            for (std::size_t i = 0; i < kk; ++i)
              for (std::size_t j = 0; j < kk; ++j) cross[i * kk + j] += obs[i] * obs[j];
          }
          Batch bt;
          bt.s1 = Eigen::Map<Vector>(s1.data(), k + 1);
          bt.s2 = Eigen::Map<Vector>(s2.data(), k + 1);
          bt.cross = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cross.data(), k, k);
          bt.n = len;
          run.batches[static_cast<std::size_t>(b)] = std::move(bt);
        }
        runs[r] = std::move(run);
        steppers[r].reset();
      },
      cfg.threads);

  // Reduce in replica order.
  SimStats st;
  st.dt = rc.dt;
  st.horizon = rc.horizon;
  st.burn_in = rc.burn_in;
  Vector s1 = Vector::Zero(k + 1), s2 = Vector::Zero(k + 1);
  Matrix cross = Matrix::Zero(k, k);
  long total = 0;
  for (const auto& run : runs)
    for (const auto& b : run.batches) {
      s1 += b.s1;
      s2 += b.s2;
      cross += b.cross;
      total += b.n;
    }
  const double nt = static_cast<double>(total);
  const Vector mu = s1 / nt;
  const Vector var = (s2 / nt).array() - mu.array().square();
  st.samples = total;
  st.mean = mu.head(k);
  st.covariance = symmetrize(cross / nt - st.mean * st.mean.transpose());
  st.x_mean = mu(k);
  st.x_var = var(k);

  // Batch means over all replicas' batches; the variance estimate of a batch
  // uses the pooled mean.
  const std::size_t nb = nrep * static_cast<std::size_t>(cfg.batches);
  st.batches_total = static_cast<int>(nb);
  Vector mse(k + 1), vse(k + 1);
  bool converged = true;
  std::ostringstream warn;
  for (Eigen::Index i = 0; i <= k; ++i) {
    std::vector<double> bm, bv, first, second;
    bm.reserve(nb);
    for (const auto& run : runs)
      for (std::size_t b = 0; b < run.batches.size(); ++b) {
        const auto& bt = run.batches[b];
        const double n = static_cast<double>(bt.n);
        const double mean_b = bt.s1(i) / n;
        bm.push_back(mean_b);
        bv.push_back(bt.s2(i) / n - 2.0 * mu(i) * mean_b + mu(i) * mu(i));
        (2 * b < run.batches.size() ? first : second).push_back(mean_b);
      }
    const double nbd = static_cast<double>(nb);
    mse(i) = sample_sd(bm, std::accumulate(bm.begin(), bm.end(), 0.0) / nbd) / std::sqrt(nbd);
    vse(i) = sample_sd(bv, std::accumulate(bv.begin(), bv.end(), 0.0) / nbd) / std::sqrt(nbd);
    // First half versus second half of the run: 95% intervals must overlap.
    if (first.size() >= 2 && second.size() >= 2) {
      const double m1 = std::accumulate(first.begin(), first.end(), 0.0) / static_cast<double>(first.size());
      const double m2 = std::accumulate(second.begin(), second.end(), 0.0) / static_cast<double>(second.size());
      const double se1 = sample_sd(first, m1) / std::sqrt(static_cast<double>(first.size()));
      const double se2 = sample_sd(second, m2) / std::sqrt(static_cast<double>(second.size()));
      if (std::abs(m1 - m2) > 1.96 * (se1 + se2)) {
        converged = false;
        warn << "not converged: component " << (i < k ? std::to_string(i) : std::string("e'Y"))
             << " has first-half mean " << m1 << " and second-half mean " << m2 << "; ";
      }
    }
  }
  st.mean_se = mse.head(k);
  st.variance_se = vse.head(k);
  st.x_mean_se = mse(k);
  st.x_var_se = vse(k);
  st.ess = Vector(k);
  for (Eigen::Index i = 0; i < k; ++i)
    st.ess(i) = mse(i) > 0.0 ? std::min(nt, st.covariance(i, i) / (mse(i) * mse(i))) : nt;
  st.converged = converged;
  st.warning = warn.str();

  st.hist_x = proto[static_cast<std::size_t>(k)];
  st.hist_y.assign(proto.begin(), proto.begin() + k);
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < st.hist_y.size(); ++i) st.hist_y[i].merge(run.hist[i]);
    st.hist_x.merge(run.hist[static_cast<std::size_t>(k)]);
  }
  return st;
}

// ---------------------------------------------------------- hitting times

struct HittingEstimate {
  double radius = 0.0;
  double mean = 0.0;
  double se = 0.0;
  int replicas = 0;
  int censored = 0;
  double censor_fraction = 0.0;
  double cap = 0.0;
  std::string warning;
};

// Mean first time |Y| <= radius, from y0; replicas still outside after
// `cap` time units are censored and excluded from the mean.
inline HittingEstimate hitting_time(const PiecewiseOUParams& m, const Vector& y0, double radius, const SimConfig& cfg,
                                    double cap = 1e3) {
  sim_impl::check_model(m);
  if (!(radius > 0.0)) throw InvalidInput("hitting_time: radius must be positive");
  if (!(cap > 0.0)) throw InvalidInput("hitting_time: cap must be positive");
  SimConfig c = cfg;
  c.y0 = y0;
  c.horizon = cap;
  c.burn_in = 0.0;
  const auto rc = resolve(m, c);
  HittingEstimate h;
  h.radius = radius;
  h.replicas = cfg.replicas;
  h.cap = cap;
  if (y0.norm() <= radius) return h;

  std::vector<double> times(static_cast<std::size_t>(cfg.replicas), -1.0);
  detail::parallel_for(
      times.size(),
      [&](std::size_t r) {
        sim_impl::Stepper s(m, rc.dt, cfg.seed, r, rc.y0, cfg.max_state);
        const double r2 = radius * radius;
        for (long n = 1; n <= rc.steps; ++n) {
          s.step();
          if (s.squared_norm() <= r2) {
            times[r] = static_cast<double>(n) * rc.dt;
            return;
          }
        }
      },
      cfg.threads);

  std::vector<double> hit;
  for (double t : times)
    if (t >= 0.0) hit.push_back(t);
  h.censored = cfg.replicas - static_cast<int>(hit.size());
  h.censor_fraction = static_cast<double>(h.censored) / cfg.replicas;
  if (hit.empty()) {
    h.mean = std::numeric_limits<double>::infinity();
    h.se = std::numeric_limits<double>::infinity();
  } else {
    h.mean = std::accumulate(hit.begin(), hit.end(), 0.0) / static_cast<double>(hit.size());
    h.se = hit.size() > 1 ? sim_impl::sample_sd(hit, h.mean) / std::sqrt(static_cast<double>(hit.size())) : 0.0;
  }
  if (h.censor_fraction > 0.05) {
    std::ostringstream os;
    os << "censoring fraction " << h.censor_fraction << " exceeds 5% at cap " << cap;
    h.warning = os.str();
  }
  return h;
}

// ------------------------------------------------------------ ergodicity

struct ErgodicityOptions {
  int replicas = 2000;
  double horizon = 30.0;
  double interval = 0.1;  // observation spacing
  int bins = 40;
  double reference_fraction = 1.0 / 3.0;  // late window pooled as the reference law
};

struct ErgodicityReport {
  std::vector<double> times;
  std::vector<double> distance;  // TV distance on binned e'Y
  double bin_lo = 0.0, bin_hi = 0.0;
  int bins = 0;
  double noise_floor = 0.0;
  std::size_t fit_begin = 0, fit_end = 0;  // [begin, end) indices used in the fit
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool fit_ok = false;
  std::string diagnostic;
};

// d(t) = TV(law of e'Y(t) | Y(0) = y0, reference), both binned on a fixed grid.
// log d is fitted linearly in t from the first time d < 0.9 until d falls to
// twice the noise floor (the median distance inside the reference window).
inline ErgodicityReport ergodicity_diagnostic(const PiecewiseOUParams& m, const SimConfig& cfg,
                                              const ErgodicityOptions& opt = {}) {
  sim_impl::check_model(m);
  if (opt.bins < 2) throw InvalidInput("ergodicity_diagnostic: need at least 2 bins");
  if (opt.replicas < 10 * opt.bins)
    throw InvalidInput("ergodicity_diagnostic: insufficient replicas for binning (need >= 10 per bin)");
  if (!(opt.interval > 0.0) || !(opt.horizon > opt.interval))
    throw InvalidInput("ergodicity_diagnostic: bad horizon/interval");
  SimConfig c = cfg;
  c.horizon = opt.horizon;
  c.burn_in = 0.0;
  const auto rc = resolve(m, c);
  const long stride = std::max(1L, std::lround(opt.interval / rc.dt));
  const long nobs = rc.steps / stride + 1;

  const auto nrep = static_cast<std::size_t>(opt.replicas);
  std::vector<std::vector<double>> xs(nrep);
  detail::parallel_for(
      nrep,
      [&](std::size_t r) {
        sim_impl::Stepper s(m, rc.dt, cfg.seed, r, rc.y0, cfg.max_state);
        auto& out = xs[r];
        out.reserve(static_cast<std::size_t>(nobs));
        out.push_back(s.sum());
        for (long n = 1; n < nobs * stride; ++n) {
          s.step();
          if (n % stride == 0) out.push_back(s.sum());
        }
      },
      cfg.threads);

  ErgodicityReport rep;
  rep.bins = opt.bins;
  const auto nt = static_cast<std::size_t>(nobs);
  const std::size_t ref_begin = nt - std::max<std::size_t>(1, static_cast<std::size_t>(opt.reference_fraction * nt));
  std::vector<double> ref;
  for (const auto& v : xs) ref.insert(ref.end(), v.begin() + static_cast<long>(ref_begin), v.end());
  std::sort(ref.begin(), ref.end());
  // Bins cover the central 99.8% of the reference law; the outer bins absorb the tails.
  rep.bin_lo = ref[static_cast<std::size_t>(0.001 * static_cast<double>(ref.size()))];
  rep.bin_hi = ref[static_cast<std::size_t>(0.999 * static_cast<double>(ref.size() - 1))];
  if (!(rep.bin_hi > rep.bin_lo)) rep.bin_hi = rep.bin_lo + 1.0;
  auto bin_of = [&](double x) {
    const double u = (x - rep.bin_lo) / (rep.bin_hi - rep.bin_lo);
    const long b = static_cast<long>(std::floor(u * opt.bins));
    return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(opt.bins - 1)));
  };
  std::vector<double> ref_h(static_cast<std::size_t>(opt.bins), 0.0);
  for (double x : ref) ref_h[bin_of(x)] += 1.0;
  for (double& v : ref_h) v /= static_cast<double>(ref.size());

  for (std::size_t j = 0; j < nt; ++j) {
    std::vector<double> h(static_cast<std::size_t>(opt.bins), 0.0);
    for (const auto& v : xs) h[bin_of(v[j])] += 1.0;
    double tv = 0.0;
    for (std::size_t b = 0; b < h.size(); ++b) tv += std::abs(h[b] / static_cast<double>(nrep) - ref_h[b]);
    rep.times.push_back(static_cast<double>(j) * static_cast<double>(stride) * rc.dt);
    rep.distance.push_back(0.5 * tv);
  }

  std::vector<double> tail(rep.distance.begin() + static_cast<long>(ref_begin), rep.distance.end());
  std::nth_element(tail.begin(), tail.begin() + static_cast<long>(tail.size() / 2), tail.end());
  rep.noise_floor = tail[tail.size() / 2];

  std::size_t b = 0;
  while (b < nt && !(rep.distance[b] < 0.9)) ++b;
  std::size_t e = b;
  while (e < nt && rep.distance[e] > 2.0 * rep.noise_floor) ++e;
  rep.fit_begin = b;
  rep.fit_end = e;
  if (e < b + 3) {
    rep.diagnostic = "decay window has fewer than 3 points above the noise floor";
    return rep;
  }
  double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
  const double n = static_cast<double>(e - b);
  for (std::size_t j = b; j < e; ++j) {
    const double t = rep.times[j], y = std::log(rep.distance[j]);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    syy += y * y;
  }
  const double vt = stt - st * st / n, vy = syy - sy * sy / n, cty = sty - st * sy / n;
  rep.slope = cty / vt;
  rep.intercept = (sy - rep.slope * st) / n;
  rep.r2 = vy > 0.0 ? cty * cty / (vt * vy) : 1.0;
  rep.fit_ok = true;
  return rep;
}

}  // namespace pwou
