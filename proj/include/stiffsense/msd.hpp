#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/nelder_mead.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

// Canonical second-order parameters: static gain, damping frequency (rad/s),
// damping ratio.
struct MsdCanonicalParams {
  double kp{1.0};
  double omega{1.0};
  double zeta{1.0};

  void validate() const {
    if (!(std::isfinite(kp) && std::isfinite(omega) && std::isfinite(zeta))) {
      throw DataError("MSD parameters must be finite");
    }
    if (!(omega > 0.0)) throw DataError("MSD omega must be positive");
    if (!(zeta > 0.0)) throw DataError("MSD zeta must be positive");
  }
};

// Physical form: inertia, viscous damping, stiffness, feedforward gain.
struct MsdPhysicalParams {
  double j{1.0};
  double b{1.0};
  double k{1.0};
  double kf{1.0};

  void validate() const {
    if (!(j > 0.0 && b > 0.0 && k > 0.0)) {
      throw DataError("MSD physical parameters j, b, k must be positive");
    }
    if (!std::isfinite(kf)) throw DataError("kf must be finite");
  }
};

inline MsdCanonicalParams physical_to_canonical(const MsdPhysicalParams& p) {
  p.validate();
  MsdCanonicalParams c;
  c.omega = std::sqrt(p.k / p.j);
  c.zeta = p.b / (2.0 * std::sqrt(p.k * p.j));
  c.kp = p.kf / p.k;
  return c;
}

// Regime switch between under-, critically- and over-damped closed forms.
inline constexpr double kCriticalZetaTolerance = 1e-9;

// Unit step response s(t) of omega^2 / (s^2 + 2 zeta omega s + omega^2):
// s(0) = 0, s'(0) = 0, s(inf) = 1. Scalar form, used by tests and by the
// sampled simulation below.
inline double unit_step_response(double omega, double zeta, double t) {
  if (t <= 0.0) return 0.0;
  if (std::abs(zeta - 1.0) < kCriticalZetaTolerance) {
    return 1.0 - std::exp(-omega * t) * (1.0 + omega * t);
  }
  if (zeta < 1.0) {
    const double wd = omega * std::sqrt(1.0 - zeta * zeta);
    const double decay = std::exp(-zeta * omega * t);
    return 1.0 - decay * (std::cos(wd * t) +
                          (zeta * omega / wd) * std::sin(wd * t));
  }
  const double disc = omega * std::sqrt(zeta * zeta - 1.0);
  const double r1 = -zeta * omega + disc;  // slow pole
  const double r2 = -zeta * omega - disc;  // fast pole
  return 1.0 - (r2 * std::exp(r1 * t) - r1 * std::exp(r2 * t)) / (r2 - r1);
}

// Sampled step response at t_n = n / fs, evaluated by stepping the closed
// form with per-sample recurrences (one complex or two real multiplies per
// sample); mathematically identical to unit_step_response at each instant.
// Input: step of amplitude (step_to - step_from) at t = 0 with x(0) =
// step_from and zero initial velocity. Final value step_from + kp * step.
inline Trajectory simulate_step_response(const MsdCanonicalParams& params,
                                         double step_from, double step_to,
                                         std::size_t n_samples,
                                         double sample_rate_hz) {
  params.validate();
  if (!(std::isfinite(step_from) && std::isfinite(step_to))) {
    throw DataError("step endpoints must be finite");
  }
  if (n_samples < 2) throw DataError("n_samples must be >= 2");
  if (!(sample_rate_hz > 0.0)) throw DataError("sample_rate_hz must be positive");

  const double dt = 1.0 / sample_rate_hz;
  const double amp = params.kp * (step_to - step_from);
  const double w = params.omega;
  const double z = params.zeta;

  Trajectory out;
  out.sample_rate_hz = sample_rate_hz;
  out.role = SignalRole::simulated;
  out.samples.resize(n_samples);

  if (std::abs(z - 1.0) < kCriticalZetaTolerance) {
    const double step = std::exp(-w * dt);
    double decay = 1.0;
    for (std::size_t n = 0; n < n_samples; ++n) {
      const double t = static_cast<double>(n) * dt;
      out.samples[n] = step_from + amp * (1.0 - decay * (1.0 + w * t));
      decay *= step;
    }
  } else if (z < 1.0) {
    const double wd = w * std::sqrt(1.0 - z * z);
    const double coeff = z * w / wd;
    const std::complex<double> step =
        std::exp(std::complex<double>(-z * w * dt, wd * dt));
    std::complex<double> rot(1.0, 0.0);
    for (std::size_t n = 0; n < n_samples; ++n) {
      out.samples[n] =
          step_from + amp * (1.0 - (rot.real() + coeff * rot.imag()));
      rot *= step;
    }
  } else {
    const double disc = w * std::sqrt(z * z - 1.0);
    const double r1 = -z * w + disc;
    const double r2 = -z * w - disc;
    const double denom = r2 - r1;
    const double step1 = std::exp(r1 * dt);
    const double step2 = std::exp(r2 * dt);
    double e1 = 1.0, e2 = 1.0;
    for (std::size_t n = 0; n < n_samples; ++n) {
      out.samples[n] = step_from + amp * (1.0 - (r2 * e1 - r1 * e2) / denom);
      e1 *= step1;
      e2 *= step2;
    }
  }
  return out;
}

// Normalized-RMSE goodness of fit, percent:
//   100 * (1 - ||actual - simulated|| / ||actual - mean(actual)||).
// Exactly 100 iff the signals are identical; negative for fits worse than
// the mean predictor.
inline double gof(const Trajectory& actual, const Trajectory& simulated) {
  if (actual.samples.size() != simulated.samples.size()) {
    throw DataError("gof: signal lengths differ");
  }
  if (actual.samples.empty()) throw DataError("gof: empty signals");

  double mean = 0.0;
  for (double v : actual.samples) mean += v;
  mean /= static_cast<double>(actual.samples.size());

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actual.samples.size(); ++i) {
    const double r = actual.samples[i] - simulated.samples[i];
    const double c = actual.samples[i] - mean;
    num += r * r;
    den += c * c;
  }
  if (den <= 0.0) {
    throw EstimationError(errc::undefined_gof,
                          "actual signal is constant, GOF denominator is zero");
  }
  return 100.0 * (1.0 - std::sqrt(num) / std::sqrt(den));
}

struct MsdFit {
  MsdCanonicalParams params;
  double gof_percent{0.0};
  double residual_ss{0.0};
  bool converged{false};
  int iterations{0};
  bool hit_bounds{false};
};

struct PemOptions {
  std::vector<double> omega_starts{5.0, 13.0, 25.0};
  std::vector<double> zeta_starts{0.5, 1.0};
  double omega_min{0.1};
  double omega_max{500.0};
  double zeta_min{1e-4};
  double zeta_max{200.0};
  double relative_tolerance{1e-6};
  int max_evaluations{2000};
};

namespace detail {

// Residual sum of squares between the signal and a candidate simulation;
// large finite penalty outside the parameter box so the simplex walks back.
inline double pem_cost(const std::vector<double>& p,
                       const std::vector<double>& signal, double step_from,
                       double step_to, double sample_rate_hz,
                       const PemOptions& opts) {
  const double kp = p[0], omega = p[1], zeta = p[2];
  double violation = 0.0;
  if (!(omega > opts.omega_min)) violation += (opts.omega_min - omega) + 1.0;
  if (omega > opts.omega_max) violation += (omega - opts.omega_max);
  if (!(zeta > opts.zeta_min)) violation += (opts.zeta_min - zeta) + 1.0;
  if (zeta > opts.zeta_max) violation += (zeta - opts.zeta_max);
  if (!std::isfinite(kp) || !std::isfinite(omega) || !std::isfinite(zeta)) {
    return 1e300;
  }
  if (violation > 0.0) return 1e15 * (1.0 + violation * violation);

  const Trajectory sim = simulate_step_response(
      {kp, omega, zeta}, step_from, step_to, signal.size(), sample_rate_hz);
  double ss = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double r = signal[i] - sim.samples[i];
    ss += r * r;
  }
  return std::isfinite(ss) ? ss : 1e300;
}

}  // namespace detail

// Fits (kp, omega, zeta) to a trajectory by minimizing the sum of squared
// differences between the signal and the simulated step response, using a
// multi-start Nelder-Mead simplex. The step input comes from trial metadata;
// when the metadata endpoints are absent or degenerate the first and last
// samples stand in.
inline MsdFit fit_pem(const Trajectory& signal, const TrialMeta& meta,
                      const PemOptions& opts = {}) {
  if (signal.samples.size() < 4) {
    throw EstimationError(errc::fit_failure, "signal too short for PEM fit");
  }

  double step_from = meta.start_x_px;
  double step_to = meta.target_x_px;
  if (!std::isfinite(step_from) || !std::isfinite(step_to) ||
      std::abs(step_to - step_from) < 1e-12) {
    step_from = signal.samples.front();
    step_to = signal.samples.back();
  }
  const double span = step_to - step_from;
  if (std::abs(span) < 1e-12) {
    throw EstimationError(errc::fit_failure,
                          "degenerate step input (start equals target)");
  }

  {  // Constant signals carry no dynamics and have undefined GOF.
    const auto [lo, hi] =
        std::minmax_element(signal.samples.begin(), signal.samples.end());
    if (*hi - *lo <= 0.0) {
      throw EstimationError(errc::undefined_gof,
                            "constant signal cannot be fitted");
    }
  }

  double kp0 = (signal.samples.back() - step_from) / span;
  if (!std::isfinite(kp0) || std::abs(kp0) < 1e-3) kp0 = 1.0;

  NelderMeadOptions nm_opts;
  nm_opts.relative_tolerance = opts.relative_tolerance;
  nm_opts.max_evaluations = opts.max_evaluations;

  auto cost = [&](const std::vector<double>& p) {
    return detail::pem_cost(p, signal.samples, step_from, step_to,
                            signal.sample_rate_hz, opts);
  };

  bool have_best = false;
  NelderMeadResult best;
  int total_evals = 0;
  for (double omega0 : opts.omega_starts) {
    for (double zeta0 : opts.zeta_starts) {
      std::vector<double> x0{kp0, omega0, zeta0};
      std::vector<double> step{0.15 * std::max(std::abs(kp0), 0.2),
                               0.25 * omega0, 0.25 * zeta0};
      NelderMeadResult r = nelder_mead(cost, x0, step, nm_opts);
      total_evals += r.evaluations;
      if (std::isfinite(r.fx) && r.fx < 1e14 &&
          (!have_best || r.fx < best.fx)) {
        best = r;
        have_best = true;
      }
    }
  }
  if (!have_best) {
    throw EstimationError(errc::fit_failure,
                          "no start produced a finite PEM cost");
  }

  MsdFit fit;
  fit.params = {best.x[0], best.x[1], best.x[2]};
  fit.residual_ss = best.fx;
  fit.iterations = total_evals;
  fit.converged = best.converged;
  const double rel = 1e-3;
  if (fit.params.omega <= opts.omega_min * (1.0 + rel) ||
      fit.params.omega >= opts.omega_max * (1.0 - rel) ||
      fit.params.zeta <= opts.zeta_min * (1.0 + rel) ||
      fit.params.zeta >= opts.zeta_max * (1.0 - rel)) {
    fit.hit_bounds = true;
    fit.converged = false;
  }

  const Trajectory sim =
      simulate_step_response(fit.params, step_from, step_to,
                             signal.samples.size(), signal.sample_rate_hz);
  fit.gof_percent = gof(signal, sim);
  return fit;
}

// Outlier rule for MSD estimates: zeta <= 0 or zeta > 100.
inline bool is_outlier_zeta(double zeta) { return zeta <= 0.0 || zeta > 100.0; }

inline bool is_outlier(const DampingEstimate& est) {
  return is_outlier_zeta(est.zeta);
}

inline DampingEstimate to_damping_estimate(const MsdFit& fit) {
  DampingEstimate est;
  est.omega = fit.params.omega;
  est.zeta = fit.params.zeta;
  est.method = Method::msd;
  est.kp = fit.params.kp;
  est.gof_percent = fit.gof_percent;
  return est;
}

}  // namespace stiffsense
