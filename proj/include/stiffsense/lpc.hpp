#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

// Poles whose imaginary magnitude falls below this are treated as real.
inline constexpr double kComplexPoleThreshold = 1e-9;

// Biased (1/N) autocorrelation of the mean-removed signal, lags 0..max_lag.
// The bias convention keeps the implied Toeplitz system positive
// semidefinite, which keeps the Levinson-Durbin recursion stable.
inline std::vector<double> autocorrelation(const std::vector<double>& signal,
                                           int max_lag) {
  const auto n = static_cast<long>(signal.size());
  if (max_lag < 0) throw DataError("max_lag must be nonnegative");
  if (max_lag >= n) {
    throw DataError("max_lag " + std::to_string(max_lag) +
                    " must be below the signal length " + std::to_string(n));
  }
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> acf(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double sum = 0.0;
    for (long i = lag; i < n; ++i) {
      sum += (signal[static_cast<std::size_t>(i)] - mean) *
             (signal[static_cast<std::size_t>(i - lag)] - mean);
    }
    acf[static_cast<std::size_t>(lag)] = sum / static_cast<double>(n);
  }
  return acf;
}

inline std::vector<double> autocorrelation(const Trajectory& t, int max_lag) {
  return autocorrelation(t.samples, max_lag);
}

// Order-p all-pole prediction model: x[n] ~ sum_k a_k x[n-k], prediction
// polynomial A(z) = 1 - sum_k a_k z^-k.
struct LpcModel {
  int order{0};
  std::vector<double> coefficients;  // a_1 .. a_p
  double error_variance{0.0};       // final forward prediction-error power
  std::vector<std::complex<double>> poles;  // roots of z^p - a_1 z^{p-1} - ... - a_p
};

// Levinson-Durbin recursion on the Yule-Walker normal equations.
inline LpcModel levinson_durbin(const std::vector<double>& acf, int order) {
  if (order < 1) throw DataError("LPC order must be >= 1");
  if (acf.size() < static_cast<std::size_t>(order) + 1) {
    throw DataError("autocorrelation needs at least order+1 lags");
  }
  if (!(acf[0] > 0.0)) {
    throw EstimationError(errc::degenerate_signal,
                          "zero-power signal (acf(0) <= 0)");
  }

  std::vector<double> a(static_cast<std::size_t>(order), 0.0);
  std::vector<double> prev(a);
  double err = acf[0];

  for (int m = 1; m <= order; ++m) {
    double acc = acf[static_cast<std::size_t>(m)];
    for (int j = 1; j < m; ++j) {
      acc -= a[static_cast<std::size_t>(j - 1)] *
             acf[static_cast<std::size_t>(m - j)];
    }
    // Perfectly predictable signal: remaining reflection coefficients are 0.
    const double k = err > 0.0 ? acc / err : 0.0;
    if (!std::isfinite(k)) {
      throw EstimationError(errc::numerical_failure,
                            "non-finite reflection coefficient at order " +
                                std::to_string(m));
    }
    prev = a;
    a[static_cast<std::size_t>(m - 1)] = k;
    for (int j = 1; j < m; ++j) {
      a[static_cast<std::size_t>(j - 1)] =
          prev[static_cast<std::size_t>(j - 1)] -
          k * prev[static_cast<std::size_t>(m - j - 1)];
    }
    err *= (1.0 - k * k);
    if (err < 0.0) err = 0.0;
  }

  LpcModel model;
  model.order = order;
  model.coefficients = std::move(a);
  model.error_variance = err;
  return model;
}

// Populates the poles of the prediction polynomial
//   z^p - a_1 z^{p-1} - ... - a_p
// via eigenvalues of its companion matrix, then verifies the residual
// |A(r)| at each root against a coefficient-scaled bound.
inline LpcModel lpc_poles(LpcModel model) {
  const int p = model.order;
  if (static_cast<int>(model.coefficients.size()) != p) {
    throw DataError("lpc_poles: coefficients missing");
  }

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) companion(0, i) = model.coefficients[static_cast<std::size_t>(i)];
  for (int i = 1; i < p; ++i) companion(i, i - 1) = 1.0;

  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) {
    throw EstimationError(errc::numerical_failure,
                          "companion eigenvalue solver did not converge");
  }

  model.poles.clear();
  model.poles.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) model.poles.push_back(solver.eigenvalues()(i));

  // Residual check: |r^p - sum a_k r^{p-k}| scaled by coefficient magnitude.
  double scale = 1.0;
  for (double c : model.coefficients) scale += std::abs(c);
  for (const auto& r : model.poles) {
    std::complex<double> value = 1.0;
    for (int k = 0; k < p; ++k) {
      value = value * r - model.coefficients[static_cast<std::size_t>(k)];
    }
    double mag = std::max(1.0, std::abs(r));
    double root_scale = scale * std::pow(mag, p);
    if (std::abs(value) > 1e-8 * root_scale) {
      throw EstimationError(errc::numerical_failure,
                            "companion root residual exceeds tolerance");
    }
  }
  return model;
}

enum class PolePairSelection { dominant_modulus, lowest_frequency };

// Picks the dominant complex-conjugate pole pair and maps it to the damping
// estimate: omega = |Im r|, zeta = |Re r| / |r|.
inline DampingEstimate extract_damping(
    const LpcModel& model,
    PolePairSelection selection = PolePairSelection::dominant_modulus) {
  if (model.poles.empty()) throw DataError("extract_damping: poles not populated");

  int best = -1;
  for (int i = 0; i < static_cast<int>(model.poles.size()); ++i) {
    const auto& r = model.poles[static_cast<std::size_t>(i)];
    if (std::abs(r.imag()) <= kComplexPoleThreshold) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const auto& b = model.poles[static_cast<std::size_t>(best)];
    if (selection == PolePairSelection::dominant_modulus) {
      if (std::abs(r) > std::abs(b) + 1e-15) best = i;
    } else {
      const double fr = std::abs(std::atan2(std::abs(r.imag()), r.real()));
      const double fb = std::abs(std::atan2(std::abs(b.imag()), b.real()));
      if (fr < fb - 1e-15) best = i;
    }
  }
  if (best < 0) {
    throw EstimationError(errc::no_complex_root,
                          "no complex pole pair (over-damped or degenerate)");
  }

  const auto& r = model.poles[static_cast<std::size_t>(best)];
  DampingEstimate est;
  est.method = Method::lpc;
  est.omega = std::abs(r.imag());
  est.zeta = std::abs(r.real()) / std::abs(r);
  return est;
}

struct LpcOptions {
  int order{4};
  PolePairSelection selection{PolePairSelection::dominant_modulus};
};

// Full model fit: autocorrelation, Levinson-Durbin, companion-matrix roots.
inline LpcModel fit_lpc(const Trajectory& signal, const LpcOptions& opts = {}) {
  const auto min_len =
      std::max<std::size_t>(kMinTrajectorySamples,
                            2 * static_cast<std::size_t>(opts.order));
  if (signal.samples.size() < min_len) {
    throw DataError("signal too short for order-" + std::to_string(opts.order) +
                    " LPC: " + std::to_string(signal.samples.size()) +
                    " samples");
  }
  const std::vector<double> acf = autocorrelation(signal, opts.order);
  return lpc_poles(levinson_durbin(acf, opts.order));
}

inline DampingEstimate estimate_lpc(const Trajectory& signal,
                                    const LpcOptions& opts = {}) {
  return extract_damping(fit_lpc(signal, opts), opts.selection);
}

}  // namespace stiffsense
