#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"

namespace stiffsense {

enum class FeatureSource { lpc, msd };
enum class FeatureSet { omega, zeta, omega_zeta };

inline const char* to_string(FeatureSource s) {
  return s == FeatureSource::lpc ? "LPC" : "MSD";
}

inline const char* to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::omega: return "omega";
    case FeatureSet::zeta: return "zeta";
    default: return "omega_zeta";
  }
}

// n x d feature matrix with binary labels (calm = 0, stressed = 1).
struct FeatureMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  FeatureSource feature_source{FeatureSource::lpc};
  FeatureSet feature_set{FeatureSet::omega};

  std::size_t size() const { return rows.size(); }
  std::size_t dims() const { return rows.empty() ? 0 : rows.front().size(); }

  void validate() const {
    if (rows.size() != labels.size()) {
      throw DataError("feature matrix: row/label count mismatch");
    }
    if (rows.empty()) throw DataError("feature matrix: empty");
    const std::size_t d = rows.front().size();
    if (d < 1 || d > 2) throw DataError("feature matrix: dims must be 1 or 2");
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) throw DataError("feature matrix: ragged rows");
      for (double v : rows[i]) {
        if (!std::isfinite(v)) throw DataError("feature matrix: non-finite entry");
      }
      if (labels[i] == 0) has0 = true;
      else if (labels[i] == 1) has1 = true;
      else throw DataError("feature matrix: labels must be 0 or 1");
    }
    if (!has0 || !has1) throw DataError("feature matrix: both classes required");
  }
};

struct MinMaxBounds {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;  // constant training feature, mapped to 0.5

  bool any_degenerate() const {
    return std::any_of(degenerate.begin(), degenerate.end(),
                       [](bool b) { return b; });
  }
};

inline MinMaxBounds min_max_fit(const FeatureMatrix& train) {
  train.validate();
  const std::size_t d = train.dims();
  MinMaxBounds b;
  b.min.assign(d, 0.0);
  b.max.assign(d, 0.0);
  b.degenerate.assign(d, false);
  for (std::size_t f = 0; f < d; ++f) {
    double lo = train.rows[0][f], hi = train.rows[0][f];
    for (const auto& row : train.rows) {
      lo = std::min(lo, row[f]);
      hi = std::max(hi, row[f]);
    }
    b.min[f] = lo;
    b.max[f] = hi;
    b.degenerate[f] = !(hi > lo);
  }
  return b;
}

inline FeatureMatrix min_max_apply(const MinMaxBounds& b, FeatureMatrix m) {
  for (auto& row : m.rows) {
    for (std::size_t f = 0; f < row.size(); ++f) {
      row[f] = b.degenerate[f]
                   ? 0.5
                   : (row[f] - b.min[f]) / (b.max[f] - b.min[f]);
    }
  }
  return m;
}

struct NormalizedSplit {
  FeatureMatrix train;
  FeatureMatrix test;
  MinMaxBounds bounds;
};

// Bounds are computed on the training set only; test values may land
// outside [0, 1].
inline NormalizedSplit min_max_fit_apply(const FeatureMatrix& train,
                                         const FeatureMatrix& test) {
  NormalizedSplit out;
  out.bounds = min_max_fit(train);
  out.train = min_max_apply(out.bounds, train);
  out.test = min_max_apply(out.bounds, test);
  return out;
}

// Default RBF width mirroring the usual library default:
// gamma = 1 / (d * mean per-feature variance).
inline double default_gamma(const FeatureMatrix& m) {
  const std::size_t d = m.dims();
  const auto n = static_cast<double>(m.size());
  double total_var = 0.0;
  for (std::size_t f = 0; f < d; ++f) {
    double mean = 0.0;
    for (const auto& row : m.rows) mean += row[f];
    mean /= n;
    double var = 0.0;
    for (const auto& row : m.rows) var += (row[f] - mean) * (row[f] - mean);
    total_var += var / n;
  }
  const double mean_var = total_var / static_cast<double>(d);
  if (!(mean_var > 0.0)) return 1.0;
  return 1.0 / (static_cast<double>(d) * mean_var);
}

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> dual_coefficients;  // alpha_i * y_i for support vectors
  double bias{0.0};
  double c{1.0};
  double gamma{1.0};
  MinMaxBounds normalization;
};

namespace detail {

inline double rbf_kernel(const std::vector<double>& a,
                         const std::vector<double>& b, double gamma) {
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    ss += d * d;
  }
  return std::exp(-gamma * ss);
}

struct SmoResult {
  std::vector<double> alpha;
  double bias{0.0};
  double objective{0.0};
  int sweeps{0};
};

// Platt-style sequential minimal optimization on the soft-margin dual.
// Deterministic: index scans are in fixed order and the second-choice
// heuristic breaks ties toward the lower index.
inline SmoResult smo_solve(const std::vector<std::vector<double>>& kernel,
                           const std::vector<int>& y, double c,
                           double tol = 1e-3, int max_sweeps = 500) {
  const std::size_t n = y.size();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> error(n);
  double bias = 0.0;

  auto decision = [&](std::size_t i) {
    double f = -bias;
    for (std::size_t j = 0; j < n; ++j) {
      if (alpha[j] > 0.0) f += alpha[j] * y[j] * kernel[j][i];
    }
    return f;
  };
  for (std::size_t i = 0; i < n; ++i) error[i] = decision(i) - y[i];

  constexpr double kEps = 1e-12;

  auto take_step = [&](std::size_t i1, std::size_t i2) -> bool {
    if (i1 == i2) return false;
    const double a1 = alpha[i1], a2 = alpha[i2];
    const int y1 = y[i1], y2 = y[i2];
    const double e1 = error[i1], e2 = error[i2];
    const double s = y1 * y2;

    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2 - a1);
      hi = std::min(c, c + a2 - a1);
    } else {
      lo = std::max(0.0, a1 + a2 - c);
      hi = std::min(c, a1 + a2);
    }
    if (lo >= hi) return false;

    const double k11 = kernel[i1][i1], k12 = kernel[i1][i2], k22 = kernel[i2][i2];
    const double eta = k11 + k22 - 2.0 * k12;
    double a2_new;
    if (eta > 0.0) {
      a2_new = a2 + y2 * (e1 - e2) / eta;
      a2_new = std::clamp(a2_new, lo, hi);
    } else {
      // Flat direction: evaluate the objective at both clip ends.
      const double f1 = y1 * (e1 + bias) - a1 * k11 - s * a2 * k12;
      const double f2 = y2 * (e2 + bias) - s * a1 * k12 - a2 * k22;
      const double l1 = a1 + s * (a2 - lo);
      const double h1 = a1 + s * (a2 - hi);
      const double obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 +
                            0.5 * lo * lo * k22 + s * lo * l1 * k12;
      const double obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 +
                            0.5 * hi * hi * k22 + s * hi * h1 * k12;
      if (obj_lo < obj_hi - kEps) a2_new = lo;
      else if (obj_lo > obj_hi + kEps) a2_new = hi;
      else a2_new = a2;
    }
    if (std::abs(a2_new - a2) < kEps * (a2_new + a2 + kEps)) return false;

    const double a1_new = a1 + s * (a2 - a2_new);
    const double b1 = e1 + y1 * (a1_new - a1) * k11 +
                      y2 * (a2_new - a2) * k12 + bias;
    const double b2 = e2 + y1 * (a1_new - a1) * k12 +
                      y2 * (a2_new - a2) * k22 + bias;
    double bias_new;
    if (a1_new > 0.0 && a1_new < c) bias_new = b1;
    else if (a2_new > 0.0 && a2_new < c) bias_new = b2;
    else bias_new = 0.5 * (b1 + b2);

    const double d1 = y1 * (a1_new - a1);
    const double d2 = y2 * (a2_new - a2);
    for (std::size_t k = 0; k < n; ++k) {
      error[k] += d1 * kernel[i1][k] + d2 * kernel[i2][k] + bias - bias_new;
    }
    alpha[i1] = a1_new;
    alpha[i2] = a2_new;
    bias = bias_new;
    return true;
  };

  auto examine = [&](std::size_t i2) -> bool {
    const double e2 = error[i2];
    const double r2 = e2 * y[i2];
    const bool violates = (r2 < -tol && alpha[i2] < c) ||
                          (r2 > tol && alpha[i2] > 0.0);
    if (!violates) return false;

    // Second choice: maximize |e1 - e2| over non-bound points.
    std::size_t best = n;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] <= 0.0 || alpha[i] >= c) continue;
      const double gap = std::abs(error[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best < n && take_step(best, i2)) return true;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] > 0.0 && alpha[i] < c && take_step(i, i2)) return true;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (take_step(i, i2)) return true;
    }
    return false;
  };

  // Alternate full sweeps with non-bound sweeps; done when a full sweep
  // changes nothing.
  int sweeps = 0;
  bool examine_all = true;
  int changed = 0;
  while (changed > 0 || examine_all) {
    if (++sweeps > max_sweeps) {
      throw EstimationError(
          errc::numerical_failure,
          "SMO did not converge after " + std::to_string(max_sweeps) +
              " sweeps (n=" + std::to_string(n) + ")");
    }
    changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (examine_all || (alpha[i] > 0.0 && alpha[i] < c)) {
        if (examine(i)) ++changed;
      }
    }
    if (examine_all) examine_all = false;
    else if (changed == 0) examine_all = true;
  }

  SmoResult result;
  result.alpha = alpha;
  result.bias = bias;
  result.sweeps = sweeps;
  double obj = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    obj += alpha[i];
    for (std::size_t j = 0; j < n; ++j) {
      obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
    }
  }
  result.objective = obj;
  return result;
}

}  // namespace detail

// Trains a soft-margin RBF SVM on an (already normalized) feature matrix.
inline SvmModel svm_train(const FeatureMatrix& m, double c, double gamma) {
  m.validate();
  if (!(c > 0.0)) throw DataError("svm_train: C must be positive");
  if (!(gamma > 0.0)) throw DataError("svm_train: gamma must be positive");

  const std::size_t n = m.size();
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = m.labels[i] == 1 ? 1 : -1;

  std::vector<std::vector<double>> kernel(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      kernel[i][j] = kernel[j][i] = detail::rbf_kernel(m.rows[i], m.rows[j], gamma);
    }
  }

  const detail::SmoResult smo = detail::smo_solve(kernel, y, c);

  SvmModel model;
  model.c = c;
  model.gamma = gamma;
  model.bias = smo.bias;
  for (std::size_t i = 0; i < n; ++i) {
    if (smo.alpha[i] > 0.0) {
      model.support_vectors.push_back(m.rows[i]);
      model.dual_coefficients.push_back(smo.alpha[i] * y[i]);
    }
  }
  return model;
}

inline double svm_decision(const SvmModel& model, const std::vector<double>& x) {
  double f = -model.bias;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    f += model.dual_coefficients[i] *
         detail::rbf_kernel(model.support_vectors[i], x, model.gamma);
  }
  return f;
}

inline int svm_predict(const SvmModel& model, const std::vector<double>& x) {
  return svm_decision(model, x) >= 0.0 ? 1 : 0;
}

// Dual objective reached by training on the given matrix; exposed so tests
// can compare against an independent QP solution.
inline double svm_dual_objective(const FeatureMatrix& m, double c, double gamma) {
  m.validate();
  const std::size_t n = m.size();
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = m.labels[i] == 1 ? 1 : -1;
  std::vector<std::vector<double>> kernel(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      kernel[i][j] = kernel[j][i] = detail::rbf_kernel(m.rows[i], m.rows[j], gamma);
    }
  }
  return detail::smo_solve(kernel, y, c).objective;
}

}  // namespace stiffsense
