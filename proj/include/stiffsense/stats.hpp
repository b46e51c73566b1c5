#pragma once

#include <algorithm>
#include <array>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/msd.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

// Fractional (average) ranks, 1-based; tied values share the mean of the
// positions they occupy.
inline std::vector<double> fractional_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) {
    throw DataError("undefined correlation: zero rank variance");
  }
  return cov / std::sqrt(va * vb);
}

inline double student_t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  const double tail = boost::math::cdf(dist, -std::abs(t));
  return std::min(1.0, 2.0 * tail);
}

}  // namespace detail

struct Correlation {
  double rho{0.0};
  double p_value{1.0};
};

// Spearman rank correlation with average-rank tie handling; p-value from the
// t-approximation with n-2 degrees of freedom.
inline Correlation spearman(const std::vector<double>& x,
                            const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 3) throw DataError("spearman: need at least 3 observations");
  const std::vector<double> rx = fractional_ranks(x);
  const std::vector<double> ry = fractional_ranks(y);
  Correlation c;
  c.rho = detail::pearson(rx, ry);
  const double n = static_cast<double>(x.size());
  const double denom = 1.0 - c.rho * c.rho;
  if (denom <= 0.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.rho * std::sqrt((n - 2.0) / denom);
    c.p_value = detail::student_t_two_sided_p(t, n - 2.0);
  }
  return c;
}

// Exact two-sided permutation p-value for Spearman's rho, n <= 10.
inline double spearman_exact_p(const std::vector<double>& x,
                               const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 3) throw DataError("spearman: need at least 3 observations");
  if (x.size() > 10) throw DataError("exact permutation p limited to n <= 10");
  const std::vector<double> rx = fractional_ranks(x);
  std::vector<double> ry = fractional_ranks(y);
  const double observed = std::abs(detail::pearson(rx, ry));

  std::sort(ry.begin(), ry.end());
  long total = 0, at_least = 0;
  do {
    ++total;
    if (std::abs(detail::pearson(rx, ry)) >= observed - 1e-12) ++at_least;
  } while (std::next_permutation(ry.begin(), ry.end()));
  return static_cast<double>(at_least) / static_cast<double>(total);
}

struct TTestResult {
  double t{0.0};
  int df{0};
  double p{1.0};
};

// Paired t-test on differences a - b; two-sided p.
inline TTestResult paired_t_test(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw DataError("paired_t_test: need at least 2 pairs");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd <= 0.0) {
    throw DataError("paired_t_test: zero-variance differences");
  }
  TTestResult r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<int>(n) - 1;
  r.p = detail::student_t_two_sided_p(r.t, static_cast<double>(r.df));
  return r;
}

// Survival function of the asymptotic Kolmogorov distribution,
// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * static_cast<double>(k) *
                                 static_cast<double>(k) * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double d{0.0};
  double p{1.0};
};

// One-sample KS statistic against a normal with the sample's mean and sd.
// The p-value uses the asymptotic Kolmogorov distribution and is approximate
// because the reference parameters are estimated from the sample.
inline KsResult ks_normality(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 5) throw DataError("ks_normality: need at least 5 observations");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd <= 0.0) throw DataError("ks_normality: zero sample variance");

  std::vector<double> sorted(x);
  std::sort(sorted.begin(), sorted.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (sorted[i] - mean) / sd;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double hi = static_cast<double>(i + 1) / static_cast<double>(n) - cdf;
    const double lo = cdf - static_cast<double>(i) / static_cast<double>(n);
    d = std::max({d, hi, lo});
  }
  KsResult r;
  r.d = d;
  r.p = kolmogorov_q(std::sqrt(static_cast<double>(n)) * d);
  return r;
}

// One row per trial where both estimators succeeded and the MSD fit is not
// an outlier under the zeta rule.
struct PairedRow {
  std::string key;
  std::string participant;
  Condition condition{Condition::calm};
  int distance_px{0};
  DampingEstimate lpc;
  MsdFit msd;
};

struct PairedEstimates {
  std::vector<PairedRow> rows;
};

struct CurvePoint {
  double threshold{0.0};
  bool available{false};
  double rho_omega{0.0};
  double p_omega{1.0};
  double rho_zeta{0.0};
  double p_zeta{1.0};
  double retention_percent{0.0};
  std::size_t rows_kept{0};
};

struct CorrelationCurve {
  std::vector<CurvePoint> points;
};

inline std::vector<double> default_gof_thresholds() {
  std::vector<double> t;
  for (int v = 0; v <= 95; v += 5) t.push_back(static_cast<double>(v));
  return t;
}

// Spearman correlations between the two methods' omega and zeta, restricted
// to rows whose GOF meets each threshold; retention is the kept fraction.
inline CorrelationCurve threshold_sweep(const PairedEstimates& pairs,
                                        const std::vector<double>& thresholds) {
  if (pairs.rows.empty()) throw DataError("threshold_sweep: no paired rows");
  CorrelationCurve curve;
  const double total = static_cast<double>(pairs.rows.size());
  for (double tau : thresholds) {
    CurvePoint pt;
    pt.threshold = tau;
    std::vector<double> lo, lz, mo, mz;
    for (const auto& row : pairs.rows) {
      if (row.msd.gof_percent < tau) continue;
      lo.push_back(row.lpc.omega);
      lz.push_back(row.lpc.zeta);
      mo.push_back(row.msd.params.omega);
      mz.push_back(row.msd.params.zeta);
    }
    pt.rows_kept = lo.size();
    pt.retention_percent = 100.0 * static_cast<double>(lo.size()) / total;
    if (lo.size() >= 3) {
      try {
        const Correlation co = spearman(lo, mo);
        const Correlation cz = spearman(lz, mz);
        pt.available = true;
        pt.rho_omega = co.rho;
        pt.p_omega = co.p_value;
        pt.rho_zeta = cz.rho;
        pt.p_zeta = cz.p_value;
      } catch (const DataError&) {
        pt.available = false;  // degenerate ranks at this threshold
      }
    }
    curve.points.push_back(pt);
  }
  return curve;
}

// Table-style condition summary: participant means are aggregated first,
// then averaged across participants; the paired t-test runs on participant
// means (stressed minus calm).
struct ConditionCell {
  double calm_mean{0.0};
  double calm_se{0.0};
  double stressed_mean{0.0};
  double stressed_se{0.0};
  double t{0.0};
  int df{0};
  double p{1.0};
  bool t_degenerate{false};  // zero-variance differences, no valid t
};

struct ConditionSummary {
  ConditionCell msd_omega;
  ConditionCell msd_zeta;
  ConditionCell lpc_omega;
  ConditionCell lpc_zeta;
  std::size_t n_participants{0};
  std::vector<std::string> excluded_participants;
};

inline ConditionSummary condition_summary(const PairedEstimates& pairs) {
  struct Accum {
    double sum[2][4] = {};  // [condition][metric]
    std::size_t count[2] = {};
  };
  // metric order: msd omega, msd zeta, lpc omega, lpc zeta
  std::map<std::string, Accum> by_participant;
  for (const auto& row : pairs.rows) {
    Accum& acc = by_participant[row.participant];
    const int c = row.condition == Condition::calm ? 0 : 1;
    acc.sum[c][0] += row.msd.params.omega;
    acc.sum[c][1] += row.msd.params.zeta;
    acc.sum[c][2] += row.lpc.omega;
    acc.sum[c][3] += row.lpc.zeta;
    acc.count[c] += 1;
  }

  ConditionSummary summary;
  std::vector<std::array<double, 4>> calm_means, stressed_means;
  for (const auto& [pid, acc] : by_participant) {
    if (acc.count[0] == 0 || acc.count[1] == 0) {
      summary.excluded_participants.push_back(pid);
      continue;
    }
    std::array<double, 4> cm{}, sm{};
    for (int m = 0; m < 4; ++m) {
      cm[static_cast<std::size_t>(m)] =
          acc.sum[0][m] / static_cast<double>(acc.count[0]);
      sm[static_cast<std::size_t>(m)] =
          acc.sum[1][m] / static_cast<double>(acc.count[1]);
    }
    calm_means.push_back(cm);
    stressed_means.push_back(sm);
  }

  summary.n_participants = calm_means.size();
  if (summary.n_participants < 2) {
    throw DataError("condition_summary: need at least 2 participants with "
                    "both conditions");
  }

  auto fill = [&](int metric, ConditionCell& cell) {
    std::vector<double> calm, stressed;
    for (std::size_t i = 0; i < calm_means.size(); ++i) {
      calm.push_back(calm_means[i][static_cast<std::size_t>(metric)]);
      stressed.push_back(stressed_means[i][static_cast<std::size_t>(metric)]);
    }
    const double n = static_cast<double>(calm.size());
    auto mean_se = [&](const std::vector<double>& v, double& mean, double& se) {
      mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    };
    mean_se(calm, cell.calm_mean, cell.calm_se);
    mean_se(stressed, cell.stressed_mean, cell.stressed_se);
    try {
      const TTestResult t = paired_t_test(stressed, calm);
      cell.t = t.t;
      cell.df = t.df;
      cell.p = t.p;
    } catch (const DataError&) {
      cell.t = 0.0;
      cell.df = static_cast<int>(n) - 1;
      cell.p = 1.0;
      cell.t_degenerate = true;
    }
  };
  fill(0, summary.msd_omega);
  fill(1, summary.msd_zeta);
  fill(2, summary.lpc_omega);
  fill(3, summary.lpc_zeta);
  return summary;
}

}  // namespace stiffsense
