#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace stiffsense {

struct NelderMeadOptions {
  // Converged when the simplex diameter, relative to the best vertex scale,
  // drops below this.
  double relative_tolerance{1e-6};
  int max_evaluations{2000};
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx{0.0};
  int evaluations{0};
  bool converged{false};
};

// Derivative-free downhill simplex minimization, standard coefficients
// (reflect 1, expand 2, contract 0.5, shrink 0.5). Deterministic: ties never
// reorder equal vertices.
template <typename F>
NelderMeadResult nelder_mead(F&& f, const std::vector<double>& x0,
                             const std::vector<double>& initial_step,
                             const NelderMeadOptions& opts = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult result;
  result.x = x0;

  std::vector<std::vector<double>> verts(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i < n; ++i) verts[i + 1][i] += initial_step[i];

  int evals = 0;
  auto eval = [&](const std::vector<double>& p) {
    ++evals;
    return f(p);
  };
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(verts[i]);

  auto order = [&]() {
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> v2(n + 1);
    std::vector<double> f2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      v2[i] = std::move(verts[idx[i]]);
      f2[i] = fv[idx[i]];
    }
    verts = std::move(v2);
    fv = std::move(f2);
  };

  auto diameter_ok = [&]() {
    double scale = 1.0;
    for (double c : verts[0]) scale = std::max(scale, std::abs(c));
    double diam = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t d = 0; d < n; ++d) {
        diam = std::max(diam, std::abs(verts[i][d] - verts[0][d]));
      }
    }
    return diam < opts.relative_tolerance * scale;
  };

  order();
  while (evals < opts.max_evaluations) {
    if (diameter_ok()) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < n; ++d) centroid[d] += verts[i][d];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    auto blend = [&](double coeff) {
      std::vector<double> p(n);
      for (std::size_t d = 0; d < n; ++d) {
        p[d] = centroid[d] + coeff * (verts[n][d] - centroid[d]);
      }
      return p;
    };

    std::vector<double> xr = blend(-1.0);
    const double fr = eval(xr);

    if (fr < fv[0]) {
      std::vector<double> xe = blend(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        verts[n] = std::move(xe);
        fv[n] = fe;
      } else {
        verts[n] = std::move(xr);
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      verts[n] = std::move(xr);
      fv[n] = fr;
    } else {
      const bool outside = fr < fv[n];
      std::vector<double> xc = blend(outside ? -0.5 : 0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, fv[n])) {
        verts[n] = std::move(xc);
        fv[n] = fc;
      } else {
        // Shrink toward the best vertex.
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t d = 0; d < n; ++d) {
            verts[i][d] = verts[0][d] + 0.5 * (verts[i][d] - verts[0][d]);
          }
          fv[i] = eval(verts[i]);
          if (evals >= opts.max_evaluations) break;
        }
      }
    }
    order();
  }

  result.x = verts[0];
  result.fx = fv[0];
  result.evaluations = evals;
  if (!result.converged) result.converged = diameter_ok();
  return result;
}

}  // namespace stiffsense
