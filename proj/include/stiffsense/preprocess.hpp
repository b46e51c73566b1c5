#pragma once

#include <cmath>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

// Second-order Butterworth low-pass biquad (bilinear transform), unity DC
// gain. Coefficients in the usual normalized form
//   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2].
struct Biquad {
  double b0, b1, b2, a1, a2;
};

inline Biquad butterworth2_lowpass(double cutoff_hz, double sample_rate_hz) {
  if (!(cutoff_hz > 0.0)) throw ConfigError("smoothing cutoff must be positive");
  if (!(cutoff_hz < sample_rate_hz / 2.0)) {
    throw ConfigError("smoothing cutoff " + std::to_string(cutoff_hz) +
                      " Hz must be below the Nyquist frequency " +
                      std::to_string(sample_rate_hz / 2.0) + " Hz");
  }
  const double warp = std::tan(M_PI * cutoff_hz / sample_rate_hz);
  const double w2 = warp * warp;
  const double norm = 1.0 + std::sqrt(2.0) * warp + w2;
  Biquad q{};
  q.b0 = w2 / norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (w2 - 1.0) / norm;
  q.a2 = (1.0 - std::sqrt(2.0) * warp + w2) / norm;
  return q;
}

namespace detail {

// One pass, direct form II transposed, with initial state scaled so a
// constant input produces the same constant from sample zero.
inline void biquad_pass(const Biquad& q, std::vector<double>& x) {
  // Steady-state delays for unit DC input.
  const double zi1 = q.b1 + q.b2 - q.a1 - q.a2;
  const double zi2 = q.b2 - q.a2;
  double z1 = zi1 * x.front();
  double z2 = zi2 * x.front();
  for (double& v : x) {
    const double in = v;
    const double out = q.b0 * in + z1;
    z1 = q.b1 * in - q.a1 * out + z2;
    z2 = q.b2 * in - q.a2 * out;
    v = out;
  }
}

}  // namespace detail

// Zero-phase (forward-backward) filtering with odd-reflection padding of
// three filter orders on each end.
inline std::vector<double> filtfilt(const Biquad& q,
                                    const std::vector<double>& x) {
  constexpr std::size_t kPad = 6;  // 3 x filter order (order 2)
  if (x.size() < 2) return x;
  const std::size_t pad = std::min(kPad, x.size() - 1);

  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) {
    ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);
  }

  detail::biquad_pass(q, ext);
  std::reverse(ext.begin(), ext.end());
  detail::biquad_pass(q, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<long>(pad),
                             ext.begin() + static_cast<long>(pad + x.size()));
}

// Zero-phase low-pass smoothing of a trajectory. Length preserved.
inline Trajectory smooth(const Trajectory& t, double cutoff_hz) {
  const Biquad q = butterworth2_lowpass(cutoff_hz, t.sample_rate_hz);
  Trajectory out = t;
  out.samples = filtfilt(q, t.samples);
  return out;
}

// Per-distance end-point window cutoff, seconds.
inline double window_cutoff_s(int distance_px) {
  switch (distance_px) {
    case 64: return 0.100;
    case 128: return 0.125;
    case 256: return 0.150;
    case 512: return 0.350;
    case 1024: return 0.500;
    default:
      throw DataError("no window cutoff for distance_px " +
                      std::to_string(distance_px));
  }
}

struct WindowedTrajectory {
  Trajectory trajectory;
  // Set when the input was shorter than its distance cutoff and was returned
  // unchanged.
  bool short_trial{false};
};

// Keeps the prefix of the trajectory up to the per-distance cutoff time.
// Trials shorter than the cutoff are kept whole and flagged.
inline WindowedTrajectory truncate_window(const Trajectory& t,
                                          const TrialMeta& meta) {
  const double cutoff_s = window_cutoff_s(meta.distance_px);
  const auto keep = static_cast<std::size_t>(
      std::llround(cutoff_s * t.sample_rate_hz));
  WindowedTrajectory out;
  out.trajectory = t;
  if (t.samples.size() < keep) {
    out.short_trial = true;
    return out;
  }
  out.trajectory.samples.resize(keep);
  return out;
}

}  // namespace stiffsense
