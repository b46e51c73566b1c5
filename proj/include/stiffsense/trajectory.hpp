#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"

namespace stiffsense {

enum class SignalRole { actual, simulated, target };

enum class Condition { calm, stressed };

inline const char* to_string(Condition c) {
  return c == Condition::calm ? "calm" : "stressed";
}

inline Condition condition_from_string(const std::string& s) {
  if (s == "calm") return Condition::calm;
  if (s == "stressed") return Condition::stressed;
  throw DataError("unknown condition '" + s + "' (expected calm|stressed)");
}

inline constexpr std::array<int, 5> kDistancesPx{64, 128, 256, 512, 1024};
inline constexpr std::array<int, 4> kWidthsPx{8, 16, 32, 64};

// Minimum trajectory length accepted for estimation: an order-4 LPC fit
// needs at least twice the order worth of samples.
inline constexpr std::size_t kMinTrajectorySamples = 8;

// Uniformly sampled 1-D position signal (x-axis, pixels).
struct Trajectory {
  std::vector<double> samples;
  double sample_rate_hz{2000.0};
  SignalRole role{SignalRole::actual};

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }

  void validate() const {
    if (samples.size() < kMinTrajectorySamples) {
      throw DataError("trajectory too short: " +
                      std::to_string(samples.size()) + " samples (minimum " +
                      std::to_string(kMinTrajectorySamples) + ")");
    }
    if (!(sample_rate_hz > 0.0)) {
      throw DataError("sample_rate_hz must be positive");
    }
    for (double v : samples) {
      if (!std::isfinite(v)) throw DataError("trajectory contains non-finite sample");
    }
  }
};

struct TrialMeta {
  std::string participant_id;
  int distance_px{0};
  int width_px{0};
  Condition condition{Condition::calm};
  int repetition{0};
  double start_x_px{0.0};
  double target_x_px{0.0};

  void validate() const {
    if (participant_id.empty()) throw DataError("participant_id is empty");
    if (std::find(kDistancesPx.begin(), kDistancesPx.end(), distance_px) ==
        kDistancesPx.end()) {
      throw DataError("distance_px " + std::to_string(distance_px) +
                      " not in {64,128,256,512,1024}");
    }
    if (std::find(kWidthsPx.begin(), kWidthsPx.end(), width_px) ==
        kWidthsPx.end()) {
      throw DataError("width_px " + std::to_string(width_px) +
                      " not in {8,16,32,64}");
    }
    if (repetition < 0) throw DataError("repetition must be >= 0");
    // Start/target must span the nominal distance, within one pixel.
    const double span = std::abs(target_x_px - start_x_px);
    if (std::abs(span - static_cast<double>(distance_px)) > 1.0) {
      throw DataError("|target - start| = " + std::to_string(span) +
                      " differs from distance_px " +
                      std::to_string(distance_px) + " by more than one pixel");
    }
  }
};

// Canonical trial key; doubles as the export filename stem. Zero-padded so
// lexicographic order equals logical order.
inline std::string trial_key(const TrialMeta& m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "_%s_d%04d_w%02d_r%02d",
                to_string(m.condition), m.distance_px, m.width_px,
                m.repetition);
  return m.participant_id + buf;
}

struct Trial {
  TrialMeta meta;
  Trajectory trajectory;
};

enum class Provenance { ingested, synthetic };

struct TrialSet {
  std::vector<Trial> trials;
  Provenance provenance{Provenance::ingested};
};

enum class Method { lpc, msd };

inline const char* to_string(Method m) { return m == Method::lpc ? "LPC" : "MSD"; }

// One damping estimate. LPC omega/zeta live in z-plane units; MSD omega is
// rad/s. kp and gof_percent are populated for MSD only.
struct DampingEstimate {
  double omega{0.0};
  double zeta{0.0};
  Method method{Method::lpc};
  std::optional<double> kp;
  std::optional<double> gof_percent;
};

}  // namespace stiffsense
