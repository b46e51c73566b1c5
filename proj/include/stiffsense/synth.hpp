#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/msd.hpp"
#include "stiffsense/rng.hpp"
#include "stiffsense/trajectory.hpp"
#include "stiffsense/trial_io.hpp"

namespace stiffsense {

// Ground-truth-known synthetic trial population. Parameters are sampled
// hierarchically: one shared offset per participant per parameter (applied
// to both conditions), then per-trial draws around the participant mean.
struct SynthConfig {
  int n_participants{49};
  int repetitions{5};  // per condition per (distance, width)
  std::vector<int> distances{64, 128, 256, 512, 1024};
  std::vector<int> widths{8, 16, 32, 64};

  double omega_calm_mean{12.9};
  double omega_stressed_mean{14.4};
  double omega_between_sd{3.0};
  double omega_within_sd{1.5};

  double zeta_calm_mean{1.00};
  double zeta_stressed_mean{0.97};
  double zeta_between_sd{0.2};
  double zeta_within_sd{0.1};

  double kp_mean{1.0};
  double kp_sd{0.05};

  double noise_snr_db{25.0};

  // Movement time: base plus a fixed increment per doubling of distance,
  // with multiplicative jitter.
  double base_duration_s{0.150};
  double duration_per_doubling_s{0.090};
  double duration_jitter_frac{0.10};

  double sample_rate_hz{2000.0};
  double start_x_px{100.0};

  // Scales the condition omega gap by (distance / 256)^exponent; 0 keeps the
  // gap uniform across distances.
  double distance_effect_exponent{0.0};

  // Clamps for rare Gaussian tail draws that would violate parameter
  // positivity.
  double zeta_floor{0.05};
  double omega_floor{0.5};

  std::uint64_t seed{1};

  void validate() const {
    auto require = [](bool ok, const char* field) {
      if (!ok) throw ConfigError(std::string("synth config: invalid ") + field);
    };
    require(n_participants >= 1, "n_participants");
    require(repetitions >= 1, "repetitions");
    require(!distances.empty(), "distances");
    require(!widths.empty(), "widths");
    for (int d : distances) {
      require(std::find(kDistancesPx.begin(), kDistancesPx.end(), d) !=
                  kDistancesPx.end(),
              "distances");
    }
    for (int w : widths) {
      require(std::find(kWidthsPx.begin(), kWidthsPx.end(), w) !=
                  kWidthsPx.end(),
              "widths");
    }
    require(omega_between_sd >= 0.0, "omega_between_sd");
    require(omega_within_sd >= 0.0, "omega_within_sd");
    require(zeta_between_sd >= 0.0, "zeta_between_sd");
    require(zeta_within_sd >= 0.0, "zeta_within_sd");
    require(kp_sd >= 0.0, "kp_sd");
    require(std::isfinite(noise_snr_db), "noise_snr_db");
    require(base_duration_s > 0.0, "base_duration_s");
    require(duration_per_doubling_s >= 0.0, "duration_per_doubling_s");
    require(duration_jitter_frac >= 0.0 && duration_jitter_frac < 1.0,
            "duration_jitter_frac");
    require(sample_rate_hz > 0.0, "sample_rate_hz");
    require(zeta_floor > 0.0, "zeta_floor");
    require(omega_floor > 0.0, "omega_floor");
  }
};

struct TruthRow {
  std::string key;
  double kp{0.0};
  double omega{0.0};
  double zeta{0.0};
};

struct GroundTruth {
  std::vector<TruthRow> rows;
};

namespace detail {

inline std::string participant_name(int index, int total) {
  int digits = 1;
  for (int v = total; v >= 10; v /= 10) ++digits;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%0*d", digits, index + 1);
  return buf;
}

}  // namespace detail

// Generates the population. Pure function of the config: every random draw
// comes from a stream keyed by (seed, purpose, identity), so trial order and
// parallelism cannot change the output.
inline std::pair<TrialSet, GroundTruth> generate(const SynthConfig& cfg) {
  cfg.validate();

  TrialSet set;
  set.provenance = Provenance::synthetic;
  GroundTruth truth;

  const double omega_mid = 0.5 * (cfg.omega_calm_mean + cfg.omega_stressed_mean);
  const double omega_gap = cfg.omega_stressed_mean - cfg.omega_calm_mean;

  for (int p = 0; p < cfg.n_participants; ++p) {
    const std::string pid = detail::participant_name(p, cfg.n_participants);
    RandomStream participant_stream(
        derive_seed(cfg.seed, "participant/" + pid));
    const double omega_offset =
        participant_stream.normal(0.0, cfg.omega_between_sd);
    const double zeta_offset =
        participant_stream.normal(0.0, cfg.zeta_between_sd);

    for (Condition cond : {Condition::calm, Condition::stressed}) {
      for (int dist : cfg.distances) {
        const double gap_scale =
            cfg.distance_effect_exponent == 0.0
                ? 1.0
                : std::pow(static_cast<double>(dist) / 256.0,
                           cfg.distance_effect_exponent);
        const double omega_cond_mean =
            omega_mid +
            (cond == Condition::stressed ? 0.5 : -0.5) * omega_gap * gap_scale;
        const double zeta_cond_mean = cond == Condition::stressed
                                          ? cfg.zeta_stressed_mean
                                          : cfg.zeta_calm_mean;

        for (int width : cfg.widths) {
          for (int rep = 0; rep < cfg.repetitions; ++rep) {
            TrialMeta meta;
            meta.participant_id = pid;
            meta.distance_px = dist;
            meta.width_px = width;
            meta.condition = cond;
            meta.repetition = rep;
            meta.start_x_px = cfg.start_x_px;
            meta.target_x_px = cfg.start_x_px + static_cast<double>(dist);
            const std::string key = trial_key(meta);

            RandomStream trial_stream(derive_seed(cfg.seed, "trial/" + key));
            MsdCanonicalParams params;
            params.omega = std::max(
                cfg.omega_floor, omega_cond_mean + omega_offset +
                                     trial_stream.normal(0.0, cfg.omega_within_sd));
            params.zeta = std::max(
                cfg.zeta_floor, zeta_cond_mean + zeta_offset +
                                    trial_stream.normal(0.0, cfg.zeta_within_sd));
            params.kp = trial_stream.normal(cfg.kp_mean, cfg.kp_sd);

            const double doublings =
                std::log2(static_cast<double>(dist) / 64.0);
            const double jitter =
                cfg.duration_jitter_frac * trial_stream.uniform(-1.0, 1.0);
            const double duration =
                (cfg.base_duration_s + cfg.duration_per_doubling_s * doublings) *
                (1.0 + jitter);
            const auto n_samples = static_cast<std::size_t>(std::max<long long>(
                16, std::llround(duration * cfg.sample_rate_hz)));

            Trajectory traj = simulate_step_response(
                params, meta.start_x_px, meta.target_x_px, n_samples,
                cfg.sample_rate_hz);
            traj.role = SignalRole::actual;

            // Noise power is set against the mean-removed power of the
            // noiseless response.
            double mean = 0.0;
            for (double v : traj.samples) mean += v;
            mean /= static_cast<double>(traj.samples.size());
            double var = 0.0;
            for (double v : traj.samples) var += (v - mean) * (v - mean);
            var /= static_cast<double>(traj.samples.size());
            const double noise_sd =
                std::sqrt(var) * std::pow(10.0, -cfg.noise_snr_db / 20.0);
            if (noise_sd > 0.0) {
              RandomStream noise_stream(derive_seed(cfg.seed, "noise/" + key));
              for (double& v : traj.samples) {
                v += noise_stream.normal(0.0, noise_sd);
              }
            }

            set.trials.push_back({meta, std::move(traj)});
            truth.rows.push_back({key, params.kp, params.omega, params.zeta});
          }
        }
      }
    }
  }
  return {std::move(set), std::move(truth)};
}

inline void write_ground_truth_csv(const std::filesystem::path& path,
                                   const GroundTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "trial_key,kp,omega,zeta\n";
  for (const auto& row : truth.rows) {
    out << row.key << ',' << detail::format_double(row.kp) << ','
        << detail::format_double(row.omega) << ','
        << detail::format_double(row.zeta) << "\n";
  }
  if (!out) throw DataError("write failed for " + path.string());
}

inline GroundTruth read_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  GroundTruth truth;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "trial_key,kp,omega,zeta") {
        throw DataError(path.string() + ": unexpected ground truth header");
      }
      continue;
    }
    TruthRow row;
    std::size_t pos = 0;
    auto next = [&]() {
      const auto comma = line.find(',', pos);
      const std::string token = comma == std::string::npos
                                    ? line.substr(pos)
                                    : line.substr(pos, comma - pos);
      pos = comma == std::string::npos ? line.size() : comma + 1;
      return token;
    };
    row.key = next();
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    row.kp = detail::parse_double(next(), ctx);
    row.omega = detail::parse_double(next(), ctx);
    row.zeta = detail::parse_double(next(), ctx);
    truth.rows.push_back(std::move(row));
  }
  return truth;
}

// Writes one trial CSV per trial plus the ground-truth table into dir,
// creating it if needed.
inline void export_trials(const TrialSet& set, const GroundTruth& truth,
                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw DataError("cannot create directory " + dir.string() + ": " +
                    ec.message());
  }
  for (const auto& trial : set.trials) {
    const fs::path path = dir / (trial_key(trial.meta) + ".csv");
    write_trial_csv(path, trial.meta, trial.trajectory);
  }
  write_ground_truth_csv(dir / kGroundTruthFilename, truth);
}

}  // namespace stiffsense
