#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stiffsense/classifier.hpp"
#include "stiffsense/error.hpp"
#include "stiffsense/lpc.hpp"
#include "stiffsense/msd.hpp"
#include "stiffsense/preprocess.hpp"
#include "stiffsense/rng.hpp"
#include "stiffsense/stats.hpp"
#include "stiffsense/synth.hpp"
#include "stiffsense/trial_io.hpp"
#include "stiffsense/version.hpp"

namespace stiffsense {

// Deterministic block-partitioned parallel loop: slot i is always computed
// by the same logical iteration regardless of the thread count, so results
// are identical at any parallelism level.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (n == 0) return;
  if (jobs < 1) jobs = 1;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct PipelineConfig {
  std::string trials_dir{"trials"};
  std::string out_dir{"out"};

  double smoothing_cutoff_hz{10.0};
  bool lpc_use_raw{false};

  LpcOptions lpc;
  PemOptions pem;
  std::vector<double> gof_thresholds{default_gof_thresholds()};
  ExperimentConfig classifier;
  SynthConfig synth;

  std::uint64_t seed{1};
  int jobs{1};
};

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["trials_dir"] = c.trials_dir;
  j["out_dir"] = c.out_dir;
  j["smoothing_cutoff_hz"] = c.smoothing_cutoff_hz;
  j["lpc"] = {
      {"order", c.lpc.order},
      {"use_raw", c.lpc_use_raw},
      {"pair_selection", c.lpc.selection == PolePairSelection::dominant_modulus
                             ? "dominant_modulus"
                             : "lowest_frequency"},
  };
  j["pem"] = {
      {"omega_starts", c.pem.omega_starts},
      {"zeta_starts", c.pem.zeta_starts},
      {"omega_min", c.pem.omega_min},
      {"omega_max", c.pem.omega_max},
      {"zeta_min", c.pem.zeta_min},
      {"zeta_max", c.pem.zeta_max},
      {"relative_tolerance", c.pem.relative_tolerance},
      {"max_evaluations", c.pem.max_evaluations},
  };
  j["gof_thresholds"] = c.gof_thresholds;
  j["classifier"] = {
      {"folds", c.classifier.folds},
      {"repetitions", c.classifier.repetitions},
      {"c", c.classifier.c},
      {"per_fold_normalization", c.classifier.per_fold_normalization},
  };
  if (c.classifier.gamma) j["classifier"]["gamma"] = *c.classifier.gamma;
  j["synth"] = {
      {"n_participants", c.synth.n_participants},
      {"repetitions", c.synth.repetitions},
      {"distances", c.synth.distances},
      {"widths", c.synth.widths},
      {"omega_calm_mean", c.synth.omega_calm_mean},
      {"omega_stressed_mean", c.synth.omega_stressed_mean},
      {"omega_between_sd", c.synth.omega_between_sd},
      {"omega_within_sd", c.synth.omega_within_sd},
      {"zeta_calm_mean", c.synth.zeta_calm_mean},
      {"zeta_stressed_mean", c.synth.zeta_stressed_mean},
      {"zeta_between_sd", c.synth.zeta_between_sd},
      {"zeta_within_sd", c.synth.zeta_within_sd},
      {"kp_mean", c.synth.kp_mean},
      {"kp_sd", c.synth.kp_sd},
      {"noise_snr_db", c.synth.noise_snr_db},
      {"base_duration_s", c.synth.base_duration_s},
      {"duration_per_doubling_s", c.synth.duration_per_doubling_s},
      {"duration_jitter_frac", c.synth.duration_jitter_frac},
      {"sample_rate_hz", c.synth.sample_rate_hz},
      {"start_x_px", c.synth.start_x_px},
      {"distance_effect_exponent", c.synth.distance_effect_exponent},
      {"zeta_floor", c.synth.zeta_floor},
      {"omega_floor", c.synth.omega_floor},
  };
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  return j;
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + name + "': " + e.what());
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  detail::read_field(j, "trials_dir", c.trials_dir);
  detail::read_field(j, "out_dir", c.out_dir);
  detail::read_field(j, "smoothing_cutoff_hz", c.smoothing_cutoff_hz);
  if (j.contains("lpc")) {
    const auto& l = j.at("lpc");
    detail::read_field(l, "order", c.lpc.order);
    detail::read_field(l, "use_raw", c.lpc_use_raw);
    std::string sel = "dominant_modulus";
    detail::read_field(l, "pair_selection", sel);
    if (sel == "dominant_modulus") {
      c.lpc.selection = PolePairSelection::dominant_modulus;
    } else if (sel == "lowest_frequency") {
      c.lpc.selection = PolePairSelection::lowest_frequency;
    } else {
      throw ConfigError("config field 'lpc.pair_selection': unknown value '" +
                        sel + "'");
    }
    if (c.lpc.order < 1 || c.lpc.order > 32) {
      throw ConfigError("config field 'lpc.order': must be in [1, 32]");
    }
  }
  if (j.contains("pem")) {
    const auto& p = j.at("pem");
    detail::read_field(p, "omega_starts", c.pem.omega_starts);
    detail::read_field(p, "zeta_starts", c.pem.zeta_starts);
    detail::read_field(p, "omega_min", c.pem.omega_min);
    detail::read_field(p, "omega_max", c.pem.omega_max);
    detail::read_field(p, "zeta_min", c.pem.zeta_min);
    detail::read_field(p, "zeta_max", c.pem.zeta_max);
    detail::read_field(p, "relative_tolerance", c.pem.relative_tolerance);
    detail::read_field(p, "max_evaluations", c.pem.max_evaluations);
    if (c.pem.omega_starts.empty() || c.pem.zeta_starts.empty()) {
      throw ConfigError("config field 'pem': start grids must be non-empty");
    }
  }
  detail::read_field(j, "gof_thresholds", c.gof_thresholds);
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    detail::read_field(k, "folds", c.classifier.folds);
    detail::read_field(k, "repetitions", c.classifier.repetitions);
    detail::read_field(k, "c", c.classifier.c);
    detail::read_field(k, "per_fold_normalization",
                       c.classifier.per_fold_normalization);
    if (k.contains("gamma")) {
      double g = 0.0;
      detail::read_field(k, "gamma", g);
      c.classifier.gamma = g;
    }
    if (c.classifier.folds < 2) {
      throw ConfigError("config field 'classifier.folds': must be >= 2");
    }
    if (c.classifier.repetitions < 1) {
      throw ConfigError("config field 'classifier.repetitions': must be >= 1");
    }
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::read_field(s, "n_participants", c.synth.n_participants);
    detail::read_field(s, "repetitions", c.synth.repetitions);
    detail::read_field(s, "distances", c.synth.distances);
    detail::read_field(s, "widths", c.synth.widths);
    detail::read_field(s, "omega_calm_mean", c.synth.omega_calm_mean);
    detail::read_field(s, "omega_stressed_mean", c.synth.omega_stressed_mean);
    detail::read_field(s, "omega_between_sd", c.synth.omega_between_sd);
    detail::read_field(s, "omega_within_sd", c.synth.omega_within_sd);
    detail::read_field(s, "zeta_calm_mean", c.synth.zeta_calm_mean);
    detail::read_field(s, "zeta_stressed_mean", c.synth.zeta_stressed_mean);
    detail::read_field(s, "zeta_between_sd", c.synth.zeta_between_sd);
    detail::read_field(s, "zeta_within_sd", c.synth.zeta_within_sd);
    detail::read_field(s, "kp_mean", c.synth.kp_mean);
    detail::read_field(s, "kp_sd", c.synth.kp_sd);
    detail::read_field(s, "noise_snr_db", c.synth.noise_snr_db);
    detail::read_field(s, "base_duration_s", c.synth.base_duration_s);
    detail::read_field(s, "duration_per_doubling_s",
                       c.synth.duration_per_doubling_s);
    detail::read_field(s, "duration_jitter_frac", c.synth.duration_jitter_frac);
    detail::read_field(s, "sample_rate_hz", c.synth.sample_rate_hz);
    detail::read_field(s, "start_x_px", c.synth.start_x_px);
    detail::read_field(s, "distance_effect_exponent",
                       c.synth.distance_effect_exponent);
    detail::read_field(s, "zeta_floor", c.synth.zeta_floor);
    detail::read_field(s, "omega_floor", c.synth.omega_floor);
  }
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "jobs", c.jobs);
  c.synth.seed = c.seed;
  c.classifier.master_seed = c.seed;
  try {
    c.synth.validate();
  } catch (const ConfigError&) {
    throw;
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return config_from_json(nlohmann::json::object());
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Hash over the estimation-relevant configuration; stored with the estimate
// store so downstream stages can detect a stale cache.
inline std::uint64_t estimation_config_hash(const PipelineConfig& c) {
  nlohmann::json j;
  j["smoothing_cutoff_hz"] = c.smoothing_cutoff_hz;
  j["lpc"] = config_to_json(c)["lpc"];
  j["pem"] = config_to_json(c)["pem"];
  j["seed"] = c.seed;
  return fnv1a64(j.dump());
}

struct EstimateRecord {
  std::string key;
  TrialMeta meta;
  std::size_t n_samples_raw{0};
  std::size_t n_samples_window{0};
  bool short_window{false};
  std::string lpc_status;  // "ok" or a failure code
  std::optional<DampingEstimate> lpc;
  std::string msd_status;
  std::optional<MsdFit> msd;
};

struct StoreCounts {
  std::size_t trials{0};
  std::size_t lpc_ok{0};
  std::size_t lpc_failed{0};
  std::size_t msd_ok{0};
  std::size_t msd_failed{0};
};

struct EstimateStore {
  std::vector<EstimateRecord> records;
  std::uint64_t config_hash{0};

  StoreCounts counts() const {
    StoreCounts c;
    c.trials = records.size();
    for (const auto& r : records) {
      (r.lpc ? c.lpc_ok : c.lpc_failed) += 1;
      (r.msd ? c.msd_ok : c.msd_failed) += 1;
    }
    return c;
  }
};

// Runs both estimators on every trial: smooth, window, then LPC (smoothed or
// raw input per config) and the PEM fit. Failures are recorded per trial
// with their reason codes, never dropped.
inline EstimateStore estimate_all(const TrialSet& set,
                                  const PipelineConfig& cfg) {
  EstimateStore store;
  store.config_hash = estimation_config_hash(cfg);
  store.records.resize(set.trials.size());

  parallel_for(set.trials.size(), cfg.jobs, [&](std::size_t i) {
    const Trial& trial = set.trials[i];
    EstimateRecord rec;
    rec.key = trial_key(trial.meta);
    rec.meta = trial.meta;
    rec.n_samples_raw = trial.trajectory.samples.size();

    const Trajectory smoothed =
        smooth(trial.trajectory, cfg.smoothing_cutoff_hz);
    const WindowedTrajectory windowed = truncate_window(smoothed, trial.meta);
    rec.short_window = windowed.short_trial;
    rec.n_samples_window = windowed.trajectory.samples.size();

    Trajectory lpc_input;
    if (cfg.lpc_use_raw) {
      lpc_input = truncate_window(trial.trajectory, trial.meta).trajectory;
    } else {
      lpc_input = windowed.trajectory;
    }

    try {
      rec.lpc = estimate_lpc(lpc_input, cfg.lpc);
      rec.lpc_status = "ok";
    } catch (const EstimationError& e) {
      rec.lpc_status = e.code();
    } catch (const DataError&) {
      rec.lpc_status = "invalid-input";
    }

    try {
      rec.msd = fit_pem(windowed.trajectory, trial.meta, cfg.pem);
      rec.msd_status = "ok";
    } catch (const EstimationError& e) {
      rec.msd_status = e.code();
    } catch (const DataError&) {
      rec.msd_status = "invalid-input";
    }

    store.records[i] = std::move(rec);
  });

  std::sort(store.records.begin(), store.records.end(),
            [](const EstimateRecord& a, const EstimateRecord& b) {
              return a.key < b.key;
            });
  return store;
}

namespace detail {

inline std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace detail

inline void write_store_csv(const std::filesystem::path& path,
                            const EstimateStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "trial_key,participant,condition,distance_px,width_px,repetition,"
         "start_x_px,target_x_px,n_samples_raw,n_samples_window,short_window,"
         "lpc_status,lpc_omega,lpc_zeta,"
         "msd_status,msd_kp,msd_omega,msd_zeta,msd_gof_percent,"
         "msd_residual_ss,msd_converged,msd_iterations,msd_hit_bounds\n";
  for (const auto& r : store.records) {
    out << r.key << ',' << r.meta.participant_id << ','
        << to_string(r.meta.condition) << ',' << r.meta.distance_px << ','
        << r.meta.width_px << ',' << r.meta.repetition << ','
        << detail::format_double(r.meta.start_x_px) << ','
        << detail::format_double(r.meta.target_x_px) << ','
        << r.n_samples_raw << ',' << r.n_samples_window << ','
        << (r.short_window ? 1 : 0) << ',' << r.lpc_status << ',';
    if (r.lpc) {
      out << detail::format_double(r.lpc->omega) << ','
          << detail::format_double(r.lpc->zeta);
    } else {
      out << ',';
    }
    out << ',' << r.msd_status << ',';
    if (r.msd) {
      out << detail::format_double(r.msd->params.kp) << ','
          << detail::format_double(r.msd->params.omega) << ','
          << detail::format_double(r.msd->params.zeta) << ','
          << detail::format_double(r.msd->gof_percent) << ','
          << detail::format_double(r.msd->residual_ss) << ','
          << (r.msd->converged ? 1 : 0) << ',' << r.msd->iterations << ','
          << (r.msd->hit_bounds ? 1 : 0);
    } else {
      out << ",,,,,,,";
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path.string());
}

inline EstimateStore read_store_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open estimate store " + path.string());
  EstimateStore store;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (line_no == 1) continue;  // header
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      if (comma == std::string::npos) {
        f.push_back(line.substr(pos));
        break;
      }
      f.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    const std::string ctx = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 23) {
      throw DataError(ctx + ": expected 23 fields, got " +
                      std::to_string(f.size()));
    }
    EstimateRecord r;
    r.key = f[0];
    r.meta.participant_id = f[1];
    r.meta.condition = condition_from_string(f[2]);
    r.meta.distance_px = static_cast<int>(detail::parse_int(f[3], ctx));
    r.meta.width_px = static_cast<int>(detail::parse_int(f[4], ctx));
    r.meta.repetition = static_cast<int>(detail::parse_int(f[5], ctx));
    r.meta.start_x_px = detail::parse_double(f[6], ctx);
    r.meta.target_x_px = detail::parse_double(f[7], ctx);
    r.n_samples_raw = static_cast<std::size_t>(detail::parse_int(f[8], ctx));
    r.n_samples_window = static_cast<std::size_t>(detail::parse_int(f[9], ctx));
    r.short_window = f[10] == "1";
    r.lpc_status = f[11];
    if (r.lpc_status == "ok") {
      DampingEstimate est;
      est.method = Method::lpc;
      est.omega = detail::parse_double(f[12], ctx);
      est.zeta = detail::parse_double(f[13], ctx);
      r.lpc = est;
    }
    r.msd_status = f[14];
    if (r.msd_status == "ok") {
      MsdFit fit;
      fit.params.kp = detail::parse_double(f[15], ctx);
      fit.params.omega = detail::parse_double(f[16], ctx);
      fit.params.zeta = detail::parse_double(f[17], ctx);
      fit.gof_percent = detail::parse_double(f[18], ctx);
      fit.residual_ss = detail::parse_double(f[19], ctx);
      fit.converged = f[20] == "1";
      fit.iterations = static_cast<int>(detail::parse_int(f[21], ctx));
      fit.hit_bounds = f[22] == "1";
      r.msd = fit;
    }
    store.records.push_back(std::move(r));
  }
  return store;
}

// Rows where both methods succeeded and the MSD zeta outlier rule passes.
inline PairedEstimates paired_from_store(const EstimateStore& store) {
  PairedEstimates pairs;
  for (const auto& r : store.records) {
    if (!r.lpc || !r.msd) continue;
    if (is_outlier_zeta(r.msd->params.zeta)) continue;
    PairedRow row;
    row.key = r.key;
    row.participant = r.meta.participant_id;
    row.condition = r.meta.condition;
    row.distance_px = r.meta.distance_px;
    row.lpc = *r.lpc;
    row.msd = *r.msd;
    pairs.rows.push_back(std::move(row));
  }
  return pairs;
}

inline std::vector<TrialFeatures> features_from_store(
    const EstimateStore& store) {
  std::vector<TrialFeatures> features;
  features.reserve(store.records.size());
  for (const auto& r : store.records) {
    TrialFeatures t;
    t.key = r.key;
    t.participant = r.meta.participant_id;
    t.condition = r.meta.condition;
    t.distance_px = r.meta.distance_px;
    if (r.lpc) t.lpc = std::make_pair(r.lpc->omega, r.lpc->zeta);
    if (r.msd) t.msd = std::make_pair(r.msd->params.omega, r.msd->params.zeta);
    features.push_back(std::move(t));
  }
  return features;
}

// ---------------------------------------------------------------------------
// Artifact serialization
// ---------------------------------------------------------------------------

inline nlohmann::json curve_to_json(const CorrelationCurve& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& pt : curve.points) {
    nlohmann::json j;
    j["gof_threshold"] = pt.threshold;
    j["available"] = pt.available;
    j["retention_percent"] = pt.retention_percent;
    j["rows_kept"] = pt.rows_kept;
    if (pt.available) {
      j["rho_omega"] = pt.rho_omega;
      j["p_omega"] = pt.p_omega;
      j["rho_zeta"] = pt.rho_zeta;
      j["p_zeta"] = pt.p_zeta;
    }
    arr.push_back(j);
  }
  return arr;
}

inline void write_curve_csv(const std::filesystem::path& path,
                            const CorrelationCurve& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "gof_threshold,rho_omega,p_omega,rho_zeta,p_zeta,retention_percent,"
         "rows_kept\n";
  for (const auto& pt : curve.points) {
    out << detail::format_double(pt.threshold) << ',';
    if (pt.available) {
      out << detail::format_double(pt.rho_omega) << ','
          << detail::format_double(pt.p_omega) << ','
          << detail::format_double(pt.rho_zeta) << ','
          << detail::format_double(pt.p_zeta);
    } else {
      out << ",,,";
    }
    out << ',' << detail::format_double(pt.retention_percent) << ','
        << pt.rows_kept << "\n";
  }
  if (!out) throw DataError("write failed for " + path.string());
}

inline nlohmann::json summary_to_json(const ConditionSummary& s) {
  auto cell = [](const ConditionCell& c) {
    nlohmann::json j;
    j["calm_mean"] = c.calm_mean;
    j["calm_se"] = c.calm_se;
    j["stressed_mean"] = c.stressed_mean;
    j["stressed_se"] = c.stressed_se;
    j["t"] = c.t;
    j["df"] = c.df;
    j["p"] = c.p;
    j["t_degenerate"] = c.t_degenerate;
    return j;
  };
  nlohmann::json j;
  j["msd_omega"] = cell(s.msd_omega);
  j["msd_zeta"] = cell(s.msd_zeta);
  j["lpc_omega"] = cell(s.lpc_omega);
  j["lpc_zeta"] = cell(s.lpc_zeta);
  j["n_participants"] = s.n_participants;
  j["excluded_participants"] = s.excluded_participants;
  j["aggregation"] = "participant means first, then across participants";
  return j;
}

inline void write_summary_csv(const std::filesystem::path& path,
                              const ConditionSummary& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "method,parameter,calm_mean,calm_se,stressed_mean,stressed_se,t,df,"
         "p\n";
  auto row = [&](const char* method, const char* param,
                 const ConditionCell& c) {
    out << method << ',' << param << ',' << detail::format_double(c.calm_mean)
        << ',' << detail::format_double(c.calm_se) << ','
        << detail::format_double(c.stressed_mean) << ','
        << detail::format_double(c.stressed_se) << ','
        << detail::format_double(c.t) << ',' << c.df << ','
        << detail::format_double(c.p) << "\n";
  };
  row("MSD", "omega", s.msd_omega);
  row("LPC", "omega", s.lpc_omega);
  row("MSD", "zeta", s.msd_zeta);
  row("LPC", "zeta", s.lpc_zeta);
  if (!out) throw DataError("write failed for " + path.string());
}

inline nlohmann::json accuracy_to_json(const AccuracyReport& report) {
  nlohmann::json j;
  j["config"] = {
      {"folds", report.config.folds},
      {"repetitions", report.config.repetitions},
      {"c", report.config.c},
      {"gamma", report.config.gamma ? nlohmann::json(*report.config.gamma)
                                    : nlohmann::json("auto (1/(d*mean_var))")},
      {"per_fold_normalization", report.config.per_fold_normalization},
      {"seed", report.config.master_seed},
  };
  auto variant_name = [](const VariantAggregate& v) {
    return std::string(to_string(v.source)) + "_" + to_string(v.set);
  };
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json jc;
    jc["participant"] = c.participant;
    jc["distance_px"] = c.distance_px;
    jc["variant"] = std::string(to_string(c.source)) + "_" + to_string(c.set);
    jc["available"] = c.available;
    if (c.available) {
      jc["mean_accuracy"] = c.mean_accuracy;
      jc["se_accuracy"] = c.se_accuracy;
    } else {
      jc["reason"] = c.unavailable_reason;
    }
    jc["n_samples"] = c.n_samples;
    jc["n_dropped"] = c.n_dropped;
    cells.push_back(jc);
  }
  j["cells"] = cells;
  nlohmann::json per_distance = nlohmann::json::object();
  for (const auto& [dist, aggs] : report.per_distance) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& a : aggs) {
      row[variant_name(a)] = {{"mean_accuracy", a.mean_accuracy},
                              {"se_accuracy", a.se_accuracy},
                              {"n_cells", a.n_cells}};
    }
    per_distance[std::to_string(dist)] = row;
  }
  j["per_distance"] = per_distance;
  nlohmann::json overall = nlohmann::json::object();
  for (const auto& a : report.overall) {
    overall[variant_name(a)] = {{"mean_accuracy", a.mean_accuracy},
                                {"se_accuracy", a.se_accuracy},
                                {"n_cells", a.n_cells}};
  }
  j["overall"] = overall;
  return j;
}

// Table-shaped CSV: one row per distance plus an overall row, six accuracy
// columns (MSD/LPC x omega+zeta/omega/zeta).
inline void write_accuracy_csv(const std::filesystem::path& path,
                               const AccuracyReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "distance,msd_omega_zeta,lpc_omega_zeta,msd_omega,lpc_omega,"
         "msd_zeta,lpc_zeta\n";
  auto write_aggs = [&](const std::vector<VariantAggregate>& aggs) {
    // classifier_variants() order matches the header order.
    for (const auto& a : aggs) {
      out << ',';
      if (a.n_cells > 0) out << detail::format_double(a.mean_accuracy);
    }
    out << "\n";
  };
  for (const auto& [dist, aggs] : report.per_distance) {
    out << dist;
    write_aggs(aggs);
  }
  out << "overall";
  write_aggs(report.overall);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace artifacts {
inline constexpr const char* store_csv = "store.csv";
inline constexpr const char* store_meta = "store_meta.json";
inline constexpr const char* curve_csv = "correlation_curve.csv";
inline constexpr const char* curve_json = "correlation_curve.json";
inline constexpr const char* summary_csv = "condition_summary.csv";
inline constexpr const char* summary_json = "condition_summary.json";
inline constexpr const char* accuracy_csv = "accuracy_table.csv";
inline constexpr const char* accuracy_json = "accuracy_report.json";
inline constexpr const char* report_json = "report.json";
inline constexpr const char* plot_fig_correlation = "plot_correlation_vs_gof.csv";
inline constexpr const char* plot_fig_retention = "plot_retention_vs_gof.csv";
}  // namespace artifacts

namespace detail {

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path,
                                     const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(std::string("missing artifact '") + what + "' at " +
                    path.string() + " (run the producing command first)");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  return j;
}

inline void ensure_out_dir(const PipelineConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
}

}  // namespace detail

inline void cmd_synth(const PipelineConfig& cfg, std::ostream& log = std::cout) {
  auto [set, truth] = generate(cfg.synth);
  export_trials(set, truth, cfg.trials_dir);
  log << "synth: wrote " << set.trials.size() << " trials to "
      << cfg.trials_dir << "\n";
}

inline EstimateStore cmd_estimate(const PipelineConfig& cfg,
                                  std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  detail::ensure_out_dir(cfg);
  const fs::path store_path = fs::path(cfg.out_dir) / artifacts::store_csv;
  const fs::path meta_path = fs::path(cfg.out_dir) / artifacts::store_meta;
  const std::uint64_t hash = estimation_config_hash(cfg);

  if (fs::exists(store_path) && fs::exists(meta_path)) {
    const nlohmann::json meta = detail::read_json_file(meta_path, "store meta");
    if (meta.contains("config_hash") &&
        meta.at("config_hash").get<std::uint64_t>() == hash) {
      log << "estimate: store is up to date (config hash match), skipping\n";
      EstimateStore store = read_store_csv(store_path);
      store.config_hash = hash;
      return store;
    }
  }

  const TrialSet set = load_trials(cfg.trials_dir);
  EstimateStore store = estimate_all(set, cfg);
  const StoreCounts counts = store.counts();

  write_store_csv(store_path, store);
  nlohmann::json meta;
  meta["config_hash"] = hash;
  meta["version"] = kVersion;
  meta["lpc_input"] = cfg.lpc_use_raw ? "raw" : "smoothed";
  meta["counts"] = {
      {"trials", counts.trials},
      {"lpc_ok", counts.lpc_ok},
      {"lpc_failed", counts.lpc_failed},
      {"msd_ok", counts.msd_ok},
      {"msd_failed", counts.msd_failed},
  };
  detail::write_json_file(meta_path, meta);

  log << "estimate: " << counts.trials << " trials, LPC ok " << counts.lpc_ok
      << " failed " << counts.lpc_failed << ", MSD ok " << counts.msd_ok
      << " failed " << counts.msd_failed << "\n";
  return store;
}

namespace detail {

inline EstimateStore load_store_checked(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path store_path = fs::path(cfg.out_dir) / artifacts::store_csv;
  const fs::path meta_path = fs::path(cfg.out_dir) / artifacts::store_meta;
  if (!fs::exists(store_path)) {
    throw DataError("missing artifact 'estimate store' at " +
                    store_path.string() + " (run estimate first)");
  }
  const nlohmann::json meta = read_json_file(meta_path, "store meta");
  const std::uint64_t hash = estimation_config_hash(cfg);
  if (!meta.contains("config_hash") ||
      meta.at("config_hash").get<std::uint64_t>() != hash) {
    throw DataError("estimate store at " + store_path.string() +
                    " was built with a different configuration; re-run "
                    "estimate");
  }
  EstimateStore store = read_store_csv(store_path);
  store.config_hash = hash;
  return store;
}

}  // namespace detail

inline void cmd_correlate(const PipelineConfig& cfg,
                          std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  detail::ensure_out_dir(cfg);
  const EstimateStore store = detail::load_store_checked(cfg);
  const PairedEstimates pairs = paired_from_store(store);
  if (pairs.rows.size() < 3) {
    const StoreCounts c = store.counts();
    throw DataError(
        "correlate: need at least 3 jointly-successful non-outlier rows, "
        "have " +
        std::to_string(pairs.rows.size()) + " (of " + std::to_string(c.trials) +
        " trials; LPC ok " + std::to_string(c.lpc_ok) + ", MSD ok " +
        std::to_string(c.msd_ok) + ")");
  }

  const CorrelationCurve curve = threshold_sweep(pairs, cfg.gof_thresholds);
  const ConditionSummary summary = condition_summary(pairs);

  write_curve_csv(fs::path(cfg.out_dir) / artifacts::curve_csv, curve);
  detail::write_json_file(fs::path(cfg.out_dir) / artifacts::curve_json,
                          curve_to_json(curve));
  write_summary_csv(fs::path(cfg.out_dir) / artifacts::summary_csv, summary);
  detail::write_json_file(fs::path(cfg.out_dir) / artifacts::summary_json,
                          summary_to_json(summary));

  log << "correlate: " << pairs.rows.size() << " paired rows, "
      << curve.points.size() << " thresholds, " << summary.n_participants
      << " participants\n";
}

inline void cmd_classify(const PipelineConfig& cfg,
                         std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  detail::ensure_out_dir(cfg);
  const EstimateStore store = detail::load_store_checked(cfg);
  ExperimentConfig exp = cfg.classifier;
  exp.master_seed = cfg.seed;
  const AccuracyReport report = run_experiment(features_from_store(store), exp);

  const bool any_available =
      std::any_of(report.cells.begin(), report.cells.end(),
                  [](const CellResult& c) { return c.available; });
  if (!any_available) {
    throw DataError("classify: no classifier cell had enough usable trials");
  }

  write_accuracy_csv(fs::path(cfg.out_dir) / artifacts::accuracy_csv, report);
  detail::write_json_file(fs::path(cfg.out_dir) / artifacts::accuracy_json,
                          accuracy_to_json(report));

  log << "classify: " << report.cells.size() << " cells";
  for (const auto& a : report.overall) {
    log << ", " << to_string(a.source) << "-" << to_string(a.set) << " "
        << a.mean_accuracy << "%";
  }
  log << "\n";
}

inline void cmd_report(const PipelineConfig& cfg,
                       std::ostream& log = std::cout) {
  namespace fs = std::filesystem;
  detail::ensure_out_dir(cfg);
  const fs::path out(cfg.out_dir);

  nlohmann::json report;
  report["version"] = kVersion;
  report["config"] = config_to_json(cfg);
  const nlohmann::json store_meta =
      detail::read_json_file(out / artifacts::store_meta, "store meta");
  report["estimation"] = store_meta;
  report["correlation"] = {
      {"curve",
       detail::read_json_file(out / artifacts::curve_json, "correlation curve")},
      {"condition_summary",
       detail::read_json_file(out / artifacts::summary_json,
                              "condition summary")},
  };
  report["classification"] =
      detail::read_json_file(out / artifacts::accuracy_json, "accuracy report");
  detail::write_json_file(out / artifacts::report_json, report);

  // Plot-data CSVs mirroring the correlation-vs-threshold figure axes.
  {
    std::ofstream a(out / artifacts::plot_fig_correlation, std::ios::binary);
    std::ofstream b(out / artifacts::plot_fig_retention, std::ios::binary);
    if (!a || !b) throw DataError("cannot write plot-data CSVs");
    a << "gof_threshold,rho_omega,rho_zeta\n";
    b << "gof_threshold,retention_percent\n";
    for (const auto& pt : report["correlation"]["curve"]) {
      const double thr = pt.at("gof_threshold").get<double>();
      b << detail::format_double(thr) << ','
        << detail::format_double(pt.at("retention_percent").get<double>())
        << "\n";
      if (pt.at("available").get<bool>()) {
        a << detail::format_double(thr) << ','
          << detail::format_double(pt.at("rho_omega").get<double>()) << ','
          << detail::format_double(pt.at("rho_zeta").get<double>()) << "\n";
      }
    }
  }
  log << "report: wrote " << (out / artifacts::report_json).string() << "\n";
}

}  // namespace stiffsense
