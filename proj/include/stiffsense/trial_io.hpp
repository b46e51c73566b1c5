#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

// Trial CSV format: `# key=value` header lines, a `x_px` column header, then
// one sample per line. UTF-8, LF endings. Doubles are serialized with
// %.17g so an export / ingest round trip is bit-exact.

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& token, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw DataError(context + ": cannot parse number '" + token + "'");
  }
  return value;
}

inline long parse_int(const std::string& token, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  const long value = std::strtol(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw DataError(context + ": cannot parse integer '" + token + "'");
  }
  return value;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

inline void write_trial_csv(const std::filesystem::path& path,
                            const TrialMeta& meta, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "# participant=" << meta.participant_id << "\n"
      << "# distance_px=" << meta.distance_px << "\n"
      << "# width_px=" << meta.width_px << "\n"
      << "# condition=" << to_string(meta.condition) << "\n"
      << "# repetition=" << meta.repetition << "\n"
      << "# sample_rate_hz=" << detail::format_double(traj.sample_rate_hz) << "\n"
      << "# start_x_px=" << detail::format_double(meta.start_x_px) << "\n"
      << "# target_x_px=" << detail::format_double(meta.target_x_px) << "\n"
      << "x_px\n";
  for (double v : traj.samples) out << detail::format_double(v) << "\n";
  if (!out) throw DataError("write failed for " + path.string());
}

inline Trial read_trial_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());

  std::map<std::string, std::string> header;
  std::string line;
  int line_no = 0;
  bool saw_column = false;
  Trial trial;

  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": malformed header line '" + line + "'");
      }
      header[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!saw_column) {
      if (line != "x_px") {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": expected column header 'x_px', got '" + line + "'");
      }
      saw_column = true;
      continue;
    }
    trial.trajectory.samples.push_back(detail::parse_double(
        line, path.string() + ":" + std::to_string(line_no)));
  }
  if (!saw_column) {
    throw DataError(path.string() + ": missing 'x_px' column header");
  }

  auto field = [&](const char* name) -> const std::string& {
    auto it = header.find(name);
    if (it == header.end()) {
      throw DataError(path.string() + ": missing header field '" +
                      std::string(name) + "'");
    }
    return it->second;
  };

  trial.meta.participant_id = field("participant");
  trial.meta.distance_px = static_cast<int>(
      detail::parse_int(field("distance_px"), path.string() + " distance_px"));
  trial.meta.width_px = static_cast<int>(
      detail::parse_int(field("width_px"), path.string() + " width_px"));
  trial.meta.condition = condition_from_string(field("condition"));
  trial.meta.repetition = static_cast<int>(
      detail::parse_int(field("repetition"), path.string() + " repetition"));
  trial.trajectory.sample_rate_hz = detail::parse_double(
      field("sample_rate_hz"), path.string() + " sample_rate_hz");
  trial.meta.start_x_px =
      detail::parse_double(field("start_x_px"), path.string() + " start_x_px");
  trial.meta.target_x_px = detail::parse_double(
      field("target_x_px"), path.string() + " target_x_px");
  trial.trajectory.role = SignalRole::actual;

  trial.meta.validate();
  trial.trajectory.validate();
  return trial;
}

// Reserved filename for the ground-truth table written next to exported
// trials; skipped on ingest so an export directory re-ingests cleanly.
inline constexpr const char* kGroundTruthFilename = "ground_truth.csv";

// Loads every trial CSV in a directory. Duplicate trial keys reject the
// whole set; an empty directory is an error.
inline TrialSet load_trials(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".csv") continue;
    if (entry.path().filename() == kGroundTruthFilename) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw DataError("no trial CSV files found in " + dir.string());
  }

  TrialSet set;
  set.provenance = Provenance::ingested;
  std::set<std::string> keys;
  for (const auto& f : files) {
    Trial trial = read_trial_csv(f);
    const std::string key = trial_key(trial.meta);
    if (!keys.insert(key).second) {
      throw DataError("duplicate trial key '" + key +
                      "' in ingest set (file " + f.string() + ")");
    }
    set.trials.push_back(std::move(trial));
  }
  std::sort(set.trials.begin(), set.trials.end(),
            [](const Trial& a, const Trial& b) {
              return trial_key(a.meta) < trial_key(b.meta);
            });
  return set;
}

}  // namespace stiffsense
