#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stiffsense/error.hpp"
#include "stiffsense/rng.hpp"
#include "stiffsense/svm.hpp"
#include "stiffsense/trajectory.hpp"

namespace stiffsense {

struct CrossValidateOptions {
  int folds{5};
  double c{1.0};
  // RBF width; when unset the default 1/(d * mean variance) is computed on
  // each normalized training split.
  std::optional<double> gamma;
  // Train-only normalization per fold (no leakage). The global switch exists
  // for protocol-matching experiments.
  bool per_fold_normalization{true};
};

// Stratified k-fold cross-validation accuracy, percent. Folds come from a
// seeded per-class shuffle dealt round-robin, so identical seeds give
// identical folds.
inline double cross_validate(const FeatureMatrix& m,
                             const CrossValidateOptions& opts,
                             std::uint64_t seed) {
  m.validate();
  const int folds = opts.folds;
  if (folds < 2) throw DataError("cross_validate: folds must be >= 2");

  std::vector<std::size_t> class0, class1;
  for (std::size_t i = 0; i < m.size(); ++i) {
    (m.labels[i] == 0 ? class0 : class1).push_back(i);
  }
  if (class0.size() < static_cast<std::size_t>(folds) ||
      class1.size() < static_cast<std::size_t>(folds)) {
    throw DataError("cross_validate: each class needs at least " +
                    std::to_string(folds) + " samples");
  }

  RandomStream stream(seed);
  stream.shuffle(class0);
  stream.shuffle(class1);

  std::vector<std::vector<std::size_t>> fold_members(
      static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < class0.size(); ++i) {
    fold_members[i % static_cast<std::size_t>(folds)].push_back(class0[i]);
  }
  for (std::size_t i = 0; i < class1.size(); ++i) {
    fold_members[i % static_cast<std::size_t>(folds)].push_back(class1[i]);
  }

  std::optional<MinMaxBounds> global_bounds;
  if (!opts.per_fold_normalization) global_bounds = min_max_fit(m);

  double accuracy_sum = 0.0;
  for (int f = 0; f < folds; ++f) {
    FeatureMatrix train, test;
    train.feature_source = test.feature_source = m.feature_source;
    train.feature_set = test.feature_set = m.feature_set;
    for (int g = 0; g < folds; ++g) {
      for (std::size_t idx : fold_members[static_cast<std::size_t>(g)]) {
        FeatureMatrix& dst = (g == f) ? test : train;
        dst.rows.push_back(m.rows[idx]);
        dst.labels.push_back(m.labels[idx]);
      }
    }

    FeatureMatrix train_n, test_n;
    if (global_bounds) {
      train_n = min_max_apply(*global_bounds, train);
      test_n = min_max_apply(*global_bounds, test);
    } else {
      NormalizedSplit split = min_max_fit_apply(train, test);
      train_n = std::move(split.train);
      test_n = std::move(split.test);
    }

    const double gamma = opts.gamma ? *opts.gamma : default_gamma(train_n);
    const SvmModel model = svm_train(train_n, opts.c, gamma);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_n.size(); ++i) {
      if (svm_predict(model, test_n.rows[i]) == test_n.labels[i]) ++correct;
    }
    accuracy_sum += 100.0 * static_cast<double>(correct) /
                    static_cast<double>(test_n.size());
  }
  return accuracy_sum / static_cast<double>(folds);
}

// Per-trial feature input for the classification experiment: omega/zeta from
// each method when that method succeeded on the trial.
struct TrialFeatures {
  std::string key;
  std::string participant;
  Condition condition{Condition::calm};
  int distance_px{0};
  std::optional<std::pair<double, double>> lpc;  // (omega, zeta)
  std::optional<std::pair<double, double>> msd;
};

struct ExperimentConfig {
  int folds{5};
  int repetitions{10};
  double c{1.0};
  std::optional<double> gamma;
  bool per_fold_normalization{true};
  std::uint64_t master_seed{1};
};

struct CellResult {
  std::string participant;
  int distance_px{0};
  FeatureSource source{FeatureSource::lpc};
  FeatureSet set{FeatureSet::omega};
  bool available{false};
  std::string unavailable_reason;
  double mean_accuracy{0.0};
  double se_accuracy{0.0};
  std::size_t n_samples{0};
  std::size_t n_dropped{0};  // trials without a usable estimate
};

struct VariantAggregate {
  FeatureSource source{FeatureSource::lpc};
  FeatureSet set{FeatureSet::omega};
  double mean_accuracy{0.0};
  double se_accuracy{0.0};
  std::size_t n_cells{0};
};

struct AccuracyReport {
  std::vector<CellResult> cells;
  // Keyed by distance; each entry holds the six variant aggregates.
  std::map<int, std::vector<VariantAggregate>> per_distance;
  std::vector<VariantAggregate> overall;
  ExperimentConfig config;
};

inline const std::vector<std::pair<FeatureSource, FeatureSet>>&
classifier_variants() {
  static const std::vector<std::pair<FeatureSource, FeatureSet>> kVariants{
      {FeatureSource::msd, FeatureSet::omega_zeta},
      {FeatureSource::lpc, FeatureSet::omega_zeta},
      {FeatureSource::msd, FeatureSet::omega},
      {FeatureSource::lpc, FeatureSet::omega},
      {FeatureSource::msd, FeatureSet::zeta},
      {FeatureSource::lpc, FeatureSet::zeta},
  };
  return kVariants;
}

namespace detail {

inline std::vector<double> feature_row(const std::pair<double, double>& est,
                                       FeatureSet set) {
  switch (set) {
    case FeatureSet::omega: return {est.first};
    case FeatureSet::zeta: return {est.second};
    default: return {est.first, est.second};
  }
}

inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
  const double n = static_cast<double>(v.size());
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace detail

// One classifier per participant per distance per variant, repeated with
// derived seeds; cells without enough usable trials are reported as
// unavailable and the experiment continues.
inline AccuracyReport run_experiment(const std::vector<TrialFeatures>& trials,
                                     const ExperimentConfig& config) {
  AccuracyReport report;
  report.config = config;

  std::set<std::string> participants;
  std::set<int> distances;
  for (const auto& t : trials) {
    participants.insert(t.participant);
    distances.insert(t.distance_px);
  }

  CrossValidateOptions cv_opts;
  cv_opts.folds = config.folds;
  cv_opts.c = config.c;
  cv_opts.gamma = config.gamma;
  cv_opts.per_fold_normalization = config.per_fold_normalization;

  for (const std::string& pid : participants) {
    for (int dist : distances) {
      for (const auto& [source, set] : classifier_variants()) {
        CellResult cell;
        cell.participant = pid;
        cell.distance_px = dist;
        cell.source = source;
        cell.set = set;

        FeatureMatrix m;
        m.feature_source = source;
        m.feature_set = set;
        for (const auto& t : trials) {
          if (t.participant != pid || t.distance_px != dist) continue;
          const auto& est = source == FeatureSource::lpc ? t.lpc : t.msd;
          if (!est) {
            ++cell.n_dropped;
            continue;
          }
          m.rows.push_back(detail::feature_row(*est, set));
          m.labels.push_back(t.condition == Condition::stressed ? 1 : 0);
        }
        cell.n_samples = m.size();

        const std::size_t calm_count = static_cast<std::size_t>(
            std::count(m.labels.begin(), m.labels.end(), 0));
        const std::size_t stressed_count = m.labels.size() - calm_count;
        if (calm_count < static_cast<std::size_t>(config.folds) ||
            stressed_count < static_cast<std::size_t>(config.folds)) {
          cell.unavailable_reason = "insufficient trials (" +
                                    std::to_string(calm_count) + " calm, " +
                                    std::to_string(stressed_count) +
                                    " stressed)";
          report.cells.push_back(cell);
          continue;
        }

        std::vector<double> rep_accuracies;
        rep_accuracies.reserve(static_cast<std::size_t>(config.repetitions));
        for (int rep = 0; rep < config.repetitions; ++rep) {
          const std::uint64_t seed = derive_seed(
              config.master_seed,
              "cell/" + pid + "/" + std::to_string(dist) + "/" +
                  std::string(to_string(source)) + "/" +
                  std::string(to_string(set)),
              static_cast<std::uint64_t>(rep));
          rep_accuracies.push_back(cross_validate(m, cv_opts, seed));
        }
        cell.available = true;
        detail::mean_se(rep_accuracies, cell.mean_accuracy, cell.se_accuracy);
        report.cells.push_back(cell);
      }
    }
  }

  // Aggregates: per distance across participants, and overall across all
  // available cells.
  for (const auto& [source, set] : classifier_variants()) {
    VariantAggregate overall;
    overall.source = source;
    overall.set = set;
    std::vector<double> all_cells;
    for (int dist : distances) {
      VariantAggregate agg;
      agg.source = source;
      agg.set = set;
      std::vector<double> means;
      for (const auto& cell : report.cells) {
        if (!cell.available || cell.distance_px != dist ||
            cell.source != source || cell.set != set) {
          continue;
        }
        means.push_back(cell.mean_accuracy);
        all_cells.push_back(cell.mean_accuracy);
      }
      agg.n_cells = means.size();
      if (!means.empty()) detail::mean_se(means, agg.mean_accuracy, agg.se_accuracy);
      report.per_distance[dist].push_back(agg);
    }
    overall.n_cells = all_cells.size();
    if (!all_cells.empty()) {
      detail::mean_se(all_cells, overall.mean_accuracy, overall.se_accuracy);
    }
    report.overall.push_back(overall);
  }
  return report;
}

}  // namespace stiffsense
