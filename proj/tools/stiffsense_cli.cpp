// stiffsense command-line pipeline:
//   synth     generate a ground-truth-known synthetic trial set
//   estimate  run the LPC and MSD estimators over every trial
//   correlate GOF-threshold Spearman sweep + condition summary
//   classify  per-participant per-distance SVM stress classification
//   report    consolidate artifacts into one JSON + plot-data CSVs
//
// Exit codes: 0 success, 1 usage or config error, 2 data or numerical error.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "stiffsense/pipeline.hpp"
#include "stiffsense/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string trials_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Pipeline config JSON file");
  cmd->add_option("--out", args.out_dir, "Output directory for artifacts");
  cmd->add_option("--trials", args.trials_dir, "Trial CSV directory");
  cmd->add_option("--seed", args.seed, "Master seed (overrides config)");
  cmd->add_option("--jobs", args.jobs, "Worker threads (default 1)");
}

stiffsense::PipelineConfig resolve_config(const CommonArgs& args) {
  stiffsense::PipelineConfig cfg = stiffsense::load_config(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.trials_dir.empty()) cfg.trials_dir = args.trials_dir;
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.synth.seed = *args.seed;
    cfg.classifier.master_seed = *args.seed;
  }
  if (args.jobs) cfg.jobs = *args.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Damping frequency / damping ratio estimation from pointing "
               "trajectories (LPC + MSD)"};
  app.set_version_flag("--version", stiffsense::kVersion);
  app.require_subcommand(1);

  CommonArgs synth_args, estimate_args, correlate_args, classify_args,
      report_args;
  add_common(app.add_subcommand("synth", "Generate a synthetic trial set"),
             synth_args);
  add_common(app.add_subcommand("estimate", "Run both estimators per trial"),
             estimate_args);
  add_common(app.add_subcommand("correlate",
                                "Correlation sweep and condition summary"),
             correlate_args);
  add_common(app.add_subcommand("classify", "SVM stress classification"),
             classify_args);
  add_common(app.add_subcommand("report", "Consolidated report"), report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help / --version
      return app.exit(e);
    }
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand("synth")) {
      stiffsense::cmd_synth(resolve_config(synth_args));
    } else if (app.got_subcommand("estimate")) {
      stiffsense::cmd_estimate(resolve_config(estimate_args));
    } else if (app.got_subcommand("correlate")) {
      stiffsense::cmd_correlate(resolve_config(correlate_args));
    } else if (app.got_subcommand("classify")) {
      stiffsense::cmd_classify(resolve_config(classify_args));
    } else if (app.got_subcommand("report")) {
      stiffsense::cmd_report(resolve_config(report_args));
    }
  } catch (const stiffsense::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const stiffsense::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
