#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "mgt/config.hpp"
#include "mgt/errors.hpp"
#include "mgt/pipeline.hpp"

namespace {

struct Cli {
  std::string config_path;
  std::string run_dir = "run";
  std::optional<std::uint64_t> seed;
  std::optional<int> levels;
  std::optional<int> candidates;
  bool resample = false;
  std::string ensemble_mode;
  std::string probe_task;
  bool finetune = false;
  bool verbose = false;
  bool quiet = false;
};

mgt::Config resolve_config(const Cli& cli) {
  mgt::Config config;
  if (!cli.config_path.empty()) {
    config = mgt::load_config(cli.config_path);
  }
  if (cli.seed) {
    config.seed = *cli.seed;
  }
  if (cli.levels) {
    config.levels = *cli.levels;
  }
  if (cli.candidates) {
    config.k = *cli.candidates;
  }
  if (cli.resample) {
    config.resample_per_epoch = true;
  }
  mgt::validate_config(config);
  return config;
}

mgt::StageOptions resolve_options(const Cli& cli) {
  mgt::StageOptions opts;
  if (!cli.ensemble_mode.empty()) {
    opts.ensemble_modes = {mgt::parse_ensemble_mode(cli.ensemble_mode)};
  }
  if (!cli.probe_task.empty()) {
    opts.probe_tasks = {mgt::parse_probe_kind(cli.probe_task)};
  }
  opts.finetune = cli.finetune;
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-granularity negative sampling for dual-encoder response retrieval"};
  app.require_subcommand(1);
  app.fallthrough();
  Cli cli;
  app.add_option("--config", cli.config_path, "key = value training config file")
      ->check(CLI::ExistingFile);
  app.add_option("--run-dir", cli.run_dir, "directory holding all stage artifacts")
      ->capture_default_str();
  app.add_option("--seed", cli.seed, "global seed (overrides the config)");
  app.add_option("--granularities,-L", cli.levels, "number of granularity levels L");
  app.add_option("--candidates,-k", cli.candidates, "candidate-set size k");
  app.add_flag("--resample-per-epoch", cli.resample, "draw fresh negatives every epoch");
  app.add_option("--ensemble-mode", cli.ensemble_mode, "evaluate only this ensemble")
      ->check(CLI::IsMember({"mgt", "vanilla"}));
  app.add_option("--probe-task", cli.probe_task, "probe only this task")
      ->check(CLI::IsMember({"bow", "abstract"}));
  app.add_flag("--finetune", cli.finetune, "also fine-tune the context encoder under the probe");
  app.add_flag("-v,--verbose", cli.verbose, "debug logging");
  app.add_flag("-q,--quiet", cli.quiet, "warnings and errors only");

  std::optional<mgt::Stage> stage;
  bool all = false;
  bool print_config = false;
  for (mgt::Stage s : mgt::all_stages()) {
    app.add_subcommand(mgt::stage_name(s), std::string("run the ") + mgt::stage_name(s) + " stage")
        ->callback([&stage, s] { stage = s; });
  }
  app.add_subcommand("run-all", "run every stage in order")->callback([&all] { all = true; });
  app.add_subcommand("print-config", "print the resolved config and exit")->callback([&print_config] {
    print_config = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(mgt::ExitCode::usage);
  }
  spdlog::set_level(cli.verbose ? spdlog::level::debug
                                : cli.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const mgt::Config config = resolve_config(cli);
    if (print_config) {
      std::cout << mgt::format_config(config);
      return 0;
    }
    mgt::Pipeline pipeline(cli.run_dir, config);
    const mgt::StageOptions options = resolve_options(cli);
    if (all) {
      pipeline.run_all(options);
    } else {
      pipeline.run(*stage, options);
    }
    return 0;
  } catch (const mgt::Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return static_cast<int>(mgt::ExitCode::internal);
  }
}
