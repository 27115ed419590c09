// SPDX-License-Identifier: Apache-2.0
// pg train|eval|bench|sweep|export-maps --config <file> [--out <dir>]
//    [--seed N] [--threads N]
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
#include "commands.hpp"

#include "pg/parallel.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

int main(int argc, char **argv) {
  CLI::App app{"Precision-gated quantized network trainer and kernel bench"};
  app.require_subcommand(1);

  std::string config_path;
  pg::cli::Overrides overrides;
  unsigned threads = 1;

  const std::map<std::string, std::function<int(const pg::ExperimentConfig &)>>
      commands = {{"train", pg::cli::cmd_train},
                  {"eval", pg::cli::cmd_eval},
                  {"sweep", pg::cli::cmd_sweep},
                  {"bench", pg::cli::cmd_bench},
                  {"export-maps", pg::cli::cmd_export_maps}};
  const std::map<std::string, std::string> help = {
      {"train", "Train a model and write metrics.csv, layers.csv, checkpoint/"},
      {"eval", "Evaluate the checkpoint in the output directory"},
      {"sweep", "Fixed-threshold sweep of the checkpoint"},
      {"bench", "Time gemm against sddmm over a sparsity grid"},
      {"export-maps", "Write per-example decision maps as PGM images"}};

  for (const auto &[name, fn] : commands) {
    CLI::App *sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "INI experiment file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option_function<std::string>(
        "--out", [&](const std::string &v) { overrides.out = v; },
        "Output directory (overrides [experiment] output)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t &v) { overrides.seed = v; },
        "Training seed (overrides [train] seed)");
    sub->add_option("--threads", threads, "Kernel worker threads")
        ->check(CLI::Range(1u, 256u));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  pg::ExperimentConfig cfg;
  try {
    cfg = pg::load_config(config_path);
    pg::cli::apply_overrides(cfg, overrides);
  } catch (const pg::ConfigError &e) {
    std::cerr << "pg: config error: " << e.what() << '\n';
    return 2;
  }
  pg::set_num_threads(threads);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return commands.at(name)(cfg);
  } catch (const std::exception &e) {
    std::cerr << "pg " << name << ": " << e.what() << '\n';
    return 1;
  }
}
