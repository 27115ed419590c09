// SPDX-License-Identifier: Apache-2.0
/**
 * @file  commands.hpp
 * @brief Subcommands of the `pg` tool.
 */
#ifndef PG_TOOLS_COMMANDS_HPP
#define PG_TOOLS_COMMANDS_HPP

#include "pg/config.hpp"

#include <filesystem>
#include <optional>

namespace pg::cli {

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

/// Applies --out and --seed on top of the loaded config.
void apply_overrides(ExperimentConfig &cfg, const Overrides &o);

int cmd_train(const ExperimentConfig &cfg);
int cmd_eval(const ExperimentConfig &cfg);
int cmd_sweep(const ExperimentConfig &cfg);
int cmd_bench(const ExperimentConfig &cfg);
int cmd_export_maps(const ExperimentConfig &cfg);

} // namespace pg::cli

#endif // PG_TOOLS_COMMANDS_HPP
