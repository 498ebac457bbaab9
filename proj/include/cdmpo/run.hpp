#pragma once

// Command implementations behind the `cdmpo` executable.
//
// A training run directory holds:
//   config.json     resolved configuration
//   metrics.jsonl   one record per iteration (schema_version field)
//   episodes.jsonl  one record per completed training episode
//   checkpoints/    iter_NNNNNN.ckpt at the checkpoint interval, final.ckpt
//   manifest.json   timestamps and host details; the only non-deterministic file

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdmpo/config.hpp"
#include "cdmpo/trainer.hpp"

namespace cdmpo {

inline constexpr const char* kOutputRootEnv = "CDMPO_OUTPUT_ROOT";

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitIo = 4 };

/// --out wins, then cfg.output_dir, then $CDMPO_OUTPUT_ROOT/<run name>, then runs/<run name>.
std::filesystem::path resolve_output_dir(const std::optional<std::string>& out_flag, const TrainerConfig& cfg);

/// "<env>-<variant>-seed<seed>"
std::string run_name(const TrainerConfig& cfg);

/// Trains and writes the run directory. Returns the trainer for inspection.
Trainer train_to_directory(const TrainerConfig& cfg, const std::filesystem::path& dir);

std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path);

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;  // dotted key=value
};

struct AblationGrid {
  nlohmann::json base;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationVariant> variants;
};

/// Grid file: {"base": <config tree or path relative to the grid file>,
///             "seeds": [...], "variants": [{"name": ..., "overrides": {key: value}}]}
AblationGrid read_ablation_grid(const std::filesystem::path& path);

struct AblationRow {
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> violations;  // per seed, recounted from the episode logs
  std::size_t total_violations = 0;
  double final_return = 0.0;  // mean over seeds of the last window_return
  double final_cost = 0.0;
  std::string error;  // non-empty when any seed failed
};

/// Runs every variant for every seed under root/<variant>/seed<k>. Every
/// configuration is validated before any training starts.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const std::filesystem::path& root,
                                      std::size_t jobs = 1);

std::string ablation_table_markdown(const std::vector<AblationRow>& rows);
nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdmpo
