#pragma once

// Run configuration: every trainer hyperparameter plus environment selection,
// read from a JSON tree. Unknown keys are rejected and the required keys
// (env, variant, seed, total_steps, cost_limit) must be present.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdmpo/approximator.hpp"
#include "cdmpo/environments.hpp"
#include "cdmpo/mpo.hpp"
#include "cdmpo/wapid.hpp"

namespace cdmpo {

enum class Variant { kCdmpo, kCdmpoNoCdcl, kDmpoLag, kMpoLag };
enum class TargetActionMode { kConservative, kPlain };
enum class EvalActionMode { kConservative, kMean };
// Controller input: trailing mean of undiscounted or discounted episode cost totals.
enum class CostSignalKind { kEpisodic, kDiscounted };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

/// Atom grid settings; unset bounds are derived from the environment.
struct GridSpec {
  std::optional<double> v_min;
  std::optional<double> v_max;
  std::size_t n_atoms = 51;
};

struct NetworkConfig {
  std::vector<std::size_t> policy_hidden{256, 256};
  std::vector<std::size_t> critic_hidden{256, 256};
  Activation policy_activation = Activation::kTanh;
  Activation critic_activation = Activation::kRelu;
  double policy_lr = 3e-4;
  double critic_lr = 3e-4;
  double policy_init_scale = 1.0;
  double policy_scale_floor = 1e-3;
};

struct ChainSettings {
  double p_safe = 0.5;
  std::size_t horizon = 100;
};

struct ControllerConfig {
  WapidGains gains;
  std::size_t cost_window = 10;
  std::optional<double> fixed_lambda;  // pins lambda and disables the controller
};

struct TrainerConfig {
  std::string env = "chain";  // "chain" or "hazard"
  Variant variant = Variant::kCdmpo;
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 0;
  double cost_limit = 25.0;
  double gamma = 0.99;
  std::size_t n_candidates = 10;
  std::size_t batch_size = 256;
  std::size_t buffer_capacity = 100000;
  std::size_t steps_per_iteration = 400;
  std::uint64_t warmup_steps = 0;  // leading environment steps executed without the conservative filter
  std::size_t gradient_steps_per_iteration = 100;
  std::size_t eval_interval = 0;  // iterations between evaluations; 0 disables
  std::size_t eval_episodes = 10;
  std::size_t checkpoint_interval = 0;  // iterations between checkpoints; 0 = final only
  double tau = 0.005;
  TargetActionMode target_action_mode = TargetActionMode::kConservative;
  EvalActionMode eval_action_mode = EvalActionMode::kConservative;
  CostSignalKind cost_signal = CostSignalKind::kEpisodic;
  std::string output_dir;

  NetworkConfig network;
  double beta = 1.0;
  std::size_t cdcl_policy_samples = 8;
  GridSpec q_grid;
  GridSpec c_grid;
  MStepConfig mpo;
  ControllerConfig controller;
  ChainSettings chain;
  HazardWorldConfig hazard;

  /// Throws ConfigError on any meaningless value.
  void validate() const;

  // Variant-resolved settings.
  bool distributional() const { return variant != Variant::kMpoLag; }
  std::size_t effective_candidates() const;
  double effective_beta() const;
};

TrainerConfig config_from_json(const nlohmann::json& tree);
nlohmann::json config_to_json(const TrainerConfig& cfg);

/// Applies "dotted.key=value"; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Reads a JSON file (comments allowed). Throws IoError when unreadable or unparsable.
nlohmann::json read_json_file(const std::filesystem::path& path);

TrainerConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

// Environment construction from a validated config.
std::unique_ptr<Environment> make_environment(const TrainerConfig& cfg, std::uint64_t seed);
ChainCmdpSpec chain_spec_for(const TrainerConfig& cfg);

/// Grids with unset bounds filled in from the environment.
AtomGrid resolve_q_grid(const TrainerConfig& cfg);
AtomGrid resolve_c_grid(const TrainerConfig& cfg);

}  // namespace cdmpo
