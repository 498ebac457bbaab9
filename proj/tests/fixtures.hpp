#pragma once

// Small configurations shared by the trainer, evaluation and CLI tests.

#include <nlohmann/json.hpp>

#include "cdmpo/config.hpp"

namespace cdmpo::testing {

inline nlohmann::json tiny_chain_tree(std::uint64_t seed = 1) {
  nlohmann::json tree = nlohmann::json::parse(R"({
    "env": "chain", "variant": "CDMPO", "total_steps": 400, "cost_limit": 1.0,
    "gamma": 0.9, "cost_signal": "discounted", "n_candidates": 4,
    "batch_size": 16, "buffer_capacity": 1000, "steps_per_iteration": 100,
    "gradient_steps_per_iteration": 3, "tau": 0.05,
    "network": {"policy_hidden": [8], "critic_hidden": [8], "policy_lr": 1e-3, "critic_lr": 1e-3},
    "q_grid": {"v_min": 0.0, "v_max": 1.0, "n_atoms": 11},
    "c_grid": {"v_min": 0.0, "v_max": 5.0, "n_atoms": 11},
    "cdcl": {"beta": 1.0, "policy_samples": 2},
    "mpo": {"n_candidates": 5},
    "chain": {"p_safe": 0.5, "horizon": 30}
  })");
  tree["seed"] = seed;
  return tree;
}

inline nlohmann::json tiny_hazard_tree(std::uint64_t seed = 1) {
  nlohmann::json tree = nlohmann::json::parse(R"({
    "env": "hazard", "variant": "CDMPO", "total_steps": 400, "cost_limit": 25.0,
    "gamma": 0.99, "n_candidates": 4, "batch_size": 16, "buffer_capacity": 1000,
    "steps_per_iteration": 100, "gradient_steps_per_iteration": 2,
    "network": {"policy_hidden": [8], "critic_hidden": [8]},
    "q_grid": {"n_atoms": 11}, "c_grid": {"n_atoms": 11},
    "cdcl": {"policy_samples": 2}, "mpo": {"n_candidates": 4},
    "hazard": {"max_steps": 100, "lidar_bins": 8}
  })");
  tree["seed"] = seed;
  return tree;
}

inline TrainerConfig tiny_chain(std::uint64_t seed = 1) { return config_from_json(tiny_chain_tree(seed)); }
inline TrainerConfig tiny_hazard(std::uint64_t seed = 1) { return config_from_json(tiny_hazard_tree(seed)); }

}  // namespace cdmpo::testing
