#pragma once

// Frozen-parameter evaluation and the exact action distribution of a
// conservative policy on the tabular chain.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdmpo/config.hpp"
#include "cdmpo/environments.hpp"
#include "cdmpo/policy.hpp"
#include "cdmpo/trainer.hpp"

namespace cdmpo {

/// Draws n candidates and executes the one with the smallest predicted C
/// expectation. With n = 1 the critic is not consulted.
std::vector<double> choose_action(const GaussianPolicy& policy, const Critic& c_critic, std::span<const double> obs,
                                  std::size_t n, Rng& rng);

/// Batched conservative choice, one action per row of `states`.
Matrix choose_actions(const GaussianPolicy& policy, const Critic& c_critic, const Matrix& states, std::size_t n,
                      Rng& rng);

struct EvalSummary {
  std::vector<EpisodeRecord> episodes;
  double mean_return = 0.0;
  double median_return = 0.0;
  double mean_cost = 0.0;
  double median_cost = 0.0;
  double violation_rate = 0.0;  // fraction of episodes with cost > d
};

/// Statistics of a non-empty episode log.
EvalSummary summarize(std::vector<EpisodeRecord> episodes, double d);

/// Summary fields only (no per-episode records).
nlohmann::json summary_json(const EvalSummary& s);

using EnvFactory = std::function<std::unique_ptr<Environment>(std::uint64_t seed)>;

/// Runs `episodes` episodes without touching any replay. The action rule
/// follows cfg.eval_action_mode. Throws std::invalid_argument for episodes < 1.
EvalSummary evaluate(const GaussianPolicy& policy, const Critic& c_critic, const EnvFactory& make_env,
                     std::size_t episodes, const TrainerConfig& cfg, std::uint64_t seed);

/// Discrete action distribution per chain state induced by the policy and its
/// action rule. For the conservative rule the distribution of the minimum of n
/// independent draws is computed by quadrature over the pre-squash Gaussian
/// (`points` nodes spanning +-8 standard deviations). Requires action_dim 1.
TabularPolicy chain_policy_table(const GaussianPolicy& policy, const Critic& c_critic, const ChainCmdpSpec& spec,
                                 std::size_t n, EvalActionMode mode, std::size_t points = 4001);

}  // namespace cdmpo
