#pragma once

// The training loop: conservative rollouts into replay, then per iteration a
// block of gradient steps (Q TD, C CDCL, E-step, M-step, target sync) and one
// Lagrange-multiplier update from the trailing episodic cost.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdmpo/checkpoint.hpp"
#include "cdmpo/config.hpp"
#include "cdmpo/critics.hpp"
#include "cdmpo/mpo.hpp"
#include "cdmpo/policy.hpp"
#include "cdmpo/replay.hpp"
#include "cdmpo/wapid.hpp"

namespace cdmpo {

inline constexpr int kMetricsSchemaVersion = 1;

struct EpisodeRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;       // run seed (training) or evaluation seed
  std::uint64_t env_steps = 0;  // total environment steps when the episode ended
  std::size_t length = 0;
  double ret = 0.0;
  double cost = 0.0;             // undiscounted total
  double discounted_cost = 0.0;  // sum of gamma^t c_t
  bool violation = false;        // cost > d
};

nlohmann::json to_json(const EpisodeRecord& e);
EpisodeRecord episode_from_json(const nlohmann::json& j);

/// Number of episodes whose total cost exceeds d.
std::size_t count_violations(std::span<const EpisodeRecord> log, double d);

/// Everything one gradient step consumes besides the networks.
struct StepInputs {
  TransitionBatch batch;
  Matrix next_actions;    // one per batch row, used for both critic targets
  Matrix cdcl_actions;    // cdcl_policy_samples rows per batch state
  ActionSet candidates;   // K rows per batch state from the iteration's old policy
};

struct StepResult {
  double q_loss = 0.0;
  double c_loss = 0.0;
  double cdcl_regularizer = 0.0;
  double eta = 0.0;
  double mean_weight_entropy = 0.0;
  double max_weight_entropy = 0.0;
  MStepDiagnostics mstep;
  bool c_updated = false;
};

struct IterationMetrics {
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  std::optional<double> mean_return;  // episodes finished during this iteration
  std::optional<double> mean_cost;
  std::optional<double> window_return;  // trailing cost_window episodes
  std::optional<double> window_cost;
  double cost_signal = 0.0;  // J_C fed to the controller
  WapidTrace controller;
  bool controller_updated = false;
  bool skipped = false;  // replay underfilled
  std::size_t gradient_steps = 0;
  double q_loss = 0.0;
  double c_loss = 0.0;
  double cdcl_regularizer = 0.0;
  double eta = 0.0;
  double mean_weight_entropy = 0.0;
  double max_weight_entropy = 0.0;
  double mstep_kl = 0.0;
  double kl_penalty = 0.0;
  std::size_t mstep_aborts = 0;
  std::size_t violations = 0;  // training episodes so far
  std::optional<nlohmann::json> evaluation;
};

nlohmann::json to_json(const IterationMetrics& m, double cost_limit);

class Trainer {
 public:
  explicit Trainer(TrainerConfig cfg);

  /// Restores networks and controller state written by make_checkpoint.
  static Trainer from_checkpoint(const Checkpoint& ckpt);

  /// One environment step with conservative exploration; the executed
  /// transition is appended to replay.
  Transition rollout_step();

  /// Rollout block, then (if replay holds a batch) gradient steps and the
  /// multiplier update.
  IterationMetrics iteration();

  /// Draws the replay sample and the policy samples for one gradient step.
  /// Candidates are drawn from `old_policy`.
  StepInputs sample_step_inputs(const GaussianPolicy& old_policy);

  /// Critic, E-step and M-step updates plus target sync for one step.
  StepResult gradient_step(const StepInputs& in, const GaussianPolicy& old_policy);

  /// Gradient steps and the multiplier update only.
  IterationMetrics learner_iteration();

  /// Trains until total_steps. Callbacks see each metrics record and each
  /// completed training episode, in order.
  void run(const std::function<void(const IterationMetrics&)>& on_iteration,
           const std::function<void(const EpisodeRecord&)>& on_episode = {});

  Checkpoint make_checkpoint() const;

  const TrainerConfig& config() const { return cfg_; }
  const GaussianPolicy& policy() const { return policy_; }
  GaussianPolicy& policy() { return policy_; }
  const Critic& q_critic() const { return q_critic_; }
  const Critic& c_critic() const { return c_critic_; }
  Critic& q_critic() { return q_critic_; }
  Critic& c_critic() { return c_critic_; }
  const WapidState& controller() const { return controller_; }
  double lambda() const;
  const MStepState& mstep_state() const { return mstep_; }
  const ReplayBuffer& replay() const { return *replay_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t iterations() const { return iteration_; }
  Environment& environment() { return *env_; }

  /// True when the cost critic influences behaviour or policy updates.
  bool cost_critic_active() const;

 private:
  void finish_episode();
  double controller_input() const;

  TrainerConfig cfg_;
  MStepConfig mpo_;
  std::unique_ptr<Environment> env_;
  GaussianPolicy policy_;
  Critic q_critic_;
  Critic c_critic_;
  OptimizerState q_opt_;
  OptimizerState c_opt_;
  MStepState mstep_;
  WapidState controller_;
  std::unique_ptr<ReplayBuffer> replay_;
  Rng actor_rng_;
  Rng learner_rng_;

  std::vector<double> obs_;
  EpisodeRecord current_;
  double discount_ = 1.0;
  std::vector<EpisodeRecord> episodes_;
  std::size_t episodes_reported_ = 0;
  std::uint64_t env_steps_ = 0;
  std::uint64_t iteration_ = 0;
};

}  // namespace cdmpo
