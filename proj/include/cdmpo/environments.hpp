#pragma once

// Desk-scale constrained MDPs.
//
// ChainCMDP: a tabular chain with exact policy-evaluation oracles. States are
// observed one-hot; the continuous action in [-1, 1] is binned into the
// discrete action set.
//
// HazardWorld: a point robot in a square arena steering toward a goal past
// circular hazards. Observations are the robot velocity followed by goal and
// hazard lidar rings. Reaching the goal relocates it; the episode only ends at
// the step limit.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdmpo/common.hpp"

namespace cdmpo {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  double cost = 0.0;  // 0 or 1
  std::vector<double> next_state;
  bool done = false;      // the episode ended with this step
  bool terminal = false;  // next_state has no continuation value (a true end, not a time limit)
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::size_t max_episode_steps() const = 0;
  virtual std::vector<double> reset() = 0;
  /// Action components outside [-1, 1] are clipped.
  virtual Transition step(std::span<const double> action) = 0;
};

// ----------------------------------------------------------------- ChainCMDP

struct ChainCmdpSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transitions;  // [s][a][s']
  std::vector<double> rewards;      // [s][a]
  std::vector<double> costs;        // [s][a]
  std::vector<std::uint8_t> terminal;
  double gamma = 0.9;
  std::size_t horizon = 100;
  std::size_t start_state = 0;

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transitions[(s * n_actions + a) * n_states + next];
  }
  double reward(std::size_t s, std::size_t a) const { return rewards[s * n_actions + a]; }
  double cost(std::size_t s, std::size_t a) const { return costs[s * n_actions + a]; }

  /// Throws ConfigError on inconsistent sizes, rows not summing to 1 within
  /// 1e-12, non-binary costs, or gamma outside [0, 1).
  void validate() const;
};

/// Eight-state bridge: states 0..5 offer a slow safe move (advance with
/// probability `p_safe`) or a fast move (always advance) that costs 1 inside
/// the hazard states 2..4. State 6 pays reward 1 and leads to the absorbing
/// terminal state 7.
ChainCmdpSpec default_chain_spec(double p_safe = 0.5, double gamma = 0.9, std::size_t horizon = 100);

struct ChainStep {
  std::size_t next_state = 0;
  double reward = 0.0;
  double cost = 0.0;
  bool terminal = false;
};

std::size_t chain_reset(const ChainCmdpSpec& spec);
ChainStep chain_step(const ChainCmdpSpec& spec, std::size_t state, std::size_t action, Rng& rng);

/// Policy given as an explicit action distribution per state, [s][a].
using TabularPolicy = std::vector<double>;

struct ChainValues {
  std::vector<double> q;  // [s][a]
  std::vector<double> c;  // [s][a]
};

/// Policy-evaluation fixed point of both Bellman equations (sup-norm 1e-12).
ChainValues chain_oracle(const ChainCmdpSpec& spec, const TabularPolicy& policy);

/// sum_a pi(a|s) * table(s, a)
double state_value(const ChainCmdpSpec& spec, std::span<const double> table, const TabularPolicy& policy,
                   std::size_t s);

struct DeterministicSearch {
  std::vector<std::size_t> actions;  // per state
  double value = 0.0;                // discounted return from the start state
  double cost = 0.0;                 // discounted cost from the start state
  bool found = false;
};

/// Exhaustive search over deterministic policies: best start-state return
/// among policies with discounted cost <= cost_limit. Pass +infinity for the
/// unconstrained optimum.
DeterministicSearch best_deterministic_policy(const ChainCmdpSpec& spec, double cost_limit);

/// Maps a continuous action component in [-1, 1] onto n_actions equal bins.
std::size_t discretize_action(double a, std::size_t n_actions);

class ChainEnv final : public Environment {
 public:
  ChainEnv(ChainCmdpSpec spec, std::uint64_t seed);
  std::string name() const override { return "chain"; }
  std::size_t observation_dim() const override { return spec_.n_states; }
  std::size_t action_dim() const override { return 1; }
  std::size_t max_episode_steps() const override { return spec_.horizon; }
  std::vector<double> reset() override;
  Transition step(std::span<const double> action) override;

  const ChainCmdpSpec& spec() const { return spec_; }
  std::size_t state() const { return state_; }
  std::vector<double> observe(std::size_t s) const;

 private:
  ChainCmdpSpec spec_;
  Rng rng_;
  std::size_t state_ = 0;
  std::size_t steps_ = 0;
};

// --------------------------------------------------------------- HazardWorld

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

struct HazardWorldConfig {
  double arena_half_width = 2.0;
  std::size_t n_hazards = 6;
  double hazard_radius = 0.25;
  double goal_radius = 0.3;
  std::size_t lidar_bins = 16;
  std::size_t max_steps = 400;
  double dt = 0.05;          // position change per step at unit speed
  double goal_bonus = 1.0;
  double hazard_lidar_range = 1.0;
  double spawn_half_width = 0.2;  // robot spawns uniformly in this square around the origin
  std::uint64_t seed = 0;

  /// Throws ConfigError for non-positive radii, dt or ranges, or fewer than 4 lidar bins.
  void validate() const;
};

struct HazardState {
  Vec2 robot;
  Vec2 velocity;  // last applied action after clipping (units of top speed)
  Vec2 goal;
  std::vector<Vec2> hazards;
  std::size_t steps = 0;
};

/// Lidar ring centred on `origin`: bin k covers world angles
/// [(k - 0.5) w, (k + 0.5) w) with w = 2 pi / bins, so bin 0 looks east.
/// Each bin holds max over its objects of max(0, 1 - dist / range).
std::vector<double> lidar(Vec2 origin, std::span<const Vec2> objects, std::size_t bins, double range);

/// Robot near the origin; goal and hazards uniform in the arena with no
/// goal/hazard overlap and the robot outside every hazard. Throws ConfigError
/// if placement needs more than 1000 retries.
HazardState hazardworld_reset(const HazardWorldConfig& cfg, Rng& rng);

std::vector<double> hazardworld_observation(const HazardWorldConfig& cfg, const HazardState& state);

/// Moves the robot by the clipped action, pays progress toward the goal (plus
/// the bonus on arrival, after which the goal relocates), and charges cost 1
/// when the robot ends inside a hazard.
Transition hazardworld_step(const HazardWorldConfig& cfg, HazardState& state, std::span<const double> action,
                            Rng& rng);

bool in_hazard(const HazardWorldConfig& cfg, const HazardState& state);

class HazardWorld final : public Environment {
 public:
  explicit HazardWorld(HazardWorldConfig cfg);
  std::string name() const override { return "hazard"; }
  std::size_t observation_dim() const override { return 2 + 2 * cfg_.lidar_bins; }
  std::size_t action_dim() const override { return 2; }
  std::size_t max_episode_steps() const override { return cfg_.max_steps; }
  std::vector<double> reset() override;
  Transition step(std::span<const double> action) override;

  const HazardWorldConfig& config() const { return cfg_; }
  const HazardState& state() const { return state_; }

 private:
  HazardWorldConfig cfg_;
  Rng rng_;
  HazardState state_;
};

}  // namespace cdmpo
