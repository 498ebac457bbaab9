#pragma once

// Distributional Q/C critics over (state, action), their cross-entropy TD
// loss, and the conservative regularised loss used for the cost critic.
// A scalar critic with squared-error TD is provided for the non-distributional
// ablation.

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "cdmpo/approximator.hpp"
#include "cdmpo/distribution.hpp"

namespace cdmpo {

struct DistributionalCritic {
  MlpParams net;         // (state ++ action) -> n_atoms logits
  MlpParams target_net;  // same shape as net
  std::shared_ptr<const AtomGrid> grid;
};

struct ScalarCritic {
  MlpParams net;  // (state ++ action) -> 1
  MlpParams target_net;
};

using Critic = std::variant<DistributionalCritic, ScalarCritic>;

DistributionalCritic make_distributional_critic(std::size_t state_dim, std::size_t action_dim,
                                                std::span<const std::size_t> hidden, AtomGrid grid, Rng& rng,
                                                Activation hidden_activation = Activation::kRelu);

ScalarCritic make_scalar_critic(std::size_t state_dim, std::size_t action_dim,
                                std::span<const std::size_t> hidden, Rng& rng,
                                Activation hidden_activation = Activation::kRelu);

/// Column-stacked replay sample.
struct TransitionBatch {
  Matrix states;
  Matrix actions;
  std::vector<double> rewards;
  std::vector<double> costs;
  Matrix next_states;
  std::vector<std::uint8_t> terminal;  // 1 when the next state has no continuation value

  std::size_t size() const { return states.rows; }
};

enum class SignalKind { kReward, kCost };

CategoricalDistribution predict_distribution(const DistributionalCritic& critic, std::span<const double> state,
                                             std::span<const double> action, bool use_target = false);

/// Row-wise softmax probabilities for a batch of (state, action) pairs.
Matrix predict_probs(const DistributionalCritic& critic, const Matrix& states, const Matrix& actions,
                     bool use_target = false);

std::vector<double> expected_values(const DistributionalCritic& critic, const Matrix& states,
                                    const Matrix& actions, bool use_target = false);
std::vector<double> expected_values(const ScalarCritic& critic, const Matrix& states, const Matrix& actions,
                                    bool use_target = false);
std::vector<double> expected_values(const Critic& critic, const Matrix& states, const Matrix& actions,
                                    bool use_target = false);

struct CriticLoss {
  double loss = 0.0;
  MlpGrads grads;
};

/// Mean cross-entropy between the projected Bellman target (target net at
/// (s', a')) and the online prediction at (s, a). Terminal transitions use
/// the raw signal alone.
CriticLoss td_loss(const DistributionalCritic& critic, const TransitionBatch& batch, const Matrix& next_actions,
                   SignalKind kind, double gamma);

struct CdclConfig {
  double beta = 1.0;
  std::size_t n_policy_samples = 8;
};

struct CdclLoss {
  double loss = 0.0;
  double regularizer = 0.0;  // mean E[C(s, a_buffer)] - mean E[C(s, a_policy)], before beta
  double td = 0.0;
  MlpGrads grads;
};

/// beta * (mean E[C] on buffer actions - mean E[C] on policy samples) + td_loss.
/// `policy_actions` holds n_policy_samples consecutive rows per batch state.
CdclLoss cdcl_loss(const DistributionalCritic& critic, const TransitionBatch& batch, const Matrix& policy_actions,
                   const CdclConfig& cfg, double gamma, const Matrix& next_actions);

/// Mean 0.5 * (signal + gamma * Q_target(s', a') - Q(s, a))^2.
CriticLoss scalar_td_loss(const ScalarCritic& critic, const TransitionBatch& batch, const Matrix& next_actions,
                          SignalKind kind, double gamma);

}  // namespace cdmpo
