#pragma once

// Diagonal Gaussian policy with tanh squashing onto the [-1, 1] action box,
// candidate-set sampling, and conservative (minimum predicted cost) action
// selection.

#include <span>
#include <vector>

#include "cdmpo/approximator.hpp"
#include "cdmpo/critics.hpp"

namespace cdmpo {

struct GaussianPolicy {
  MlpParams net;  // state -> [mean (action_dim), pre-scale (action_dim)]
  std::size_t action_dim = 1;
  double scale_floor = 1e-3;
  bool squash = true;  // tanh onto the box; otherwise samples are clipped
};

/// `initial_scale` sets the output bias of the pre-scale head so that a fresh
/// policy has roughly this standard deviation everywhere.
GaussianPolicy make_gaussian_policy(std::size_t state_dim, std::size_t action_dim,
                                    std::span<const std::size_t> hidden, Rng& rng,
                                    Activation hidden_activation = Activation::kTanh, double initial_scale = 1.0,
                                    double scale_floor = 1e-3, bool squash = true);

/// Pre-squash Gaussian parameters at one state.
struct GaussianHead {
  std::vector<double> mean;
  std::vector<double> scale;
};

/// Batched heads; rows follow the input states.
struct HeadBatch {
  Matrix mean;
  Matrix pre_scale;
  Matrix scale;
};

GaussianHead policy_head(const GaussianPolicy& policy, std::span<const double> state);
GaussianHead head_at(const HeadBatch& heads, std::size_t row);
HeadBatch policy_heads(const GaussianPolicy& policy, const Matrix& states, Tape* tape = nullptr);

/// Back-propagates d loss / d mean and d loss / d scale to the network parameters.
MlpGrads policy_backward(const GaussianPolicy& policy, const Tape& tape, const HeadBatch& heads,
                         const Matrix& grad_mean, const Matrix& grad_scale);

double softplus(double x);
double sigmoid(double x);

/// Candidate actions together with their pre-squash draws.
struct ActionSet {
  Matrix actions;     // rows are actions in the box
  Matrix pre_squash;  // Gaussian draws before the squash
};

/// n independent draws at one state. Throws std::invalid_argument for n < 1.
ActionSet sample_action_set(const GaussianPolicy& policy, std::span<const double> state, std::size_t n, Rng& rng);

/// n draws for every state; rows [i*n, (i+1)*n) belong to state i.
ActionSet sample_action_sets(const GaussianPolicy& policy, const Matrix& states, std::size_t n, Rng& rng);

/// Squash (or clip) applied to a raw Gaussian draw.
double to_box(const GaussianPolicy& policy, double pre_squash);

/// Mean action pushed through the squash.
std::vector<double> mean_action(const GaussianPolicy& policy, std::span<const double> state);

/// log N(u; mean, scale) summed over dimensions.
double gaussian_log_density(const GaussianHead& head, std::span<const double> pre_squash);

/// sum_j log(1 - tanh(u_j)^2), the change-of-variables term of the squash.
double squash_log_correction(std::span<const double> pre_squash);

/// Log-density of a squashed (or raw, when squash is off) action. Squashed
/// actions are mapped back with atanh after clamping to |a| <= 1 - 1e-9.
double log_prob(const GaussianPolicy& policy, std::span<const double> state, std::span<const double> action);

struct LogProbGrad {
  double value = 0.0;
  MlpGrads grads;
};

LogProbGrad log_prob_with_grad(const GaussianPolicy& policy, std::span<const double> state,
                               std::span<const double> action);

/// Closed-form KL(p || q) between diagonal Gaussians.
double kl_gaussian(const GaussianHead& p, const GaussianHead& q);

struct Selection {
  std::size_t index = 0;
  double value = 0.0;  // predicted C expectation of the chosen candidate
};

/// Index of the smallest value; ties go to the lowest index.
Selection argmin_lowest_index(std::span<const double> values);

/// Picks the candidate (row) with the smallest predicted C expectation.
/// Throws std::invalid_argument when there are no candidates.
Selection conservative_select(const DistributionalCritic& c_critic, std::span<const double> state,
                              const Matrix& candidates);
Selection conservative_select(const Critic& c_critic, std::span<const double> state, const Matrix& candidates);

}  // namespace cdmpo
