#pragma once

// Constrained MPO policy improvement.
//
// E-step: per-state non-parametric weights
//   q(a|s) ∝ exp((Q(s,a) - lambda * (C(s,a) - d)) / eta)
// over candidates sampled from the current policy, with the temperature eta
// chosen by minimising the convex dual
//   g(eta) = eta * mean_s log mean_a exp((Q - lambda (C - d)) / eta) + eta * epsilon_e.
//
// M-step: weighted maximum likelihood toward those weights, with an adaptive
// KL penalty keeping mean KL(old || new) near epsilon_m.

#include <span>
#include <vector>

#include "cdmpo/approximator.hpp"
#include "cdmpo/policy.hpp"

namespace cdmpo {

struct EStepBatch {
  std::size_t n_states = 0;
  std::size_t n_candidates = 0;
  std::vector<double> q_values;  // n_states x n_candidates, row-major
  std::vector<double> c_values;  // same layout
  double lambda = 0.0;
  double cost_limit = 0.0;

  double advantage(std::size_t s, std::size_t k) const {
    const std::size_t i = s * n_candidates + k;
    return q_values[i] - lambda * (c_values[i] - cost_limit);
  }
  void validate() const;
};

struct EtaBounds {
  double low = 1e-3;
  double high = 1e3;
};

struct MStepConfig {
  double epsilon_e = 0.1;
  double epsilon_m = 0.01;
  double kl_penalty_init = 1.0;
  double kl_penalty_rate = 1.5;  // multiplicative adaptation per update
  double kl_penalty_max = 100.0;
  std::size_t max_dual_iters = 100;
  EtaBounds eta_bounds;
  std::size_t n_candidates = 20;  // K, E-step samples per state
  AdamConfig optimizer;

  void validate() const;
};

/// Normalised weights, same layout as the batch values. Throws ConfigError when eta <= 0.
std::vector<double> estep_weights(const EStepBatch& batch, double eta);

double dual_value(double eta, const EStepBatch& batch, double epsilon_e);

/// Golden-section search on log(eta) over the bounds; the bounds themselves
/// are also compared so a monotone dual returns the minimising endpoint.
/// Throws NumericalError if the dual evaluates to a non-finite value.
double minimize_dual(const EStepBatch& batch, double epsilon_e, EtaBounds bounds, std::size_t max_iters);

/// Entropy of each state's weight row.
std::vector<double> weight_entropies(std::span<const double> weights, std::size_t n_candidates);

struct MStepState {
  double kl_penalty = 1.0;
  OptimizerState optimizer;
};

MStepState make_mstep_state(const GaussianPolicy& policy, const MStepConfig& cfg);

struct MStepObjective {
  double value = 0.0;                    // weighted_log_likelihood - kl_penalty * kl
  double weighted_log_likelihood = 0.0;  // mean_s sum_k w log pi(a|s)
  double kl = 0.0;                       // mean_s KL(old || current)
  MlpGrads grads;                        // gradient of value (ascent direction)
};

/// `candidates` holds pre-squash draws, n_candidates consecutive rows per state.
MStepObjective mstep_objective(const GaussianPolicy& policy, const GaussianPolicy& old_policy,
                               const Matrix& states, const Matrix& candidates, std::span<const double> weights,
                               double kl_penalty);

double mean_kl(const GaussianPolicy& old_policy, const GaussianPolicy& policy, const Matrix& states);

struct MStepDiagnostics {
  double objective = 0.0;
  double weighted_log_likelihood = 0.0;
  double kl = 0.0;  // after the update (or of the kept parameters when aborted)
  double kl_penalty = 0.0;
  bool aborted = false;
};

/// One ascent step on the penalised objective. Reverts the step when the
/// resulting KL exceeds 10 * epsilon_m.
MStepDiagnostics mstep_update(GaussianPolicy& policy, const GaussianPolicy& old_policy, const Matrix& states,
                              const Matrix& candidates, std::span<const double> weights, const MStepConfig& cfg,
                              MStepState& state);

}  // namespace cdmpo
