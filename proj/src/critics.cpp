#include "cdmpo/critics.hpp"

#include <cmath>

namespace cdmpo {

DistributionalCritic make_distributional_critic(std::size_t state_dim, std::size_t action_dim,
                                                std::span<const std::size_t> hidden, AtomGrid grid, Rng& rng,
                                                Activation hidden_activation) {
  DistributionalCritic c;
  c.net = make_mlp(state_dim + action_dim, hidden, grid.n_atoms, hidden_activation, rng);
  c.target_net = c.net;
  c.grid = std::make_shared<const AtomGrid>(std::move(grid));
  return c;
}

ScalarCritic make_scalar_critic(std::size_t state_dim, std::size_t action_dim,
                                std::span<const std::size_t> hidden, Rng& rng, Activation hidden_activation) {
  ScalarCritic c;
  c.net = make_mlp(state_dim + action_dim, hidden, 1, hidden_activation, rng);
  c.target_net = c.net;
  return c;
}

CategoricalDistribution predict_distribution(const DistributionalCritic& critic, std::span<const double> state,
                                             std::span<const double> action, bool use_target) {
  Matrix probs = predict_probs(critic, Matrix::from_row(state), Matrix::from_row(action), use_target);
  return {critic.grid, std::move(probs.data)};
}

Matrix predict_probs(const DistributionalCritic& critic, const Matrix& states, const Matrix& actions,
                     bool use_target) {
  Matrix logits = forward(use_target ? critic.target_net : critic.net, hconcat(states, actions));
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    softmax(row, row);
  }
  return logits;
}

std::vector<double> expected_values(const DistributionalCritic& critic, const Matrix& states,
                                    const Matrix& actions, bool use_target) {
  const Matrix probs = predict_probs(critic, states, actions, use_target);
  std::vector<double> out(probs.rows);
  for (std::size_t r = 0; r < probs.rows; ++r) out[r] = expectation(*critic.grid, probs.row(r));
  return out;
}

std::vector<double> expected_values(const ScalarCritic& critic, const Matrix& states, const Matrix& actions,
                                    bool use_target) {
  return forward(use_target ? critic.target_net : critic.net, hconcat(states, actions)).data;
}

std::vector<double> expected_values(const Critic& critic, const Matrix& states, const Matrix& actions,
                                    bool use_target) {
  return std::visit([&](const auto& c) { return expected_values(c, states, actions, use_target); }, critic);
}

namespace {

double signal_of(const TransitionBatch& batch, std::size_t i, SignalKind kind) {
  return kind == SignalKind::kReward ? batch.rewards[i] : batch.costs[i];
}

// Cross-entropy TD term: returns the mean loss and writes d(mean loss)/d logits
// (scaled by `weight`) into grad_logits.
double td_term(const DistributionalCritic& critic, const TransitionBatch& batch, const Matrix& next_actions,
               SignalKind kind, double gamma, const Matrix& online_logits, Matrix& grad_logits, double weight) {
  const std::size_t n = batch.size();
  const Matrix next_probs = predict_probs(critic, batch.next_states, next_actions, /*use_target=*/true);
  const AtomGrid& grid = *critic.grid;
  std::vector<double> target(grid.n_atoms);
  std::vector<double> grad(grid.n_atoms);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = batch.terminal[i] ? 0.0 : gamma;
    project_shifted_into(grid, signal_of(batch, i, kind), g, next_probs.row(i), target);
    total += cross_entropy_into(target, online_logits.row(i), grad);
    auto dst = grad_logits.row(i);
    for (std::size_t k = 0; k < grid.n_atoms; ++k) dst[k] += weight * inv_n * grad[k];
  }
  return total * inv_n;
}

// Adds scale * d E[Z] / d logits for every row, returning the mean expectation.
double expectation_term(const AtomGrid& grid, const Matrix& logits, Matrix& grad_logits, double scale) {
  std::vector<double> probs(grid.n_atoms);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    softmax(logits.row(r), probs);
    const double e = expectation(grid, probs);
    total += e;
    auto dst = grad_logits.row(r);
    for (std::size_t k = 0; k < grid.n_atoms; ++k) dst[k] += scale * inv_n * probs[k] * (grid.atoms[k] - e);
  }
  return total * inv_n;
}

}  // namespace

CriticLoss td_loss(const DistributionalCritic& critic, const TransitionBatch& batch, const Matrix& next_actions,
                   SignalKind kind, double gamma) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  Tape tape;
  const Matrix logits = forward(critic.net, hconcat(batch.states, batch.actions), &tape);
  Matrix grad_logits(logits.rows, logits.cols);
  CriticLoss out;
  out.loss = td_term(critic, batch, next_actions, kind, gamma, logits, grad_logits, 1.0);
  out.grads = backward(critic.net, tape, grad_logits);
  return out;
}

CdclLoss cdcl_loss(const DistributionalCritic& critic, const TransitionBatch& batch, const Matrix& policy_actions,
                   const CdclConfig& cfg, double gamma, const Matrix& next_actions) {
  if (cfg.beta < 0.0) throw ConfigError("CDCL beta must be non-negative");
  if (cfg.n_policy_samples == 0 || policy_actions.rows != batch.size() * cfg.n_policy_samples) {
    throw std::invalid_argument("policy action sample count does not match the batch");
  }
  CdclLoss out;
  Tape tape;
  const Matrix logits = forward(critic.net, hconcat(batch.states, batch.actions), &tape);
  Matrix grad_logits(logits.rows, logits.cols);
  out.td = td_term(critic, batch, next_actions, SignalKind::kCost, gamma, logits, grad_logits, 1.0);
  if (cfg.beta == 0.0) {
    out.grads = backward(critic.net, tape, grad_logits);
    out.loss = out.td;
    return out;
  }

  // The buffer term shares the online logits at (s, a_buffer) with the TD term.
  const double buffer_mean = expectation_term(*critic.grid, logits, grad_logits, cfg.beta);
  out.grads = backward(critic.net, tape, grad_logits);

  Tape policy_tape;
  const Matrix policy_logits = forward(
      critic.net, hconcat(repeat_rows(batch.states, cfg.n_policy_samples), policy_actions), &policy_tape);
  Matrix policy_grad(policy_logits.rows, policy_logits.cols);
  const double policy_mean = expectation_term(*critic.grid, policy_logits, policy_grad, -cfg.beta);
  accumulate(out.grads, backward(critic.net, policy_tape, policy_grad));

  out.regularizer = buffer_mean - policy_mean;
  out.loss = cfg.beta * out.regularizer + out.td;
  return out;
}

CriticLoss scalar_td_loss(const ScalarCritic& critic, const TransitionBatch& batch, const Matrix& next_actions,
                          SignalKind kind, double gamma) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("empty batch");
  const std::vector<double> next_values = expected_values(critic, batch.next_states, next_actions, true);
  Tape tape;
  const Matrix pred = forward(critic.net, hconcat(batch.states, batch.actions), &tape);
  Matrix grad(n, 1);
  CriticLoss out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = batch.terminal[i] ? 0.0 : gamma;
    const double err = pred(i, 0) - (signal_of(batch, i, kind) + g * next_values[i]);
    out.loss += 0.5 * err * err * inv_n;
    grad(i, 0) = err * inv_n;
  }
  out.grads = backward(critic.net, tape, grad);
  return out;
}

}  // namespace cdmpo
