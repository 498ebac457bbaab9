#include "cdmpo/mpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cdmpo {
namespace {
constexpr double kHalfLogTwoPi = 0.91893853320467274178032973640562;
}  // namespace

void EStepBatch::validate() const {
  if (n_states == 0 || n_candidates == 0) throw std::invalid_argument("empty E-step batch");
  if (q_values.size() != n_states * n_candidates || c_values.size() != q_values.size()) {
    throw std::invalid_argument("E-step value arrays do not match the batch shape");
  }
}

void MStepConfig::validate() const {
  if (!(epsilon_e > 0.0) || !(epsilon_m > 0.0)) throw ConfigError("MPO KL budgets must be positive");
  if (!(eta_bounds.low > 0.0) || !(eta_bounds.high > eta_bounds.low)) {
    throw ConfigError("eta bounds must satisfy 0 < low < high");
  }
  if (!(kl_penalty_init > 0.0) || !(kl_penalty_rate > 1.0) ||
      !(kl_penalty_max >= kl_penalty_init)) throw ConfigError("invalid KL penalty settings");
  if (max_dual_iters == 0 || n_candidates == 0) throw ConfigError("MPO iteration and sample counts must be positive");
}

std::vector<double> estep_weights(const EStepBatch& batch, double eta) {
  if (!(eta > 0.0)) throw ConfigError("E-step temperature must be positive");
  batch.validate();
  const std::size_t k = batch.n_candidates;
  std::vector<double> w(batch.n_states * k);
  for (std::size_t s = 0; s < batch.n_states; ++s) {
    std::span<double> row(w.data() + s * k, k);
    for (std::size_t j = 0; j < k; ++j) row[j] = batch.advantage(s, j) / eta;
    softmax(row, row);
  }
  return w;
}

double dual_value(double eta, const EStepBatch& batch, double epsilon_e) {
  if (!(eta > 0.0)) throw ConfigError("dual temperature must be positive");
  batch.validate();
  const std::size_t k = batch.n_candidates;
  std::vector<double> scaled(k);
  double total = 0.0;
  for (std::size_t s = 0; s < batch.n_states; ++s) {
    for (std::size_t j = 0; j < k; ++j) scaled[j] = batch.advantage(s, j) / eta;
    total += log_sum_exp(scaled) - std::log(static_cast<double>(k));
  }
  return eta * total / static_cast<double>(batch.n_states) + eta * epsilon_e;
}

double minimize_dual(const EStepBatch& batch, double epsilon_e, EtaBounds bounds, std::size_t max_iters) {
  if (!(bounds.low > 0.0) || !(bounds.high > bounds.low)) throw ConfigError("invalid eta bounds");
  auto g = [&](double log_eta) {
    const double v = dual_value(std::exp(log_eta), batch, epsilon_e);
    if (!std::isfinite(v)) throw NumericalError("dual function is not finite");
    return v;
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(bounds.low);
  double b = std::log(bounds.high);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = g(c);
  double gd = g(d);
  for (std::size_t it = 0; it < max_iters && (b - a) > 1e-10; ++it) {
    if (gc <= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = g(d);
    }
  }
  double best_x = gc <= gd ? c : d;
  double best_g = std::min(gc, gd);
  for (double edge : {std::log(bounds.low), std::log(bounds.high)}) {
    const double ge = g(edge);
    if (ge < best_g) {
      best_g = ge;
      best_x = edge;
    }
  }
  return std::clamp(std::exp(best_x), bounds.low, bounds.high);
}

std::vector<double> weight_entropies(std::span<const double> weights, std::size_t n_candidates) {
  std::vector<double> out(weights.size() / n_candidates, 0.0);
  for (std::size_t s = 0; s < out.size(); ++s) {
    for (std::size_t j = 0; j < n_candidates; ++j) {
      const double w = weights[s * n_candidates + j];
      if (w > 0.0) out[s] -= w * std::log(w);
    }
  }
  return out;
}

MStepState make_mstep_state(const GaussianPolicy& policy, const MStepConfig& cfg) {
  cfg.validate();
  return {cfg.kl_penalty_init, make_optimizer(policy.net, cfg.optimizer)};
}

double mean_kl(const GaussianPolicy& old_policy, const GaussianPolicy& policy, const Matrix& states) {
  const HeadBatch a = policy_heads(old_policy, states);
  const HeadBatch b = policy_heads(policy, states);
  double total = 0.0;
  for (std::size_t r = 0; r < states.rows; ++r) {
    total += kl_gaussian(head_at(a, r), head_at(b, r));
  }
  return total / static_cast<double>(states.rows);
}

MStepObjective mstep_objective(const GaussianPolicy& policy, const GaussianPolicy& old_policy,
                               const Matrix& states, const Matrix& candidates, std::span<const double> weights,
                               double kl_penalty) {
  const std::size_t m = states.rows;
  if (m == 0 || candidates.rows % m != 0 || weights.size() != candidates.rows) {
    throw std::invalid_argument("M-step candidate layout does not match the states");
  }
  const std::size_t k = candidates.rows / m;
  const std::size_t dim = policy.action_dim;
  Tape tape;
  const HeadBatch heads = policy_heads(policy, states, &tape);
  const HeadBatch old = policy_heads(old_policy, states);
  Matrix gm(m, dim);
  Matrix gs(m, dim);
  MStepObjective out;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t row = s * k + j;
      const double w = weights[row];
      const auto u = candidates.row(row);
      double lp = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double sd = heads.scale(s, d);
        const double diff = u[d] - heads.mean(s, d);
        lp += -0.5 * diff * diff / (sd * sd) - std::log(sd) - kHalfLogTwoPi;
        gm(s, d) += inv_m * w * diff / (sd * sd);
        gs(s, d) += inv_m * w * (-1.0 / sd + diff * diff / (sd * sd * sd));
      }
      if (policy.squash) lp -= squash_log_correction(u);
      out.weighted_log_likelihood += inv_m * w * lp;
    }
    // KL(old || current) and its gradient with respect to the current mean and scale.
    for (std::size_t d = 0; d < dim; ++d) {
      const double sp = old.scale(s, d);
      const double sq = heads.scale(s, d);
      const double dm = old.mean(s, d) - heads.mean(s, d);
      out.kl += inv_m * (std::log(sq / sp) + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5);
      gm(s, d) -= kl_penalty * inv_m * (-dm / (sq * sq));
      gs(s, d) -= kl_penalty * inv_m * (1.0 / sq - (sp * sp + dm * dm) / (sq * sq * sq));
    }
  }
  out.value = out.weighted_log_likelihood - kl_penalty * out.kl;
  out.grads = policy_backward(policy, tape, heads, gm, gs);
  return out;
}

MStepDiagnostics mstep_update(GaussianPolicy& policy, const GaussianPolicy& old_policy, const Matrix& states,
                              const Matrix& candidates, std::span<const double> weights, const MStepConfig& cfg,
                              MStepState& state) {
  MStepObjective obj = mstep_objective(policy, old_policy, states, candidates, weights, state.kl_penalty);
  MStepDiagnostics diag;
  diag.objective = obj.value;
  diag.weighted_log_likelihood = obj.weighted_log_likelihood;

  const MlpParams before = policy.net;
  MlpGrads descent = obj.grads.zeros_like();
  accumulate(descent, obj.grads, -1.0);
  optimizer_step(state.optimizer, policy.net, descent);
  if (!policy.net.all_finite()) throw NumericalError("policy parameters became non-finite");

  diag.kl = mean_kl(old_policy, policy, states);
  if (diag.kl > 10.0 * cfg.epsilon_m) {
    policy.net = before;
    diag.aborted = true;
    diag.kl = mean_kl(old_policy, policy, states);
  }
  if (diag.kl > cfg.epsilon_m) {
    state.kl_penalty = std::min(state.kl_penalty * cfg.kl_penalty_rate, cfg.kl_penalty_max);
  } else {
    state.kl_penalty = std::max(state.kl_penalty / cfg.kl_penalty_rate, 1e-6);
  }
  diag.kl_penalty = state.kl_penalty;
  return diag;
}

}  // namespace cdmpo
