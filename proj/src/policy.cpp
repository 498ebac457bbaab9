#include "cdmpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cdmpo {
namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Matrix to_matrix_rows(std::span<const double> state) { return Matrix::from_row(state); }

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

GaussianPolicy make_gaussian_policy(std::size_t state_dim, std::size_t action_dim,
                                    std::span<const std::size_t> hidden, Rng& rng, Activation hidden_activation,
                                    double initial_scale, double scale_floor, bool squash) {
  if (action_dim == 0) throw ConfigError("policy action dimension must be positive");
  if (!(scale_floor > 0.0)) throw ConfigError("policy scale floor must be positive");
  if (!(initial_scale > scale_floor)) throw ConfigError("initial policy scale must exceed the floor");
  GaussianPolicy p;
  p.net = make_mlp(state_dim, hidden, 2 * action_dim, hidden_activation, rng);
  p.action_dim = action_dim;
  p.scale_floor = scale_floor;
  p.squash = squash;
  auto& head = p.net.layers.back();
  // Small output weights keep the initial mean near zero and the scale near initial_scale.
  for (double& w : head.weight) w *= 0.1;
  for (std::size_t j = 0; j < action_dim; ++j) head.bias[action_dim + j] = inverse_softplus(initial_scale - scale_floor);
  return p;
}

HeadBatch policy_heads(const GaussianPolicy& policy, const Matrix& states, Tape* tape) {
  const Matrix out = forward(policy.net, states, tape);
  const std::size_t a = policy.action_dim;
  HeadBatch h{Matrix(states.rows, a), Matrix(states.rows, a), Matrix(states.rows, a)};
  for (std::size_t r = 0; r < states.rows; ++r) {
    for (std::size_t j = 0; j < a; ++j) {
      h.mean(r, j) = out(r, j);
      h.pre_scale(r, j) = out(r, a + j);
      h.scale(r, j) = softplus(out(r, a + j)) + policy.scale_floor;
    }
  }
  return h;
}

GaussianHead policy_head(const GaussianPolicy& policy, std::span<const double> state) {
  HeadBatch h = policy_heads(policy, to_matrix_rows(state));
  return {std::move(h.mean.data), std::move(h.scale.data)};
}

GaussianHead head_at(const HeadBatch& heads, std::size_t row) {
  const auto m = heads.mean.row(row);
  const auto sd = heads.scale.row(row);
  return {{m.begin(), m.end()}, {sd.begin(), sd.end()}};
}

MlpGrads policy_backward(const GaussianPolicy& policy, const Tape& tape, const HeadBatch& heads,
                         const Matrix& grad_mean, const Matrix& grad_scale) {
  const std::size_t a = policy.action_dim;
  Matrix grad_out(heads.mean.rows, 2 * a);
  for (std::size_t r = 0; r < heads.mean.rows; ++r) {
    for (std::size_t j = 0; j < a; ++j) {
      grad_out(r, j) = grad_mean(r, j);
      grad_out(r, a + j) = grad_scale(r, j) * sigmoid(heads.pre_scale(r, j));
    }
  }
  return backward(policy.net, tape, grad_out);
}

double to_box(const GaussianPolicy& policy, double pre_squash) {
  return policy.squash ? std::tanh(pre_squash) : std::clamp(pre_squash, -1.0, 1.0);
}

std::vector<double> mean_action(const GaussianPolicy& policy, std::span<const double> state) {
  GaussianHead h = policy_head(policy, state);
  for (double& m : h.mean) m = to_box(policy, m);
  return h.mean;
}

ActionSet sample_action_sets(const GaussianPolicy& policy, const Matrix& states, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("action set size must be at least 1");
  const HeadBatch heads = policy_heads(policy, states);
  const std::size_t a = policy.action_dim;
  ActionSet set{Matrix(states.rows * n, a), Matrix(states.rows * n, a)};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < states.rows; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = s * n + k;
      for (std::size_t j = 0; j < a; ++j) {
        const double u = heads.mean(s, j) + heads.scale(s, j) * normal(rng);
        set.pre_squash(row, j) = u;
        set.actions(row, j) = to_box(policy, u);
      }
    }
  }
  return set;
}

ActionSet sample_action_set(const GaussianPolicy& policy, std::span<const double> state, std::size_t n, Rng& rng) {
  return sample_action_sets(policy, to_matrix_rows(state), n, rng);
}

double gaussian_log_density(const GaussianHead& head, std::span<const double> pre_squash) {
  double lp = 0.0;
  for (std::size_t j = 0; j < pre_squash.size(); ++j) {
    const double z = (pre_squash[j] - head.mean[j]) / head.scale[j];
    lp += -0.5 * z * z - std::log(head.scale[j]) - 0.5 * kLogTwoPi;
  }
  return lp;
}

double squash_log_correction(std::span<const double> pre_squash) {
  // log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
  double acc = 0.0;
  for (double u : pre_squash) acc += 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
  return acc;
}

namespace {

std::vector<double> unsquash(const GaussianPolicy& policy, std::span<const double> action) {
  std::vector<double> u(action.begin(), action.end());
  if (policy.squash) {
    constexpr double kEdge = 1.0 - 1e-9;
    for (double& v : u) v = std::atanh(std::clamp(v, -kEdge, kEdge));
  }
  return u;
}

}  // namespace

double log_prob(const GaussianPolicy& policy, std::span<const double> state, std::span<const double> action) {
  const std::vector<double> u = unsquash(policy, action);
  const GaussianHead head = policy_head(policy, state);
  double lp = gaussian_log_density(head, u);
  if (policy.squash) lp -= squash_log_correction(u);
  return lp;
}

LogProbGrad log_prob_with_grad(const GaussianPolicy& policy, std::span<const double> state,
                               std::span<const double> action) {
  const std::vector<double> u = unsquash(policy, action);
  Tape tape;
  const HeadBatch heads = policy_heads(policy, to_matrix_rows(state), &tape);
  const GaussianHead head{heads.mean.data, heads.scale.data};
  LogProbGrad out;
  out.value = gaussian_log_density(head, u) - (policy.squash ? squash_log_correction(u) : 0.0);
  Matrix gm(1, policy.action_dim);
  Matrix gs(1, policy.action_dim);
  for (std::size_t j = 0; j < policy.action_dim; ++j) {
    const double sd = head.scale[j];
    const double diff = u[j] - head.mean[j];
    gm(0, j) = diff / (sd * sd);
    gs(0, j) = -1.0 / sd + diff * diff / (sd * sd * sd);
  }
  out.grads = policy_backward(policy, tape, heads, gm, gs);
  return out;
}

double kl_gaussian(const GaussianHead& p, const GaussianHead& q) {
  if (p.mean.size() != q.mean.size()) throw std::invalid_argument("KL between mismatched action dimensions");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.mean.size(); ++j) {
    const double ratio = p.scale[j] / q.scale[j];
    const double dm = (p.mean[j] - q.mean[j]) / q.scale[j];
    kl += -std::log(ratio) + 0.5 * (ratio * ratio + dm * dm) - 0.5;
  }
  return std::max(kl, 0.0);
}

Selection argmin_lowest_index(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("conservative selection over an empty candidate set");
  Selection best{0, values[0]};
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < best.value) best = {i, values[i]};
  }
  return best;
}

Selection conservative_select(const DistributionalCritic& c_critic, std::span<const double> state,
                              const Matrix& candidates) {
  if (candidates.rows == 0) throw std::invalid_argument("conservative selection over an empty candidate set");
  return argmin_lowest_index(
      expected_values(c_critic, repeat_rows(to_matrix_rows(state), candidates.rows), candidates));
}

Selection conservative_select(const Critic& c_critic, std::span<const double> state, const Matrix& candidates) {
  if (candidates.rows == 0) throw std::invalid_argument("conservative selection over an empty candidate set");
  return argmin_lowest_index(
      expected_values(c_critic, repeat_rows(to_matrix_rows(state), candidates.rows), candidates));
}

}  // namespace cdmpo
