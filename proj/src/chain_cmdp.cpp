#include <algorithm>
#include <cmath>
#include <limits>

#include "cdmpo/environments.hpp"

namespace cdmpo {

void ChainCmdpSpec::validate() const {
  if (n_states == 0 || n_actions == 0) throw ConfigError("chain needs at least one state and action");
  if (transitions.size() != n_states * n_actions * n_states || rewards.size() != n_states * n_actions ||
      costs.size() != n_states * n_actions || terminal.size() != n_states) {
    throw ConfigError("chain tables have inconsistent sizes");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("chain gamma must lie in [0, 1)");
  if (horizon == 0 || start_state >= n_states) throw ConfigError("invalid chain horizon or start state");
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      double row = 0.0;
      for (std::size_t t = 0; t < n_states; ++t) {
        const double v = p(s, a, t);
        if (!(v >= 0.0)) throw ConfigError("negative transition probability");
        row += v;
      }
      if (std::abs(row - 1.0) > 1e-12) throw ConfigError("chain transition row does not sum to 1");
      if (cost(s, a) != 0.0 && cost(s, a) != 1.0) throw ConfigError("chain costs must be 0 or 1");
    }
  }
}

ChainCmdpSpec default_chain_spec(double p_safe, double gamma, std::size_t horizon) {
  if (!(p_safe > 0.0 && p_safe <= 1.0)) throw ConfigError("p_safe must lie in (0, 1]");
  ChainCmdpSpec spec;
  spec.n_states = 8;
  spec.n_actions = 2;
  spec.gamma = gamma;
  spec.horizon = horizon;
  spec.transitions.assign(8 * 2 * 8, 0.0);
  spec.rewards.assign(8 * 2, 0.0);
  spec.costs.assign(8 * 2, 0.0);
  spec.terminal.assign(8, 0);
  auto set_p = [&](std::size_t s, std::size_t a, std::size_t t, double v) {
    spec.transitions[(s * 2 + a) * 8 + t] += v;
  };
  for (std::size_t s = 0; s < 6; ++s) {
    set_p(s, 0, s + 1, p_safe);
    set_p(s, 0, s, 1.0 - p_safe);
    set_p(s, 1, s + 1, 1.0);
    if (s >= 2 && s <= 4) spec.costs[s * 2 + 1] = 1.0;
  }
  for (std::size_t a = 0; a < 2; ++a) {
    set_p(6, a, 7, 1.0);
    spec.rewards[6 * 2 + a] = 1.0;
    set_p(7, a, 7, 1.0);
  }
  spec.terminal[7] = 1;
  spec.validate();
  return spec;
}

std::size_t chain_reset(const ChainCmdpSpec& spec) { return spec.start_state; }

ChainStep chain_step(const ChainCmdpSpec& spec, std::size_t state, std::size_t action, Rng& rng) {
  assert(state < spec.n_states && action < spec.n_actions);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  double acc = 0.0;
  std::size_t next = spec.n_states - 1;
  for (std::size_t t = 0; t < spec.n_states; ++t) {
    acc += spec.p(state, action, t);
    if (u < acc) {
      next = t;
      break;
    }
  }
  // Rounding can leave u >= acc; fall back to the last state with mass.
  if (acc <= u) {
    for (std::size_t t = spec.n_states; t-- > 0;) {
      if (spec.p(state, action, t) > 0.0) {
        next = t;
        break;
      }
    }
  }
  return {next, spec.reward(state, action), spec.cost(state, action), spec.terminal[next] != 0};
}

double state_value(const ChainCmdpSpec& spec, std::span<const double> table, const TabularPolicy& policy,
                   std::size_t s) {
  double v = 0.0;
  for (std::size_t a = 0; a < spec.n_actions; ++a) v += policy[s * spec.n_actions + a] * table[s * spec.n_actions + a];
  return v;
}

ChainValues chain_oracle(const ChainCmdpSpec& spec, const TabularPolicy& policy) {
  const std::size_t ns = spec.n_states;
  const std::size_t na = spec.n_actions;
  if (policy.size() != ns * na) throw std::invalid_argument("tabular policy has the wrong size");
  ChainValues v{std::vector<double>(ns * na, 0.0), std::vector<double>(ns * na, 0.0)};
  std::vector<double> vq(ns), vc(ns);
  for (std::size_t it = 0; it < 10'000'000; ++it) {
    for (std::size_t s = 0; s < ns; ++s) {
      vq[s] = state_value(spec, v.q, policy, s);
      vc[s] = state_value(spec, v.c, policy, s);
    }
    double change = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t a = 0; a < na; ++a) {
        double eq = 0.0;
        double ec = 0.0;
        for (std::size_t t = 0; t < ns; ++t) {
          const double pr = spec.p(s, a, t);
          if (pr == 0.0) continue;
          eq += pr * vq[t];
          ec += pr * vc[t];
        }
        const double nq = spec.reward(s, a) + spec.gamma * eq;
        const double nc = spec.cost(s, a) + spec.gamma * ec;
        const std::size_t i = s * na + a;
        change = std::max({change, std::abs(nq - v.q[i]), std::abs(nc - v.c[i])});
        v.q[i] = nq;
        v.c[i] = nc;
      }
    }
    if (change <= 1e-12) break;
  }
  return v;
}

DeterministicSearch best_deterministic_policy(const ChainCmdpSpec& spec, double cost_limit) {
  const std::size_t ns = spec.n_states;
  const std::size_t na = spec.n_actions;
  DeterministicSearch best;
  best.value = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(ns, 0);
  TabularPolicy pi(ns * na, 0.0);
  while (true) {
    std::fill(pi.begin(), pi.end(), 0.0);
    for (std::size_t s = 0; s < ns; ++s) pi[s * na + choice[s]] = 1.0;
    const ChainValues v = chain_oracle(spec, pi);
    const double value = state_value(spec, v.q, pi, spec.start_state);
    const double cost = state_value(spec, v.c, pi, spec.start_state);
    if (cost <= cost_limit && value > best.value + 1e-12) {
      best = {choice, value, cost, true};
    }
    std::size_t s = 0;
    while (s < ns && ++choice[s] == na) choice[s++] = 0;
    if (s == ns) break;
  }
  return best;
}

std::size_t discretize_action(double a, std::size_t n_actions) {
  const double u = (std::clamp(a, -1.0, 1.0) + 1.0) / 2.0;
  return std::min(n_actions - 1, static_cast<std::size_t>(u * static_cast<double>(n_actions)));
}

ChainEnv::ChainEnv(ChainCmdpSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(make_rng(seed, 0xc4a1)) {
  spec_.validate();
}

std::vector<double> ChainEnv::observe(std::size_t s) const {
  std::vector<double> obs(spec_.n_states, 0.0);
  obs[s] = 1.0;
  return obs;
}

std::vector<double> ChainEnv::reset() {
  state_ = chain_reset(spec_);
  steps_ = 0;
  return observe(state_);
}

Transition ChainEnv::step(std::span<const double> action) {
  Transition t;
  t.state = observe(state_);
  t.action = {std::clamp(action[0], -1.0, 1.0)};
  const ChainStep r = chain_step(spec_, state_, discretize_action(t.action[0], spec_.n_actions), rng_);
  state_ = r.next_state;
  ++steps_;
  t.reward = r.reward;
  t.cost = r.cost;
  t.next_state = observe(state_);
  t.terminal = r.terminal;
  t.done = r.terminal || steps_ >= spec_.horizon;
  return t;
}

}  // namespace cdmpo
