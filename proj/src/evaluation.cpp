#include "cdmpo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cdmpo {

std::vector<double> choose_action(const GaussianPolicy& policy, const Critic& c_critic, std::span<const double> obs,
                                  std::size_t n, Rng& rng) {
  ActionSet set = sample_action_set(policy, obs, n, rng);
  if (n == 1) return {set.actions.data.begin(), set.actions.data.end()};
  const Selection sel = conservative_select(c_critic, obs, set.actions);
  const auto row = set.actions.row(sel.index);
  return {row.begin(), row.end()};
}

Matrix choose_actions(const GaussianPolicy& policy, const Critic& c_critic, const Matrix& states, std::size_t n,
                      Rng& rng) {
  ActionSet sets = sample_action_sets(policy, states, n, rng);
  if (n == 1) return std::move(sets.actions);
  const std::vector<double> c = expected_values(c_critic, repeat_rows(states, n), sets.actions);
  Matrix out(states.rows, sets.actions.cols);
  for (std::size_t i = 0; i < states.rows; ++i) {
    const Selection sel = argmin_lowest_index(std::span<const double>(c).subspan(i * n, n));
    const auto row = sets.actions.row(i * n + sel.index);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

EvalSummary summarize(std::vector<EpisodeRecord> episodes, double d) {
  if (episodes.empty()) throw std::invalid_argument("cannot summarize an empty episode log");
  EvalSummary s;
  std::vector<double> returns;
  std::vector<double> costs;
  for (const EpisodeRecord& e : episodes) {
    returns.push_back(e.ret);
    costs.push_back(e.cost);
  }
  const double n = static_cast<double>(episodes.size());
  s.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  s.mean_cost = std::accumulate(costs.begin(), costs.end(), 0.0) / n;
  s.median_return = median(returns);
  s.median_cost = median(costs);
  s.violation_rate = static_cast<double>(count_violations(episodes, d)) / n;
  s.episodes = std::move(episodes);
  return s;
}

nlohmann::json summary_json(const EvalSummary& s) {
  return {{"episodes", s.episodes.size()},     {"mean_return", s.mean_return}, {"median_return", s.median_return},
          {"mean_cost", s.mean_cost},          {"median_cost", s.median_cost}, {"violation_rate", s.violation_rate}};
}

EvalSummary evaluate(const GaussianPolicy& policy, const Critic& c_critic, const EnvFactory& make_env,
                     std::size_t episodes, const TrainerConfig& cfg, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate needs at least one episode");
  std::unique_ptr<Environment> env = make_env(seed);
  Rng rng = make_rng(seed, 0xe7a1);
  std::vector<EpisodeRecord> log;
  std::uint64_t steps = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    EpisodeRecord rec;
    rec.index = e;
    rec.seed = seed;
    std::vector<double> obs = env->reset();
    double discount = 1.0;
    while (true) {
      const std::vector<double> action = cfg.eval_action_mode == EvalActionMode::kMean
                                             ? mean_action(policy, obs)
                                             : choose_action(policy, c_critic, obs, cfg.effective_candidates(), rng);
      const Transition t = env->step(action);
      ++steps;
      ++rec.length;
      rec.ret += t.reward;
      rec.cost += t.cost;
      rec.discounted_cost += discount * t.cost;
      discount *= cfg.gamma;
      obs = t.next_state;
      if (t.done) break;
    }
    rec.env_steps = steps;
    rec.violation = rec.cost > cfg.cost_limit;
    log.push_back(rec);
  }
  return summarize(std::move(log), cfg.cost_limit);
}

TabularPolicy chain_policy_table(const GaussianPolicy& policy, const Critic& c_critic, const ChainCmdpSpec& spec,
                                 std::size_t n, EvalActionMode mode, std::size_t points) {
  if (policy.action_dim != 1) throw std::invalid_argument("chain policies have one action dimension");
  if (n < 1 || points < 2) throw std::invalid_argument("need n >= 1 and at least two quadrature points");
  const std::size_t na = spec.n_actions;
  TabularPolicy table(spec.n_states * na, 0.0);
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    std::vector<double> obs(spec.n_states, 0.0);
    obs[s] = 1.0;
    const GaussianHead head = policy_head(policy, obs);
    std::span<double> row(table.data() + s * na, na);
    if (mode == EvalActionMode::kMean) {
      row[discretize_action(to_box(policy, head.mean[0]), na)] = 1.0;
      continue;
    }
    // Quadrature nodes and normalised Gaussian weights.
    Matrix actions(points, 1);
    std::vector<double> weight(points);
    double total = 0.0;
    for (std::size_t j = 0; j < points; ++j) {
      const double z = -8.0 + 16.0 * static_cast<double>(j) / static_cast<double>(points - 1);
      actions(j, 0) = to_box(policy, head.mean[0] + head.scale[0] * z);
      weight[j] = std::exp(-0.5 * z * z);
      total += weight[j];
    }
    for (double& w : weight) w /= total;

    std::vector<double> c(points, 0.0);
    if (n > 1) c = expected_values(c_critic, repeat_rows(Matrix::from_row(obs), points), actions);
    std::vector<std::size_t> order(points);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });

    // The minimum of n draws falls in a group of equal C values with
    // probability tail(group)^n - tail(after group)^n; within the group the
    // mass is shared in proportion to the node weights.
    double tail = 1.0;
    std::size_t i = 0;
    while (i < points) {
      std::size_t end = i;
      double group = 0.0;
      while (end < points && c[order[end]] == c[order[i]]) group += weight[order[end++]];
      const double after = std::max(0.0, tail - group);
      const double p_group = std::pow(tail, static_cast<double>(n)) - std::pow(after, static_cast<double>(n));
      if (group > 0.0) {
        for (std::size_t k = i; k < end; ++k) {
          row[discretize_action(actions(order[k], 0), na)] += p_group * weight[order[k]] / group;
        }
      }
      tail = after;
      i = end;
    }
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& p : row) p /= sum;
  }
  return table;
}

}  // namespace cdmpo
