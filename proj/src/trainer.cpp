#include "cdmpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdmpo/evaluation.hpp"

namespace cdmpo {

using nlohmann::json;

json to_json(const EpisodeRecord& e) {
  return {{"episode", e.index},   {"seed", e.seed},           {"env_steps", e.env_steps}, {"length", e.length},
          {"return", e.ret},      {"cost", e.cost},           {"discounted_cost", e.discounted_cost},
          {"violation", e.violation}};
}

EpisodeRecord episode_from_json(const json& j) {
  EpisodeRecord e;
  e.index = j.at("episode").get<std::uint64_t>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.env_steps = j.at("env_steps").get<std::uint64_t>();
  e.length = j.at("length").get<std::size_t>();
  e.ret = j.at("return").get<double>();
  e.cost = j.at("cost").get<double>();
  e.discounted_cost = j.at("discounted_cost").get<double>();
  e.violation = j.at("violation").get<bool>();
  return e;
}

std::size_t count_violations(std::span<const EpisodeRecord> log, double d) {
  return static_cast<std::size_t>(
      std::count_if(log.begin(), log.end(), [d](const EpisodeRecord& e) { return e.cost > d; }));
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const IterationMetrics& m, double cost_limit) {
  json j = {{"schema_version", kMetricsSchemaVersion},
            {"iteration", m.iteration},
            {"env_steps", m.env_steps},
            {"episodes", m.episodes},
            {"mean_return", optional_json(m.mean_return)},
            {"mean_cost", optional_json(m.mean_cost)},
            {"window_return", optional_json(m.window_return)},
            {"window_cost", optional_json(m.window_cost)},
            {"cost_limit", cost_limit},
            {"cost_signal", m.cost_signal},
            {"lambda", m.controller.lambda},
            {"controller", {{"delta", m.controller.delta},
                            {"integral", m.controller.integral},
                            {"derivative", m.controller.derivative},
                            {"lambda", m.controller.lambda},
                            {"updated", m.controller_updated}}},
            {"skipped", m.skipped},
            {"gradient_steps", m.gradient_steps},
            {"q_loss", m.q_loss},
            {"c_loss", m.c_loss},
            {"cdcl_regularizer", m.cdcl_regularizer},
            {"eta", m.eta},
            {"mean_weight_entropy", m.mean_weight_entropy},
            {"max_weight_entropy", m.max_weight_entropy},
            {"mstep_kl", m.mstep_kl},
            {"kl_penalty", m.kl_penalty},
            {"mstep_aborts", m.mstep_aborts},
            {"violations", m.violations}};
  if (m.skipped) j["warning"] = "replay holds fewer transitions than one batch; update skipped";
  if (m.evaluation) j["evaluation"] = *m.evaluation;
  return j;
}

Trainer::Trainer(TrainerConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  mpo_ = cfg_.mpo;
  mpo_.optimizer.learning_rate = cfg_.network.policy_lr;
  env_ = make_environment(cfg_, cfg_.seed);
  const std::size_t sd = env_->observation_dim();
  const std::size_t ad = env_->action_dim();

  Rng init = make_rng(cfg_.seed, 1);
  const NetworkConfig& net = cfg_.network;
  policy_ = make_gaussian_policy(sd, ad, net.policy_hidden, init, net.policy_activation, net.policy_init_scale,
                                 net.policy_scale_floor);
  if (cfg_.distributional()) {
    q_critic_ = make_distributional_critic(sd, ad, net.critic_hidden, resolve_q_grid(cfg_), init,
                                           net.critic_activation);
    c_critic_ = make_distributional_critic(sd, ad, net.critic_hidden, resolve_c_grid(cfg_), init,
                                           net.critic_activation);
  } else {
    q_critic_ = make_scalar_critic(sd, ad, net.critic_hidden, init, net.critic_activation);
    c_critic_ = make_scalar_critic(sd, ad, net.critic_hidden, init, net.critic_activation);
  }
  AdamConfig critic_adam;
  critic_adam.learning_rate = net.critic_lr;
  auto online = [](const Critic& c) -> const MlpParams& {
    return std::visit([](const auto& v) -> const MlpParams& { return v.net; }, c);
  };
  q_opt_ = make_optimizer(online(q_critic_), critic_adam);
  c_opt_ = make_optimizer(online(c_critic_), critic_adam);
  mstep_ = make_mstep_state(policy_, mpo_);
  controller_ = make_wapid_state(cfg_.controller.gains);
  if (cfg_.controller.fixed_lambda) controller_.lambda = *cfg_.controller.fixed_lambda;
  replay_ = std::make_unique<ReplayBuffer>(cfg_.buffer_capacity, sd, ad);
  actor_rng_ = make_rng(cfg_.seed, 2);
  learner_rng_ = make_rng(cfg_.seed, 3);
  obs_ = env_->reset();
}

double Trainer::lambda() const {
  return cfg_.controller.fixed_lambda ? *cfg_.controller.fixed_lambda : controller_.lambda;
}

bool Trainer::cost_critic_active() const {
  return cfg_.effective_candidates() > 1 || lambda() != 0.0 || !cfg_.controller.fixed_lambda;
}

Transition Trainer::rollout_step() {
  const std::size_t n = env_steps_ < cfg_.warmup_steps ? 1 : cfg_.effective_candidates();
  const std::vector<double> action = choose_action(policy_, c_critic_, obs_, n, actor_rng_);
  Transition t = env_->step(action);
  replay_->append(t);
  ++env_steps_;
  ++current_.length;
  current_.ret += t.reward;
  current_.cost += t.cost;
  current_.discounted_cost += discount_ * t.cost;
  discount_ *= cfg_.gamma;
  obs_ = t.next_state;
  if (t.done) finish_episode();
  return t;
}

void Trainer::finish_episode() {
  current_.index = episodes_.size();
  current_.seed = cfg_.seed;
  current_.env_steps = env_steps_;
  current_.violation = current_.cost > cfg_.cost_limit;
  episodes_.push_back(current_);
  current_ = EpisodeRecord{};
  discount_ = 1.0;
  obs_ = env_->reset();
}

double Trainer::controller_input() const {
  const std::size_t window = cfg_.controller.cost_window;
  const std::size_t first = episodes_.size() > window ? episodes_.size() - window : 0;
  std::vector<double> costs;
  for (std::size_t i = first; i < episodes_.size(); ++i) {
    costs.push_back(cfg_.cost_signal == CostSignalKind::kDiscounted ? episodes_[i].discounted_cost
                                                                    : episodes_[i].cost);
  }
  return cost_signal(costs, window, cfg_.cost_limit);
}

StepInputs Trainer::sample_step_inputs(const GaussianPolicy& old_policy) {
  StepInputs in;
  in.batch = replay_->sample(cfg_.batch_size, learner_rng_);
  const std::size_t n = cfg_.target_action_mode == TargetActionMode::kConservative ? cfg_.effective_candidates() : 1;
  in.next_actions = choose_actions(policy_, c_critic_, in.batch.next_states, n, learner_rng_);
  if (cfg_.distributional() && cfg_.effective_beta() > 0.0 && cost_critic_active()) {
    in.cdcl_actions = sample_action_sets(policy_, in.batch.states, cfg_.cdcl_policy_samples, learner_rng_).actions;
  }
  in.candidates = sample_action_sets(old_policy, in.batch.states, mpo_.n_candidates, learner_rng_);
  return in;
}

StepResult Trainer::gradient_step(const StepInputs& in, const GaussianPolicy& old_policy) {
  StepResult r;
  const TransitionBatch& batch = in.batch;

  if (auto* q = std::get_if<DistributionalCritic>(&q_critic_)) {
    CriticLoss l = td_loss(*q, batch, in.next_actions, SignalKind::kReward, cfg_.gamma);
    optimizer_step(q_opt_, q->net, l.grads);
    r.q_loss = l.loss;
  } else {
    auto& sq = std::get<ScalarCritic>(q_critic_);
    CriticLoss l = scalar_td_loss(sq, batch, in.next_actions, SignalKind::kReward, cfg_.gamma);
    optimizer_step(q_opt_, sq.net, l.grads);
    r.q_loss = l.loss;
  }

  r.c_updated = cost_critic_active();
  if (r.c_updated) {
    if (auto* c = std::get_if<DistributionalCritic>(&c_critic_)) {
      if (in.cdcl_actions.rows > 0) {
        const CdclConfig cdcl{cfg_.effective_beta(), cfg_.cdcl_policy_samples};
        CdclLoss l = cdcl_loss(*c, batch, in.cdcl_actions, cdcl, cfg_.gamma, in.next_actions);
        optimizer_step(c_opt_, c->net, l.grads);
        r.c_loss = l.loss;
        r.cdcl_regularizer = l.regularizer;
      } else {
        CriticLoss l = td_loss(*c, batch, in.next_actions, SignalKind::kCost, cfg_.gamma);
        optimizer_step(c_opt_, c->net, l.grads);
        r.c_loss = l.loss;
      }
    } else {
      auto& sc = std::get<ScalarCritic>(c_critic_);
      CriticLoss l = scalar_td_loss(sc, batch, in.next_actions, SignalKind::kCost, cfg_.gamma);
      optimizer_step(c_opt_, sc.net, l.grads);
      r.c_loss = l.loss;
    }
  }

  // E-step against the target critics.
  const std::size_t k = mpo_.n_candidates;
  const Matrix states_rep = repeat_rows(batch.states, k);
  EStepBatch eb;
  eb.n_states = batch.size();
  eb.n_candidates = k;
  eb.q_values = expected_values(q_critic_, states_rep, in.candidates.actions, true);
  eb.c_values = r.c_updated ? expected_values(c_critic_, states_rep, in.candidates.actions, true)
                            : std::vector<double>(eb.q_values.size(), 0.0);
  eb.lambda = lambda();
  eb.cost_limit = cfg_.cost_limit;
  r.eta = minimize_dual(eb, mpo_.epsilon_e, mpo_.eta_bounds, mpo_.max_dual_iters);
  const std::vector<double> weights = estep_weights(eb, r.eta);
  const std::vector<double> ent = weight_entropies(weights, k);
  r.mean_weight_entropy = std::accumulate(ent.begin(), ent.end(), 0.0) / static_cast<double>(ent.size());
  r.max_weight_entropy = *std::max_element(ent.begin(), ent.end());

  r.mstep = mstep_update(policy_, old_policy, batch.states, in.candidates.pre_squash, weights, mpo_, mstep_);

  std::visit([&](auto& q) { target_sync(q.net, q.target_net, cfg_.tau); }, q_critic_);
  if (r.c_updated) std::visit([&](auto& c) { target_sync(c.net, c.target_net, cfg_.tau); }, c_critic_);
  return r;
}

IterationMetrics Trainer::learner_iteration() {
  IterationMetrics m;
  m.iteration = iteration_++;
  m.env_steps = env_steps_;
  if (replay_->size() < cfg_.batch_size) {
    m.skipped = true;
  } else {
    const GaussianPolicy old_policy = policy_;
    const std::size_t steps = cfg_.gradient_steps_per_iteration;
    for (std::size_t g = 0; g < steps; ++g) {
      const StepInputs in = sample_step_inputs(old_policy);
      const StepResult r = gradient_step(in, old_policy);
      m.q_loss += r.q_loss;
      m.c_loss += r.c_loss;
      m.cdcl_regularizer += r.cdcl_regularizer;
      m.eta += r.eta;
      m.mean_weight_entropy += r.mean_weight_entropy;
      m.max_weight_entropy = std::max(m.max_weight_entropy, r.max_weight_entropy);
      m.mstep_kl += r.mstep.kl;
      m.mstep_aborts += r.mstep.aborted ? 1 : 0;
    }
    m.gradient_steps = steps;
    if (steps > 0) {
      const double inv = 1.0 / static_cast<double>(steps);
      m.q_loss *= inv;
      m.c_loss *= inv;
      m.cdcl_regularizer *= inv;
      m.eta *= inv;
      m.mean_weight_entropy *= inv;
      m.mstep_kl *= inv;
    }
    auto finite = [](const Critic& c) {
      return std::visit([](const auto& v) { return v.net.all_finite() && v.target_net.all_finite(); }, c);
    };
    if (!policy_.net.all_finite() || !finite(q_critic_) || !finite(c_critic_)) {
      throw NumericalError("non-finite parameters after iteration " + std::to_string(m.iteration));
    }
  }
  m.kl_penalty = mstep_.kl_penalty;

  m.cost_signal = controller_input();
  if (cfg_.controller.fixed_lambda) {
    m.controller.lambda = *cfg_.controller.fixed_lambda;
  } else if (!m.skipped) {
    m.controller = wapid_update(controller_, m.cost_signal, cfg_.cost_limit);
    m.controller_updated = true;
  } else {
    m.controller.lambda = controller_.lambda;
  }

  m.episodes = episodes_.size();
  if (episodes_reported_ < episodes_.size()) {
    double ret = 0.0;
    double cost = 0.0;
    for (std::size_t i = episodes_reported_; i < episodes_.size(); ++i) {
      ret += episodes_[i].ret;
      cost += episodes_[i].cost;
    }
    const double count = static_cast<double>(episodes_.size() - episodes_reported_);
    m.mean_return = ret / count;
    m.mean_cost = cost / count;
  }
  if (!episodes_.empty()) {
    const std::size_t first =
        episodes_.size() > cfg_.controller.cost_window ? episodes_.size() - cfg_.controller.cost_window : 0;
    double ret = 0.0;
    double cost = 0.0;
    for (std::size_t i = first; i < episodes_.size(); ++i) {
      ret += episodes_[i].ret;
      cost += episodes_[i].cost;
    }
    const double count = static_cast<double>(episodes_.size() - first);
    m.window_return = ret / count;
    m.window_cost = cost / count;
  }
  m.violations = count_violations(episodes_, cfg_.cost_limit);
  return m;
}

IterationMetrics Trainer::iteration() {
  const std::uint64_t remaining = cfg_.total_steps > env_steps_ ? cfg_.total_steps - env_steps_ : 0;
  const std::uint64_t steps = std::min<std::uint64_t>(cfg_.steps_per_iteration, remaining);
  for (std::uint64_t i = 0; i < steps; ++i) rollout_step();
  IterationMetrics m = learner_iteration();
  episodes_reported_ = episodes_.size();
  return m;
}

void Trainer::run(const std::function<void(const IterationMetrics&)>& on_iteration,
                  const std::function<void(const EpisodeRecord&)>& on_episode) {
  while (env_steps_ < cfg_.total_steps) {
    const std::size_t before = episodes_.size();
    IterationMetrics m = iteration();
    if (cfg_.eval_interval > 0 && iteration_ % cfg_.eval_interval == 0) {
      const TrainerConfig& cfg = cfg_;
      EnvFactory factory = [&cfg](std::uint64_t seed) { return make_environment(cfg, seed); };
      const std::uint64_t eval_seed = cfg_.seed + 0x9e3779b97f4a7c15ULL * iteration_;
      m.evaluation = summary_json(evaluate(policy_, c_critic_, factory, cfg_.eval_episodes, cfg_, eval_seed));
    }
    if (on_episode) {
      for (std::size_t i = before; i < episodes_.size(); ++i) on_episode(episodes_[i]);
    }
    if (on_iteration) on_iteration(m);
  }
}

namespace {

const MlpParams& online_net(const Critic& c) {
  return std::visit([](const auto& v) -> const MlpParams& { return v.net; }, c);
}
const MlpParams& target_net(const Critic& c) {
  return std::visit([](const auto& v) -> const MlpParams& { return v.target_net; }, c);
}

void restore(MlpParams& into, const Checkpoint& ckpt, const std::string& name) {
  const auto it = ckpt.networks.find(name);
  if (it == ckpt.networks.end()) throw IoError("checkpoint lacks network '" + name + "'");
  if (!it->second.same_shape(into)) throw IoError("checkpoint network '" + name + "' has the wrong shape");
  into = it->second;
}

}  // namespace

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.networks["policy"] = policy_.net;
  ckpt.networks["q"] = online_net(q_critic_);
  ckpt.networks["q_target"] = target_net(q_critic_);
  ckpt.networks["c"] = online_net(c_critic_);
  ckpt.networks["c_target"] = target_net(c_critic_);
  ckpt.blobs["config"] = config_to_json(cfg_).dump();
  ckpt.blobs["state"] = json{{"lambda", controller_.lambda},
                             {"integral", controller_.integral},
                             {"prev_cost", controller_.prev_cost},
                             {"has_prev", controller_.has_prev},
                             {"kl_penalty", mstep_.kl_penalty},
                             {"env_steps", env_steps_},
                             {"iterations", iteration_}}
                            .dump();
  return ckpt;
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
  const auto cfg_it = ckpt.blobs.find("config");
  const auto state_it = ckpt.blobs.find("state");
  if (cfg_it == ckpt.blobs.end() || state_it == ckpt.blobs.end()) throw IoError("checkpoint lacks config or state");
  json cfg_tree;
  json state;
  try {
    cfg_tree = json::parse(cfg_it->second);
    state = json::parse(state_it->second);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  Trainer t(config_from_json(cfg_tree));
  restore(t.policy_.net, ckpt, "policy");
  std::visit([&](auto& q) {
    restore(q.net, ckpt, "q");
    restore(q.target_net, ckpt, "q_target");
  }, t.q_critic_);
  std::visit([&](auto& c) {
    restore(c.net, ckpt, "c");
    restore(c.target_net, ckpt, "c_target");
  }, t.c_critic_);
  try {
    t.controller_.lambda = state.at("lambda").get<double>();
    t.controller_.integral = state.at("integral").get<double>();
    t.controller_.prev_cost = state.at("prev_cost").get<double>();
    t.controller_.has_prev = state.at("has_prev").get<bool>();
    t.mstep_.kl_penalty = state.at("kl_penalty").get<double>();
    t.env_steps_ = state.at("env_steps").get<std::uint64_t>();
    t.iteration_ = state.at("iterations").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint state is malformed: ") + e.what());
  }
  return t;
}

}  // namespace cdmpo
