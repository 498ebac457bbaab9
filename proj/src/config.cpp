#include "cdmpo/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cdmpo {

using nlohmann::json;

Variant parse_variant(const std::string& s) {
  if (s == "CDMPO") return Variant::kCdmpo;
  if (s == "CDMPO-no-CDCL") return Variant::kCdmpoNoCdcl;
  if (s == "DMPO-Lag") return Variant::kDmpoLag;
  if (s == "MPO-Lag") return Variant::kMpoLag;
  throw ConfigError("unknown variant '" + s + "' (expected CDMPO, CDMPO-no-CDCL, DMPO-Lag or MPO-Lag)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCdmpo: return "CDMPO";
    case Variant::kCdmpoNoCdcl: return "CDMPO-no-CDCL";
    case Variant::kDmpoLag: return "DMPO-Lag";
    case Variant::kMpoLag: return "MPO-Lag";
  }
  return "unknown";
}

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<TargetActionMode> kTargetModes[] = {{TargetActionMode::kConservative, "conservative"},
                                                       {TargetActionMode::kPlain, "plain"}};
constexpr EnumName<EvalActionMode> kEvalModes[] = {{EvalActionMode::kConservative, "conservative"},
                                                   {EvalActionMode::kMean, "mean"}};
constexpr EnumName<CostSignalKind> kCostSignals[] = {{CostSignalKind::kEpisodic, "episodic"},
                                                     {CostSignalKind::kDiscounted, "discounted"}};

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& s, const EnumName<E> (&table)[N]) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  throw ConfigError("invalid value '" + s + "' for " + key);
}

template <typename E, std::size_t N>
std::string enum_name(E v, const EnumName<E> (&table)[N]) {
  for (const auto& e : table)
    if (v == e.value) return e.name;
  return "unknown";
}

json grid_to_json(const GridSpec& g) {
  return {{"v_min", g.v_min ? json(*g.v_min) : json(nullptr)},
          {"v_max", g.v_max ? json(*g.v_max) : json(nullptr)},
          {"n_atoms", g.n_atoms}};
}

// Rejects keys of `user` that do not exist in `schema`, recursively.
void check_keys(const json& user, const json& schema, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("expected an object at '" + (prefix.empty() ? "<root>" : prefix) + "'");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (schema.at(key).is_object()) check_keys(value, schema.at(key), path);
  }
}

// Deep merge of `user` over `base`.
void merge(json& base, const json& user) {
  for (const auto& [key, value] : user.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

template <typename T>
T get(const json& tree, const std::string& path) {
  const json* node = &tree;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + "' has the wrong type");
  }
}

std::optional<double> get_optional(const json& tree, const std::string& path) {
  const json* node = &tree;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  if (node->is_null()) return std::nullopt;
  if (!node->is_number()) throw ConfigError("config key '" + path + "' must be a number or null");
  return node->get<double>();
}

GridSpec grid_from(const json& tree, const std::string& key) {
  return {get_optional(tree, key + ".v_min"), get_optional(tree, key + ".v_max"),
          get<std::size_t>(tree, key + ".n_atoms")};
}

constexpr const char* kRequiredKeys[] = {"env", "variant", "seed", "total_steps", "cost_limit"};

}  // namespace

std::size_t TrainerConfig::effective_candidates() const {
  return (variant == Variant::kCdmpo || variant == Variant::kCdmpoNoCdcl) ? n_candidates : 1;
}

double TrainerConfig::effective_beta() const { return variant == Variant::kCdmpo ? beta : 0.0; }

void TrainerConfig::validate() const {
  if (env != "chain" && env != "hazard") throw ConfigError("env must be 'chain' or 'hazard'");
  if (!(cost_limit > 0.0)) throw ConfigError("cost_limit must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (n_candidates < 1) throw ConfigError("n_candidates must be at least 1");
  if (batch_size < 1 || buffer_capacity < batch_size) throw ConfigError("need 1 <= batch_size <= buffer_capacity");
  if (steps_per_iteration < 1) throw ConfigError("steps_per_iteration must be positive");
  if (total_steps < 1) throw ConfigError("total_steps must be positive");
  if (eval_interval > 0 && eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (beta < 0.0) throw ConfigError("cdcl.beta must be non-negative");
  if (cdcl_policy_samples < 1) throw ConfigError("cdcl.policy_samples must be positive");
  if (network.policy_hidden.empty() || network.critic_hidden.empty()) throw ConfigError("hidden layer lists must be non-empty");
  for (std::size_t h : network.policy_hidden)
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  for (std::size_t h : network.critic_hidden)
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  if (!(network.policy_lr > 0.0) || !(network.critic_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(network.policy_scale_floor > 0.0) || !(network.policy_init_scale > network.policy_scale_floor)) {
    throw ConfigError("need 0 < policy_scale_floor < policy_init_scale");
  }
  for (const GridSpec* g : {&q_grid, &c_grid}) {
    if (g->n_atoms < 2) throw ConfigError("grids need at least 2 atoms");
    if (g->v_min && g->v_max && !(*g->v_max > *g->v_min)) throw ConfigError("grid v_max must exceed v_min");
  }
  mpo.validate();
  controller.gains.validate();
  if (controller.cost_window < 1) throw ConfigError("controller.cost_window must be positive");
  if (controller.fixed_lambda && *controller.fixed_lambda < 0.0) throw ConfigError("fixed_lambda must be >= 0");
  if (!(chain.p_safe > 0.0 && chain.p_safe <= 1.0) || chain.horizon < 1) throw ConfigError("invalid chain settings");
  hazard.validate();
}

json config_to_json(const TrainerConfig& c) {
  json j;
  j["env"] = c.env;
  j["variant"] = to_string(c.variant);
  j["seed"] = c.seed;
  j["total_steps"] = c.total_steps;
  j["cost_limit"] = c.cost_limit;
  j["gamma"] = c.gamma;
  j["n_candidates"] = c.n_candidates;
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["steps_per_iteration"] = c.steps_per_iteration;
  j["warmup_steps"] = c.warmup_steps;
  j["gradient_steps_per_iteration"] = c.gradient_steps_per_iteration;
  j["eval_interval"] = c.eval_interval;
  j["eval_episodes"] = c.eval_episodes;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["tau"] = c.tau;
  j["target_action_mode"] = enum_name(c.target_action_mode, kTargetModes);
  j["eval_action_mode"] = enum_name(c.eval_action_mode, kEvalModes);
  j["cost_signal"] = enum_name(c.cost_signal, kCostSignals);
  j["output_dir"] = c.output_dir;
  j["network"] = {{"policy_hidden", c.network.policy_hidden},
                  {"critic_hidden", c.network.critic_hidden},
                  {"policy_activation", to_string(c.network.policy_activation)},
                  {"critic_activation", to_string(c.network.critic_activation)},
                  {"policy_lr", c.network.policy_lr},
                  {"critic_lr", c.network.critic_lr},
                  {"policy_init_scale", c.network.policy_init_scale},
                  {"policy_scale_floor", c.network.policy_scale_floor}};
  j["cdcl"] = {{"beta", c.beta}, {"policy_samples", c.cdcl_policy_samples}};
  j["q_grid"] = grid_to_json(c.q_grid);
  j["c_grid"] = grid_to_json(c.c_grid);
  j["mpo"] = {{"epsilon_e", c.mpo.epsilon_e},
              {"epsilon_m", c.mpo.epsilon_m},
              {"kl_penalty_init", c.mpo.kl_penalty_init},
              {"kl_penalty_rate", c.mpo.kl_penalty_rate},
              {"kl_penalty_max", c.mpo.kl_penalty_max},
              {"max_dual_iters", c.mpo.max_dual_iters},
              {"eta_low", c.mpo.eta_bounds.low},
              {"eta_high", c.mpo.eta_bounds.high},
              {"n_candidates", c.mpo.n_candidates}};
  j["controller"] = {{"mode", to_string(c.controller.gains.mode)},
                     {"k_p", c.controller.gains.k_p},
                     {"k_i", c.controller.gains.k_i},
                     {"k_d", c.controller.gains.k_d},
                     {"w", c.controller.gains.w},
                     {"rectified_integral", c.controller.gains.rectified_integral},
                     {"cost_window", c.controller.cost_window},
                     {"fixed_lambda", c.controller.fixed_lambda ? json(*c.controller.fixed_lambda) : json(nullptr)}};
  j["chain"] = {{"p_safe", c.chain.p_safe}, {"horizon", c.chain.horizon}};
  const HazardWorldConfig& h = c.hazard;
  j["hazard"] = {{"arena_half_width", h.arena_half_width}, {"n_hazards", h.n_hazards},
                 {"hazard_radius", h.hazard_radius},       {"goal_radius", h.goal_radius},
                 {"lidar_bins", h.lidar_bins},             {"max_steps", h.max_steps},
                 {"dt", h.dt},                             {"goal_bonus", h.goal_bonus},
                 {"hazard_lidar_range", h.hazard_lidar_range}, {"spawn_half_width", h.spawn_half_width}};
  return j;
}

TrainerConfig config_from_json(const json& user) {
  const json schema = config_to_json(TrainerConfig{});
  check_keys(user, schema, "");
  for (const char* key : kRequiredKeys) {
    if (!user.contains(key)) throw ConfigError(std::string("missing required config key '") + key + "'");
  }
  json t = schema;
  merge(t, user);

  TrainerConfig c;
  try {
    c.env = get<std::string>(t, "env");
    c.variant = parse_variant(get<std::string>(t, "variant"));
    c.seed = get<std::uint64_t>(t, "seed");
    c.total_steps = get<std::uint64_t>(t, "total_steps");
    c.cost_limit = get<double>(t, "cost_limit");
    c.gamma = get<double>(t, "gamma");
    c.n_candidates = get<std::size_t>(t, "n_candidates");
    c.batch_size = get<std::size_t>(t, "batch_size");
    c.buffer_capacity = get<std::size_t>(t, "buffer_capacity");
    c.steps_per_iteration = get<std::size_t>(t, "steps_per_iteration");
    c.warmup_steps = get<std::uint64_t>(t, "warmup_steps");
    c.gradient_steps_per_iteration = get<std::size_t>(t, "gradient_steps_per_iteration");
    c.eval_interval = get<std::size_t>(t, "eval_interval");
    c.eval_episodes = get<std::size_t>(t, "eval_episodes");
    c.checkpoint_interval = get<std::size_t>(t, "checkpoint_interval");
    c.tau = get<double>(t, "tau");
    c.target_action_mode = parse_enum("target_action_mode", get<std::string>(t, "target_action_mode"), kTargetModes);
    c.eval_action_mode = parse_enum("eval_action_mode", get<std::string>(t, "eval_action_mode"), kEvalModes);
    c.cost_signal = parse_enum("cost_signal", get<std::string>(t, "cost_signal"), kCostSignals);
    c.output_dir = get<std::string>(t, "output_dir");

    c.network.policy_hidden = get<std::vector<std::size_t>>(t, "network.policy_hidden");
    c.network.critic_hidden = get<std::vector<std::size_t>>(t, "network.critic_hidden");
    c.network.policy_activation = parse_activation(get<std::string>(t, "network.policy_activation"));
    c.network.critic_activation = parse_activation(get<std::string>(t, "network.critic_activation"));
    c.network.policy_lr = get<double>(t, "network.policy_lr");
    c.network.critic_lr = get<double>(t, "network.critic_lr");
    c.network.policy_init_scale = get<double>(t, "network.policy_init_scale");
    c.network.policy_scale_floor = get<double>(t, "network.policy_scale_floor");

    c.beta = get<double>(t, "cdcl.beta");
    c.cdcl_policy_samples = get<std::size_t>(t, "cdcl.policy_samples");
    c.q_grid = grid_from(t, "q_grid");
    c.c_grid = grid_from(t, "c_grid");

    c.mpo.epsilon_e = get<double>(t, "mpo.epsilon_e");
    c.mpo.epsilon_m = get<double>(t, "mpo.epsilon_m");
    c.mpo.kl_penalty_init = get<double>(t, "mpo.kl_penalty_init");
    c.mpo.kl_penalty_rate = get<double>(t, "mpo.kl_penalty_rate");
    c.mpo.kl_penalty_max = get<double>(t, "mpo.kl_penalty_max");
    c.mpo.max_dual_iters = get<std::size_t>(t, "mpo.max_dual_iters");
    c.mpo.eta_bounds = {get<double>(t, "mpo.eta_low"), get<double>(t, "mpo.eta_high")};
    c.mpo.n_candidates = get<std::size_t>(t, "mpo.n_candidates");

    c.controller.gains.mode = parse_controller_mode(get<std::string>(t, "controller.mode"));
    c.controller.gains.k_p = get<double>(t, "controller.k_p");
    c.controller.gains.k_i = get<double>(t, "controller.k_i");
    c.controller.gains.k_d = get<double>(t, "controller.k_d");
    c.controller.gains.w = get<double>(t, "controller.w");
    c.controller.gains.rectified_integral = get<bool>(t, "controller.rectified_integral");
    c.controller.cost_window = get<std::size_t>(t, "controller.cost_window");
    c.controller.fixed_lambda = get_optional(t, "controller.fixed_lambda");

    c.chain.p_safe = get<double>(t, "chain.p_safe");
    c.chain.horizon = get<std::size_t>(t, "chain.horizon");

    HazardWorldConfig& h = c.hazard;
    h.arena_half_width = get<double>(t, "hazard.arena_half_width");
    h.n_hazards = get<std::size_t>(t, "hazard.n_hazards");
    h.hazard_radius = get<double>(t, "hazard.hazard_radius");
    h.goal_radius = get<double>(t, "hazard.goal_radius");
    h.lidar_bins = get<std::size_t>(t, "hazard.lidar_bins");
    h.max_steps = get<std::size_t>(t, "hazard.max_steps");
    h.dt = get<double>(t, "hazard.dt");
    h.goal_bonus = get<double>(t, "hazard.goal_bonus");
    h.hazard_lidar_range = get<double>(t, "hazard.hazard_lidar_range");
    h.spawn_half_width = get<double>(t, "hazard.spawn_half_width");
    h.seed = c.seed;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &tree;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& child = (*node)[parts[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("override path '" + key + "' crosses a non-object value");
    node = &child;
  }
  (*node)[parts.back()] = value;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

TrainerConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json tree = read_json_file(path);
  for (const auto& o : overrides) apply_override(tree, o);
  return config_from_json(tree);
}

ChainCmdpSpec chain_spec_for(const TrainerConfig& cfg) {
  return default_chain_spec(cfg.chain.p_safe, cfg.gamma, cfg.chain.horizon);
}

std::unique_ptr<Environment> make_environment(const TrainerConfig& cfg, std::uint64_t seed) {
  if (cfg.env == "chain") return std::make_unique<ChainEnv>(chain_spec_for(cfg), seed);
  HazardWorldConfig h = cfg.hazard;
  h.seed = seed;
  return std::make_unique<HazardWorld>(h);
}

AtomGrid resolve_q_grid(const TrainerConfig& cfg) {
  // Per-step reward range of the environment.
  double r_min = 0.0;
  double r_max = 1.0;
  if (cfg.env == "hazard") {
    r_min = -cfg.hazard.dt;
    r_max = cfg.hazard.dt + cfg.hazard.goal_bonus;
  }
  const double horizon = 1.0 / (1.0 - cfg.gamma);
  return make_grid(cfg.q_grid.v_min.value_or(r_min * horizon), cfg.q_grid.v_max.value_or(r_max * horizon),
                   cfg.q_grid.n_atoms);
}

AtomGrid resolve_c_grid(const TrainerConfig& cfg) {
  const double episode_length =
      static_cast<double>(cfg.env == "hazard" ? cfg.hazard.max_steps : cfg.chain.horizon);
  return make_grid(cfg.c_grid.v_min.value_or(0.0), cfg.c_grid.v_max.value_or(episode_length), cfg.c_grid.n_atoms);
}

}  // namespace cdmpo
