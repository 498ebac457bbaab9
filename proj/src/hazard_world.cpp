#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdmpo/environments.hpp"

namespace cdmpo {

double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void HazardWorldConfig::validate() const {
  if (!(arena_half_width > 0.0) || !(hazard_radius > 0.0) || !(goal_radius > 0.0) || !(dt > 0.0) ||
      !(hazard_lidar_range > 0.0) || !(spawn_half_width > 0.0)) {
    throw ConfigError("HazardWorld radii, widths, ranges and dt must be positive");
  }
  if (lidar_bins < 4) throw ConfigError("HazardWorld needs at least 4 lidar bins");
  if (max_steps == 0) throw ConfigError("HazardWorld max_steps must be positive");
  if (goal_bonus < 0.0) throw ConfigError("HazardWorld goal bonus must be non-negative");
  if (spawn_half_width > arena_half_width) throw ConfigError("spawn region exceeds the arena");
}

std::vector<double> lidar(Vec2 origin, std::span<const Vec2> objects, std::size_t bins, double range) {
  std::vector<double> out(bins, 0.0);
  const double width = 2.0 * std::numbers::pi / static_cast<double>(bins);
  for (const Vec2& o : objects) {
    const double dx = o.x - origin.x;
    const double dy = o.y - origin.y;
    const double d = std::hypot(dx, dy);
    double angle = std::atan2(dy, dx) + 0.5 * width;
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    const auto bin = static_cast<std::size_t>(std::floor(angle / width)) % bins;
    out[bin] = std::max(out[bin], std::max(0.0, 1.0 - d / range));
  }
  return out;
}

namespace {

constexpr int kMaxPlacementRetries = 1000;

Vec2 uniform_point(double half_width, Rng& rng) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  const double x = u(rng);
  return {x, u(rng)};
}

bool goal_clear(const HazardWorldConfig& cfg, const HazardState& s, Vec2 goal) {
  if (distance(goal, s.robot) <= cfg.goal_radius) return false;
  return std::none_of(s.hazards.begin(), s.hazards.end(),
                      [&](Vec2 h) { return distance(goal, h) <= cfg.goal_radius + cfg.hazard_radius; });
}

Vec2 place_goal(const HazardWorldConfig& cfg, const HazardState& s, Rng& rng) {
  const double reach = cfg.arena_half_width - cfg.goal_radius;
  for (int attempt = 0; attempt <= kMaxPlacementRetries; ++attempt) {
    const Vec2 g = uniform_point(reach, rng);
    if (goal_clear(cfg, s, g)) return g;
  }
  throw ConfigError("could not place the HazardWorld goal within 1000 retries");
}

double goal_lidar_range(const HazardWorldConfig& cfg) { return 2.0 * std::numbers::sqrt2 * cfg.arena_half_width; }

}  // namespace

HazardState hazardworld_reset(const HazardWorldConfig& cfg, Rng& rng) {
  HazardState s;
  s.robot = uniform_point(cfg.spawn_half_width, rng);
  s.hazards.reserve(cfg.n_hazards);
  int retries = 0;
  while (s.hazards.size() < cfg.n_hazards) {
    const Vec2 h = uniform_point(cfg.arena_half_width, rng);
    if (distance(h, s.robot) > cfg.hazard_radius) {
      s.hazards.push_back(h);
    } else if (++retries > kMaxPlacementRetries) {
      throw ConfigError("could not place HazardWorld hazards within 1000 retries");
    }
  }
  s.goal = place_goal(cfg, s, rng);
  return s;
}

std::vector<double> hazardworld_observation(const HazardWorldConfig& cfg, const HazardState& state) {
  std::vector<double> obs;
  obs.reserve(2 + 2 * cfg.lidar_bins);
  obs.push_back(state.velocity.x);
  obs.push_back(state.velocity.y);
  const Vec2 goal[] = {state.goal};
  const auto g = lidar(state.robot, goal, cfg.lidar_bins, goal_lidar_range(cfg));
  const auto h = lidar(state.robot, state.hazards, cfg.lidar_bins, cfg.hazard_lidar_range);
  obs.insert(obs.end(), g.begin(), g.end());
  obs.insert(obs.end(), h.begin(), h.end());
  return obs;
}

bool in_hazard(const HazardWorldConfig& cfg, const HazardState& state) {
  return std::any_of(state.hazards.begin(), state.hazards.end(),
                     [&](Vec2 h) { return distance(state.robot, h) < cfg.hazard_radius; });
}

Transition hazardworld_step(const HazardWorldConfig& cfg, HazardState& state, std::span<const double> action,
                            Rng& rng) {
  Transition t;
  t.state = hazardworld_observation(cfg, state);
  double ax = std::clamp(action[0], -1.0, 1.0);
  double ay = std::clamp(action[1], -1.0, 1.0);
  // Unit top speed in every direction.
  const double norm = std::hypot(ax, ay);
  if (norm > 1.0) {
    ax /= norm;
    ay /= norm;
  }
  t.action = {std::clamp(action[0], -1.0, 1.0), std::clamp(action[1], -1.0, 1.0)};

  const double before = distance(state.robot, state.goal);
  const double limit = cfg.arena_half_width;
  state.velocity = {ax, ay};
  state.robot.x = std::clamp(state.robot.x + ax * cfg.dt, -limit, limit);
  state.robot.y = std::clamp(state.robot.y + ay * cfg.dt, -limit, limit);
  ++state.steps;

  const double after = distance(state.robot, state.goal);
  t.reward = before - after;
  if (after <= cfg.goal_radius) {
    t.reward += cfg.goal_bonus;
    state.goal = place_goal(cfg, state, rng);
  }
  t.cost = in_hazard(cfg, state) ? 1.0 : 0.0;
  t.next_state = hazardworld_observation(cfg, state);
  t.done = state.steps >= cfg.max_steps;
  t.terminal = false;
  return t;
}

HazardWorld::HazardWorld(HazardWorldConfig cfg) : cfg_(std::move(cfg)), rng_(make_rng(cfg_.seed, 0x4a7a)) {
  cfg_.validate();
}

std::vector<double> HazardWorld::reset() {
  state_ = hazardworld_reset(cfg_, rng_);
  return hazardworld_observation(cfg_, state_);
}

Transition HazardWorld::step(std::span<const double> action) { return hazardworld_step(cfg_, state_, action, rng_); }

}  // namespace cdmpo
