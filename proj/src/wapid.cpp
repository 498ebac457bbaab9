#include "cdmpo/wapid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdmpo/common.hpp"

namespace cdmpo {

ControllerMode parse_controller_mode(const std::string& name) {
  if (name == "P") return ControllerMode::kP;
  if (name == "PID") return ControllerMode::kPid;
  if (name == "WAPID") return ControllerMode::kWapid;
  throw ConfigError("unknown controller mode '" + name + "' (expected P, PID or WAPID)");
}

std::string to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::kP: return "P";
    case ControllerMode::kPid: return "PID";
    case ControllerMode::kWapid: return "WAPID";
  }
  return "unknown";
}

void WapidGains::validate() const {
  if (k_p < 0.0 || k_i < 0.0 || k_d < 0.0) throw ConfigError("controller gains must be non-negative");
  if (!(w > 0.0 && w <= 1.0)) throw ConfigError("WAPID weight w must lie in (0, 1]");
}

WapidState make_wapid_state(const WapidGains& gains) {
  gains.validate();
  return WapidState{gains};
}

WapidTrace wapid_update(WapidState& state, double j_c, double d) {
  const WapidGains& g = state.gains;
  WapidTrace t;
  t.delta = j_c - d;
  t.derivative = state.has_prev ? std::max(j_c - state.prev_cost, 0.0) : 0.0;
  double raw = 0.0;
  switch (g.mode) {
    case ControllerMode::kP:
      raw = g.k_p * t.delta;
      break;
    case ControllerMode::kPid:
      state.integral += t.delta;
      raw = g.k_p * t.delta + g.k_i * state.integral + g.k_d * t.derivative;
      break;
    case ControllerMode::kWapid: {
      const double step = t.delta - state.integral;
      state.integral += g.w * (g.rectified_integral ? std::max(step, 0.0) : step);
      raw = g.k_p * t.delta + g.k_i * state.integral + g.k_d * t.derivative;
      break;
    }
  }
  state.lambda = std::max(raw, 0.0);
  state.prev_cost = j_c;
  state.has_prev = true;
  t.integral = state.integral;
  t.lambda = state.lambda;
  return t;
}

double cost_signal(std::span<const double> episode_costs, std::size_t window, double d) {
  if (episode_costs.empty() || window == 0) return d;
  const std::size_t n = std::min(window, episode_costs.size());
  const auto tail = episode_costs.subspan(episode_costs.size() - n);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

}  // namespace cdmpo
