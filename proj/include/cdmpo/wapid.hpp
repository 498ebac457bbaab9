#pragma once

// Lagrange-multiplier controllers driven by the observed episodic cost.
//
//   delta      = J_C - d
//   derivative = max(J_C - J_C_prev, 0), zero on the first update
//   integral:  P      unused
//              PID    I <- I + delta
//              WAPID  I <- I + w * max(delta - I, 0)   (rectified, default)
//                     I <- I + w * (delta - I)         (unrectified)
//   lambda     = max(K_P * delta + K_I * I + K_D * derivative, 0)
//
// The unrectified WAPID integral is an exponentially weighted average of past
// constraint errors: I_k = (1-w)^k I_0 + sum_i w (1-w)^(k-i) delta_i.

#include <span>
#include <string>

namespace cdmpo {

enum class ControllerMode { kP, kPid, kWapid };

ControllerMode parse_controller_mode(const std::string& name);
std::string to_string(ControllerMode mode);

struct WapidGains {
  double k_p = 0.1;
  double k_i = 0.01;
  double k_d = 0.01;
  double w = 0.1;
  ControllerMode mode = ControllerMode::kWapid;
  bool rectified_integral = true;

  void validate() const;
};

struct WapidState {
  WapidGains gains;
  double integral = 0.0;
  double prev_cost = 0.0;
  bool has_prev = false;  // false until the first update
  double lambda = 0.0;
};

WapidState make_wapid_state(const WapidGains& gains);

/// Quantities of one update, as logged in the controller trace.
struct WapidTrace {
  double delta = 0.0;
  double integral = 0.0;
  double derivative = 0.0;
  double lambda = 0.0;
};

WapidTrace wapid_update(WapidState& state, double j_c, double d);

/// Mean of the last `window` episodic cost totals; `d` when nothing has completed.
double cost_signal(std::span<const double> episode_costs, std::size_t window, double d);

}  // namespace cdmpo
