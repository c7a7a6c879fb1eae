#ifndef COTO_PLANT_HPP_
#define COTO_PLANT_HPP_

#include <cmath>
#include <stdexcept>

#include "coto/math.hpp"

namespace coto {

// Ground-truth car state. The _act fields hold what the actuators actually
// realized, as opposed to what was last commanded.
struct CarState {
  double x_b = 0.0;          // world x [m]
  double y_b = 0.0;          // world y [m]
  double theta_b = 0.0;      // body yaw, kept in (-pi, pi]
  double theta_f = 0.0;      // last commanded steering angle [rad]
  double v_act = 0.0;        // realized forward speed [m/s]
  double theta_f_act = 0.0;  // realized steering angle [rad]
};

struct PlantConfig {
  double wheelbase = 0.325;       // [m]
  double v_limit = 2.0;           // [m/s]
  double steer_limit = 0.6;       // [rad]
  double tau_v = 0.15;            // speed first-order lag [s]
  double steer_rate_limit = 4.0;  // [rad/s]
  double dt = 0.05;               // control timestep [s]

  void validate() const {
    if (!(wheelbase > 0.0 && v_limit > 0.0 && steer_limit > 0.0 &&
          tau_v > 0.0 && steer_rate_limit > 0.0 && dt > 0.0)) {
      throw std::invalid_argument("PlantConfig: all fields must be positive");
    }
    if (!(steer_limit < kPi / 2.0)) {
      throw std::invalid_argument("PlantConfig: steer_limit must be < pi/2");
    }
  }
};

struct CarAction {
  double v_cmd = 0.0;        // [m/s]
  double theta_f_cmd = 0.0;  // [rad]
};

// One plant step: actuators first (exact exponential speed relaxation,
// rate-limited steering), then the kinematic bicycle pose update with the
// new actuator values (semi-implicit Euler). Commands saturate silently.
inline CarState plant_step(const CarState& s, const CarAction& a,
                           const PlantConfig& cfg) {
  require_finite(s.x_b, "x_b");
  require_finite(s.y_b, "y_b");
  require_finite(s.theta_b, "theta_b");
  require_finite(s.theta_f, "theta_f");
  require_finite(s.v_act, "v_act");
  require_finite(s.theta_f_act, "theta_f_act");
  require_finite(a.v_cmd, "v_cmd");
  require_finite(a.theta_f_cmd, "theta_f_cmd");

  double v_cmd = clamp(a.v_cmd, -cfg.v_limit, cfg.v_limit);
  double steer_cmd = clamp(a.theta_f_cmd, -cfg.steer_limit, cfg.steer_limit);

  CarState n;
  double decay = std::exp(-cfg.dt / cfg.tau_v);
  n.v_act = v_cmd + (s.v_act - v_cmd) * decay;
  double max_delta = cfg.steer_rate_limit * cfg.dt;
  n.theta_f_act =
      s.theta_f_act + clamp(steer_cmd - s.theta_f_act, -max_delta, max_delta);
  n.theta_f = steer_cmd;

  n.theta_b = wrap_angle(s.theta_b + cfg.dt * (n.v_act / cfg.wheelbase) *
                                         std::tan(n.theta_f_act));
  n.x_b = s.x_b + cfg.dt * n.v_act * std::cos(s.theta_b);
  n.y_b = s.y_b + cfg.dt * n.v_act * std::sin(s.theta_b);
  return n;
}

// Snapshot/restore are value copies; the plant has no hidden state.
inline CarState snapshot(const CarState& s) { return s; }
inline CarState restore(const CarState& saved) { return saved; }

}  // namespace coto

#endif  // COTO_PLANT_HPP_
