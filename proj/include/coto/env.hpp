#ifndef COTO_ENV_HPP_
#define COTO_ENV_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "coto/math.hpp"
#include "coto/plant.hpp"
#include "coto/rng.hpp"

namespace coto {

struct GoalSpec {
  double x_g = 0.0;
  double y_g = 0.0;
};

struct Observation {
  double dist_to_goal = 0.0;
  double bearing_to_goal = 0.0;  // in (-pi, pi]
  double theta_f = 0.0;
  double xdot_b = 0.0;
  double ydot_b = 0.0;
  double thetadot_b = 0.0;
  double thetadot_f = 0.0;

  std::array<double, 7> as_array() const {
    return {dist_to_goal, bearing_to_goal, theta_f,
            xdot_b,       ydot_b,          thetadot_b,
            thetadot_f};
  }
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  bool goal_reached = false;
};

struct EnvConfig {
  double goal_radius = 0.2;      // capture radius [m]
  double goal_square_half = 5.0; // goals uniform in [-half, half]^2
  double episode_seconds = 10.0;
  double shaping_gamma = 0.99;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(goal_radius > 0.0)) {
      throw std::invalid_argument("EnvConfig: goal_radius must be > 0");
    }
    if (!(shaping_gamma > 0.0 && shaping_gamma <= 1.0)) {
      throw std::invalid_argument("EnvConfig: shaping_gamma must be in (0,1]");
    }
  }
};

inline double distance_to_goal(const CarState& s, const GoalSpec& g) {
  return std::hypot(s.x_b - g.x_g, s.y_b - g.y_g);
}

// Potential function: negative Euclidean distance to the current goal.
inline double potential(const CarState& s, const GoalSpec& g) {
  return -distance_to_goal(s, g);
}

// Observation is a pure function of (state, goal) plus the plant config
// needed to reconstruct rates.
inline Observation make_observation(const CarState& s, const GoalSpec& g,
                                    const PlantConfig& cfg) {
  Observation o;
  o.dist_to_goal = distance_to_goal(s, g);
  o.bearing_to_goal =
      wrap_angle(std::atan2(g.y_g - s.y_b, g.x_g - s.x_b) - s.theta_b);
  o.theta_f = s.theta_f_act;
  o.xdot_b = s.v_act * std::cos(s.theta_b);
  o.ydot_b = s.v_act * std::sin(s.theta_b);
  o.thetadot_b = (s.v_act / cfg.wheelbase) * std::tan(s.theta_f_act);
  o.thetadot_f = clamp((s.theta_f - s.theta_f_act) / cfg.dt,
                       -cfg.steer_rate_limit, cfg.steer_rate_limit);
  return o;
}

// One-step shaped reward of applying `a` from `s` against goal `g`,
// with no side effects.
inline double shaped_reward(const CarState& s, const CarAction& a,
                            const GoalSpec& g, const PlantConfig& pcfg,
                            double shaping_gamma) {
  CarState next = plant_step(s, a, pcfg);
  return shaping_gamma * potential(next, g) - potential(s, g);
}

// CarFlagRun: reach the goal, a new goal appears, repeat until the time
// limit. Reward is the potential-based shaping of the distance potential.
class CarFlagRunEnv {
 public:
  CarFlagRunEnv(EnvConfig cfg, PlantConfig pcfg)
      : cfg_(cfg), pcfg_(pcfg), rng_(cfg.rng_seed) {
    cfg_.validate();
    pcfg_.validate();
    episode_len_ = static_cast<int>(std::lround(cfg_.episode_seconds / pcfg_.dt));
  }

  Observation reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    state_ = CarState{};
    step_count_ = 0;
    sample_goal();
    return observation();
  }

  StepResult step(const CarAction& a) {
    if (done()) throw std::logic_error("step() on a finished episode");
    double phi_before = potential(state_, goal_);
    state_ = plant_step(state_, a, pcfg_);
    double phi_after = potential(state_, goal_);
    StepResult r;
    r.reward = cfg_.shaping_gamma * phi_after - phi_before;
    ++step_count_;
    if (distance_to_goal(state_, goal_) <= cfg_.goal_radius) {
      r.goal_reached = true;
      sample_goal();
    }
    r.done = done();
    r.obs = observation();
    return r;
  }

  // Reward step() would produce for this action, without committing it.
  // Goal resampling never happens during a peek.
  double peek_reward(const CarAction& a) const {
    return shaped_reward(state_, a, goal_, pcfg_, cfg_.shaping_gamma);
  }

  bool done() const { return step_count_ >= episode_len_; }
  int step_count() const { return step_count_; }
  int episode_len() const { return episode_len_; }
  int steps_remaining() const { return episode_len_ - step_count_; }

  Observation observation() const {
    return make_observation(state_, goal_, pcfg_);
  }

  const CarState& state() const { return state_; }
  const GoalSpec& goal() const { return goal_; }
  const EnvConfig& config() const { return cfg_; }
  const PlantConfig& plant_config() const { return pcfg_; }

 private:
  void sample_goal() {
    do {
      goal_.x_g = rng_.uniform(-cfg_.goal_square_half, cfg_.goal_square_half);
      goal_.y_g = rng_.uniform(-cfg_.goal_square_half, cfg_.goal_square_half);
    } while (distance_to_goal(state_, goal_) <= cfg_.goal_radius);
  }

  EnvConfig cfg_;
  PlantConfig pcfg_;
  Rng rng_;
  CarState state_;
  GoalSpec goal_;
  int step_count_ = 0;
  int episode_len_ = 0;
};

}  // namespace coto

#endif  // COTO_ENV_HPP_
