#ifndef COTO_ARBITRATION_HPP_
#define COTO_ARBITRATION_HPP_

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "coto/env.hpp"
#include "coto/policy.hpp"
#include "coto/rl.hpp"
#include "coto/rng.hpp"
#include "coto/trajopt.hpp"

namespace coto {

struct CotoConfig {
  int horizon_h = 1;         // candidate-evaluation horizon in env steps
  bool gate_enabled = true;  // compare candidates by simulated reward
  bool to_enabled = true;
  bool rl_enabled = true;
  int to_knots = 20;
  double to_h = 0.1;
  TOWeights to_weights;

  void validate() const {
    if (!to_enabled && !rl_enabled)
      throw std::invalid_argument("CotoConfig: need at least one action source");
    if (horizon_h < 1)
      throw std::invalid_argument("CotoConfig: horizon_h must be >= 1");
  }
};

struct GateDecision {
  ActionSample a_rl;       // valid iff rl_evaluated
  CarAction a_to;          // valid iff to_evaluated
  double r_rl = 0.0;       // simulated cumulative shaped reward over h steps
  double r_to = 0.0;
  ActionSource chosen = ActionSource::kTO;
  double margin = 0.0;     // r_chosen - r_other (gated decisions only)
  bool gated = false;      // both candidates were simulated and compared
  bool rl_evaluated = false;
  bool to_evaluated = false;
  bool to_converged = false;
  int to_iterations = 0;
  CarAction executed;      // the action to commit

  CarAction chosen_action() const {
    return chosen == ActionSource::kRL ? a_rl.action_env : a_to;
  }
};

// Per-trial arbitration state: owns the receding-horizon warm start, which
// persists across steps within an episode and resets at episode boundaries.
class Arbiter {
 public:
  Arbiter(TOSolver solver, CotoConfig cfg) : solver_(std::move(solver)), cfg_(cfg) {
    cfg_.validate();
  }

  const CotoConfig& config() const { return cfg_; }

  void reset_warm_start() {
    warm_.reset();
    last_goal_.reset();
  }

 private:
  // A warm start is only valid for the goal it was planned against; after a
  // capture relocates the goal, a stale plan traps the capped warm solve in
  // a poor local pattern.
  void refresh_goal(const GoalSpec& goal) const {
    if (last_goal_ &&
        (last_goal_->x_g != goal.x_g || last_goal_->y_g != goal.y_g))
      warm_.reset();
    last_goal_ = goal;
  }

 public:

  // Algorithm: solve the TO (warm-started), sample the policy, simulate
  // taking h consecutive actions from each source on snapshots, pick the
  // source with the larger cumulative shaped reward, and commit only the
  // first action of the winner. Ties go to RL. Goal resampling never
  // happens inside the simulated peeks.
  GateDecision decide(const CarFlagRunEnv& env, const PolicyParams& params,
                      Rng& rng) const {
    if (env.done()) throw std::logic_error("Arbiter::decide on done episode");
    refresh_goal(env.goal());
    int h = std::min(cfg_.horizon_h, env.steps_remaining());

    GateDecision d;
    TOSolution sol;
    if (cfg_.to_enabled) {
      TOProblem problem = TOProblem::from_state(
          env.state(), env.goal(), cfg_.to_knots, cfg_.to_h, cfg_.to_weights);
      sol = solver_.solve(problem, warm_);
      warm_ = shift_warm_start(sol);
      d.a_to = first_action(sol);
      d.to_converged = sol.converged;
      d.to_iterations = sol.iterations;
      d.to_evaluated = true;
    }
    if (cfg_.rl_enabled) {
      d.a_rl = act_stochastic(params, env.observation(), rng);
      d.rl_evaluated = true;
    }

    if (d.to_evaluated && d.rl_evaluated && cfg_.gate_enabled) {
      d.r_to = simulate_to_candidate(env, sol, h);
      d.r_rl = simulate_rl_candidate(env, params, d.a_rl, h, rng);
      d.gated = true;
      d.chosen = d.r_rl >= d.r_to ? ActionSource::kRL : ActionSource::kTO;
      d.margin = d.chosen == ActionSource::kRL ? d.r_rl - d.r_to
                                               : d.r_to - d.r_rl;
    } else if (d.rl_evaluated) {
      d.chosen = ActionSource::kRL;
    } else {
      d.chosen = ActionSource::kTO;
    }
    // the shifted plan assumed the TO action was executed; when the RL
    // action wins, the plan is stale and the next solve re-seeds
    if (d.chosen == ActionSource::kRL) warm_.reset();
    d.executed = d.chosen_action();
    return d;
  }

  // Deterministic-policy variant for evaluation.
  GateDecision decide_deterministic(const CarFlagRunEnv& env,
                                    const PolicyParams& params) const {
    if (env.done()) throw std::logic_error("Arbiter::decide on done episode");
    refresh_goal(env.goal());
    int h = std::min(cfg_.horizon_h, env.steps_remaining());
    GateDecision d;
    TOSolution sol;
    if (cfg_.to_enabled) {
      TOProblem problem = TOProblem::from_state(
          env.state(), env.goal(), cfg_.to_knots, cfg_.to_h, cfg_.to_weights);
      sol = solver_.solve(problem, warm_);
      warm_ = shift_warm_start(sol);
      d.a_to = first_action(sol);
      d.to_converged = sol.converged;
      d.to_iterations = sol.iterations;
      d.to_evaluated = true;
    }
    if (cfg_.rl_enabled) {
      d.a_rl = act_deterministic(params, env.observation());
      d.rl_evaluated = true;
    }
    if (d.to_evaluated && d.rl_evaluated && cfg_.gate_enabled) {
      d.r_to = simulate_to_candidate(env, sol, h);
      d.r_rl = simulate_action_chain(env, d.a_rl.action_env, params, h);
      d.gated = true;
      d.chosen = d.r_rl >= d.r_to ? ActionSource::kRL : ActionSource::kTO;
      d.margin = d.chosen == ActionSource::kRL ? d.r_rl - d.r_to
                                               : d.r_to - d.r_rl;
    } else if (d.rl_evaluated) {
      d.chosen = ActionSource::kRL;
    } else {
      d.chosen = ActionSource::kTO;
    }
    if (d.chosen == ActionSource::kRL) warm_.reset();
    d.executed = d.chosen_action();
    return d;
  }

 private:
  // Cumulative shaped reward of following the TO plan for h env steps.
  // The plan is sampled at env-step times: env step j covers plan time
  // [(j-1) dt, j dt).
  double simulate_to_candidate(const CarFlagRunEnv& env, const TOSolution& sol,
                               int h) const {
    const PlantConfig& pcfg = env.plant_config();
    CarState s = env.state();
    double total = 0.0;
    for (int j = 0; j < h; ++j) {
      int k = std::min<int>(sol.u.size() - 1,
                            static_cast<int>(j * pcfg.dt / cfg_.to_h));
      CarAction a{sol.u[k].v, sol.q[k + 1].theta_f};
      total += shaped_reward(s, a, env.goal(), pcfg,
                             env.config().shaping_gamma);
      s = plant_step(s, a, pcfg);
    }
    return total;
  }

  // Cumulative shaped reward of h stochastic policy actions; the first one
  // is the already-sampled candidate so h=1 consumes no extra randomness.
  double simulate_rl_candidate(const CarFlagRunEnv& env,
                               const PolicyParams& params,
                               const ActionSample& first, int h,
                               Rng& rng) const {
    const PlantConfig& pcfg = env.plant_config();
    CarState s = env.state();
    double total = 0.0;
    CarAction a = first.action_env;
    for (int j = 0; j < h; ++j) {
      if (j > 0) {
        Observation obs = make_observation(s, env.goal(), pcfg);
        a = act_stochastic(params, obs, rng).action_env;
      }
      total += shaped_reward(s, a, env.goal(), pcfg,
                             env.config().shaping_gamma);
      s = plant_step(s, a, pcfg);
    }
    return total;
  }

  double simulate_action_chain(const CarFlagRunEnv& env, const CarAction& first,
                               const PolicyParams& params, int h) const {
    const PlantConfig& pcfg = env.plant_config();
    CarState s = env.state();
    double total = 0.0;
    CarAction a = first;
    for (int j = 0; j < h; ++j) {
      if (j > 0) {
        Observation obs = make_observation(s, env.goal(), pcfg);
        a = act_deterministic(params, obs).action_env;
      }
      total += shaped_reward(s, a, env.goal(), pcfg,
                             env.config().shaping_gamma);
      s = plant_step(s, a, pcfg);
    }
    return total;
  }

  TOSolver solver_;
  CotoConfig cfg_;
  mutable std::optional<TOSolution> warm_;
  mutable std::optional<GoalSpec> last_goal_;
};

}  // namespace coto

#endif  // COTO_ARBITRATION_HPP_
