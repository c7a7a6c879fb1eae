#ifndef COTO_TRAJOPT_HPP_
#define COTO_TRAJOPT_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "coto/env.hpp"
#include "coto/math.hpp"
#include "coto/plant.hpp"

namespace coto {

// Constraint-reduced car kinematics used by the optimizer:
//   q = (x, y, theta_b, theta_f), u = (v, theta_f_rate)
//   xdot = v cos(theta_b), ydot = v sin(theta_b),
//   theta_b_dot = (v / wheelbase) tan(theta_f), theta_f_dot = u2.
// The no-slip/no-skid Pfaffian constraints hold identically in this form.
// Deliberately no actuator lag: the model is allowed to mismatch the plant.
struct TOModel {
  double wheelbase = 0.325;
  double v_limit = 2.0;
  double steer_limit = 0.6;
  double steer_rate_limit = 4.0;

  static TOModel from_plant(const PlantConfig& cfg) {
    return TOModel{cfg.wheelbase, cfg.v_limit, cfg.steer_limit,
                   cfg.steer_rate_limit};
  }
};

struct TOKnot {
  double x = 0.0;
  double y = 0.0;
  double theta_b = 0.0;
  double theta_f = 0.0;
};

struct TOControl {
  double v = 0.0;           // [m/s]
  double steer_rate = 0.0;  // [rad/s]
};

struct TOWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma_theta = 0.0;
};

struct TOProblem {
  TOKnot q0;
  GoalSpec goal;
  double theta_g = 0.0;
  int knots = 20;     // N
  double h = 0.1;     // seconds per knot
  TOWeights weights;

  void validate() const {
    if (knots < 2) throw std::invalid_argument("TOProblem: N must be >= 2");
    if (!(h > 0.0)) throw std::invalid_argument("TOProblem: h must be > 0");
    for (double v : {q0.x, q0.y, q0.theta_b, q0.theta_f, goal.x_g, goal.y_g,
                     theta_g})
      require_finite(v, "TOProblem");
  }

  static TOProblem from_state(const CarState& s, const GoalSpec& g,
                              int knots = 20, double h = 0.1,
                              TOWeights w = {}) {
    TOProblem p;
    p.q0 = TOKnot{s.x_b, s.y_b, s.theta_b, s.theta_f_act};
    p.goal = g;
    p.theta_g = std::atan2(g.y_g - s.y_b, g.x_g - s.x_b);
    p.knots = knots;
    p.h = h;
    p.weights = w;
    return p;
  }
};

struct TOSolution {
  std::vector<TOKnot> q;      // N+1 knots, q[0] fixed to the problem's q0
  std::vector<TOControl> u;   // N controls; u[k] drives q[k] -> q[k+1]
  double cost = 0.0;
  double constraint_residual = 0.0;  // max-norm over knots and coordinates
  int iterations = 0;
  bool converged = false;

  bool empty() const { return q.empty(); }
};

// One implicit backward-Euler step. theta_f is handled exactly (its rate is
// the control itself, projected onto the steering box); the remaining
// coordinates are resolved with 3 fixed-point sweeps, which is exact for
// this triangular system. Returns the step and writes back the effective
// steering rate so the stored control always satisfies the residual.
inline TOKnot backward_euler_step(const TOModel& m, const TOKnot& q,
                                  TOControl& u, double h) {
  TOKnot n = q;
  n.theta_f = clamp(q.theta_f + h * u.steer_rate, -m.steer_limit,
                    m.steer_limit);
  u.steer_rate = (n.theta_f - q.theta_f) / h;
  for (int it = 0; it < 3; ++it) {
    double nx = q.x + h * u.v * std::cos(n.theta_b);
    double ny = q.y + h * u.v * std::sin(n.theta_b);
    double nt = q.theta_b + h * (u.v / m.wheelbase) * std::tan(n.theta_f);
    n.x = nx;
    n.y = ny;
    n.theta_b = nt;
  }
  return n;
}

inline std::vector<TOKnot> rollout(const TOModel& m, const TOKnot& q0,
                                   std::vector<TOControl>& u, double h) {
  std::vector<TOKnot> q;
  q.reserve(u.size() + 1);
  q.push_back(q0);
  for (auto& ctrl : u) q.push_back(backward_euler_step(m, q.back(), ctrl, h));
  return q;
}

inline double terminal_cost(const TOProblem& p, const TOKnot& qN) {
  double dx = p.goal.x_g - qN.x;
  double dy = p.goal.y_g - qN.y;
  double dth = wrap_angle(p.theta_g - qN.theta_b);
  return p.weights.alpha * dx * dx + p.weights.beta * dy * dy +
         p.weights.gamma_theta * dth * dth;
}

// Per-knot max-norm residual of q[k+1] = q[k] + h f(q[k+1], u[k]).
inline std::vector<double> backward_euler_residuals(
    const TOModel& m, const std::vector<TOKnot>& q,
    const std::vector<TOControl>& u, double h) {
  std::vector<double> res;
  res.reserve(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const TOKnot& a = q[k];
    const TOKnot& b = q[k + 1];
    double rx = b.x - a.x - h * u[k].v * std::cos(b.theta_b);
    double ry = b.y - a.y - h * u[k].v * std::sin(b.theta_b);
    double rt =
        b.theta_b - a.theta_b - h * (u[k].v / m.wheelbase) * std::tan(b.theta_f);
    double rf = b.theta_f - a.theta_f - h * u[k].steer_rate;
    res.push_back(std::max({std::fabs(rx), std::fabs(ry), std::fabs(rt),
                            std::fabs(rf)}));
  }
  return res;
}

struct TOSolverOptions {
  int max_iterations_cold = 120;
  int max_iterations_warm = 40;
  double momentum = 0.9;
  double initial_step = 0.5;
  int max_halvings = 10;
  double fd_step = 1e-4;
  double grad_tol = 1e-5;   // relative to 1 + |cost|
  double cost_tol = 1e-3;   // terminal within ~3 cm: optimal for a 0.2 m capture radius
  bool reseed_warm = true;  // let a fresh dash seed compete with the shifted warm plan
  // Only compete a fresh seed when the warm plan's first control speed has
  // dropped below this fraction of the speed limit — the signature of
  // receding-horizon creep (each shift consumes plan time faster than real
  // time, and re-solves spread the remaining distance over the remaining
  // horizon). While the plan still opens at full speed it is trusted
  // unchanged (no plan churn). 1.0 = always compete, 0.0 = never.
  double reseed_speed_fraction = 0.4;
};

// Receding-horizon solver: condensed single shooting over the implicit
// backward-Euler map, projected gradient descent with momentum, central
// finite-difference gradients, backtracking line search.
class TOSolver {
 public:
  explicit TOSolver(TOModel model, TOSolverOptions opts = {})
      : model_(model), opts_(opts) {}

  const TOModel& model() const { return model_; }

  TOSolution solve(const TOProblem& problem,
                   const std::optional<TOSolution>& warm_start = {}) const {
    problem.validate();
    const int n = problem.knots;
    bool warm = warm_start && !warm_start->empty() &&
                static_cast<int>(warm_start->u.size()) == n;
    std::vector<TOControl> u;
    if (warm && !opts_.reseed_warm) {
      u = warm_start->u;
    } else {
      u = dash_seed(problem);
    }
    project(u);
    std::vector<TOControl> scratch = u;
    double cost = rollout_cost(problem, scratch);
    if (warm && opts_.reseed_warm) {
      // Two-seed multi-start: the shifted previous plan competes with a
      // fresh dash seed. When executing on the real plant leaves the warm
      // plan's terminal off the goal, the fresh seed can be cheaper and
      // the solve re-enters the early-arrival basin instead of inheriting
      // an arrive-at-the-deadline plan that a receding horizon would turn
      // into an ever-slower creep. A warm plan whose initial cost is
      // already within reseed_threshold is kept as-is (no plan churn).
      std::vector<TOControl> uw = warm_start->u;
      project(uw);
      bool creeping = std::fabs(uw.front().v) <
                      opts_.reseed_speed_fraction * model_.v_limit;
      std::vector<TOControl> sw = uw;
      double cw = rollout_cost(problem, sw);
      if (!creeping || cw < cost) {
        u = uw;
        scratch = sw;
        cost = cw;
      }
    }
    std::vector<TOControl> best_u = scratch;
    double best_cost = cost;
    u = scratch;  // keep effective (projected) controls

    int cap = warm ? opts_.max_iterations_warm : opts_.max_iterations_cold;
    std::vector<double> grad(2 * n), direction(2 * n, 0.0);
    int iter = 0;
    bool converged = best_cost <= opts_.cost_tol;

    while (!converged && iter < cap) {
      ++iter;
      finite_difference_gradient(problem, u, grad);
      double gnorm = 0.0;
      for (double g : grad) gnorm = std::max(gnorm, std::fabs(g));
      if (gnorm < opts_.grad_tol * (1.0 + std::fabs(cost))) {
        converged = true;
        break;
      }
      if (warm) {
        // Re-solves prefer adjusting the tail of the plan: the terminal
        // cost cannot tell a fast arrival from a slow one, and an
        // unweighted descent step spreads every correction evenly across
        // the horizon, eroding committed near-term actions into a creep
        // toward the goal. Down-weighting early knots keeps the head of
        // the warm-started plan stable (a diagonal preconditioner, so
        // descent directions remain descent directions).
        for (int k = 0; k < n; ++k) {
          double w = double(k + 1) / double(n);
          grad[2 * k] *= w;
          grad[2 * k + 1] *= w;
        }
      }
      for (int i = 0; i < 2 * n; ++i)
        direction[i] = opts_.momentum * direction[i] - grad[i];

      bool improved = line_search(problem, u, direction, cost);
      if (!improved) {
        // momentum may point uphill; retry along the raw negative gradient
        for (int i = 0; i < 2 * n; ++i) direction[i] = -grad[i];
        improved = line_search(problem, u, direction, cost);
        if (!improved) {
          // projected stationary point
          converged = true;
          break;
        }
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_u = u;
      }
      if (best_cost <= opts_.cost_tol) {
        converged = true;
        break;
      }
    }

    TOSolution sol;
    sol.u = best_u;
    sol.q = rollout(model_, problem.q0, sol.u, problem.h);
    sol.cost = terminal_cost(problem, sol.q.back());
    auto res = backward_euler_residuals(model_, sol.q, sol.u, problem.h);
    sol.constraint_residual =
        res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
    sol.iterations = iter;
    sol.converged = converged;
    return sol;
  }

 private:
  void project(std::vector<TOControl>& u) const {
    for (auto& c : u) {
      c.v = clamp(c.v, -model_.v_limit, model_.v_limit);
      c.steer_rate = clamp(c.steer_rate, -model_.steer_rate_limit,
                           model_.steer_rate_limit);
    }
  }

  // All-zero controls are a saddle point (steering has no effect at v = 0
  // and the cost is locally symmetric in v), so seed solves with a
  // dash-then-stop guess: full speed toward the goal for just enough knots
  // to cover the distance, zero after. The terminal cost cannot distinguish
  // plans by arrival time, so this picks the basin of early-arrival optima.
  // Built from the goal bearing only, it is equivariant under rigid
  // rotations of the instance.
  std::vector<TOControl> dash_seed(const TOProblem& problem) const {
    const int n = problem.knots;
    std::vector<TOControl> u(n);
    double dx = problem.goal.x_g - problem.q0.x;
    double dy = problem.goal.y_g - problem.q0.y;
    double dist = std::hypot(dx, dy);
    if (dist > 1e-9) {
      double bearing = wrap_angle(std::atan2(dy, dx) - problem.q0.theta_b);
      double dir = std::cos(bearing) >= 0.0 ? 1.0 : -1.0;
      double v0 = dir * model_.v_limit;
      int dash = int(std::ceil(dist / (model_.v_limit * problem.h)));
      dash = std::min(std::max(dash, 1), n);
      for (int k = 0; k < dash; ++k) u[k].v = v0;
    }
    return u;
  }

  double rollout_cost(const TOProblem& p, std::vector<TOControl>& u) const {
    TOKnot q = p.q0;
    for (auto& c : u) q = backward_euler_step(model_, q, c, p.h);
    return terminal_cost(p, q);
  }

  void finite_difference_gradient(const TOProblem& p,
                                  const std::vector<TOControl>& u,
                                  std::vector<double>& grad) const {
    std::vector<TOControl> work = u;
    const double eps = opts_.fd_step;
    for (std::size_t k = 0; k < u.size(); ++k) {
      for (int c = 0; c < 2; ++c) {
        double& var = c == 0 ? work[k].v : work[k].steer_rate;
        double saved = var;
        var = saved + eps;
        double cp = rollout_cost_const(p, work);
        var = saved - eps;
        double cm = rollout_cost_const(p, work);
        var = saved;
        grad[2 * k + c] = (cp - cm) / (2.0 * eps);
      }
    }
  }

  double rollout_cost_const(const TOProblem& p,
                            const std::vector<TOControl>& u) const {
    TOKnot q = p.q0;
    TOControl tmp;
    for (const auto& c : u) {
      tmp = c;
      q = backward_euler_step(model_, q, tmp, p.h);
    }
    return terminal_cost(p, q);
  }

  bool line_search(const TOProblem& p, std::vector<TOControl>& u,
                   const std::vector<double>& direction, double& cost) const {
    std::vector<TOControl> trial(u.size());
    double t = opts_.initial_step;
    for (int halving = 0; halving < opts_.max_halvings; ++halving) {
      for (std::size_t k = 0; k < u.size(); ++k) {
        trial[k].v = u[k].v + t * direction[2 * k];
        trial[k].steer_rate = u[k].steer_rate + t * direction[2 * k + 1];
      }
      project(trial);
      double c = rollout_cost(p, trial);
      if (c < cost - 1e-14) {
        u = trial;
        cost = c;
        return true;
      }
      t *= 0.5;
    }
    return false;
  }

  TOModel model_;
  TOSolverOptions opts_;
};

// First control of the plan as an env action: speed from the first control,
// steering command from the first knot's steering state (the TO controls a
// steering rate, the env consumes a steering angle).
inline CarAction first_action(const TOSolution& sol) {
  if (sol.empty()) throw std::invalid_argument("first_action: empty solution");
  return CarAction{sol.u.front().v, sol.q[1].theta_f};
}

// Receding-horizon warm start: drop knot 0, duplicate the last knot/control.
inline TOSolution shift_warm_start(const TOSolution& prev) {
  if (prev.empty()) return prev;
  TOSolution s = prev;
  s.q.erase(s.q.begin());
  s.q.push_back(s.q.back());
  s.u.erase(s.u.begin());
  s.u.push_back(s.u.back());
  s.converged = false;
  return s;
}

inline nlohmann::json solution_to_json(const TOSolution& sol,
                                       const TOModel& m, double h) {
  nlohmann::json j;
  j["cost"] = sol.cost;
  j["constraint_residual"] = sol.constraint_residual;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  j["residuals"] = backward_euler_residuals(m, sol.q, sol.u, h);
  auto& knots = j["knots"] = nlohmann::json::array();
  for (const auto& q : sol.q)
    knots.push_back({{"x", q.x},
                     {"y", q.y},
                     {"theta_b", q.theta_b},
                     {"theta_f", q.theta_f}});
  auto& ctrls = j["controls"] = nlohmann::json::array();
  for (const auto& u : sol.u)
    ctrls.push_back({{"v", u.v}, {"steer_rate", u.steer_rate}});
  return j;
}

}  // namespace coto

#endif  // COTO_TRAJOPT_HPP_
