#ifndef COTO_POLICY_HPP_
#define COTO_POLICY_HPP_

#include <array>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "coto/env.hpp"
#include "coto/math.hpp"
#include "coto/nn.hpp"
#include "coto/plant.hpp"
#include "coto/rng.hpp"

namespace coto {

inline constexpr std::size_t kObsDim = 7;
inline constexpr std::size_t kActDim = 2;
inline constexpr double kUnitActionEps = 1e-6;

struct ActionBounds {
  std::array<double, kActDim> lower{};
  std::array<double, kActDim> upper{};

  static ActionBounds from_plant(const PlantConfig& cfg) {
    ActionBounds b;
    b.lower = {-cfg.v_limit, -cfg.steer_limit};
    b.upper = {cfg.v_limit, cfg.steer_limit};
    return b;
  }

  double width(std::size_t d) const { return upper[d] - lower[d]; }

  CarAction to_env(const std::array<double, kActDim>& unit) const {
    return CarAction{lower[0] + unit[0] * width(0),
                     lower[1] + unit[1] * width(1)};
  }

  std::array<double, kActDim> to_unit(const CarAction& a) const {
    std::array<double, kActDim> u = {(a.v_cmd - lower[0]) / width(0),
                                     (a.theta_f_cmd - lower[1]) / width(1)};
    for (double& x : u) x = clamp(x, kUnitActionEps, 1.0 - kUnitActionEps);
    return u;
  }
};

// Beta distribution heads: the actor emits (alpha_raw, beta_raw) per action
// dimension; alpha = 1 + softplus(alpha_raw) keeps the distribution
// unimodal with an interior mode.
struct BetaHeads {
  std::array<double, kActDim> alpha{};
  std::array<double, kActDim> beta{};
  std::array<double, kActDim> alpha_raw{};
  std::array<double, kActDim> beta_raw{};

  static BetaHeads from_raw(const Vec& raw) {
    BetaHeads h;
    for (std::size_t d = 0; d < kActDim; ++d) {
      h.alpha_raw[d] = raw[2 * d];
      h.beta_raw[d] = raw[2 * d + 1];
      h.alpha[d] = 1.0 + softplus(h.alpha_raw[d]);
      h.beta[d] = 1.0 + softplus(h.beta_raw[d]);
    }
    return h;
  }

  double mode(std::size_t d) const {
    return (alpha[d] - 1.0) / (alpha[d] + beta[d] - 2.0);
  }
};

inline double beta_log_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         log_beta(a, b);
}

inline double beta_entropy(double a, double b) {
  return log_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

// Actor + critic pair over the 7-dim observation.
struct PolicyParams {
  Mlp actor;   // 7 -> 64 -> 64 -> 4
  Mlp critic;  // 7 -> 64 -> 64 -> 1
  ActionBounds bounds;

  static PolicyParams make(const ActionBounds& bounds, Rng& rng,
                           std::size_t hidden = 64) {
    PolicyParams p;
    p.actor = Mlp::make({kObsDim, hidden, hidden, 2 * kActDim}, rng, 0.01);
    p.critic = Mlp::make({kObsDim, hidden, hidden, 1}, rng, 1.0);
    p.bounds = bounds;
    return p;
  }
};

struct ActionSample {
  CarAction action_env;
  std::array<double, kActDim> action_unit{};
  double log_prob = 0.0;
  double value = 0.0;
};

namespace detail {

inline Vec obs_vec(const Observation& obs) {
  auto a = obs.as_array();
  for (double x : a) require_finite(x, "observation");
  return Vec(a.begin(), a.end());
}

// log-prob in env-action space: per-dim Beta log-pdf minus the affine
// change-of-variables term.
inline double scaled_log_prob(const BetaHeads& h,
                              const std::array<double, kActDim>& unit,
                              const ActionBounds& bounds) {
  double lp = 0.0;
  for (std::size_t d = 0; d < kActDim; ++d) {
    lp += beta_log_pdf(unit[d], h.alpha[d], h.beta[d]) -
          std::log(bounds.width(d));
  }
  return lp;
}

}  // namespace detail

inline BetaHeads eval_heads(const PolicyParams& p, const Observation& obs,
                            Mlp::Tape* tape = nullptr) {
  return BetaHeads::from_raw(p.actor.forward(detail::obs_vec(obs), tape));
}

inline double eval_value(const PolicyParams& p, const Observation& obs,
                         Mlp::Tape* tape = nullptr) {
  return p.critic.forward(detail::obs_vec(obs), tape)[0];
}

inline ActionSample act_stochastic(const PolicyParams& p,
                                   const Observation& obs, Rng& rng) {
  BetaHeads h = eval_heads(p, obs);
  ActionSample s;
  for (std::size_t d = 0; d < kActDim; ++d) {
    double x = rng.beta(h.alpha[d], h.beta[d]);
    s.action_unit[d] = clamp(x, kUnitActionEps, 1.0 - kUnitActionEps);
  }
  s.action_env = p.bounds.to_env(s.action_unit);
  s.log_prob = detail::scaled_log_prob(h, s.action_unit, p.bounds);
  s.value = eval_value(p, obs);
  return s;
}

// Maximum-likelihood action: the per-dimension mode, well-defined because
// alpha, beta > 1.
inline ActionSample act_deterministic(const PolicyParams& p,
                                      const Observation& obs) {
  BetaHeads h = eval_heads(p, obs);
  ActionSample s;
  for (std::size_t d = 0; d < kActDim; ++d) {
    s.action_unit[d] =
        clamp(h.mode(d), kUnitActionEps, 1.0 - kUnitActionEps);
  }
  s.action_env = p.bounds.to_env(s.action_unit);
  s.log_prob = detail::scaled_log_prob(h, s.action_unit, p.bounds);
  s.value = eval_value(p, obs);
  return s;
}

// Fresh log-prob/entropy/value of a stored unit action under the current
// parameters, with everything needed to backpropagate:
//   d(log_prob)/d(raw heads) and d(entropy)/d(raw heads).
struct PolicyEval {
  double log_prob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
  BetaHeads heads;
  Mlp::Tape actor_tape;
  Mlp::Tape critic_tape;
  Vec dlogp_draw;     // size 2*kActDim
  Vec dentropy_draw;  // size 2*kActDim
};

inline PolicyEval log_prob_and_entropy(const PolicyParams& p,
                                       const Observation& obs,
                                       std::array<double, kActDim> unit) {
  for (double& x : unit) x = clamp(x, kUnitActionEps, 1.0 - kUnitActionEps);
  PolicyEval ev;
  ev.heads = BetaHeads::from_raw(p.actor.forward(detail::obs_vec(obs),
                                                 &ev.actor_tape));
  ev.value = p.critic.forward(detail::obs_vec(obs), &ev.critic_tape)[0];
  ev.log_prob = detail::scaled_log_prob(ev.heads, unit, p.bounds);
  ev.dlogp_draw.assign(2 * kActDim, 0.0);
  ev.dentropy_draw.assign(2 * kActDim, 0.0);
  ev.entropy = 0.0;
  for (std::size_t d = 0; d < kActDim; ++d) {
    double a = ev.heads.alpha[d], b = ev.heads.beta[d];
    double psi_ab = digamma(a + b);
    ev.entropy += beta_entropy(a, b);
    // d logpdf / d alpha, beta
    double dlp_da = std::log(unit[d]) - digamma(a) + psi_ab;
    double dlp_db = std::log1p(-unit[d]) - digamma(b) + psi_ab;
    // d entropy / d alpha, beta
    double tri_ab = trigamma(a + b);
    double dH_da = -(a - 1.0) * trigamma(a) + (a + b - 2.0) * tri_ab;
    double dH_db = -(b - 1.0) * trigamma(b) + (a + b - 2.0) * tri_ab;
    // chain through alpha = 1 + softplus(alpha_raw)
    double sa = sigmoid(ev.heads.alpha_raw[d]);
    double sb = sigmoid(ev.heads.beta_raw[d]);
    ev.dlogp_draw[2 * d] = dlp_da * sa;
    ev.dlogp_draw[2 * d + 1] = dlp_db * sb;
    ev.dentropy_draw[2 * d] = dH_da * sa;
    ev.dentropy_draw[2 * d + 1] = dH_db * sb;
  }
  return ev;
}

// Mode and its gradient with respect to the raw head outputs, for the
// behavioral-cloning loss.
struct ModeEval {
  std::array<double, kActDim> mode{};
  std::array<std::array<double, 2>, kActDim> dmode_draw{};  // per dim: d/d(alpha_raw), d/d(beta_raw)
  Mlp::Tape actor_tape;
  BetaHeads heads;
};

inline ModeEval eval_mode(const PolicyParams& p, const Observation& obs) {
  ModeEval ev;
  ev.heads =
      BetaHeads::from_raw(p.actor.forward(detail::obs_vec(obs), &ev.actor_tape));
  for (std::size_t d = 0; d < kActDim; ++d) {
    double a = ev.heads.alpha[d], b = ev.heads.beta[d];
    double denom = a + b - 2.0;
    ev.mode[d] = (a - 1.0) / denom;
    double dm_da = (b - 1.0) / (denom * denom);
    double dm_db = -(a - 1.0) / (denom * denom);
    ev.dmode_draw[d] = {dm_da * sigmoid(ev.heads.alpha_raw[d]),
                        dm_db * sigmoid(ev.heads.beta_raw[d])};
  }
  return ev;
}

// Checkpoint with a metadata block alongside the raw networks.
inline nlohmann::json policy_to_json(const PolicyParams& p,
                                     long training_step = 0) {
  nlohmann::json j;
  j["meta"] = {{"obs_dim", kObsDim},
               {"act_dim", kActDim},
               {"action_lower", p.bounds.lower},
               {"action_upper", p.bounds.upper},
               {"training_step", training_step}};
  j["actor"] = p.actor.to_json();
  j["critic"] = p.critic.to_json();
  return j;
}

inline PolicyParams policy_from_json(const nlohmann::json& j) {
  PolicyParams p;
  p.actor = Mlp::from_json(j.at("actor"));
  p.critic = Mlp::from_json(j.at("critic"));
  auto lo = j.at("meta").at("action_lower").get<std::vector<double>>();
  auto hi = j.at("meta").at("action_upper").get<std::vector<double>>();
  if (lo.size() != kActDim || hi.size() != kActDim)
    throw std::invalid_argument("policy checkpoint: bad action bounds");
  for (std::size_t d = 0; d < kActDim; ++d) {
    p.bounds.lower[d] = lo[d];
    p.bounds.upper[d] = hi[d];
  }
  return p;
}

}  // namespace coto

#endif  // COTO_POLICY_HPP_
