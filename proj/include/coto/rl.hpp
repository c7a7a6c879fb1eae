#ifndef COTO_RL_HPP_
#define COTO_RL_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "coto/math.hpp"
#include "coto/nn.hpp"
#include "coto/policy.hpp"
#include "coto/rng.hpp"

namespace coto {

enum class ActionSource { kRL, kTO };

// One stored environment step. segment_id groups contiguous RL-chosen runs;
// a change of segment means the trajectory was interrupted (a TO action was
// executed, or an episode boundary was crossed).
struct Transition {
  Observation obs;
  std::array<double, kActDim> action_unit{};
  double log_prob_old = 0.0;
  double reward = 0.0;
  double value_old = 0.0;
  bool done_flag = false;
  int segment_id = 0;
  ActionSource source = ActionSource::kRL;
};

struct SlPair {
  Observation obs;
  std::array<double, kActDim> expert_action_unit{};
};

struct PpoConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip_eps = 0.2;
  int epochs = 10;       // K
  int minibatch = 64;
  int rollout_steps = 2048;  // T
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double lr = 3e-4;
  double max_grad_norm = 0.5;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw std::invalid_argument("PpoConfig: gamma must be in (0,1]");
    if (!(lambda_gae > 0.0 && lambda_gae <= 1.0))
      throw std::invalid_argument("PpoConfig: lambda_gae must be in (0,1]");
    if (!(clip_eps > 0.0))
      throw std::invalid_argument("PpoConfig: clip_eps must be > 0");
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// GAE(gamma, lambda) run independently per segment. bootstrap_values holds
// one value per segment in order of first appearance: 0 for terminal ends,
// V(s_end) for truncated ones.
inline GaeResult compute_gae(const std::vector<Transition>& transitions,
                             const std::vector<double>& bootstrap_values,
                             const PpoConfig& cfg) {
  GaeResult out;
  out.advantages.assign(transitions.size(), 0.0);
  out.returns.assign(transitions.size(), 0.0);
  if (transitions.empty()) return out;

  std::size_t seg_index = 0;
  std::size_t start = 0;
  while (start < transitions.size()) {
    std::size_t end = start;
    while (end + 1 < transitions.size() &&
           transitions[end + 1].segment_id == transitions[start].segment_id)
      ++end;
    if (seg_index >= bootstrap_values.size())
      throw std::invalid_argument("compute_gae: missing bootstrap value");
    double next_value = bootstrap_values[seg_index];
    double gae = 0.0;
    for (std::size_t i = end + 1; i-- > start;) {
      const Transition& t = transitions[i];
      double nonterminal = t.done_flag ? 0.0 : 1.0;
      double delta =
          t.reward + cfg.gamma * next_value * nonterminal - t.value_old;
      gae = delta + cfg.gamma * cfg.lambda_gae * nonterminal * gae;
      out.advantages[i] = gae;
      out.returns[i] = gae + t.value_old;
      next_value = t.value_old;
    }
    ++seg_index;
    start = end + 1;
  }
  return out;
}

struct PpoStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
  bool aborted = false;
};

struct BcStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
  bool aborted = false;
};

namespace detail {

// Global gradient-norm clipping across actor and critic blocks.
inline double clip_grad_norm(Mlp::Gradients* ga, Mlp::Gradients* gc,
                             double max_norm) {
  double sq = 0.0;
  if (ga) sq += ga->squared_norm();
  if (gc) sq += gc->squared_norm();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double f = max_norm / norm;
    if (ga) ga->scale(f);
    if (gc) gc->scale(f);
  }
  return norm;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace detail

// PPO clipped-surrogate update: K epochs of shuffled minibatches maximizing
// L^CLIP - value_coef * value loss + entropy_coef * entropy, with
// per-rollout advantage normalization and global grad-norm clipping.
// A non-finite loss aborts the whole phase and restores the parameters.
inline PpoStats ppo_update(PolicyParams& params, AdamState& actor_opt,
                           AdamState& critic_opt,
                           const std::vector<Transition>& transitions,
                           const std::vector<double>& bootstrap_values,
                           const PpoConfig& cfg, Rng& rng) {
  cfg.validate();
  PpoStats stats;
  if (transitions.empty()) return stats;

  GaeResult gae = compute_gae(transitions, bootstrap_values, cfg);
  std::vector<double> adv = gae.advantages;
  double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  double stddev = std::sqrt(var / adv.size());
  for (double& a : adv) a = (a - mean) / (stddev + 1e-8);

  PolicyParams backup = params;
  AdamState actor_backup = actor_opt;
  AdamState critic_backup = critic_opt;

  double sum_surr = 0.0, sum_vloss = 0.0, sum_ent = 0.0, sum_kl = 0.0,
         sum_gnorm = 0.0;
  int batches = 0;

  const std::size_t n = transitions.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto idx = detail::shuffled_indices(n, rng);
    for (std::size_t b = 0; b < n; b += cfg.minibatch) {
      std::size_t b_end = std::min(n, b + cfg.minibatch);
      double inv = 1.0 / double(b_end - b);
      Mlp::Gradients g_actor = params.actor.zero_gradients();
      Mlp::Gradients g_critic = params.critic.zero_gradients();
      double mb_surr = 0.0, mb_vloss = 0.0, mb_ent = 0.0, mb_kl = 0.0;

      for (std::size_t k = b; k < b_end; ++k) {
        const Transition& t = transitions[idx[k]];
        double a_hat = adv[idx[k]];
        double ret = gae.returns[idx[k]];
        PolicyEval ev = log_prob_and_entropy(params, t.obs, t.action_unit);

        double ratio = std::exp(ev.log_prob - t.log_prob_old);
        double surr1 = ratio * a_hat;
        double clipped =
            clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        double surr2 = clipped * a_hat;
        double obj = std::min(surr1, surr2);
        // gradient flows through the ratio only on the unclipped branch
        double dobj_dlogp = surr1 <= surr2 ? ratio * a_hat : 0.0;

        double verr = ev.value - ret;
        double vloss = verr * verr;

        mb_surr += obj;
        mb_vloss += vloss;
        mb_ent += ev.entropy;
        mb_kl += t.log_prob_old - ev.log_prob;

        // minimize -(obj + entropy_coef * H) on the actor
        Vec draw(2 * kActDim);
        for (std::size_t i = 0; i < 2 * kActDim; ++i)
          draw[i] = inv * (-dobj_dlogp * ev.dlogp_draw[i] -
                           cfg.entropy_coef * ev.dentropy_draw[i]);
        g_actor.add_scaled(params.actor.backward(ev.actor_tape, draw), 1.0);
        Vec dv = {inv * cfg.value_coef * 2.0 * verr};
        g_critic.add_scaled(params.critic.backward(ev.critic_tape, dv), 1.0);
      }

      double loss_probe = -(mb_surr * inv) + cfg.value_coef * mb_vloss * inv -
                          cfg.entropy_coef * mb_ent * inv;
      if (!std::isfinite(loss_probe) || !g_actor.finite() ||
          !g_critic.finite()) {
        params = backup;
        actor_opt = actor_backup;
        critic_opt = critic_backup;
        stats.aborted = true;
        return stats;
      }

      double gnorm =
          detail::clip_grad_norm(&g_actor, &g_critic, cfg.max_grad_norm);
      actor_opt.step(params.actor, g_actor);
      critic_opt.step(params.critic, g_critic);

      sum_surr += mb_surr * inv;
      sum_vloss += mb_vloss * inv;
      sum_ent += mb_ent * inv;
      sum_kl += mb_kl * inv;
      sum_gnorm += gnorm;
      ++batches;
    }
  }

  stats.surrogate = sum_surr / batches;
  stats.value_loss = sum_vloss / batches;
  stats.entropy = sum_ent / batches;
  stats.approx_kl = sum_kl / batches;
  stats.grad_norm = sum_gnorm / batches;
  stats.minibatches = batches;
  return stats;
}

// Behavioral cloning: mean squared error between the policy mode and the
// expert action, both in unit-action space. Actor only.
inline BcStats bc_update(PolicyParams& params, AdamState& actor_opt,
                         const std::vector<SlPair>& sl_pairs,
                         const PpoConfig& cfg, Rng& rng) {
  BcStats stats;
  if (sl_pairs.empty()) return stats;

  PolicyParams backup = params;
  AdamState actor_backup = actor_opt;

  double sum_loss = 0.0, sum_gnorm = 0.0;
  int batches = 0;
  const std::size_t n = sl_pairs.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto idx = detail::shuffled_indices(n, rng);
    for (std::size_t b = 0; b < n; b += cfg.minibatch) {
      std::size_t b_end = std::min(n, b + cfg.minibatch);
      double inv = 1.0 / double(b_end - b);
      Mlp::Gradients g_actor = params.actor.zero_gradients();
      double mb_loss = 0.0;

      for (std::size_t k = b; k < b_end; ++k) {
        const SlPair& pair = sl_pairs[idx[k]];
        ModeEval ev = eval_mode(params, pair.obs);
        Vec draw(2 * kActDim, 0.0);
        for (std::size_t d = 0; d < kActDim; ++d) {
          double err = ev.mode[d] - pair.expert_action_unit[d];
          mb_loss += err * err;
          draw[2 * d] = inv * 2.0 * err * ev.dmode_draw[d][0];
          draw[2 * d + 1] = inv * 2.0 * err * ev.dmode_draw[d][1];
        }
        g_actor.add_scaled(params.actor.backward(ev.actor_tape, draw), 1.0);
      }

      if (!std::isfinite(mb_loss) || !g_actor.finite()) {
        params = backup;
        actor_opt = actor_backup;
        stats.aborted = true;
        return stats;
      }

      double gnorm =
          detail::clip_grad_norm(&g_actor, nullptr, cfg.max_grad_norm);
      actor_opt.step(params.actor, g_actor);
      sum_loss += mb_loss * inv;
      sum_gnorm += gnorm;
      ++batches;
    }
  }

  stats.loss = sum_loss / batches;
  stats.grad_norm = sum_gnorm / batches;
  stats.minibatches = batches;
  return stats;
}

}  // namespace coto

#endif  // COTO_RL_HPP_
