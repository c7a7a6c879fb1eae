#ifndef COTO_TRAINER_HPP_
#define COTO_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coto/arbitration.hpp"
#include "coto/env.hpp"
#include "coto/policy.hpp"
#include "coto/rl.hpp"
#include "coto/rng.hpp"
#include "coto/trajopt.hpp"

namespace coto {

// Stateless seed mixing so the env, policy init, sampling, and update
// streams never collide.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t counter = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1) +
                    0xbf58476d1ce4e5b9ULL * counter;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t kPolicyInit = 1;
inline constexpr std::uint64_t kSampling = 2;
inline constexpr std::uint64_t kUpdates = 3;
inline constexpr std::uint64_t kTrainEpisodes = 4;
inline constexpr std::uint64_t kEvalEpisodes = 100;  // separate seed domain
}  // namespace seed_stream

struct TrainConfig {
  PlantConfig plant;
  EnvConfig env;
  PpoConfig ppo;
  CotoConfig coto;
  TOSolverOptions to_solver;
  long total_timesteps = 300000;
  std::uint64_t seed = 0;
  long checkpoint_interval = 50000;
  bool accumulate_sl = true;
  // Cap on the retained BC dataset when accumulating (FIFO, oldest pairs
  // dropped first); 0 means unbounded. Clearing D_SL every rollout starves
  // the cloning updates (a few thousand pairs per update never consolidate),
  // while unbounded growth blows the wall-clock budget, so a bounded
  // sliding window is the default.
  long sl_buffer_cap = 16384;
};

struct TrainLogRow {
  long timestep = 0;
  double ep_reward_mean = 0.0;
  double rl_fraction = 0.0;
  double mean_gate_margin = 0.0;
  double to_converged_rate = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  long d_ppo_size = 0;
  long d_sl_size = 0;
};

inline std::string train_log_csv_header() {
  return "timestep,ep_reward_mean,rl_fraction,mean_gate_margin,"
         "to_converged_rate,surrogate,value_loss,entropy,approx_kl,"
         "grad_norm,d_ppo_size,d_sl_size";
}

inline std::string train_log_csv_row(const TrainLogRow& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.timestep << ',' << r.ep_reward_mean << ',' << r.rl_fraction << ','
     << r.mean_gate_margin << ',' << r.to_converged_rate << ',' << r.surrogate
     << ',' << r.value_loss << ',' << r.entropy << ',' << r.approx_kl << ','
     << r.grad_norm << ',' << r.d_ppo_size << ',' << r.d_sl_size;
  return os.str();
}

struct TrainResult {
  std::vector<TrainLogRow> log;
  PolicyParams params;
  long gate_steps = 0;
  long gate_violations = 0;  // executed reward < TO reward; 0 by construction
  long total_steps = 0;
  std::vector<std::pair<long, nlohmann::json>> checkpoints;
};

// Per-step trace hook, used by the gate-probe CLI and trace CSVs.
using StepTraceFn =
    std::function<void(long timestep, const CarFlagRunEnv& env,
                       const GateDecision& decision, const StepResult& sr)>;

// Algorithm: alternate T-step rollouts of gated action selection with
// K-epoch PPO updates on the RL-chosen transitions and K-epoch BC updates
// on the TO-chosen (state, action) pairs. Fully deterministic given the
// config seed.
inline TrainResult train(const TrainConfig& cfg,
                         const StepTraceFn& trace = nullptr) {
  cfg.ppo.validate();
  cfg.coto.validate();

  Rng init_rng(mix_seed(cfg.seed, seed_stream::kPolicyInit));
  Rng act_rng(mix_seed(cfg.seed, seed_stream::kSampling));
  Rng update_rng(mix_seed(cfg.seed, seed_stream::kUpdates));

  TrainResult result{.params = PolicyParams::make(
                         ActionBounds::from_plant(cfg.plant), init_rng)};
  AdamState actor_opt(result.params.actor, cfg.ppo.lr);
  AdamState critic_opt(result.params.critic, cfg.ppo.lr);

  TOSolver solver(TOModel::from_plant(cfg.plant), cfg.to_solver);
  Arbiter arbiter(solver, cfg.coto);

  CarFlagRunEnv env(cfg.env, cfg.plant);
  long episode_index = 0;
  env.reset(mix_seed(cfg.seed, seed_stream::kTrainEpisodes, episode_index));
  arbiter.reset_warm_start();
  double episode_reward = 0.0;

  std::vector<Transition> d_ppo;
  std::vector<double> bootstraps;
  std::vector<SlPair> d_sl;
  bool segment_open = false;
  int segment_id = 0;

  long timestep = 0;
  long next_checkpoint = cfg.checkpoint_interval;

  while (timestep < cfg.total_timesteps) {
    long rollout_len =
        std::min<long>(cfg.ppo.rollout_steps, cfg.total_timesteps - timestep);
    std::vector<double> completed_episode_rewards;
    long rl_chosen = 0, gated = 0, to_solves = 0, to_converged = 0;
    double margin_sum = 0.0;

    for (long step = 0; step < rollout_len; ++step) {
      Observation obs = env.observation();
      GateDecision d = arbiter.decide(env, result.params, act_rng);

      if (d.gated) {
        ++gated;
        margin_sum += d.chosen == ActionSource::kRL ? d.r_rl - d.r_to
                                                    : d.r_to - d.r_rl;
        ++result.gate_steps;
        double executed_r = d.chosen == ActionSource::kRL ? d.r_rl : d.r_to;
        if (executed_r < d.r_to) ++result.gate_violations;
      }
      if (d.to_evaluated) {
        ++to_solves;
        if (d.to_converged) ++to_converged;
      }

      StepResult sr = env.step(d.executed);
      episode_reward += sr.reward;
      ++timestep;
      if (trace) trace(timestep, env, d, sr);

      if (d.chosen == ActionSource::kRL) {
        ++rl_chosen;
        Transition t;
        t.obs = obs;
        t.action_unit = d.a_rl.action_unit;
        t.log_prob_old = d.a_rl.log_prob;
        t.reward = sr.reward;
        t.value_old = d.a_rl.value;
        t.done_flag = sr.done;
        t.segment_id = segment_id;
        t.source = ActionSource::kRL;
        d_ppo.push_back(t);
        segment_open = true;
        if (sr.done) {
          bootstraps.push_back(0.0);
          segment_open = false;
          ++segment_id;
        }
      } else {
        d_sl.push_back(
            SlPair{obs, result.params.bounds.to_unit(d.a_to)});
        if (segment_open) {
          // segment interrupted by a TO action: bootstrap with the value of
          // the first post-break state, i.e. the state the gate decided in
          bootstraps.push_back(eval_value(result.params, obs));
          segment_open = false;
          ++segment_id;
        }
      }

      if (sr.done) {
        completed_episode_rewards.push_back(episode_reward);
        episode_reward = 0.0;
        ++episode_index;
        env.reset(
            mix_seed(cfg.seed, seed_stream::kTrainEpisodes, episode_index));
        arbiter.reset_warm_start();
        if (segment_open) {
          // episode boundary inside an open segment can only happen when
          // the final step was TO-chosen and handled above; RL-chosen final
          // steps carry done_flag and were closed already
          bootstraps.push_back(0.0);
          segment_open = false;
          ++segment_id;
        }
      }
    }

    if (segment_open) {
      bootstraps.push_back(eval_value(result.params, env.observation()));
      segment_open = false;
      ++segment_id;
    }

    TrainLogRow row;
    row.timestep = timestep;
    if (!completed_episode_rewards.empty()) {
      double sum = 0.0;
      for (double r : completed_episode_rewards) sum += r;
      row.ep_reward_mean = sum / completed_episode_rewards.size();
    } else {
      row.ep_reward_mean = episode_reward;
    }
    row.rl_fraction = double(rl_chosen) / double(rollout_len);
    row.mean_gate_margin = gated > 0 ? margin_sum / gated : 0.0;
    row.to_converged_rate =
        to_solves > 0 ? double(to_converged) / to_solves : 0.0;
    row.d_ppo_size = long(d_ppo.size());
    row.d_sl_size = long(d_sl.size());

    if (cfg.coto.rl_enabled) {
      PpoStats ps = ppo_update(result.params, actor_opt, critic_opt, d_ppo,
                               bootstraps, cfg.ppo, update_rng);
      row.surrogate = ps.surrogate;
      row.value_loss = ps.value_loss;
      row.entropy = ps.entropy;
      row.approx_kl = ps.approx_kl;
      row.grad_norm = ps.grad_norm;
      bc_update(result.params, actor_opt, d_sl, cfg.ppo, update_rng);
    }
    d_ppo.clear();
    bootstraps.clear();
    if (!cfg.accumulate_sl) {
      d_sl.clear();
    } else if (cfg.sl_buffer_cap > 0 &&
               long(d_sl.size()) > cfg.sl_buffer_cap) {
      d_sl.erase(d_sl.begin(), d_sl.end() - cfg.sl_buffer_cap);
    }
    segment_id = 0;

    result.log.push_back(row);

    if (cfg.checkpoint_interval > 0 && timestep >= next_checkpoint) {
      result.checkpoints.emplace_back(
          timestep, policy_to_json(result.params, timestep));
      next_checkpoint += cfg.checkpoint_interval;
    }
  }

  result.total_steps = timestep;
  if (result.checkpoints.empty() ||
      result.checkpoints.back().first != timestep) {
    result.checkpoints.emplace_back(timestep,
                                    policy_to_json(result.params, timestep));
  }
  return result;
}

}  // namespace coto

#endif  // COTO_TRAINER_HPP_
