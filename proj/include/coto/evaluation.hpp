#ifndef COTO_EVALUATION_HPP_
#define COTO_EVALUATION_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

#include "coto/arbitration.hpp"
#include "coto/env.hpp"
#include "coto/policy.hpp"
#include "coto/trainer.hpp"

namespace coto {

struct EvalSetup {
  PlantConfig plant;
  EnvConfig env;
  CotoConfig coto;
  TOSolverOptions to_solver;
  bool deterministic = true;  // RL action mode; the TO is always deterministic
  std::uint64_t seed = 0;
  int trials = 100;
  int workers = 1;
};

struct EvalReport {
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double rl_fraction = 0.0;  // fraction of steps where the RL action ran
  int trials = 0;
  bool deterministic = true;
  std::vector<double> trial_rewards;

  nlohmann::json to_json() const {
    return {{"reward_mean", reward_mean},
            {"reward_std", reward_std},
            {"rl_fraction", rl_fraction},
            {"trials", trials},
            {"mode", deterministic ? "det" : "stoch"},
            {"trial_rewards", trial_rewards}};
  }
};

struct TrialOutcome {
  double reward = 0.0;
  long rl_steps = 0;
  long steps = 0;
};

// One fresh-seeded evaluation episode.
inline TrialOutcome eval_trial(const EvalSetup& setup,
                               const PolicyParams& params, int trial_index) {
  CarFlagRunEnv env(setup.env, setup.plant);
  env.reset(mix_seed(setup.seed, seed_stream::kEvalEpisodes, trial_index));
  TOSolver solver(TOModel::from_plant(setup.plant), setup.to_solver);
  Arbiter arbiter(solver, setup.coto);
  Rng rng(mix_seed(setup.seed, seed_stream::kEvalEpisodes + 1, trial_index));

  TrialOutcome out;
  while (!env.done()) {
    GateDecision d = setup.deterministic
                         ? arbiter.decide_deterministic(env, params)
                         : arbiter.decide(env, params, rng);
    StepResult sr = env.step(d.executed);
    out.reward += sr.reward;
    if (d.chosen == ActionSource::kRL) ++out.rl_steps;
    ++out.steps;
  }
  return out;
}

// Evaluation trials are independent; they run on a small thread pool and
// are merged by trial index so the report does not depend on scheduling.
inline EvalReport run_eval(const EvalSetup& setup, const PolicyParams& params) {
  std::vector<TrialOutcome> outcomes(setup.trials);
  int workers = std::max(1, std::min(setup.workers, setup.trials));
  if (workers == 1) {
    for (int i = 0; i < setup.trials; ++i)
      outcomes[i] = eval_trial(setup, params, i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < setup.trials; i += workers)
          outcomes[i] = eval_trial(setup, params, i);
      });
    }
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  report.trials = setup.trials;
  report.deterministic = setup.deterministic;
  long total_steps = 0, rl_steps = 0;
  for (const auto& o : outcomes) {
    report.trial_rewards.push_back(o.reward);
    report.reward_mean += o.reward;
    total_steps += o.steps;
    rl_steps += o.rl_steps;
  }
  report.reward_mean /= setup.trials;
  double var = 0.0;
  for (const auto& o : outcomes) {
    double d = o.reward - report.reward_mean;
    var += d * d;
  }
  report.reward_std = std::sqrt(var / setup.trials);
  report.rl_fraction =
      total_steps > 0 ? double(rl_steps) / double(total_steps) : 0.0;
  return report;
}

}  // namespace coto

#endif  // COTO_EVALUATION_HPP_
