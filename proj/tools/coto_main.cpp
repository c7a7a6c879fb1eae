// Command-line front end: train / eval / plot / to-solve / gate-probe.
// Exit codes: 0 ok, 2 config error, 3 runtime failure.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coto/config.hpp"
#include "coto/harness.hpp"
#include "coto/trainer.hpp"
#include "coto/trajopt.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

coto::RunConfig build_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  coto::RunConfig cfg;
  std::string raw;
  if (!config_path.empty()) {
    raw = coto::fsutil::read_file(config_path);
    cfg = coto::parse_config_text(raw);
  }
  for (const auto& kv : overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw coto::ConfigError("override is not key=value: " + kv);
    coto::apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    raw += "\n" + kv;
  }
  cfg.raw_text = raw;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative trajectory optimization + PPO for a car flag-run task"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt_path, mode = "det";
  std::vector<std::string> overrides, run_dirs;
  std::uint64_t seed = 0;
  bool seed_given = false, trace = false;
  long timesteps = -1;
  int trials = 100, workers = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value config file");
    cmd->add_option("--set", overrides, "config override key=value")
        ->take_all();
  };

  auto* train_cmd = app.add_subcommand("train", "train an experiment arm");
  add_common(train_cmd);
  train_cmd->add_option("--seed", seed, "run seed")
      ->each([&](const std::string&) { seed_given = true; });
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--timesteps", timesteps, "total training timesteps");
  train_cmd->add_flag("--trace", trace, "write per-step trace.csv");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or arm");
  add_common(eval_cmd);
  eval_cmd->add_option("--ckpt", ckpt_path, "policy checkpoint");
  eval_cmd->add_option("--trials", trials, "number of evaluation episodes");
  eval_cmd->add_option("--mode", mode, "det | stoch");
  eval_cmd->add_option("--seed", seed, "evaluation seed")
      ->each([&](const std::string&) { seed_given = true; });
  eval_cmd->add_option("--workers", workers, "parallel trial workers");
  eval_cmd->add_option("--out", out_dir, "report output path (JSON)");

  auto* plot_cmd = app.add_subcommand("plot", "emit SVG learning curves");
  plot_cmd->add_option("dirs", run_dirs, "run directories")->required();
  plot_cmd->add_option("--out", out_dir, "figure output directory")
      ->required();

  double sx = 0, sy = 0, stheta = 0, ssteer = 0, gx = 1, gy = 0;
  auto* solve_cmd =
      app.add_subcommand("to-solve", "single trajectory-optimization solve");
  add_common(solve_cmd);
  solve_cmd->add_option("--x", sx, "initial x [m]");
  solve_cmd->add_option("--y", sy, "initial y [m]");
  solve_cmd->add_option("--theta", stheta, "initial yaw [rad]");
  solve_cmd->add_option("--steer", ssteer, "initial steering [rad]");
  solve_cmd->add_option("--goal-x", gx, "goal x [m]");
  solve_cmd->add_option("--goal-y", gy, "goal y [m]");
  solve_cmd->add_option("--out", out_dir, "solution dump path (JSON)");

  auto* probe_cmd =
      app.add_subcommand("gate-probe", "trace one gated action selection");
  add_common(probe_cmd);
  probe_cmd->add_option("--seed", seed, "probe seed")
      ->each([&](const std::string&) { seed_given = true; });
  probe_cmd->add_option("--ckpt", ckpt_path, "optional policy checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    coto::RunConfig cfg;
    try {
      cfg = build_config(config_path, overrides);
      if (seed_given) cfg.train.seed = seed;
      if (!out_dir.empty() && !plot_cmd->parsed()) {
        if (train_cmd->parsed()) cfg.out_dir = out_dir;
      }
      if (timesteps > 0) cfg.train.total_timesteps = timesteps;
      if (!ckpt_path.empty()) cfg.checkpoint_path = ckpt_path;
      if (eval_cmd->parsed()) {
        cfg.eval_trials = trials;
        cfg.eval_deterministic = mode == "det";
        cfg.workers = workers;
        if (mode != "det" && mode != "stoch")
          throw coto::ConfigError("--mode must be det or stoch");
      }
      if (!plot_cmd->parsed()) coto::finalize_config(cfg);
    } catch (const coto::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    }

    if (train_cmd->parsed()) {
      coto::run_train(cfg, trace);
      std::cout << "run written to " << cfg.out_dir << '\n';
    } else if (eval_cmd->parsed()) {
      coto::EvalReport report = coto::run_eval_from_config(cfg);
      std::string text = report.to_json().dump(2);
      if (!out_dir.empty()) coto::fsutil::write_file(out_dir, text);
      std::cout << text << '\n';
    } else if (plot_cmd->parsed()) {
      coto::emit_plots(run_dirs, out_dir);
      std::cout << "figures written to " << out_dir << '\n';
    } else if (solve_cmd->parsed()) {
      coto::TOSolver solver(coto::TOModel::from_plant(cfg.train.plant),
                            cfg.train.to_solver);
      coto::TOProblem problem = coto::TOProblem::from_state(
          coto::CarState{sx, sy, stheta, ssteer, 0.0, ssteer},
          coto::GoalSpec{gx, gy}, cfg.train.coto.to_knots,
          cfg.train.coto.to_h, cfg.train.coto.to_weights);
      coto::TOSolution sol = solver.solve(problem);
      std::string text =
          coto::solution_to_json(sol, solver.model(), problem.h).dump(2);
      if (!out_dir.empty()) coto::fsutil::write_file(out_dir, text);
      std::cout << text << '\n';
    } else if (probe_cmd->parsed()) {
      coto::CarFlagRunEnv env(cfg.train.env, cfg.train.plant);
      env.reset(coto::mix_seed(cfg.train.seed,
                               coto::seed_stream::kTrainEpisodes, 0));
      coto::Rng init_rng(
          coto::mix_seed(cfg.train.seed, coto::seed_stream::kPolicyInit));
      coto::PolicyParams params =
          ckpt_path.empty()
              ? coto::PolicyParams::make(
                    coto::ActionBounds::from_plant(cfg.train.plant), init_rng)
              : coto::load_checkpoint(ckpt_path);
      coto::Rng act_rng(
          coto::mix_seed(cfg.train.seed, coto::seed_stream::kSampling));
      coto::CotoConfig gate_cfg = cfg.train.coto;
      gate_cfg.rl_enabled = true;
      gate_cfg.to_enabled = true;
      gate_cfg.gate_enabled = true;
      coto::Arbiter arbiter(
          coto::TOSolver(coto::TOModel::from_plant(cfg.train.plant),
                         cfg.train.to_solver),
          gate_cfg);
      coto::GateDecision d = arbiter.decide(env, params, act_rng);
      nlohmann::json j = {
          {"goal", {env.goal().x_g, env.goal().y_g}},
          {"a_to", {d.a_to.v_cmd, d.a_to.theta_f_cmd}},
          {"a_rl", {d.a_rl.action_env.v_cmd, d.a_rl.action_env.theta_f_cmd}},
          {"r_to", d.r_to},
          {"r_rl", d.r_rl},
          {"chosen", d.chosen == coto::ActionSource::kRL ? "RL" : "TO"},
          {"margin", d.margin},
          {"to_converged", d.to_converged},
          {"to_iterations", d.to_iterations}};
      std::cout << j.dump(2) << '\n';
    }
  } catch (const coto::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
