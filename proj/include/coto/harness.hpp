#ifndef COTO_HARNESS_HPP_
#define COTO_HARNESS_HPP_

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coto/config.hpp"
#include "coto/evaluation.hpp"
#include "coto/plots.hpp"
#include "coto/trainer.hpp"

namespace coto {

inline constexpr const char* kVersion = "coto-0.1.0";

namespace fsutil {

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace fsutil

inline PolicyParams load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(fsutil::read_file(path));
    return policy_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
}

inline nlohmann::json make_manifest(const RunConfig& cfg) {
  return {{"arm", arm_name(cfg.arm)},
          {"seed", cfg.train.seed},
          {"config_hash", config_hash_hex(cfg.raw_text)},
          {"version", kVersion},
          {"total_timesteps", cfg.train.total_timesteps}};
}

inline EvalSetup eval_setup_from(const RunConfig& cfg) {
  EvalSetup setup;
  setup.plant = cfg.train.plant;
  setup.env = cfg.train.env;
  setup.coto = cfg.train.coto;
  setup.to_solver = cfg.train.to_solver;
  setup.deterministic = cfg.eval_deterministic;
  setup.seed = cfg.train.seed;
  setup.trials = cfg.eval_trials;
  setup.workers = cfg.workers;
  return setup;
}

// Trains (or, for pure_to, evaluates the baseline) and writes all run
// artifacts: training CSV, checkpoints, eval report, and a manifest that
// pins the config hash.
inline void run_train(const RunConfig& cfg, bool write_trace = false) {
  if (cfg.out_dir.empty()) throw ConfigError("run_train: out dir required");
  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);

  nlohmann::json manifest = make_manifest(cfg);

  if (cfg.arm == Arm::kPureTo) {
    EvalSetup setup = eval_setup_from(cfg);
    PolicyParams dummy;  // never evaluated with rl disabled
    EvalReport report = run_eval(setup, dummy);
    fsutil::write_file(dir / "eval_report.json", report.to_json().dump(2));
    manifest["reward_mean"] = report.reward_mean;
    fsutil::write_file(dir / "manifest.json", manifest.dump(2));
    return;
  }
  if (!arm_trains(cfg.arm)) {
    throw ConfigError("arm " + arm_name(cfg.arm) +
                      " is evaluation-only; use eval with ckpt=");
  }

  std::ostringstream trace_csv;
  StepTraceFn trace = nullptr;
  if (write_trace) {
    trace_csv << "step,x_b,y_b,theta_b,reward,goal_x,goal_y,action_source\n";
    trace_csv.precision(17);
    trace = [&trace_csv](long timestep, const CarFlagRunEnv& env,
                         const GateDecision& d, const StepResult& sr) {
      trace_csv << timestep << ',' << env.state().x_b << ','
                << env.state().y_b << ',' << env.state().theta_b << ','
                << sr.reward << ',' << env.goal().x_g << ','
                << env.goal().y_g << ','
                << (d.chosen == ActionSource::kRL ? "RL" : "TO") << '\n';
    };
  }

  TrainResult result = train(cfg.train, trace);

  std::ostringstream csv;
  csv << train_log_csv_header() << '\n';
  for (const auto& row : result.log) csv << train_log_csv_row(row) << '\n';
  fsutil::write_file(dir / "train_log.csv", csv.str());
  if (write_trace) fsutil::write_file(dir / "trace.csv", trace_csv.str());

  for (const auto& [timestep, ckpt] : result.checkpoints) {
    fsutil::write_file(dir / ("ckpt_" + std::to_string(timestep) + ".json"),
                       ckpt.dump());
  }

  manifest["gate_steps"] = result.gate_steps;
  manifest["gate_violations"] = result.gate_violations;
  manifest["final_checkpoint"] =
      "ckpt_" + std::to_string(result.checkpoints.back().first) + ".json";
  fsutil::write_file(dir / "manifest.json", manifest.dump(2));
}

inline EvalReport run_eval_from_config(const RunConfig& cfg) {
  EvalSetup setup = eval_setup_from(cfg);
  PolicyParams params;
  if (arm_needs_checkpoint(cfg.arm)) {
    if (cfg.checkpoint_path.empty())
      throw ConfigError("eval: arm " + arm_name(cfg.arm) + " needs ckpt=");
    params = load_checkpoint(cfg.checkpoint_path);
  }
  return run_eval(setup, params);
}

// ---- plotting ----

struct RunData {
  std::string arm;
  std::vector<TrainLogRow> rows;
  double to_baseline = 0.0;
  bool is_baseline = false;
};

inline std::vector<TrainLogRow> parse_train_log_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("train log: empty file");
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() < 12) throw std::runtime_error("train log: short row");
    TrainLogRow r;
    r.timestep = long(v[0]);
    r.ep_reward_mean = v[1];
    r.rl_fraction = v[2];
    r.mean_gate_margin = v[3];
    r.to_converged_rate = v[4];
    r.surrogate = v[5];
    r.value_loss = v[6];
    r.entropy = v[7];
    r.approx_kl = v[8];
    r.grad_norm = v[9];
    r.d_ppo_size = long(v[10]);
    r.d_sl_size = long(v[11]);
    rows.push_back(r);
  }
  return rows;
}

inline RunData load_run_dir(const std::filesystem::path& dir) {
  RunData run;
  nlohmann::json manifest =
      nlohmann::json::parse(fsutil::read_file(dir / "manifest.json"));
  run.arm = manifest.at("arm").get<std::string>();
  if (run.arm == "pure_to") {
    nlohmann::json report =
        nlohmann::json::parse(fsutil::read_file(dir / "eval_report.json"));
    run.to_baseline = report.at("reward_mean").get<double>();
    run.is_baseline = true;
    return run;
  }
  run.rows = parse_train_log_csv(fsutil::read_file(dir / "train_log.csv"));
  if (run.rows.empty()) throw std::runtime_error("empty training log in " +
                                                 dir.string());
  return run;
}

// Reward and RL-fraction learning-curve figures. Multiple runs of the same
// arm are drawn as a mean curve with a min/max band.
inline void emit_plots(const std::vector<std::string>& run_dirs,
                       const std::string& out_dir) {
  if (run_dirs.empty()) throw std::runtime_error("emit_plots: no runs");
  std::map<std::string, std::vector<RunData>> by_arm;
  std::vector<double> baselines;
  for (const auto& d : run_dirs) {
    RunData run = load_run_dir(d);
    if (run.is_baseline) baselines.push_back(run.to_baseline);
    else by_arm[run.arm].push_back(std::move(run));
  }
  if (by_arm.empty()) throw std::runtime_error("emit_plots: no training logs");

  SvgPlot reward_plot("Episode reward mean", "timesteps", "episode reward");
  SvgPlot frac_plot("RL-chosen action fraction", "timesteps", "fraction");

  auto column = [](const std::vector<TrainLogRow>& rows, bool frac) {
    Series s;
    for (const auto& r : rows) {
      s.x.push_back(double(r.timestep));
      s.y.push_back(frac ? r.rl_fraction : r.ep_reward_mean);
    }
    return s;
  };

  for (auto& [arm, runs] : by_arm) {
    for (bool frac : {false, true}) {
      SvgPlot& plot = frac ? frac_plot : reward_plot;
      if (frac && arm == "pure_ppo") continue;  // no gate, nothing to show
      std::size_t n = runs[0].rows.size();
      for (const auto& r : runs) n = std::min(n, r.rows.size());
      Series mean;
      std::vector<double> lo(n), hi(n);
      mean.label = arm;
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0, mn = 1e300, mx = -1e300;
        for (const auto& r : runs) {
          double v = frac ? r.rows[i].rl_fraction : r.rows[i].ep_reward_mean;
          sum += v;
          mn = std::min(mn, v);
          mx = std::max(mx, v);
        }
        mean.x.push_back(double(runs[0].rows[i].timestep));
        mean.y.push_back(sum / runs.size());
        lo[i] = mn;
        hi[i] = mx;
      }
      if (runs.size() > 1) plot.add_band(arm, mean.x, lo, hi);
      plot.add_series(mean);
    }
  }
  for (double b : baselines) reward_plot.add_baseline("pure_to", b);

  std::filesystem::path out(out_dir);
  fsutil::write_file(out / "reward_mean.svg", reward_plot.render());
  fsutil::write_file(out / "rl_fraction.svg", frac_plot.render());
}

}  // namespace coto

#endif  // COTO_HARNESS_HPP_
