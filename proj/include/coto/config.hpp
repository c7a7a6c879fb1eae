#ifndef COTO_CONFIG_HPP_
#define COTO_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coto/math.hpp"
#include "coto/trainer.hpp"

namespace coto {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Arm {
  kPurePpo,
  kPureTo,
  kCotoPpo,
  kCotoPolicyOnly,
  kCotoPurePpo,
};

inline std::string arm_name(Arm a) {
  switch (a) {
    case Arm::kPurePpo: return "pure_ppo";
    case Arm::kPureTo: return "pure_to";
    case Arm::kCotoPpo: return "coto_ppo";
    case Arm::kCotoPolicyOnly: return "coto_policy_only";
    case Arm::kCotoPurePpo: return "coto_pure_ppo";
  }
  return "unknown";
}

inline Arm arm_from_name(const std::string& s) {
  if (s == "pure_ppo") return Arm::kPurePpo;
  if (s == "pure_to") return Arm::kPureTo;
  if (s == "coto_ppo") return Arm::kCotoPpo;
  if (s == "coto_policy_only") return Arm::kCotoPolicyOnly;
  if (s == "coto_pure_ppo") return Arm::kCotoPurePpo;
  throw ConfigError("unknown arm: " + s);
}

// Whether the arm runs its own training loop (vs. evaluating an existing
// checkpoint combination).
inline bool arm_trains(Arm a) {
  return a == Arm::kPurePpo || a == Arm::kCotoPpo;
}

inline bool arm_needs_checkpoint(Arm a) { return a != Arm::kPureTo; }

// Action-source flags realizing each experiment arm.
inline void apply_arm(Arm a, CotoConfig& c) {
  switch (a) {
    case Arm::kPurePpo:
    case Arm::kCotoPolicyOnly:
      c.rl_enabled = true;
      c.to_enabled = false;
      c.gate_enabled = false;
      break;
    case Arm::kPureTo:
      c.rl_enabled = false;
      c.to_enabled = true;
      c.gate_enabled = false;
      break;
    case Arm::kCotoPpo:
    case Arm::kCotoPurePpo:
      c.rl_enabled = true;
      c.to_enabled = true;
      c.gate_enabled = true;
      break;
  }
}

struct RunConfig {
  Arm arm = Arm::kCotoPpo;
  TrainConfig train;
  int eval_trials = 100;
  bool eval_deterministic = true;
  int workers = 1;
  std::string out_dir;
  std::string checkpoint_path;  // for eval-only arms
  std::string raw_text;         // canonical key=value text, hashed in manifests
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one "section.key=value" assignment. Unknown keys are errors so a
// typo in a config file cannot silently change an experiment.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_long;
  auto& t = cfg.train;
  if (key == "arm") cfg.arm = arm_from_name(value);
  else if (key == "total_timesteps") t.total_timesteps = parse_long(key, value);
  else if (key == "seed") t.seed = std::uint64_t(parse_long(key, value));
  else if (key == "checkpoint_interval") t.checkpoint_interval = parse_long(key, value);
  else if (key == "accumulate_sl") t.accumulate_sl = parse_bool(key, value);
  else if (key == "sl_buffer_cap") t.sl_buffer_cap = parse_long(key, value);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "ckpt") cfg.checkpoint_path = value;
  else if (key == "workers") cfg.workers = int(parse_long(key, value));
  else if (key == "eval.trials") cfg.eval_trials = int(parse_long(key, value));
  else if (key == "eval.mode") {
    if (value == "det") cfg.eval_deterministic = true;
    else if (value == "stoch") cfg.eval_deterministic = false;
    else throw ConfigError("config: eval.mode must be det or stoch");
  }
  else if (key == "plant.wheelbase") t.plant.wheelbase = parse_double(key, value);
  else if (key == "plant.v_limit") t.plant.v_limit = parse_double(key, value);
  else if (key == "plant.steer_limit") t.plant.steer_limit = parse_double(key, value);
  else if (key == "plant.tau_v") t.plant.tau_v = parse_double(key, value);
  else if (key == "plant.steer_rate_limit") t.plant.steer_rate_limit = parse_double(key, value);
  else if (key == "plant.dt") t.plant.dt = parse_double(key, value);
  else if (key == "env.goal_radius") t.env.goal_radius = parse_double(key, value);
  else if (key == "env.goal_square_half") t.env.goal_square_half = parse_double(key, value);
  else if (key == "env.episode_seconds") t.env.episode_seconds = parse_double(key, value);
  else if (key == "env.shaping_gamma") t.env.shaping_gamma = parse_double(key, value);
  else if (key == "ppo.gamma") t.ppo.gamma = parse_double(key, value);
  else if (key == "ppo.lambda_gae") t.ppo.lambda_gae = parse_double(key, value);
  else if (key == "ppo.clip_eps") t.ppo.clip_eps = parse_double(key, value);
  else if (key == "ppo.epochs") t.ppo.epochs = int(parse_long(key, value));
  else if (key == "ppo.minibatch") t.ppo.minibatch = int(parse_long(key, value));
  else if (key == "ppo.rollout_steps") t.ppo.rollout_steps = int(parse_long(key, value));
  else if (key == "ppo.value_coef") t.ppo.value_coef = parse_double(key, value);
  else if (key == "ppo.entropy_coef") t.ppo.entropy_coef = parse_double(key, value);
  else if (key == "ppo.lr") t.ppo.lr = parse_double(key, value);
  else if (key == "ppo.max_grad_norm") t.ppo.max_grad_norm = parse_double(key, value);
  else if (key == "coto.horizon_h") t.coto.horizon_h = int(parse_long(key, value));
  else if (key == "coto.to_knots") t.coto.to_knots = int(parse_long(key, value));
  else if (key == "coto.to_h") t.coto.to_h = parse_double(key, value);
  else if (key == "coto.alpha") t.coto.to_weights.alpha = parse_double(key, value);
  else if (key == "coto.beta") t.coto.to_weights.beta = parse_double(key, value);
  else if (key == "coto.gamma_theta") t.coto.to_weights.gamma_theta = parse_double(key, value);
  else if (key == "to.max_iterations_cold") t.to_solver.max_iterations_cold = int(parse_long(key, value));
  else if (key == "to.max_iterations_warm") t.to_solver.max_iterations_warm = int(parse_long(key, value));
  else if (key == "to.momentum") t.to_solver.momentum = parse_double(key, value);
  else if (key == "to.initial_step") t.to_solver.initial_step = parse_double(key, value);
  else if (key == "to.fd_step") t.to_solver.fd_step = parse_double(key, value);
  else if (key == "to.grad_tol") t.to_solver.grad_tol = parse_double(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  cfg.raw_text = text;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value: '" + s + "'");
    apply_config_entry(cfg, detail::trim(s.substr(0, eq)),
                       detail::trim(s.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

// Finalize arm-derived flags and validate cross-field consistency.
inline void finalize_config(RunConfig& cfg) {
  apply_arm(cfg.arm, cfg.train.coto);
  cfg.train.plant.validate();
  cfg.train.env.validate();
  cfg.train.ppo.validate();
  cfg.train.coto.validate();
  if (cfg.arm == Arm::kPureTo && !cfg.checkpoint_path.empty())
    throw ConfigError("config: pure_to takes no checkpoint");
  if ((cfg.arm == Arm::kCotoPolicyOnly || cfg.arm == Arm::kCotoPurePpo) &&
      cfg.checkpoint_path.empty())
    throw ConfigError("config: arm " + arm_name(cfg.arm) +
                      " requires ckpt=<policy checkpoint>");
}

inline std::string config_hash_hex(const std::string& raw_text) {
  std::ostringstream os;
  os << std::hex << fnv1a(raw_text);
  return os.str();
}

}  // namespace coto

#endif  // COTO_CONFIG_HPP_
