#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "coto/harness.hpp"

using namespace coto;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("coto_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Tiny training setup that finishes in well under a second.
RunConfig tiny_train_config(const std::string& out, std::uint64_t seed = 1) {
  RunConfig cfg = parse_config_text(
      "arm = coto_ppo\n"
      "total_timesteps = 96\n"
      "checkpoint_interval = 48\n"
      "ppo.rollout_steps = 48\n"
      "ppo.epochs = 2\n"
      "ppo.minibatch = 16\n"
      "to.max_iterations_cold = 6\n"
      "to.max_iterations_warm = 3\n");
  cfg.train.seed = seed;
  cfg.out_dir = out;
  finalize_config(cfg);
  return cfg;
}

// Pull a polyline's points and its affine transform out of the SVG text and
// invert the transform.
struct ParsedSeries {
  std::vector<double> x, y;
};

std::string attr(const std::string& tag_text, const std::string& name) {
  std::string key = name + "=\"";
  std::size_t a = tag_text.find(key);
  REQUIRE(a != std::string::npos);
  a += key.size();
  std::size_t b = tag_text.find('"', a);
  return tag_text.substr(a, b - a);
}

ParsedSeries parse_series(const std::string& svg, const std::string& label) {
  std::size_t pos = svg.find("class=\"series\" data-label=\"" + label + "\"");
  REQUIRE(pos != std::string::npos);
  std::size_t end = svg.find("/>", pos);
  std::string tag = svg.substr(pos, end - pos);
  double ox = std::stod(attr(tag, "data-ox"));
  double sx = std::stod(attr(tag, "data-sx"));
  double oy = std::stod(attr(tag, "data-oy"));
  double sy = std::stod(attr(tag, "data-sy"));
  std::istringstream pts(attr(tag, "points"));
  ParsedSeries out;
  std::string pair;
  while (pts >> pair) {
    std::size_t comma = pair.find(',');
    double px = std::stod(pair.substr(0, comma));
    double py = std::stod(pair.substr(comma + 1));
    out.x.push_back((px - ox) / sx);
    out.y.push_back((py - oy) / sy);
  }
  return out;
}

}  // namespace

TEST_CASE("config text round trip applies every section") {
  RunConfig cfg = parse_config_text(
      "# comment\n"
      "arm = pure_ppo\n"
      "seed = 17\n"
      "total_timesteps = 5000\n"
      "plant.v_limit = 1.5\n"
      "env.goal_radius = 0.3\n"
      "ppo.lr = 1e-3\n"
      "coto.horizon_h = 4\n"
      "to.momentum = 0.8\n");
  CHECK(cfg.arm == Arm::kPurePpo);
  CHECK(cfg.train.seed == 17);
  CHECK(cfg.train.total_timesteps == 5000);
  CHECK(cfg.train.plant.v_limit == 1.5);
  CHECK(cfg.train.env.goal_radius == 0.3);
  CHECK(cfg.train.ppo.lr == 1e-3);
  CHECK(cfg.train.coto.horizon_h == 4);
  CHECK(cfg.train.to_solver.momentum == 0.8);
}

TEST_CASE("unknown config keys are rejected") {
  CHECK_THROWS_AS(parse_config_text("bogus_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ppo.bogus = 1\n"), ConfigError);
}

TEST_CASE("malformed values are rejected") {
  CHECK_THROWS_AS(parse_config_text("seed = banana\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("eval.mode = sometimes\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("no_equals_sign\n"), ConfigError);
}

TEST_CASE("arm flags after finalize match the experiment design") {
  struct Case {
    const char* arm;
    bool gate, to, rl;
  };
  for (const Case& c : {Case{"pure_ppo", false, false, true},
                        Case{"pure_to", false, true, false},
                        Case{"coto_ppo", true, true, true},
                        Case{"coto_policy_only", false, false, true},
                        Case{"coto_pure_ppo", true, true, true}}) {
    RunConfig cfg = parse_config_text(std::string("arm = ") + c.arm + "\n");
    if (cfg.arm == Arm::kCotoPolicyOnly || cfg.arm == Arm::kCotoPurePpo)
      cfg.checkpoint_path = "dummy.json";
    finalize_config(cfg);
    CHECK(cfg.train.coto.gate_enabled == c.gate);
    CHECK(cfg.train.coto.to_enabled == c.to);
    CHECK(cfg.train.coto.rl_enabled == c.rl);
  }
}

TEST_CASE("finalize rejects inconsistent arm and checkpoint combinations") {
  RunConfig a = parse_config_text("arm = pure_to\nckpt = x.json\n");
  CHECK_THROWS_AS(finalize_config(a), ConfigError);
  RunConfig b = parse_config_text("arm = coto_policy_only\n");
  CHECK_THROWS_AS(finalize_config(b), ConfigError);
  RunConfig c = parse_config_text("arm = coto_pure_ppo\n");
  CHECK_THROWS_AS(finalize_config(c), ConfigError);
}

TEST_CASE("manifest pins arm, seed, and the config text hash") {
  RunConfig cfg = parse_config_text("arm = pure_ppo\nseed = 9\n");
  finalize_config(cfg);
  nlohmann::json m = make_manifest(cfg);
  CHECK(m.at("arm") == "pure_ppo");
  CHECK(m.at("seed") == 9);
  CHECK(m.at("config_hash") == config_hash_hex(cfg.raw_text));
  CHECK(m.at("version") == kVersion);
  // any textual change moves the hash
  CHECK(config_hash_hex(cfg.raw_text) != config_hash_hex(cfg.raw_text + " "));
}

TEST_CASE("run_train writes the full artifact set") {
  fs::path dir = temp_dir("artifacts");
  RunConfig cfg = tiny_train_config(dir.string());
  run_train(cfg, /*write_trace=*/true);

  CHECK(fs::exists(dir / "train_log.csv"));
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "ckpt_48.json"));
  CHECK(fs::exists(dir / "ckpt_96.json"));

  nlohmann::json manifest =
      nlohmann::json::parse(fsutil::read_file(dir / "manifest.json"));
  CHECK(manifest.at("gate_violations") == 0);
  CHECK(manifest.at("final_checkpoint") == "ckpt_96.json");

  auto rows = parse_train_log_csv(fsutil::read_file(dir / "train_log.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].timestep == 48);
  CHECK(rows[1].timestep == 96);
  CHECK(rows[0].rl_fraction >= 0.0);
  CHECK(rows[0].rl_fraction <= 1.0);

  // the final checkpoint loads back into a usable policy
  PolicyParams p = load_checkpoint((dir / "ckpt_96.json").string());
  CHECK(p.actor.parameter_count() > 0);
  fs::remove_all(dir);
}

TEST_CASE("pure_to run produces an eval report instead of a training log") {
  fs::path dir = temp_dir("pure_to");
  RunConfig cfg = parse_config_text(
      "arm = pure_to\n"
      "eval.trials = 2\n"
      "to.max_iterations_cold = 6\n"
      "to.max_iterations_warm = 3\n");
  cfg.out_dir = dir.string();
  finalize_config(cfg);
  run_train(cfg);
  CHECK(fs::exists(dir / "eval_report.json"));
  CHECK_FALSE(fs::exists(dir / "train_log.csv"));
  nlohmann::json report =
      nlohmann::json::parse(fsutil::read_file(dir / "eval_report.json"));
  CHECK(report.at("trials") == 2);
  CHECK(report.at("rl_fraction") == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("eval-only arms refuse to train") {
  fs::path dir = temp_dir("eval_only");
  RunConfig cfg = parse_config_text(
      "arm = coto_policy_only\nckpt = nonexistent.json\n");
  cfg.out_dir = dir.string();
  finalize_config(cfg);
  CHECK_THROWS_AS(run_train(cfg), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are reported, not crashed on") {
  fs::path dir = temp_dir("corrupt");
  fsutil::write_file(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.json").string()),
                  std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("evaluation is deterministic and matches across repeat runs") {
  fs::path dir = temp_dir("eval_det");
  RunConfig cfg = tiny_train_config(dir.string());
  run_train(cfg);

  RunConfig ev = parse_config_text(
      "arm = coto_policy_only\n"
      "eval.trials = 3\n"
      "eval.mode = det\n");
  ev.checkpoint_path = (dir / "ckpt_96.json").string();
  ev.train.seed = 5;
  finalize_config(ev);
  EvalReport r1 = run_eval_from_config(ev);
  EvalReport r2 = run_eval_from_config(ev);
  REQUIRE(r1.trials == 3);
  CHECK(r1.reward_mean == r2.reward_mean);
  REQUIRE(r1.trial_rewards.size() == r2.trial_rewards.size());
  for (std::size_t i = 0; i < r1.trial_rewards.size(); ++i)
    CHECK(r1.trial_rewards[i] == r2.trial_rewards[i]);

  // worker count must not change the outcome
  ev.workers = 3;
  EvalReport r3 = run_eval_from_config(ev);
  for (std::size_t i = 0; i < r1.trial_rewards.size(); ++i)
    CHECK(r1.trial_rewards[i] == r3.trial_rewards[i]);
  fs::remove_all(dir);
}

TEST_CASE("plots: curves, dashed baseline, and an exact parse-back") {
  fs::path run1 = temp_dir("plot_run1");
  fs::path run2 = temp_dir("plot_run2");
  fs::path base = temp_dir("plot_base");
  fs::path out = temp_dir("plot_out");

  RunConfig c1 = tiny_train_config(run1.string(), 1);
  RunConfig c2 = tiny_train_config(run2.string(), 2);
  run_train(c1);
  run_train(c2);

  RunConfig cb = parse_config_text(
      "arm = pure_to\n"
      "eval.trials = 1\n"
      "to.max_iterations_cold = 6\n"
      "to.max_iterations_warm = 3\n");
  cb.out_dir = base.string();
  finalize_config(cb);
  run_train(cb);

  emit_plots({run1.string(), run2.string(), base.string()}, out.string());
  REQUIRE(fs::exists(out / "reward_mean.svg"));
  REQUIRE(fs::exists(out / "rl_fraction.svg"));

  std::string svg = fsutil::read_file(out / "reward_mean.svg");
  CHECK(svg.find("class=\"baseline\"") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.find("class=\"band\"") != std::string::npos);  // two seeds

  // parse the plotted mean curve back and compare against the CSVs
  auto rows1 = parse_train_log_csv(fsutil::read_file(run1 / "train_log.csv"));
  auto rows2 = parse_train_log_csv(fsutil::read_file(run2 / "train_log.csv"));
  ParsedSeries s = parse_series(svg, "coto_ppo");
  REQUIRE(s.x.size() == rows1.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    CHECK(s.x[i] == Catch::Approx(double(rows1[i].timestep)).margin(1e-6));
    double mean = 0.5 * (rows1[i].ep_reward_mean + rows2[i].ep_reward_mean);
    CHECK(s.y[i] == Catch::Approx(mean).epsilon(1e-9).margin(1e-9));
  }

  for (const fs::path& p : {run1, run2, base, out}) fs::remove_all(p);
}

TEST_CASE("training is bit-identical across runs with the same seed") {
  fs::path d1 = temp_dir("det1");
  fs::path d2 = temp_dir("det2");
  run_train(tiny_train_config(d1.string(), 7), true);
  run_train(tiny_train_config(d2.string(), 7), true);
  CHECK(fsutil::read_file(d1 / "train_log.csv") ==
        fsutil::read_file(d2 / "train_log.csv"));
  CHECK(fsutil::read_file(d1 / "trace.csv") ==
        fsutil::read_file(d2 / "trace.csv"));
  CHECK(fsutil::read_file(d1 / "ckpt_96.json") ==
        fsutil::read_file(d2 / "ckpt_96.json"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}
