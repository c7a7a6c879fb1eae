#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "coto/plant.hpp"
#include "coto/rng.hpp"

using namespace coto;

namespace {

CarState random_state(Rng& rng, const PlantConfig& cfg) {
  CarState s;
  s.x_b = rng.uniform(-5.0, 5.0);
  s.y_b = rng.uniform(-5.0, 5.0);
  s.theta_b = rng.uniform(-kPi, kPi);
  s.theta_f = rng.uniform(-cfg.steer_limit, cfg.steer_limit);
  s.v_act = rng.uniform(-cfg.v_limit, cfg.v_limit);
  s.theta_f_act = rng.uniform(-cfg.steer_limit, cfg.steer_limit);
  return s;
}

CarAction random_action(Rng& rng, const PlantConfig& cfg) {
  return {rng.uniform(-1.5 * cfg.v_limit, 1.5 * cfg.v_limit),
          rng.uniform(-1.5 * cfg.steer_limit, 1.5 * cfg.steer_limit)};
}

bool states_equal(const CarState& a, const CarState& b) {
  return a.x_b == b.x_b && a.y_b == b.y_b && a.theta_b == b.theta_b &&
         a.theta_f == b.theta_f && a.v_act == b.v_act &&
         a.theta_f_act == b.theta_f_act;
}

}  // namespace

TEST_CASE("rest state with zero command is a fixed point") {
  PlantConfig cfg;
  CarState s;
  CarState n = plant_step(s, {0.0, 0.0}, cfg);
  CHECK(n.x_b == 0.0);
  CHECK(n.y_b == 0.0);
  CHECK(n.theta_b == 0.0);
  CHECK(n.v_act == 0.0);
  CHECK(n.theta_f_act == 0.0);
}

TEST_CASE("straight-line advance at held speed") {
  PlantConfig cfg;
  CarState s;
  s.theta_b = 0.7;
  s.v_act = 1.0;
  // v_cmd = v_act keeps the speed exactly
  CarState n = plant_step(s, {1.0, 0.0}, cfg);
  CHECK(n.v_act == Catch::Approx(1.0).margin(1e-15));
  CHECK(n.x_b == Catch::Approx(0.05 * std::cos(0.7)).margin(1e-15));
  CHECK(n.y_b == Catch::Approx(0.05 * std::sin(0.7)).margin(1e-15));
}

TEST_CASE("yaw increment matches fine-step integration oracle") {
  PlantConfig cfg;
  CarState s;
  s.v_act = 1.0;
  s.theta_f_act = 0.3;
  s.theta_f = 0.3;
  CarState n = plant_step(s, {1.0, 0.3}, cfg);
  double expected_increment = 0.05 * (1.0 / 0.325) * std::tan(0.3);
  CHECK(n.theta_b == Catch::Approx(expected_increment).margin(1e-12));

  // fine-step oracle: integrate the same ODE with dt = 1e-5 substeps
  double theta = 0.0;
  const double sub = 1e-5;
  for (int i = 0; i < 5000; ++i)
    theta += sub * (1.0 / cfg.wheelbase) * std::tan(0.3);
  CHECK(std::fabs(n.theta_b - theta) < 1e-3);
}

TEST_CASE("snapshot/restore round trip is exact") {
  PlantConfig cfg;
  Rng rng(12);
  CarState s = random_state(rng, cfg);
  CarState saved = snapshot(s);
  CHECK(states_equal(restore(saved), s));

  CarAction a = random_action(rng, cfg);
  CarState stepped_before = plant_step(s, a, cfg);
  s = restore(saved);
  CarState stepped_after = plant_step(s, a, cfg);
  CHECK(states_equal(stepped_before, stepped_after));
}

TEST_CASE("restore-then-step equals recorded step, 100 random pairs") {
  PlantConfig cfg;
  Rng rng(987);
  for (int trial = 0; trial < 100; ++trial) {
    CarState s = random_state(rng, cfg);
    CarAction a = random_action(rng, cfg);
    CarState saved = snapshot(s);
    CarState recorded = plant_step(s, a, cfg);
    CHECK(states_equal(plant_step(restore(saved), a, cfg), recorded));
  }
}

TEST_CASE("no-skid: lateral body-frame velocity is zero") {
  PlantConfig cfg;
  Rng rng(55);
  CarState s = random_state(rng, cfg);
  for (int i = 0; i < 50; ++i) {
    CarAction a = random_action(rng, cfg);
    CarState n = plant_step(s, a, cfg);
    double dx = n.x_b - s.x_b;
    double dy = n.y_b - s.y_b;
    // displacement happens along the pre-step heading
    double lateral = -std::sin(s.theta_b) * dx + std::cos(s.theta_b) * dy;
    CHECK(std::fabs(lateral) < 1e-12);
    s = n;
  }
}

TEST_CASE("steering never moves faster than the rate limit") {
  PlantConfig cfg;
  Rng rng(77);
  CarState s = random_state(rng, cfg);
  for (int i = 0; i < 200; ++i) {
    CarAction a = random_action(rng, cfg);
    CarState n = plant_step(s, a, cfg);
    CHECK(std::fabs(n.theta_f_act - s.theta_f_act) <=
          cfg.steer_rate_limit * cfg.dt + 1e-12);
    CHECK(std::fabs(n.theta_f_act) <= cfg.steer_limit);
    CHECK(std::fabs(n.v_act) <= cfg.v_limit);
    s = n;
  }
}

TEST_CASE("zero command forever: speed decays monotonically, pose converges") {
  PlantConfig cfg;
  CarState s;
  s.v_act = 2.0;
  double prev_v = s.v_act;
  double prev_x = s.x_b;
  for (int i = 0; i < 400; ++i) {
    s = plant_step(s, {0.0, 0.0}, cfg);
    CHECK(s.v_act <= prev_v + 1e-15);
    CHECK(s.v_act >= 0.0);
    CHECK(s.x_b >= prev_x - 1e-15);  // no oscillation
    prev_v = s.v_act;
    prev_x = s.x_b;
  }
  CHECK(s.v_act < 1e-8);
}

TEST_CASE("commands clamp silently to plant limits") {
  PlantConfig cfg;
  CarState s;
  CarState n = plant_step(s, {100.0, 2.0}, cfg);
  CHECK(n.v_act <= cfg.v_limit);
  CHECK(n.theta_f == cfg.steer_limit);
}

TEST_CASE("non-finite inputs are rejected") {
  PlantConfig cfg;
  CarState s;
  CHECK_THROWS_AS(plant_step(s, {std::nan(""), 0.0}, cfg),
                  std::invalid_argument);
  s.x_b = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(plant_step(s, {0.0, 0.0}, cfg), std::invalid_argument);
}

TEST_CASE("theta_b stays normalized to (-pi, pi]") {
  PlantConfig cfg;
  CarState s;
  s.v_act = 2.0;
  s.theta_f_act = 0.6;
  for (int i = 0; i < 1000; ++i) {
    s = plant_step(s, {2.0, 0.6}, cfg);
    CHECK(s.theta_b > -kPi);
    CHECK(s.theta_b <= kPi);
  }
}
