#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "empowerkit/env.hpp"

using namespace empowerkit;

namespace {

// drives the end-effector onto the object, closes, then lifts
EnvAction scripted_grasp_step(const EnvState& s, const EnvConfig& cfg) {
  EnvAction a;
  if (!s.grasped) {
    const double dx = s.obj_x - s.ee_x;
    const double dh = s.obj_h - s.ee_h;
    a.d_ee_x = std::clamp(dx, -0.05, 0.05);
    a.d_ee_h = std::clamp(dh, -0.05, 0.05);
    // squeeze against the spring once close
    a.d_grip = std::abs(dx) < 0.03 && std::abs(dh) < 0.03 ? -0.2 : 0.0;
  } else {
    a.d_ee_h = 0.05;
    a.d_grip = -0.2;  // keep fighting the spring while holding
  }
  return a;
}

}  // namespace

TEST_CASE("reset: fixed seed gives identical initial state") {
  EnvConfig cfg;
  PlanarLift a(cfg, 123), b(cfg, 123);
  CHECK(a.state().ee_x == b.state().ee_x);
  CHECK(a.state().obj_x == b.state().obj_x);
  CHECK(a.state().ee_h == 0.1);
  CHECK(a.state().grip == 1.0);
  CHECK(a.state().obj_h == 0.0);
  CHECK_FALSE(a.state().grasped);
}

TEST_CASE("reset: object x is centered and on the table") {
  EnvConfig cfg;
  PlanarLift env(cfg, 7);
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto& s = env.reset();
    CHECK(s.obj_h == 0.0);
    CHECK(std::abs(s.obj_x) <= 0.3);
    mean += s.obj_x;
  }
  CHECK(std::abs(mean / n) < 0.01);
}

TEST_CASE("step: reward algebra") {
  EnvConfig cfg;
  PlanarLift env(cfg, 1);
  // reward = 50 * (obj_h - 0.01) only while grasped above the threshold
  int reward_steps = 0;
  double max_reward = 0.0;
  for (int ep = 0; ep < 20; ++ep) {
    env.reset();
    for (int t = 0; t < cfg.episode_len; ++t) {
      const auto r = env.step(scripted_grasp_step(env.state(), cfg));
      if (r.reward > 0.0) {
        ++reward_steps;
        max_reward = std::max(max_reward, r.reward);
        CHECK(env.state().grasped);
        CHECK(env.state().obj_h > cfg.lift_threshold);
        CHECK(r.reward ==
              doctest::Approx(50.0 * (env.state().obj_h - 0.01)).epsilon(1e-12));
      }
      if (r.done) break;
    }
  }
  CHECK(reward_steps > 0);           // the scripted policy does lift
  CHECK(max_reward > 0.5);           // above the success threshold
  CHECK(max_reward <= 50.0 * 0.49);  // workspace cap
}

TEST_CASE("step: no reward without a grasp") {
  EnvConfig cfg;
  PlanarLift env(cfg, 2);
  for (int t = 0; t < 30; ++t) {
    const auto r = env.step(EnvAction{0.01, 0.01, 0.0});
    CHECK(r.reward == 0.0);
  }
  // reward at exactly obj_h == 0.01 would be zero anyway; the gate is strict
  CHECK(cfg.reward_scale * (cfg.lift_threshold - 0.01) == 0.0);
}

TEST_CASE("step: grasp engage, rigid follow, instant fall on release") {
  EnvConfig cfg;
  PlanarLift env(cfg, 3);
  for (int t = 0; t < 60 && !env.state().grasped; ++t)
    env.step(scripted_grasp_step(env.state(), cfg));
  REQUIRE(env.state().grasped);
  CHECK(env.state().obj_x == env.state().ee_x);
  CHECK(env.state().obj_h == env.state().ee_h);

  // lift and verify the object follows rigidly (keep squeezing)
  env.step(EnvAction{0.01, 0.05, -0.2});
  CHECK(env.state().grasped);
  CHECK(env.state().obj_x == env.state().ee_x);
  CHECK(env.state().obj_h == env.state().ee_h);
  CHECK(env.state().obj_h > 0.0);

  // open the grip: object falls to the table instantly
  for (int t = 0; t < 3; ++t) env.step(EnvAction{0.0, 0.0, 0.2});
  CHECK_FALSE(env.state().grasped);
  CHECK(env.state().obj_h == 0.0);
}

TEST_CASE("object never penetrates the table") {
  EnvConfig cfg;
  PlanarLift env(cfg, 4);
  Rng rng(5);
  for (int t = 0; t < 2000; ++t) {
    EnvAction a{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                rng.uniform(-0.2, 0.2)};
    const auto r = env.step(a);
    CHECK(env.state().obj_h >= 0.0);
    CHECK(env.state().ee_h >= 0.0);
    CHECK(std::abs(env.state().ee_x) <= 0.5);
    if (r.done) env.reset();
  }
}

TEST_CASE("non-finite action is a contract violation") {
  EnvConfig cfg;
  PlanarLift env(cfg, 6);
  CHECK_THROWS_AS(env.step(EnvAction{std::nan(""), 0.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("done exactly at episode length") {
  EnvConfig cfg;
  cfg.episode_len = 17;
  PlanarLift env(cfg, 8);
  for (int t = 0; t < 16; ++t) CHECK_FALSE(env.step(EnvAction{}).done);
  CHECK(env.step(EnvAction{}).done);
}

TEST_CASE("split_state dims and round trip") {
  EnvConfig cfg;
  cfg.distractor_dim = 0;
  PlanarLift env(cfg, 9);
  auto split = split_state(env.state());
  CHECK(split.intrinsic.size() == 3);
  CHECK(split.extrinsic.size() == 2);

  EnvConfig cfg2;
  cfg2.distractor_dim = 2;
  PlanarLift env2(cfg2, 9);
  auto split2 = split_state(env2.state());
  CHECK(split2.extrinsic.size() == 4);

  // concat(split(s)) == observation(s)
  const auto obs = observation(env2.state());
  REQUIRE(obs.size() == 7);
  for (int i = 0; i < 3; ++i) CHECK(obs[i] == split2.intrinsic[i]);
  for (int i = 0; i < 4; ++i) CHECK(obs[3 + i] == split2.extrinsic[i]);
}

TEST_CASE("distractor resamples every step regardless of action") {
  EnvConfig cfg;
  cfg.distractor_dim = 2;
  PlanarLift env(cfg, 10);
  const auto d0 = env.state().distractor;
  env.step(EnvAction{});
  const auto d1 = env.state().distractor;
  env.step(EnvAction{});
  const auto d2 = env.state().distractor;
  CHECK(d0 != d1);
  CHECK(d1 != d2);
  // roughly standard normal over many steps
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto r = env.step(EnvAction{});
    if (r.done) env.reset();
    for (double d : env.state().distractor) {
      sum += d;
      sq += d * d;
    }
  }
  CHECK(std::abs(sum / (2 * n)) < 0.02);
  CHECK(std::abs(sq / (2 * n) - 1.0) < 0.03);
}

TEST_CASE("vec env: N=1 reduces to single env with same seed stream") {
  EnvConfig cfg;
  VecEnv vec(cfg, 1, 42);
  PlanarLift single(cfg, Rng::mix(42, 0));
  std::vector<double> obs;
  vec.reset_all(obs);
  const auto sobs = observation(single.reset());
  CHECK(obs == sobs);

  Rng arng(7);
  std::vector<double> actions(3), obs2, rewards, next_ex;
  std::vector<std::uint8_t> dones;
  for (int t = 0; t < 50; ++t) {
    for (auto& a : actions) a = arng.uniform(-1.0, 1.0);
    vec.step(actions, obs2, rewards, dones, next_ex);
    const auto r = single.step(scale_action(actions.data()));
    CHECK(rewards[0] == r.reward);
    CHECK((dones[0] != 0) == r.done);
    if (r.done) single.reset();
    CHECK(obs2 == observation(single.state()));
  }
}

TEST_CASE("vec env: identical seed slots give identical trajectories") {
  EnvConfig cfg;
  VecEnv a(cfg, 3, 99), b(cfg, 3, 99);
  std::vector<double> obs_a, obs_b, rew_a, rew_b, ex_a, ex_b;
  std::vector<std::uint8_t> d_a, d_b;
  a.reset_all(obs_a);
  b.reset_all(obs_b);
  CHECK(obs_a == obs_b);
  Rng arng(1);
  std::vector<double> actions(9);
  for (int t = 0; t < 220; ++t) {
    for (auto& v : actions) v = arng.uniform(-1.0, 1.0);
    a.step(actions, obs_a, rew_a, d_a, ex_a);
    b.step(actions, obs_b, rew_b, d_b, ex_b);
    CHECK(obs_a == obs_b);
    CHECK(rew_a == rew_b);
    CHECK(ex_a == ex_b);
  }
}

TEST_CASE("vec env: auto-reset returns fresh observations on done") {
  EnvConfig cfg;
  cfg.episode_len = 5;
  VecEnv vec(cfg, 2, 11);
  std::vector<double> obs, rewards, next_ex, actions(6, 0.3);
  std::vector<std::uint8_t> dones;
  vec.reset_all(obs);
  for (int t = 0; t < 4; ++t) vec.step(actions, obs, rewards, dones, next_ex);
  vec.step(actions, obs, rewards, dones, next_ex);
  CHECK(dones[0] == 1);
  CHECK(dones[1] == 1);
  // post-reset observation: EE back at its spawn
  CHECK(obs[0] == 0.0);
  CHECK(obs[1] == 0.1);
}

TEST_CASE("uniform random policy almost never scores (sparse regime)") {
  EnvConfig cfg;
  VecEnv vec(cfg, 8, 1234);
  Rng arng(5);
  std::vector<double> obs, rewards, next_ex, actions(8 * 3);
  std::vector<std::uint8_t> dones;
  vec.reset_all(obs);
  double total_return = 0.0;
  int episodes = 0;
  // 1000 episodes of 100 steps across 8 parallel envs
  while (episodes < 1000) {
    for (auto& a : actions) a = arng.uniform(-1.0, 1.0);
    vec.step(actions, obs, rewards, dones, next_ex);
    for (int e = 0; e < 8; ++e) {
      total_return += rewards[e];
      if (dones[e]) ++episodes;
    }
  }
  CHECK(total_return / episodes < 0.05);
}

TEST_CASE("trajectory dump is valid json lines") {
  TrajectoryRecord rec;
  rec.step = 0;
  rec.s_in = {0.0, 0.1, 1.0};
  rec.s_ex = {0.2, 0.0};
  rec.action = {0.01, -0.02, 0.1};
  rec.r_e = 0.0;
  rec.done = false;
  const auto path =
      std::filesystem::temp_directory_path() / "ek_traj_test.jsonl";
  dump_trajectory({rec, rec}, path.string());
  std::ifstream is(path);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    CHECK(line.find("\"step\"") != std::string::npos);
    CHECK(line.find("\"s_in\"") != std::string::npos);
    CHECK(line.find("\"s_ex\"") != std::string::npos);
    CHECK(line.find("\"action\"") != std::string::npos);
    CHECK(line.find("\"r_e\"") != std::string::npos);
    CHECK(line.find("\"done\"") != std::string::npos);
  }
  CHECK(lines == 2);
  std::filesystem::remove(path);
}
