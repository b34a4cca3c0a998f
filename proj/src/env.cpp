#include "empowerkit/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace empowerkit {

StateSplit split_state(const EnvState& state) {
  StateSplit s;
  s.intrinsic = {state.ee_x, state.ee_h, state.grip};
  s.extrinsic = {state.obj_x, state.obj_h};
  s.extrinsic.insert(s.extrinsic.end(), state.distractor.begin(),
                     state.distractor.end());
  return s;
}

std::vector<double> observation(const EnvState& state) {
  auto split = split_state(state);
  std::vector<double> obs = std::move(split.intrinsic);
  obs.insert(obs.end(), split.extrinsic.begin(), split.extrinsic.end());
  return obs;
}

PlanarLift::PlanarLift(const EnvConfig& config, std::uint64_t seed)
    : config_(config), rng_(seed) {
  reset();
}

const EnvState& PlanarLift::reset() {
  state_ = EnvState{};
  state_.ee_x = 0.0;
  state_.ee_h = 0.1;
  state_.grip = 1.0;
  state_.obj_x = rng_.uniform(-0.3, 0.3);
  state_.obj_h = 0.0;
  state_.grasped = false;
  state_.distractor.assign(config_.distractor_dim, 0.0);
  for (auto& d : state_.distractor) d = rng_.normal();
  state_.step_count = 0;
  return state_;
}

PlanarLift::StepResult PlanarLift::step(const EnvAction& action) {
  if (!std::isfinite(action.d_ee_x) || !std::isfinite(action.d_ee_h) ||
      !std::isfinite(action.d_grip))
    throw std::invalid_argument("non-finite action");

  const double dx = std::clamp(action.d_ee_x, -kMaxDeltaPos, kMaxDeltaPos);
  const double dh = std::clamp(action.d_ee_h, -kMaxDeltaPos, kMaxDeltaPos);
  const double dg = std::clamp(action.d_grip, -kMaxDeltaGrip, kMaxDeltaGrip);

  state_.ee_x = std::clamp(state_.ee_x + dx, -0.5, 0.5);
  state_.ee_h = std::clamp(state_.ee_h + dh, 0.0, 0.5);
  state_.grip = std::clamp(state_.grip + dg + config_.grip_spring, 0.0, 1.0);

  if (state_.grasped) {
    if (state_.grip >= config_.grip_close_threshold) {
      state_.grasped = false;
      state_.obj_h = 0.0;  // instant fall, keeps current x
      state_.obj_x = state_.ee_x;
    } else {
      state_.obj_x = state_.ee_x;
      state_.obj_h = state_.ee_h;
    }
  } else {
    const bool near = std::abs(state_.ee_x - state_.obj_x) < config_.grasp_radius &&
                      std::abs(state_.ee_h - state_.obj_h) < config_.grasp_radius;
    if (near && state_.grip < config_.grip_close_threshold) {
      state_.grasped = true;
      state_.obj_x = state_.ee_x;
      state_.obj_h = state_.ee_h;
    }
  }

  for (auto& d : state_.distractor) d = rng_.normal();

  StepResult r;
  if (state_.grasped && state_.obj_h > config_.lift_threshold)
    r.reward = config_.reward_scale * (state_.obj_h - config_.lift_threshold);

  ++state_.step_count;
  r.done = state_.step_count >= config_.episode_len;
  return r;
}

VecEnv::VecEnv(const EnvConfig& config, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need >= 1 environment");
  envs_.reserve(n);
  for (int i = 0; i < n; ++i)
    envs_.emplace_back(config, Rng::mix(seed, static_cast<std::uint64_t>(i)));
}

void VecEnv::reset_all(std::vector<double>& obs) {
  const int od = observation_dim();
  obs.assign(static_cast<std::size_t>(size()) * od, 0.0);
  for (int i = 0; i < size(); ++i) {
    const auto o = observation(envs_[i].reset());
    std::copy(o.begin(), o.end(), obs.begin() + static_cast<std::size_t>(i) * od);
  }
}

EnvAction scale_action(const double* normalized) {
  EnvAction a;
  a.d_ee_x = std::clamp(normalized[0], -1.0, 1.0) * kMaxDeltaPos;
  a.d_ee_h = std::clamp(normalized[1], -1.0, 1.0) * kMaxDeltaPos;
  a.d_grip = std::clamp(normalized[2], -1.0, 1.0) * kMaxDeltaGrip;
  return a;
}

void VecEnv::step(std::span<const double> actions, std::vector<double>& obs,
                  std::vector<double>& rewards,
                  std::vector<std::uint8_t>& dones,
                  std::vector<double>& next_extrinsic) {
  const int n = size();
  const int od = observation_dim();
  const int ed = extrinsic_dim();
  if (static_cast<int>(actions.size()) != n * kActionDim)
    throw std::invalid_argument("vec_step: action size mismatch");
  obs.assign(static_cast<std::size_t>(n) * od, 0.0);
  rewards.assign(n, 0.0);
  dones.assign(n, 0);
  next_extrinsic.assign(static_cast<std::size_t>(n) * ed, 0.0);

  for (int i = 0; i < n; ++i) {
    const EnvAction a =
        scale_action(actions.data() + static_cast<std::size_t>(i) * kActionDim);
    const auto result = envs_[i].step(a);
    rewards[i] = result.reward;
    dones[i] = result.done ? 1 : 0;
    const auto split = split_state(envs_[i].state());
    std::copy(split.extrinsic.begin(), split.extrinsic.end(),
              next_extrinsic.begin() + static_cast<std::size_t>(i) * ed);
    if (result.done) envs_[i].reset();
    const auto o = observation(envs_[i].state());
    std::copy(o.begin(), o.end(), obs.begin() + static_cast<std::size_t>(i) * od);
  }
}

void dump_trajectory(const std::vector<TrajectoryRecord>& records,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  for (const auto& r : records) {
    nlohmann::json line = {{"step", r.step},   {"s_in", r.s_in},
                           {"s_ex", r.s_ex},   {"action", r.action},
                           {"r_e", r.r_e},     {"done", r.done}};
    os << line.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace empowerkit
