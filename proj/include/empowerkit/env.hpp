#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "empowerkit/rng.hpp"

namespace empowerkit {

struct EnvConfig {
  double grasp_radius = 0.03;        // delta, metres
  double grip_close_threshold = 0.5;
  double lift_threshold = 0.01;      // metres
  double reward_scale = 50.0;        // alpha
  int episode_len = 100;
  int distractor_dim = 0;            // 0 or 2
  // the gripper is spring-loaded toward open: the aperture relaxes by this
  // much every step on top of the commanded delta, so holding the object
  // takes a sustained squeeze and random play almost never grasps
  double grip_spring = 0.1;
};

// positions in metres; table surface at h = 0
struct EnvState {
  double ee_x = 0.0, ee_h = 0.0;
  double grip = 1.0;  // aperture in [0, 1]
  double obj_x = 0.0, obj_h = 0.0;
  bool grasped = false;
  std::vector<double> distractor;  // i.i.d. N(0,1), resampled every step
  int step_count = 0;
};

struct EnvAction {
  double d_ee_x = 0.0, d_ee_h = 0.0;  // clipped to [-0.05, 0.05]
  double d_grip = 0.0;                // clipped to [-0.2, 0.2]
};

inline constexpr double kMaxDeltaPos = 0.05;
inline constexpr double kMaxDeltaGrip = 0.2;
inline constexpr int kActionDim = 3;
inline constexpr int kIntrinsicDim = 3;  // ee_x, ee_h, grip

struct StateSplit {
  std::vector<double> intrinsic;  // (ee_x, ee_h, grip)
  std::vector<double> extrinsic;  // (obj_x, obj_h) ++ distractor
};

StateSplit split_state(const EnvState& state);

// intrinsic ++ extrinsic, the policy/model observation
std::vector<double> observation(const EnvState& state);

// Deterministic 2-D kinematic lifting task with sparse extrinsic reward.
// The gripper must come within grasp_radius of the object with the grip
// below the close threshold; a grasped object follows the end-effector
// rigidly and drops straight to the table on release. Reward is
// alpha * (obj_h - lift_threshold) only while grasped above the threshold.
class PlanarLift {
 public:
  PlanarLift(const EnvConfig& config, std::uint64_t seed);

  const EnvState& reset();

  struct StepResult {
    double reward = 0.0;
    bool done = false;
  };
  StepResult step(const EnvAction& action);

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  int extrinsic_dim() const { return 2 + config_.distractor_dim; }
  int observation_dim() const { return kIntrinsicDim + extrinsic_dim(); }

 private:
  EnvConfig config_;
  EnvState state_;
  Rng rng_;
};

// N independent PlanarLift instances with auto-reset on done.
class VecEnv {
 public:
  VecEnv(const EnvConfig& config, int n, std::uint64_t seed);

  int size() const { return static_cast<int>(envs_.size()); }
  int observation_dim() const { return envs_.front().observation_dim(); }
  int extrinsic_dim() const { return envs_.front().extrinsic_dim(); }
  const EnvConfig& config() const { return envs_.front().config(); }

  // fills obs with the post-reset observations of every env
  void reset_all(std::vector<double>& obs);

  // actions: n x 3 normalized to [-1, 1], scaled to the action bounds here.
  // next_extrinsic receives the true next extrinsic state of the transition
  // (pre-reset on episode end); obs receives the stepped (post-reset when
  // done) observations.
  void step(std::span<const double> actions, std::vector<double>& obs,
            std::vector<double>& rewards, std::vector<std::uint8_t>& dones,
            std::vector<double>& next_extrinsic);

  const PlanarLift& env(int i) const { return envs_[i]; }

 private:
  std::vector<PlanarLift> envs_;
};

// action scaling used by the vectorized wrapper and by eval
EnvAction scale_action(const double* normalized);

struct TrajectoryRecord {
  int step = 0;
  std::vector<double> s_in, s_ex, action;
  double r_e = 0.0;
  bool done = false;
};

// JSON-lines dump, one transition per line
void dump_trajectory(const std::vector<TrajectoryRecord>& records,
                     const std::string& path);

}  // namespace empowerkit
