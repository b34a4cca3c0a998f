#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empowerkit/env.hpp"
#include "empowerkit/intrinsic.hpp"
#include "empowerkit/network.hpp"

namespace empowerkit {

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  int epochs_per_update = 10;
  int minibatch = 256;
  double lr = 2e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  int horizon = 128;
  int n_envs = 60;
  double logstd_init = -0.5;
  std::vector<int> hidden = {128, 64, 32};
};

// diagonal-Gaussian policy with a state-independent learnable log-std,
// plus the value function
struct PolicyValueNets {
  Network policy;  // obs -> action mean
  Network value;   // obs -> scalar
  std::vector<double> log_std;  // clamped to [-5, 2]
  AdamState opt_policy, opt_value, opt_logstd;

  PolicyValueNets(int obs_dim, int action_dim, const PpoConfig& config,
                  Rng& rng);

  int obs_dim() const { return policy.input_dim(); }
  int action_dim() const { return policy.output_dim(); }

  double log_prob(const double* mean, const double* action) const;
  double entropy() const;
  void sample_actions(std::span<const double> obs, int n, Rng& rng,
                      std::vector<double>& actions,
                      std::vector<double>& logp) const;
};

struct RolloutBatch {
  int horizon = 0, n_envs = 0;
  int obs_dim = 0, action_dim = 0, ex_dim = 0;
  // all [t][env] row-major
  std::vector<double> obs, actions, logp, values, r_extrinsic, s_ex_next;
  std::vector<std::uint8_t> done;
  std::vector<double> bootstrap_value;  // per env
  // intrinsic stack results
  std::vector<double> raw_icm, norm_icm, raw_other, norm_other;
  std::vector<double> w_icm, w_emp;  // per step
  std::vector<double> combined;      // learning reward
  // gae
  std::vector<double> advantages, returns;

  int flat() const { return horizon * n_envs; }
};

// tracks per-env episode accumulation across rollouts
struct EpisodeTracker {
  std::vector<double> acc_return;
  std::vector<std::uint8_t> acc_success;
  std::vector<double> completed_returns;
  std::vector<std::uint8_t> completed_success;
  double success_reward_threshold = 0.5;

  explicit EpisodeTracker(int n_envs)
      : acc_return(n_envs, 0.0), acc_success(n_envs, 0) {}
  void observe(std::span<const double> rewards,
               std::span<const std::uint8_t> dones);
  // rolling statistics over the last `window` completed episodes
  double mean_return(int window = 100) const;
  double success_rate(int window = 100) const;
};

RolloutBatch collect_rollout(PolicyValueNets& nets, VecEnv& env,
                             IntrinsicStack* stack, int horizon, Rng& rng,
                             std::vector<double>& obs_current,
                             EpisodeTracker* tracker);

struct GaeResult {
  std::vector<double> advantages, returns;
};

// backward-recursive generalized advantage estimation; dones flush the
// bootstrap, returns = advantages + values
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones,
              std::span<const double> bootstrap_value, int horizon, int n_envs,
              double gamma, double lam);

void apply_gae(RolloutBatch& batch, double gamma, double lam);

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  bool aborted = false;
};

// loss and exact gradients for one minibatch (indices into the batch);
// normalized_adv is indexed by the same flat transition index
struct PpoLossGrads {
  double total_loss = 0.0;
  double pg_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  std::vector<double> policy_grads, value_grads, logstd_grads;
};
PpoLossGrads ppo_loss_and_grads(const PolicyValueNets& nets,
                                const RolloutBatch& batch,
                                std::span<const double> normalized_adv,
                                std::span<const int> indices,
                                const PpoConfig& config);

// clipped-surrogate update over shuffled minibatches; a non-finite loss
// restores the pre-update parameters and reports aborted
PpoDiagnostics ppo_update(PolicyValueNets& nets, const RolloutBatch& batch,
                          const PpoConfig& config, Rng& rng);

// Stored transitions keep raw features only; intrinsic rewards are always
// recomputed from current model parameters when experiences are drawn.
class ReplayStore {
 public:
  ReplayStore(int capacity, int obs_dim, int action_dim, int ex_dim);

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  void push(const double* obs, const double* action, const double* s_ex_next,
            double r_extrinsic);
  void push_batch(const RolloutBatch& batch);
  std::vector<int> sample_indices(int count, Rng& rng) const;

  void gather(std::span<const int> indices, std::vector<double>& obs,
              std::vector<double>& actions, std::vector<double>& s_ex_next,
              std::vector<double>& r_extrinsic) const;

 private:
  int capacity_, obs_dim_, action_dim_, ex_dim_;
  int size_ = 0, head_ = 0;
  std::vector<double> obs_, actions_, s_ex_next_, r_extrinsic_;
};

// recomputes intrinsic rewards for the sampled transitions with current
// model parameters and re-blends with the stored extrinsic rewards
std::vector<double> recompute_intrinsic(const ReplayStore& store,
                                        std::span<const int> indices,
                                        const IntrinsicStack& stack);

struct TrainConfig {
  PpoConfig ppo;
  IntrinsicConfig intrinsic;
  EnvConfig env;
  long long total_steps = 300000;
  std::uint64_t seed = 0;
  int ckpt_every = 0;  // iterations; 0 disables
  int replay_capacity = 100000;
  std::string out_dir;  // empty disables checkpoints/diagnostics
  bool emit_timing = false;
  bool write_diagnostics = false;  // per-step diagnostics.csv
};

struct IterationMetrics {
  int iteration = 0;
  long long env_steps = 0;
  double mean_extrinsic_return = 0.0;  // rolling 100 episodes
  double success_rate = 0.0;
  double w_icm = 1.0;
  double mean_norm_icm = 0.0;
  double mean_norm_emp = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  std::vector<double> episode_returns;
  std::vector<std::uint8_t> episode_success;
  std::vector<double> w_icm_trace;  // per iteration mean
  bool aborted = false;
};

TrainResult train(const TrainConfig& config);

void write_metrics_csv(const std::vector<IterationMetrics>& metrics,
                       bool emit_timing, const std::string& path);

// checkpointing: policy.net / value.net plus a JSON sidecar
void save_policy_checkpoint(const PolicyValueNets& nets, int distractor_dim,
                            const std::string& dir);

struct PolicyCheckpoint {
  Network policy;
  Network value;
  std::vector<double> log_std;
  int distractor_dim = 0;
};
PolicyCheckpoint load_policy_checkpoint(const std::string& dir);

struct EvalReport {
  int episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

// deterministic mean-action episodes
EvalReport evaluate_policy(const Network& policy, const EnvConfig& env_config,
                           int episodes, std::uint64_t seed,
                           std::vector<TrajectoryRecord>* trajectory = nullptr);

}  // namespace empowerkit
