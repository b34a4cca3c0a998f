#include "empowerkit/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace empowerkit {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835607;
constexpr double kLogStdMin = -5.0, kLogStdMax = 2.0;
}  // namespace

PolicyValueNets::PolicyValueNets(int obs_dim, int action_dim,
                                 const PpoConfig& config, Rng& rng)
    : policy(Network::mlp(obs_dim, config.hidden, action_dim,
                          Activation::tanh)),
      value(Network::mlp(obs_dim, config.hidden, 1, Activation::tanh)),
      log_std(action_dim, config.logstd_init) {
  policy.init_params(rng, /*last_layer_scale=*/0.01);
  value.init_params(rng);
  opt_policy = AdamState(policy.params().size(), config.lr);
  opt_value = AdamState(value.params().size(), config.lr);
  opt_logstd = AdamState(log_std.size(), config.lr);
}

double PolicyValueNets::log_prob(const double* mean,
                                 const double* action) const {
  double lp = -0.5 * action_dim() * kLog2Pi;
  for (int d = 0; d < action_dim(); ++d) {
    const double ls = std::clamp(log_std[d], kLogStdMin, kLogStdMax);
    const double inv_sigma = std::exp(-ls);
    const double zscore = (action[d] - mean[d]) * inv_sigma;
    lp += -ls - 0.5 * zscore * zscore;
  }
  return lp;
}

double PolicyValueNets::entropy() const {
  double h = 0.5 * action_dim() * (kLog2Pi + 1.0);
  for (int d = 0; d < action_dim(); ++d)
    h += std::clamp(log_std[d], kLogStdMin, kLogStdMax);
  return h;
}

void PolicyValueNets::sample_actions(std::span<const double> obs, int n,
                                     Rng& rng, std::vector<double>& actions,
                                     std::vector<double>& logp) const {
  std::vector<double> means;
  policy.forward(obs, n, means);
  const int ad = action_dim();
  actions.assign(static_cast<std::size_t>(n) * ad, 0.0);
  logp.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double* a = actions.data() + static_cast<std::size_t>(i) * ad;
    const double* mu = means.data() + static_cast<std::size_t>(i) * ad;
    for (int d = 0; d < ad; ++d) {
      const double sigma = std::exp(std::clamp(log_std[d], kLogStdMin, kLogStdMax));
      a[d] = mu[d] + sigma * rng.normal();
    }
    logp[i] = log_prob(mu, a);
  }
}

void EpisodeTracker::observe(std::span<const double> rewards,
                             std::span<const std::uint8_t> dones) {
  for (std::size_t e = 0; e < rewards.size(); ++e) {
    acc_return[e] += rewards[e];
    if (rewards[e] > success_reward_threshold) acc_success[e] = 1;
    if (dones[e]) {
      completed_returns.push_back(acc_return[e]);
      completed_success.push_back(acc_success[e]);
      acc_return[e] = 0.0;
      acc_success[e] = 0;
    }
  }
}

double EpisodeTracker::mean_return(int window) const {
  if (completed_returns.empty()) return 0.0;
  const int n = std::min<int>(window, static_cast<int>(completed_returns.size()));
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += completed_returns[completed_returns.size() - 1 - i];
  return sum / n;
}

double EpisodeTracker::success_rate(int window) const {
  if (completed_success.empty()) return 0.0;
  const int n = std::min<int>(window, static_cast<int>(completed_success.size()));
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += completed_success[completed_success.size() - 1 - i];
  return sum / n;
}

RolloutBatch collect_rollout(PolicyValueNets& nets, VecEnv& env,
                             IntrinsicStack* /*stack*/, int horizon, Rng& rng,
                             std::vector<double>& obs_current,
                             EpisodeTracker* tracker) {
  const int n_envs = env.size();
  const int od = env.observation_dim();
  const int ad = nets.action_dim();
  const int ed = env.extrinsic_dim();

  RolloutBatch b;
  b.horizon = horizon;
  b.n_envs = n_envs;
  b.obs_dim = od;
  b.action_dim = ad;
  b.ex_dim = ed;
  const int flat = horizon * n_envs;
  b.obs.assign(static_cast<std::size_t>(flat) * od, 0.0);
  b.actions.assign(static_cast<std::size_t>(flat) * ad, 0.0);
  b.logp.assign(flat, 0.0);
  b.values.assign(flat, 0.0);
  b.r_extrinsic.assign(flat, 0.0);
  b.s_ex_next.assign(static_cast<std::size_t>(flat) * ed, 0.0);
  b.done.assign(flat, 0);

  std::vector<double> actions, logp, values, obs_next, rewards, next_ex;
  std::vector<std::uint8_t> dones;
  for (int t = 0; t < horizon; ++t) {
    std::copy(obs_current.begin(), obs_current.end(),
              b.obs.begin() + static_cast<std::size_t>(t) * n_envs * od);
    nets.sample_actions(obs_current, n_envs, rng, actions, logp);
    nets.value.forward(obs_current, n_envs, values);
    env.step(actions, obs_next, rewards, dones, next_ex);
    std::copy(actions.begin(), actions.end(),
              b.actions.begin() + static_cast<std::size_t>(t) * n_envs * ad);
    std::copy(logp.begin(), logp.end(), b.logp.begin() + static_cast<std::size_t>(t) * n_envs);
    for (int e = 0; e < n_envs; ++e)
      b.values[static_cast<std::size_t>(t) * n_envs + e] = values[e];
    std::copy(rewards.begin(), rewards.end(),
              b.r_extrinsic.begin() + static_cast<std::size_t>(t) * n_envs);
    std::copy(next_ex.begin(), next_ex.end(),
              b.s_ex_next.begin() + static_cast<std::size_t>(t) * n_envs * ed);
    std::copy(dones.begin(), dones.end(),
              b.done.begin() + static_cast<std::size_t>(t) * n_envs);
    if (tracker != nullptr) tracker->observe(rewards, dones);
    obs_current = obs_next;
  }
  std::vector<double> boot;
  nets.value.forward(obs_current, n_envs, boot);
  b.bootstrap_value = boot;
  b.combined = b.r_extrinsic;  // overwritten when an intrinsic stack runs
  return b;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones,
              std::span<const double> bootstrap_value, int horizon, int n_envs,
              double gamma, double lam) {
  const int flat = horizon * n_envs;
  if (static_cast<int>(rewards.size()) != flat ||
      static_cast<int>(values.size()) != flat ||
      static_cast<int>(dones.size()) != flat ||
      static_cast<int>(bootstrap_value.size()) != n_envs)
    throw std::invalid_argument("gae: array sizes misaligned");
  GaeResult r;
  r.advantages.assign(flat, 0.0);
  r.returns.assign(flat, 0.0);
  for (int e = 0; e < n_envs; ++e) {
    double gae_acc = 0.0;
    for (int t = horizon - 1; t >= 0; --t) {
      const int i = t * n_envs + e;
      const double nonterminal = dones[i] ? 0.0 : 1.0;
      const double next_value =
          t == horizon - 1 ? bootstrap_value[e] : values[i + n_envs];
      const double delta =
          rewards[i] + gamma * next_value * nonterminal - values[i];
      gae_acc = delta + gamma * lam * nonterminal * gae_acc;
      r.advantages[i] = gae_acc;
      r.returns[i] = gae_acc + values[i];
    }
  }
  return r;
}

void apply_gae(RolloutBatch& b, double gamma, double lam) {
  auto r = gae(b.combined, b.values, b.done, b.bootstrap_value, b.horizon,
               b.n_envs, gamma, lam);
  b.advantages = std::move(r.advantages);
  b.returns = std::move(r.returns);
}

PpoLossGrads ppo_loss_and_grads(const PolicyValueNets& nets,
                                const RolloutBatch& batch,
                                std::span<const double> normalized_adv,
                                std::span<const int> indices,
                                const PpoConfig& cfg) {
  const int count = static_cast<int>(indices.size());
  const int od = batch.obs_dim;
  const int ad = batch.action_dim;

  std::vector<double> mb_obs(static_cast<std::size_t>(count) * od);
  for (int j = 0; j < count; ++j) {
    const int i = indices[j];
    std::copy(batch.obs.begin() + static_cast<std::size_t>(i) * od,
              batch.obs.begin() + static_cast<std::size_t>(i + 1) * od,
              mb_obs.begin() + static_cast<std::size_t>(j) * od);
  }
  Network::Tape ptape, vtape;
  std::vector<double> means, vals;
  nets.policy.forward(mb_obs, count, means, ptape);
  nets.value.forward(mb_obs, count, vals, vtape);

  PpoLossGrads out;
  std::vector<double> up_mean(static_cast<std::size_t>(count) * ad, 0.0);
  std::vector<double> up_val(count, 0.0);
  out.logstd_grads.assign(ad, 0.0);
  const double inv = 1.0 / count;
  for (int j = 0; j < count; ++j) {
    const int i = indices[j];
    const double* mu = means.data() + static_cast<std::size_t>(j) * ad;
    const double* a = batch.actions.data() + static_cast<std::size_t>(i) * ad;
    const double new_logp = nets.log_prob(mu, a);
    const double logratio = new_logp - batch.logp[i];
    const double ratio = std::exp(logratio);
    out.approx_kl += ((ratio - 1.0) - logratio) * inv;
    const double advantage = normalized_adv[i];
    const double unclipped = ratio * advantage;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantage;
    out.pg_loss -= std::min(unclipped, clipped) * inv;
    const bool pass_through =
        unclipped <= clipped ||
        (ratio > 1.0 - cfg.clip_eps && ratio < 1.0 + cfg.clip_eps);
    if (pass_through) {
      const double coef = -inv * ratio * advantage;
      for (int d = 0; d < ad; ++d) {
        const double ls = std::clamp(nets.log_std[d], kLogStdMin, kLogStdMax);
        const double inv_sig2 = std::exp(-2.0 * ls);
        const double diff = a[d] - mu[d];
        up_mean[static_cast<std::size_t>(j) * ad + d] = coef * diff * inv_sig2;
        out.logstd_grads[d] += coef * (-1.0 + diff * diff * inv_sig2);
      }
    }
    const double verr = vals[j] - batch.returns[i];
    out.value_loss += cfg.value_coef * verr * verr * inv;
    up_val[j] = cfg.value_coef * 2.0 * verr * inv;
  }
  for (int d = 0; d < ad; ++d) out.logstd_grads[d] -= cfg.entropy_coef;
  out.total_loss =
      out.pg_loss + out.value_loss - cfg.entropy_coef * nets.entropy();

  out.policy_grads.assign(nets.policy.params().size(), 0.0);
  nets.policy.backward(ptape, up_mean, out.policy_grads);
  out.value_grads.assign(nets.value.params().size(), 0.0);
  nets.value.backward(vtape, up_val, out.value_grads);
  return out;
}

PpoDiagnostics ppo_update(PolicyValueNets& nets, const RolloutBatch& batch,
                          const PpoConfig& cfg, Rng& rng) {
  const int n = batch.flat();

  // advantages normalized once per update
  std::vector<double> adv = batch.advantages;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / n) + 1e-8;
  for (double& a : adv) a = (a - mean) / std;

  // snapshot for abort-and-restore
  const auto policy_params = nets.policy.params();
  const auto value_params = nets.value.params();
  const auto log_std_snapshot = nets.log_std;
  const auto opt_p = nets.opt_policy, opt_v = nets.opt_value,
             opt_ls = nets.opt_logstd;

  PpoDiagnostics diag;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  double last_pg = 0.0, last_v = 0.0, kl_acc = 0.0;
  int kl_batches = 0;

  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int count = std::min(cfg.minibatch, n - start);
      const auto lg = ppo_loss_and_grads(
          nets, batch, adv,
          std::span<const int>(order.data() + start, count), cfg);
      if (!std::isfinite(lg.total_loss)) {
        nets.policy.params() = policy_params;
        nets.value.params() = value_params;
        nets.log_std = log_std_snapshot;
        nets.opt_policy = opt_p;
        nets.opt_value = opt_v;
        nets.opt_logstd = opt_ls;
        diag.aborted = true;
        return diag;
      }
      nets.opt_policy.step(nets.policy.params(), lg.policy_grads);
      nets.opt_value.step(nets.value.params(), lg.value_grads);
      nets.opt_logstd.step(nets.log_std, lg.logstd_grads);
      for (double& ls : nets.log_std)
        ls = std::clamp(ls, kLogStdMin, kLogStdMax);
      last_pg = lg.pg_loss;
      last_v = lg.value_loss;
      kl_acc += lg.approx_kl;
      ++kl_batches;
    }
  }
  diag.policy_loss = last_pg;
  diag.value_loss = last_v;
  diag.entropy = nets.entropy();
  diag.approx_kl = kl_batches > 0 ? kl_acc / kl_batches : 0.0;
  return diag;
}

ReplayStore::ReplayStore(int capacity, int obs_dim, int action_dim, int ex_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim),
      ex_dim_(ex_dim) {
  obs_.assign(static_cast<std::size_t>(capacity) * obs_dim, 0.0);
  actions_.assign(static_cast<std::size_t>(capacity) * action_dim, 0.0);
  s_ex_next_.assign(static_cast<std::size_t>(capacity) * ex_dim, 0.0);
  r_extrinsic_.assign(capacity, 0.0);
}

void ReplayStore::push(const double* obs, const double* action,
                       const double* s_ex_next, double r_extrinsic) {
  std::copy(obs, obs + obs_dim_,
            obs_.begin() + static_cast<std::size_t>(head_) * obs_dim_);
  std::copy(action, action + action_dim_,
            actions_.begin() + static_cast<std::size_t>(head_) * action_dim_);
  std::copy(s_ex_next, s_ex_next + ex_dim_,
            s_ex_next_.begin() + static_cast<std::size_t>(head_) * ex_dim_);
  r_extrinsic_[head_] = r_extrinsic;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayStore::push_batch(const RolloutBatch& batch) {
  for (int i = 0; i < batch.flat(); ++i)
    push(batch.obs.data() + static_cast<std::size_t>(i) * obs_dim_,
         batch.actions.data() + static_cast<std::size_t>(i) * action_dim_,
         batch.s_ex_next.data() + static_cast<std::size_t>(i) * ex_dim_,
         batch.r_extrinsic[i]);
}

std::vector<int> ReplayStore::sample_indices(int count, Rng& rng) const {
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = rng.uniform_int(size_);
  return idx;
}

void ReplayStore::gather(std::span<const int> indices,
                         std::vector<double>& obs, std::vector<double>& actions,
                         std::vector<double>& s_ex_next,
                         std::vector<double>& r_extrinsic) const {
  const int k = static_cast<int>(indices.size());
  obs.assign(static_cast<std::size_t>(k) * obs_dim_, 0.0);
  actions.assign(static_cast<std::size_t>(k) * action_dim_, 0.0);
  s_ex_next.assign(static_cast<std::size_t>(k) * ex_dim_, 0.0);
  r_extrinsic.assign(k, 0.0);
  for (int j = 0; j < k; ++j) {
    const int i = indices[j];
    if (i < 0 || i >= size_) throw std::out_of_range("replay index");
    std::copy(obs_.begin() + static_cast<std::size_t>(i) * obs_dim_,
              obs_.begin() + static_cast<std::size_t>(i + 1) * obs_dim_,
              obs.begin() + static_cast<std::size_t>(j) * obs_dim_);
    std::copy(actions_.begin() + static_cast<std::size_t>(i) * action_dim_,
              actions_.begin() + static_cast<std::size_t>(i + 1) * action_dim_,
              actions.begin() + static_cast<std::size_t>(j) * action_dim_);
    std::copy(s_ex_next_.begin() + static_cast<std::size_t>(i) * ex_dim_,
              s_ex_next_.begin() + static_cast<std::size_t>(i + 1) * ex_dim_,
              s_ex_next.begin() + static_cast<std::size_t>(j) * ex_dim_);
    r_extrinsic[j] = r_extrinsic_[i];
  }
}

std::vector<double> recompute_intrinsic(const ReplayStore& store,
                                        std::span<const int> indices,
                                        const IntrinsicStack& stack) {
  std::vector<double> obs, actions, s_ex_next, r_e;
  store.gather(indices, obs, actions, s_ex_next, r_e);
  const auto rewards =
      stack.recompute(obs, actions, s_ex_next, static_cast<int>(indices.size()));
  std::vector<double> combined(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    combined[i] = rewards.intrinsic[i] + r_e[i];
  return combined;
}

TrainResult train(const TrainConfig& cfg) {
  VecEnv env(cfg.env, cfg.ppo.n_envs, Rng::mix(cfg.seed, 0xE27));
  Rng net_rng = Rng::derive(cfg.seed, 0x4E75);
  PolicyValueNets nets(env.observation_dim(), kActionDim, cfg.ppo, net_rng);

  std::optional<IntrinsicStack> stack;
  if (cfg.intrinsic.mode != IntrinsicMode::none) {
    Rng stack_rng = Rng::derive(cfg.seed, 0x157AC4);
    IntrinsicConfig icfg = cfg.intrinsic;
    stack.emplace(icfg, env.observation_dim(), kActionDim, env.extrinsic_dim(),
                  stack_rng);
  }

  Rng rollout_rng = Rng::derive(cfg.seed, 0x2011);
  Rng update_rng = Rng::derive(cfg.seed, 0x3012);
  Rng intrinsic_rng = Rng::derive(cfg.seed, 0x4013);

  ReplayStore store(cfg.replay_capacity, env.observation_dim(), kActionDim,
                    env.extrinsic_dim());
  EpisodeTracker tracker(cfg.ppo.n_envs);

  const long long steps_per_iter =
      static_cast<long long>(cfg.ppo.n_envs) * cfg.ppo.horizon;
  const int iterations = static_cast<int>(
      (cfg.total_steps + steps_per_iter - 1) / steps_per_iter);

  PolicySampler sampler = [&nets](std::span<const double> obs, int n, Rng& rng,
                                  std::vector<double>& actions) {
    std::vector<double> logp;
    nets.sample_actions(obs, n, rng, actions, logp);
  };

  TrainResult result;
  std::vector<double> obs_current;
  env.reset_all(obs_current);
  long long env_steps = 0;

  std::ofstream diag_csv;
  if (cfg.write_diagnostics && !cfg.out_dir.empty()) {
    diag_csv.open(cfg.out_dir + "/diagnostics.csv");
    diag_csv << "step,w_icm,w_emp,raw_icm,norm_icm,raw_emp,norm_emp,"
                "extrinsic,combined\n";
  }
  long long diag_step = 0;

  for (int iter = 1; iter <= iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    RolloutBatch batch = collect_rollout(nets, env, stack ? &*stack : nullptr,
                                         cfg.ppo.horizon, rollout_rng,
                                         obs_current, &tracker);
    env_steps += steps_per_iter;

    IterationMetrics m;
    m.iteration = iter;
    m.env_steps = env_steps;

    if (stack) {
      auto run_training = [&]() {
        for (int e = 0; e < cfg.intrinsic.intrinsic_epochs; ++e)
          stack->train(batch.obs, batch.actions, batch.s_ex_next, batch.flat(),
                       sampler, intrinsic_rng);
      };
      if (cfg.intrinsic.train_before_reward) run_training();
      auto rewards =
          stack->rollout_rewards(batch.obs, batch.actions, batch.s_ex_next,
                                 batch.horizon, batch.n_envs, sampler,
                                 intrinsic_rng);
      if (!cfg.intrinsic.train_before_reward) run_training();
      batch.raw_icm = std::move(rewards.raw_icm);
      batch.norm_icm = std::move(rewards.norm_icm);
      batch.raw_other = std::move(rewards.raw_other);
      batch.norm_other = std::move(rewards.norm_other);
      batch.w_icm = std::move(rewards.w_icm);
      batch.w_emp = std::move(rewards.w_emp);
      for (int i = 0; i < batch.flat(); ++i)
        batch.combined[i] = rewards.intrinsic[i] + batch.r_extrinsic[i];
    }

    apply_gae(batch, cfg.ppo.gamma, cfg.ppo.lam);
    const auto diag = ppo_update(nets, batch, cfg.ppo, update_rng);
    store.push_batch(batch);

    if (diag_csv.is_open()) {
      auto env_mean = [&](const std::vector<double>& v, int t) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (int e = 0; e < batch.n_envs; ++e)
          s += v[static_cast<std::size_t>(t) * batch.n_envs + e];
        return s / batch.n_envs;
      };
      char line[320];
      for (int t = 0; t < batch.horizon; ++t) {
        std::snprintf(line, sizeof(line),
                      "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      diag_step,
                      batch.w_icm.empty() ? 1.0 : batch.w_icm[t],
                      batch.w_emp.empty() ? 0.0 : batch.w_emp[t],
                      env_mean(batch.raw_icm, t), env_mean(batch.norm_icm, t),
                      env_mean(batch.raw_other, t),
                      env_mean(batch.norm_other, t),
                      env_mean(batch.r_extrinsic, t),
                      env_mean(batch.combined, t));
        diag_csv << line;
        ++diag_step;
      }
    }

    m.mean_extrinsic_return = tracker.mean_return();
    m.success_rate = tracker.success_rate();
    if (!batch.w_icm.empty()) {
      double sum = 0.0;
      for (double w : batch.w_icm) sum += w;
      m.w_icm = sum / batch.w_icm.size();
    }
    auto mean_of = [](const std::vector<double>& v) {
      if (v.empty()) return 0.0;
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    m.mean_norm_icm = mean_of(batch.norm_icm);
    m.mean_norm_emp = mean_of(batch.norm_other);
    m.policy_loss = diag.policy_loss;
    m.value_loss = diag.value_loss;
    m.wall_seconds =
        cfg.emit_timing
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count()
            : 0.0;
    result.metrics.push_back(m);
    result.w_icm_trace.push_back(m.w_icm);

    const bool want_ckpt =
        !cfg.out_dir.empty() &&
        ((cfg.ckpt_every > 0 && iter % cfg.ckpt_every == 0) ||
         iter == iterations || diag.aborted);
    if (want_ckpt) {
      const auto dir =
          cfg.out_dir + "/ckpt/iter_" + std::to_string(iter);
      std::filesystem::create_directories(dir);
      save_policy_checkpoint(nets, cfg.env.distractor_dim, dir);
    }
    if (diag.aborted) {
      result.aborted = true;
      break;
    }
  }

  result.episode_returns = tracker.completed_returns;
  result.episode_success = tracker.completed_success;
  return result;
}

void write_metrics_csv(const std::vector<IterationMetrics>& metrics,
                       bool /*emit_timing*/, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "iteration,env_steps,mean_extrinsic_return,success_rate,w_icm,"
        "mean_norm_icm,mean_norm_emp,policy_loss,value_loss,wall_seconds\n";
  char buf[320];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f\n",
                  m.iteration, m.env_steps, m.mean_extrinsic_return,
                  m.success_rate, m.w_icm, m.mean_norm_icm, m.mean_norm_emp,
                  m.policy_loss, m.value_loss, m.wall_seconds);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

void save_policy_checkpoint(const PolicyValueNets& nets, int distractor_dim,
                            const std::string& dir) {
  save_network(nets.policy, dir + "/policy.net");
  save_network(nets.value, dir + "/value.net");
  nlohmann::json meta = {{"log_std", nets.log_std},
                         {"obs_dim", nets.obs_dim()},
                         {"action_dim", nets.action_dim()},
                         {"distractor_dim", distractor_dim}};
  std::ofstream os(dir + "/meta.json");
  os << meta.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + dir + "/meta.json");
}

PolicyCheckpoint load_policy_checkpoint(const std::string& dir) {
  PolicyCheckpoint c{load_network(dir + "/policy.net"),
                     load_network(dir + "/value.net"),
                     {},
                     0};
  std::ifstream is(dir + "/meta.json");
  if (!is) throw std::runtime_error("cannot open " + dir + "/meta.json");
  nlohmann::json meta;
  is >> meta;
  c.log_std = meta.at("log_std").get<std::vector<double>>();
  c.distractor_dim = meta.at("distractor_dim").get<int>();
  return c;
}

EvalReport evaluate_policy(const Network& policy, const EnvConfig& env_config,
                           int episodes, std::uint64_t seed,
                           std::vector<TrajectoryRecord>* trajectory) {
  EvalReport report;
  report.episodes = episodes;
  if (episodes <= 0) return report;
  double total_return = 0.0;
  int successes = 0;
  std::vector<double> mean;
  for (int ep = 0; ep < episodes; ++ep) {
    PlanarLift env(env_config, Rng::mix(seed, static_cast<std::uint64_t>(ep)));
    double ep_return = 0.0;
    bool success = false;
    for (int t = 0; t < env_config.episode_len; ++t) {
      const auto obs = observation(env.state());
      policy.forward(obs, 1, mean);
      const EnvAction a = scale_action(mean.data());
      const auto split = split_state(env.state());
      const auto r = env.step(a);
      if (trajectory != nullptr) {
        TrajectoryRecord rec;
        rec.step = t;
        rec.s_in = split.intrinsic;
        rec.s_ex = split.extrinsic;
        rec.action = {a.d_ee_x, a.d_ee_h, a.d_grip};
        rec.r_e = r.reward;
        rec.done = r.done;
        trajectory->push_back(rec);
      }
      ep_return += r.reward;
      if (r.reward > 0.5) success = true;
      if (r.done) break;
    }
    total_return += ep_return;
    if (success) ++successes;
  }
  report.mean_return = total_return / episodes;
  report.success_rate = static_cast<double>(successes) / episodes;
  return report;
}

}  // namespace empowerkit
