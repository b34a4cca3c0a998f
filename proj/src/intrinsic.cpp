#include "empowerkit/intrinsic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace empowerkit {

namespace {

std::vector<double> concat_sa(std::span<const double> obs,
                              std::span<const double> actions, int n,
                              int obs_dim, int action_dim) {
  std::vector<double> in(static_cast<std::size_t>(n) * (obs_dim + action_dim));
  for (int i = 0; i < n; ++i) {
    double* row = in.data() + static_cast<std::size_t>(i) * (obs_dim + action_dim);
    std::copy(obs.begin() + static_cast<std::size_t>(i) * obs_dim,
              obs.begin() + static_cast<std::size_t>(i + 1) * obs_dim, row);
    std::copy(actions.begin() + static_cast<std::size_t>(i) * action_dim,
              actions.begin() + static_cast<std::size_t>(i + 1) * action_dim,
              row + obs_dim);
  }
  return in;
}

}  // namespace

ForwardModel::ForwardModel(int obs_dim, int action_dim, int ex_dim, int hidden,
                           double lr, Rng& rng, std::vector<double> scale)
    : net(Network::mlp(obs_dim + action_dim, {hidden}, ex_dim,
                       Activation::relu)),
      feature_scale(std::move(scale)),
      action_dim_(action_dim) {
  if (feature_scale.empty()) feature_scale.assign(ex_dim, 1.0);
  if (static_cast<int>(feature_scale.size()) != ex_dim)
    throw std::invalid_argument("feature_scale size mismatch");
  net.init_params(rng, /*last_layer_scale=*/0.01);
  opt = AdamState(net.params().size(), lr);
}

void ForwardModel::predict(std::span<const double> obs,
                           std::span<const double> actions, int n,
                           std::vector<double>& out) const {
  const auto in = concat_sa(obs, actions, n, obs_dim(), action_dim_);
  net.forward(in, n, out);
}

double forward_loss_batch(const ForwardModel& model,
                          std::span<const double> obs,
                          std::span<const double> actions,
                          std::span<const double> s_ex_next, int n,
                          std::vector<double>* grads) {
  const int ed = model.ex_dim();
  const auto in = concat_sa(obs, actions, n, model.obs_dim(), model.action_dim());
  Network::Tape tape;
  std::vector<double> pred;
  model.net.forward(in, n, pred, tape);
  std::vector<double> upstream(pred.size(), 0.0);
  double loss = 0.0;
  const double inv = 1.0 / n;
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < ed; ++d) {
      const std::size_t k = static_cast<std::size_t>(i) * ed + d;
      const double err =
          pred[k] - model.feature_scale[d] * s_ex_next[k];
      loss += 0.5 * err * err * inv;
      upstream[k] = err * inv;
    }
  if (grads != nullptr) {
    grads->assign(model.net.params().size(), 0.0);
    model.net.backward(tape, upstream, *grads);
  }
  return loss;
}

double ForwardModel::train_epoch(std::span<const double> obs,
                                 std::span<const double> actions,
                                 std::span<const double> s_ex_next, int n,
                                 int minibatch, Rng& rng) {
  const int ed = ex_dim();
  const int od = obs_dim();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());

  const int bs = std::max(1, minibatch);
  double loss_sum = 0.0;
  int batches = 0;
  std::vector<double> mb_obs, mb_act, mb_next, grads;
  for (int start = 0; start < n; start += bs) {
    const int count = std::min(bs, n - start);
    mb_obs.assign(static_cast<std::size_t>(count) * od, 0.0);
    mb_act.assign(static_cast<std::size_t>(count) * action_dim_, 0.0);
    mb_next.assign(static_cast<std::size_t>(count) * ed, 0.0);
    for (int j = 0; j < count; ++j) {
      const int i = order[start + j];
      std::copy(obs.begin() + static_cast<std::size_t>(i) * od,
                obs.begin() + static_cast<std::size_t>(i + 1) * od,
                mb_obs.begin() + static_cast<std::size_t>(j) * od);
      std::copy(actions.begin() + static_cast<std::size_t>(i) * action_dim_,
                actions.begin() + static_cast<std::size_t>(i + 1) * action_dim_,
                mb_act.begin() + static_cast<std::size_t>(j) * action_dim_);
      std::copy(s_ex_next.begin() + static_cast<std::size_t>(i) * ed,
                s_ex_next.begin() + static_cast<std::size_t>(i + 1) * ed,
                mb_next.begin() + static_cast<std::size_t>(j) * ed);
    }
    loss_sum += forward_loss_batch(*this, mb_obs, mb_act, mb_next, count, &grads);
    ++batches;
    opt.step(net.params(), grads);
  }
  return loss_sum / std::max(1, batches);
}

double icm_forward_loss(const ForwardModel& model, std::span<const double> s,
                        std::span<const double> a,
                        std::span<const double> s_ex_next) {
  std::vector<double> pred;
  model.predict(s, a, 1, pred);
  double loss = 0.0;
  for (int d = 0; d < model.ex_dim(); ++d) {
    const double err = pred[d] - model.feature_scale[d] * s_ex_next[d];
    loss += 0.5 * err * err;
  }
  return loss;
}

std::vector<double> icm_rewards(const ForwardModel& model,
                                std::span<const double> obs,
                                std::span<const double> actions,
                                std::span<const double> s_ex_next, int n) {
  std::vector<double> pred;
  model.predict(obs, actions, n, pred);
  const int ed = model.ex_dim();
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double loss = 0.0;
    for (int d = 0; d < ed; ++d) {
      const double err = pred[static_cast<std::size_t>(i) * ed + d] -
                         model.feature_scale[d] *
                             s_ex_next[static_cast<std::size_t>(i) * ed + d];
      loss += 0.5 * err * err;
    }
    out[i] = loss;
  }
  return out;
}

Ensemble::Ensemble(int size, int obs_dim, int action_dim, int ex_dim,
                   int hidden, double lr, Rng& rng,
                   std::vector<double> scale) {
  members.reserve(size);
  for (int i = 0; i < size; ++i)
    members.emplace_back(obs_dim, action_dim, ex_dim, hidden, lr, rng, scale);
}

double disagreement_reward(const Ensemble& ensemble, std::span<const double> s,
                           std::span<const double> a) {
  const int ed = ensemble.members.front().ex_dim();
  const int m = static_cast<int>(ensemble.members.size());
  std::vector<double> preds(static_cast<std::size_t>(m) * ed);
  std::vector<double> p;
  for (int k = 0; k < m; ++k) {
    ensemble.members[k].predict(s, a, 1, p);
    std::copy(p.begin(), p.end(), preds.begin() + static_cast<std::size_t>(k) * ed);
  }
  double total = 0.0;
  for (int d = 0; d < ed; ++d) {
    double mean = 0.0;
    for (int k = 0; k < m; ++k) mean += preds[static_cast<std::size_t>(k) * ed + d];
    mean /= m;
    double var = 0.0;
    for (int k = 0; k < m; ++k) {
      const double dev = preds[static_cast<std::size_t>(k) * ed + d] - mean;
      var += dev * dev;
    }
    total += var / m;  // population variance
  }
  return total / ed;
}

std::vector<double> disagreement_rewards(const Ensemble& ensemble,
                                         std::span<const double> obs,
                                         std::span<const double> actions,
                                         int n) {
  const int ed = ensemble.members.front().ex_dim();
  const int m = static_cast<int>(ensemble.members.size());
  std::vector<std::vector<double>> preds(m);
  for (int k = 0; k < m; ++k)
    ensemble.members[k].predict(obs, actions, n, preds[k]);
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int d = 0; d < ed; ++d) {
      double mean = 0.0;
      for (int k = 0; k < m; ++k) mean += preds[k][static_cast<std::size_t>(i) * ed + d];
      mean /= m;
      double var = 0.0;
      for (int k = 0; k < m; ++k) {
        const double dev = preds[k][static_cast<std::size_t>(i) * ed + d] - mean;
        var += dev * dev;
      }
      total += var / m;
    }
    out[i] = total / ed;
  }
  return out;
}

std::pair<double, double> blend_weights(double mean_icm,
                                        const BlendConfig& config) {
  const double w_icm =
      0.5 * (1.0 - std::tanh(config.slope * (mean_icm - config.threshold)));
  return {w_icm, 1.0 - w_icm};
}

double combined_reward(double w_icm, double w_emp, double r_icm_norm,
                       double r_emp_norm, double r_extrinsic,
                       double intrinsic_coef) {
  return intrinsic_coef * (w_icm * r_icm_norm + w_emp * r_emp_norm) +
         r_extrinsic;
}

double pure_intrinsic_reward(double r_norm, double r_extrinsic,
                             double intrinsic_coef) {
  return intrinsic_coef * r_norm + r_extrinsic;
}

EmpowermentModel::EmpowermentModel(const EmpowermentConfig& config,
                                   int action_dim, int ex_dim, int obs_dim,
                                   Rng& rng) {
  if (config.bound == EstimatorKind::kld)
    throw std::invalid_argument("kld is excluded from empowerment reward use");
  estimator.kind = config.bound;
  estimator.xdim = action_dim;
  estimator.ydim = ex_dim;
  estimator.zdim = obs_dim;
  estimator.config.lr = config.lr;
  estimator.config.batch_size = config.batch_size;

  if (config.bound == EstimatorKind::jsd) {
    estimator.critic = Network::mlp(action_dim + ex_dim + obs_dim,
                                    config.jsd_widths, 1, Activation::relu);
    estimator.critic.init_params(rng, config.last_layer_scale);
  } else {
    // GLU stack followed by dense layers, for both the conditional and the
    // prior density heads
    auto build = [&](int in_dim) {
      std::vector<LayerSpec> specs;
      int in = in_dim;
      for (int i = 0; i < config.vlb_glu_layers; ++i) {
        specs.push_back(LayerSpec::gated_linear(in, config.vlb_glu_width));
        in = config.vlb_glu_width;
      }
      for (int h : config.vlb_dense) {
        specs.push_back(LayerSpec::dense(in, h, Activation::relu));
        in = h;
      }
      specs.push_back(LayerSpec::dense(in, 2 * action_dim, Activation::linear));
      return Network(std::move(specs));
    };
    estimator.critic = build(ex_dim + obs_dim);
    estimator.critic.init_params(rng, config.last_layer_scale);
    estimator.prior_head = build(obs_dim);
    estimator.prior_head->init_params(rng, config.last_layer_scale);
  }
}

double EmpowermentModel::reward(const double* a, const double* s_ex_next,
                                const double* s) const {
  return estimator.pointwise(a, s_ex_next, s);
}

double EmpowermentModel::train_epoch(const CmiBatch& batch,
                                     std::span<const double> a_neg, Rng& rng) {
  return empowerkit::train_epoch(estimator, batch, a_neg, rng);
}

std::string to_string(IntrinsicMode mode) {
  switch (mode) {
    case IntrinsicMode::none:
      return "none";
    case IntrinsicMode::icm:
      return "icm";
    case IntrinsicMode::disagreement:
      return "disagreement";
    case IntrinsicMode::empowerment_with_icm:
      return "empowerment_with_icm";
  }
  return "none";
}

IntrinsicMode intrinsic_mode_from_string(const std::string& s) {
  if (s == "none") return IntrinsicMode::none;
  if (s == "icm") return IntrinsicMode::icm;
  if (s == "disagreement") return IntrinsicMode::disagreement;
  if (s == "empowerment_with_icm") return IntrinsicMode::empowerment_with_icm;
  throw std::invalid_argument("unknown intrinsic mode: " + s);
}

IntrinsicStack::IntrinsicStack(const IntrinsicConfig& config, int obs_dim,
                               int action_dim, int ex_dim, Rng& rng)
    : config_(config), obs_dim_(obs_dim), action_dim_(action_dim),
      ex_dim_(ex_dim) {
  if (config_.feature_scale.empty())
    config_.feature_scale.assign(ex_dim, 1.0);
  if (static_cast<int>(config_.feature_scale.size()) != ex_dim)
    throw std::invalid_argument("feature_scale size mismatch");
  switch (config_.mode) {
    case IntrinsicMode::none:
      break;
    case IntrinsicMode::icm:
      fm_.emplace(obs_dim, action_dim, ex_dim, config_.fm_hidden, config_.fm_lr,
                  rng, config_.feature_scale);
      break;
    case IntrinsicMode::disagreement:
      ensemble_.emplace(config_.ensemble_size, obs_dim, action_dim, ex_dim,
                        config_.fm_hidden, config_.fm_lr, rng,
                        config_.feature_scale);
      break;
    case IntrinsicMode::empowerment_with_icm:
      fm_.emplace(obs_dim, action_dim, ex_dim, config_.fm_hidden, config_.fm_lr,
                  rng, config_.feature_scale);
      emp_.emplace(config_.emp, action_dim, ex_dim, obs_dim, rng);
      break;
  }
}

void IntrinsicStack::train(std::span<const double> obs,
                           std::span<const double> actions,
                           std::span<const double> s_ex_next, int n,
                           const PolicySampler& policy, Rng& rng) {
  if (fm_)
    fm_->train_epoch(obs, actions, s_ex_next, n, config_.fm_minibatch, rng);
  if (ensemble_) {
    for (auto& member : ensemble_->members)
      member.train_epoch(obs, actions, s_ex_next, n, config_.fm_minibatch, rng);
  }
  if (emp_) {
    CmiBatch batch;
    batch.xdim = action_dim_;
    batch.ydim = ex_dim_;
    batch.zdim = obs_dim_;
    batch.n = n;
    batch.x.assign(actions.begin(), actions.begin() + static_cast<std::size_t>(n) * action_dim_);
    batch.y.assign(s_ex_next.begin(), s_ex_next.begin() + static_cast<std::size_t>(n) * ex_dim_);
    batch.z.assign(obs.begin(), obs.begin() + static_cast<std::size_t>(n) * obs_dim_);
    std::vector<double> a_neg;
    policy(obs, n, rng, a_neg);
    emp_->train_epoch(batch, a_neg, rng);
  }
}

IntrinsicRewards IntrinsicStack::rollout_rewards(
    std::span<const double> obs, std::span<const double> actions,
    std::span<const double> s_ex_next, int steps, int n_envs,
    const PolicySampler& /*policy*/, Rng& /*rng*/) {
  const int n = steps * n_envs;
  IntrinsicRewards r;
  r.intrinsic.assign(n, 0.0);
  r.w_icm.assign(steps, 1.0);
  r.w_emp.assign(steps, 0.0);
  if (config_.mode == IntrinsicMode::none) return r;

  if (fm_) r.raw_icm = icm_rewards(*fm_, obs, actions, s_ex_next, n);
  if (ensemble_)
    r.raw_other = disagreement_rewards(*ensemble_, obs, actions, n);
  if (emp_) {
    r.raw_other.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      r.raw_other[i] = emp_->reward(
          actions.data() + static_cast<std::size_t>(i) * action_dim_,
          s_ex_next.data() + static_cast<std::size_t>(i) * ex_dim_,
          obs.data() + static_cast<std::size_t>(i) * obs_dim_);
  }

  // update-then-normalize in step-major order across parallel envs
  if (!r.raw_icm.empty()) {
    r.norm_icm.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      r.norm_icm[i] = icm_norm_.update_and_normalize(r.raw_icm[i]);
  }
  if (!r.raw_other.empty()) {
    r.norm_other.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      r.norm_other[i] = other_norm_.update_and_normalize(r.raw_other[i]);
  }

  for (int t = 0; t < steps; ++t) {
    double w_icm = 1.0, w_emp = 0.0;
    if (config_.mode == IntrinsicMode::empowerment_with_icm) {
      double mean_icm = 0.0;
      const auto& blend_src =
          config_.blend.use_normalized ? r.norm_icm : r.raw_icm;
      for (int e = 0; e < n_envs; ++e)
        mean_icm += blend_src[static_cast<std::size_t>(t) * n_envs + e];
      mean_icm /= n_envs;
      std::tie(w_icm, w_emp) = blend_weights(mean_icm, config_.blend);
    }
    r.w_icm[t] = w_icm;
    r.w_emp[t] = w_emp;
    for (int e = 0; e < n_envs; ++e) {
      const int i = t * n_envs + e;
      switch (config_.mode) {
        case IntrinsicMode::none:
          break;
        case IntrinsicMode::icm:
          r.intrinsic[i] = config_.intrinsic_coef * r.norm_icm[i];
          break;
        case IntrinsicMode::disagreement:
          r.intrinsic[i] = config_.intrinsic_coef * r.norm_other[i];
          break;
        case IntrinsicMode::empowerment_with_icm:
          r.intrinsic[i] = config_.intrinsic_coef *
                           (w_icm * r.norm_icm[i] + w_emp * r.norm_other[i]);
          break;
      }
    }
  }
  return r;
}

IntrinsicRewards IntrinsicStack::recompute(std::span<const double> obs,
                                           std::span<const double> actions,
                                           std::span<const double> s_ex_next,
                                           int n) const {
  IntrinsicRewards r;
  r.intrinsic.assign(n, 0.0);
  r.w_icm.assign(1, 1.0);
  r.w_emp.assign(1, 0.0);
  if (config_.mode == IntrinsicMode::none) return r;

  if (fm_) {
    r.raw_icm = icm_rewards(*fm_, obs, actions, s_ex_next, n);
    r.norm_icm.assign(n, 0.0);
    for (int i = 0; i < n; ++i) r.norm_icm[i] = icm_norm_.normalize(r.raw_icm[i]);
  }
  if (ensemble_) {
    r.raw_other = disagreement_rewards(*ensemble_, obs, actions, n);
  } else if (emp_) {
    r.raw_other.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      r.raw_other[i] = emp_->reward(
          actions.data() + static_cast<std::size_t>(i) * action_dim_,
          s_ex_next.data() + static_cast<std::size_t>(i) * ex_dim_,
          obs.data() + static_cast<std::size_t>(i) * obs_dim_);
  }
  if (!r.raw_other.empty()) {
    r.norm_other.assign(n, 0.0);
    for (int i = 0; i < n; ++i)
      r.norm_other[i] = other_norm_.normalize(r.raw_other[i]);
  }

  double w_icm = 1.0, w_emp = 0.0;
  if (config_.mode == IntrinsicMode::empowerment_with_icm) {
    // blend from the mean raw forward loss over the sampled batch
    double mean_icm = 0.0;
    const auto& blend_src =
        config_.blend.use_normalized ? r.norm_icm : r.raw_icm;
    for (int i = 0; i < n; ++i) mean_icm += blend_src[i];
    mean_icm /= std::max(1, n);
    std::tie(w_icm, w_emp) = blend_weights(mean_icm, config_.blend);
  }
  r.w_icm[0] = w_icm;
  r.w_emp[0] = w_emp;
  for (int i = 0; i < n; ++i) {
    switch (config_.mode) {
      case IntrinsicMode::none:
        break;
      case IntrinsicMode::icm:
        r.intrinsic[i] = config_.intrinsic_coef * r.norm_icm[i];
        break;
      case IntrinsicMode::disagreement:
        r.intrinsic[i] = config_.intrinsic_coef * r.norm_other[i];
        break;
      case IntrinsicMode::empowerment_with_icm:
        r.intrinsic[i] = config_.intrinsic_coef *
                         (w_icm * r.norm_icm[i] + w_emp * r.norm_other[i]);
        break;
    }
  }
  return r;
}

}  // namespace empowerkit
