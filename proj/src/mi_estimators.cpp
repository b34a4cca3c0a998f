#include "empowerkit/mi_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace empowerkit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835607;
constexpr double kLog4 = 1.3862943611198906188345;

std::vector<int> iota_indices(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// concat columns [a | b | c] row-wise; b and c may be empty
std::vector<double> concat_rows(int n, const double* a, int da,
                                const double* b, int db, const double* c,
                                int dc) {
  std::vector<double> out(static_cast<std::size_t>(n) * (da + db + dc));
  for (int i = 0; i < n; ++i) {
    double* row = out.data() + static_cast<std::size_t>(i) * (da + db + dc);
    const double* ai = a + static_cast<std::size_t>(i) * da;
    std::copy(ai, ai + da, row);
    if (db > 0) {
      const double* bi = b + static_cast<std::size_t>(i) * db;
      std::copy(bi, bi + db, row + da);
    }
    if (dc > 0) {
      const double* ci = c + static_cast<std::size_t>(i) * dc;
      std::copy(ci, ci + dc, row + da + db);
    }
  }
  return out;
}

struct GaussianEval {
  std::vector<double> logq;      // per sample
  std::vector<double> upstream;  // d(-mean logq)/d outputs, n x 2*xdim
  int clamp_events = 0;
};

// Diagonal-Gaussian log-density of x under head outputs (mean, raw log-std),
// with log-std clamped to [logstd_min, logstd_max] and a final std floor.
// upstream, when requested, is the gradient of -mean(logq) w.r.t. outputs.
GaussianEval gaussian_logq(const std::vector<double>& outputs, const double* x,
                           int n, int xdim, const EstimatorConfig& cfg,
                           bool want_upstream) {
  GaussianEval ev;
  ev.logq.assign(n, 0.0);
  if (want_upstream) ev.upstream.assign(static_cast<std::size_t>(n) * 2 * xdim, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    const double* out = outputs.data() + static_cast<std::size_t>(i) * 2 * xdim;
    const double* xi = x + static_cast<std::size_t>(i) * xdim;
    double acc = -0.5 * xdim * kLog2Pi;
    for (int d = 0; d < xdim; ++d) {
      const double mu = out[d];
      const double raw = out[xdim + d];
      const bool clamped = raw < cfg.logstd_min || raw > cfg.logstd_max;
      if (clamped) ++ev.clamp_events;
      const double ls = std::clamp(raw, cfg.logstd_min, cfg.logstd_max);
      double sigma = std::exp(ls);
      bool floored = false;
      if (sigma < cfg.std_floor) {
        sigma = cfg.std_floor;
        floored = true;
        ++ev.clamp_events;
      }
      const double zscore = (xi[d] - mu) / sigma;
      acc += -std::log(sigma) - 0.5 * zscore * zscore;
      if (want_upstream) {
        double* up = ev.upstream.data() + static_cast<std::size_t>(i) * 2 * xdim;
        up[d] = -inv_n * (zscore / sigma);
        up[xdim + d] =
            (clamped || floored) ? 0.0 : -inv_n * (-1.0 + zscore * zscore);
      }
    }
    ev.logq[i] = acc;
  }
  return ev;
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::vlb:
      return "vlb";
    case EstimatorKind::kld:
      return "kld";
    case EstimatorKind::jsd:
      return "jsd";
  }
  return "vlb";
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "vlb") return EstimatorKind::vlb;
  if (s == "kld") return EstimatorKind::kld;
  if (s == "jsd") return EstimatorKind::jsd;
  throw std::invalid_argument("unknown estimator kind: " + s);
}

CmiBatch CmiBatch::select(std::span<const int> indices) const {
  CmiBatch out;
  out.xdim = xdim;
  out.ydim = ydim;
  out.zdim = zdim;
  out.resize(static_cast<int>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    std::copy(xi(i), xi(i) + xdim, out.x.data() + j * xdim);
    std::copy(yi(i), yi(i) + ydim, out.y.data() + j * ydim);
    std::copy(zi(i), zi(i) + zdim, out.z.data() + j * zdim);
  }
  return out;
}

EstimatorHandle EstimatorHandle::make(EstimatorKind kind, int xdim, int ydim,
                                      int zdim, const EstimatorConfig& config,
                                      Rng& rng) {
  EstimatorHandle h;
  h.kind = kind;
  h.config = config;
  h.xdim = xdim;
  h.ydim = ydim;
  h.zdim = zdim;
  if (kind == EstimatorKind::vlb) {
    h.critic = Network::mlp(ydim + zdim, config.hidden, 2 * xdim,
                            Activation::relu);
    h.prior_head =
        Network::mlp(zdim, config.hidden, 2 * xdim, Activation::relu);
    h.critic.init_params(rng);
    h.prior_head->init_params(rng);
  } else {
    h.critic = Network::mlp(xdim + ydim + zdim, config.hidden, 1,
                            Activation::relu);
    h.critic.init_params(rng);
  }
  return h;
}

double EstimatorHandle::pointwise(const double* x, const double* y,
                                  const double* z) const {
  if (kind == EstimatorKind::vlb) {
    const auto yz = concat_rows(1, y, ydim, z, zdim, nullptr, 0);
    std::vector<double> cond_out, prior_out;
    critic.forward(yz, 1, cond_out);
    prior_head->forward(std::span<const double>(z, zdim), 1, prior_out);
    const auto cond = gaussian_logq(cond_out, x, 1, xdim, config, false);
    const auto prior = gaussian_logq(prior_out, x, 1, xdim, config, false);
    return cond.logq[0] - prior.logq[0];
  }
  const auto xyz = concat_rows(1, x, xdim, y, ydim, z, zdim);
  std::vector<double> t;
  critic.forward(xyz, 1, t);
  return t[0];
}

std::vector<double> EstimatorHandle::pointwise_batch(const CmiBatch& b) const {
  std::vector<double> out(b.n);
  if (kind == EstimatorKind::vlb) {
    const auto yz = concat_rows(b.n, b.y.data(), ydim, b.z.data(), zdim, nullptr, 0);
    std::vector<double> cond_out, prior_out;
    critic.forward(yz, b.n, cond_out);
    prior_head->forward(b.z, b.n, prior_out);
    const auto cond = gaussian_logq(cond_out, b.x.data(), b.n, xdim, config, false);
    const auto prior = gaussian_logq(prior_out, b.x.data(), b.n, xdim, config, false);
    for (int i = 0; i < b.n; ++i) out[i] = cond.logq[i] - prior.logq[i];
  } else {
    const auto xyz = concat_rows(b.n, b.x.data(), xdim, b.y.data(), ydim,
                                 b.z.data(), zdim);
    critic.forward(xyz, b.n, out);
  }
  return out;
}

LossResult vlb_loss(EstimatorHandle& h, const CmiBatch& batch,
                    std::vector<double>* critic_grads,
                    std::vector<double>* prior_grads) {
  const int n = batch.n;
  const auto yz = concat_rows(n, batch.y.data(), h.ydim, batch.z.data(),
                              h.zdim, nullptr, 0);
  const bool want_grads = critic_grads != nullptr;

  Network::Tape cond_tape, prior_tape;
  std::vector<double> cond_out, prior_out;
  h.critic.forward(yz, n, cond_out, cond_tape);
  h.prior_head->forward(batch.z, n, prior_out, prior_tape);

  const auto cond =
      gaussian_logq(cond_out, batch.x.data(), n, h.xdim, h.config, want_grads);
  const auto prior =
      gaussian_logq(prior_out, batch.x.data(), n, h.xdim, h.config, want_grads);

  LossResult r;
  r.clamp_events = cond.clamp_events + prior.clamp_events;
  r.per_sample.assign(n, 0.0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    r.per_sample[i] = cond.logq[i] - prior.logq[i];
    sum += r.per_sample[i];
  }
  r.loss = -sum / n;

  if (want_grads) {
    // both heads are fit by maximum likelihood
    if (critic_grads->size() != h.critic.params().size())
      critic_grads->assign(h.critic.params().size(), 0.0);
    if (prior_grads->size() != h.prior_head->params().size())
      prior_grads->assign(h.prior_head->params().size(), 0.0);
    h.critic.backward(cond_tape, cond.upstream, *critic_grads);
    h.prior_head->backward(prior_tape, prior.upstream, *prior_grads);
  }
  return r;
}

namespace {

// shared machinery for the two critic-based losses
LossResult critic_loss(EstimatorHandle& h, const CmiBatch& batch,
                       std::span<const double> x_neg,
                       std::vector<double>* critic_grads, bool jsd) {
  const int n = batch.n;
  if (static_cast<int>(x_neg.size()) != n * h.xdim)
    throw std::invalid_argument("negative batch size mismatch");
  const auto joint_in = concat_rows(n, batch.x.data(), h.xdim, batch.y.data(),
                                    h.ydim, batch.z.data(), h.zdim);
  const auto neg_in = concat_rows(n, x_neg.data(), h.xdim, batch.y.data(),
                                  h.ydim, batch.z.data(), h.zdim);
  const bool want_grads = critic_grads != nullptr;

  Network::Tape joint_tape, neg_tape;
  std::vector<double> t_joint, t_neg;
  h.critic.forward(joint_in, n, t_joint, joint_tape);
  h.critic.forward(neg_in, n, t_neg, neg_tape);

  LossResult r;
  r.per_sample = t_joint;
  const double inv_n = 1.0 / n;
  std::vector<double> up_joint(n), up_neg(n);
  double joint_term = 0.0, neg_term = 0.0;
  if (jsd) {
    for (int i = 0; i < n; ++i) {
      joint_term += softplus(-t_joint[i]);
      neg_term += softplus(t_neg[i]);
      up_joint[i] = -sigmoid(-t_joint[i]) * inv_n;
      up_neg[i] = sigmoid(t_neg[i]) * inv_n;
    }
    r.loss = joint_term * inv_n + neg_term * inv_n - kLog4;
  } else {
    for (int i = 0; i < n; ++i) {
      joint_term += t_joint[i];
      up_joint[i] = -inv_n;
      const bool clamped = t_neg[i] > h.config.kld_t_clamp;
      if (clamped) ++r.clamp_events;
      const double e =
          std::exp(std::min(t_neg[i], h.config.kld_t_clamp) - 1.0);
      neg_term += e;
      up_neg[i] = clamped ? 0.0 : e * inv_n;
    }
    r.loss = -(joint_term * inv_n - neg_term * inv_n);
  }

  if (want_grads) {
    if (critic_grads->size() != h.critic.params().size())
      critic_grads->assign(h.critic.params().size(), 0.0);
    h.critic.backward(joint_tape, up_joint, *critic_grads);
    h.critic.backward(neg_tape, up_neg, *critic_grads);
  }
  return r;
}

}  // namespace

LossResult kld_loss(EstimatorHandle& h, const CmiBatch& batch,
                    std::span<const double> x_neg,
                    std::vector<double>* critic_grads) {
  return critic_loss(h, batch, x_neg, critic_grads, /*jsd=*/false);
}

LossResult jsd_loss(EstimatorHandle& h, const CmiBatch& batch,
                    std::span<const double> x_neg,
                    std::vector<double>* critic_grads) {
  return critic_loss(h, batch, x_neg, critic_grads, /*jsd=*/true);
}

double bound_value(const EstimatorHandle& h, const CmiBatch& batch,
                   std::span<const double> x_neg) {
  if (h.kind == EstimatorKind::vlb) {
    const auto terms = h.pointwise_batch(batch);
    double sum = 0.0;
    for (double t : terms) sum += t;
    return sum / batch.n;
  }
  auto& mutable_h = const_cast<EstimatorHandle&>(h);  // no grads requested
  const auto r = h.kind == EstimatorKind::kld
                     ? kld_loss(mutable_h, batch, x_neg, nullptr)
                     : jsd_loss(mutable_h, batch, x_neg, nullptr);
  return -r.loss;
}

namespace {

void adam_update(EstimatorHandle& h, const std::vector<double>& critic_grads,
                 const std::vector<double>* prior_grads) {
  if (!h.critic_opt())
    h.critic_opt().emplace(h.critic.params().size(), h.config.lr);
  h.critic_opt()->step(h.critic.params(), critic_grads);
  if (prior_grads != nullptr) {
    if (!h.prior_opt())
      h.prior_opt().emplace(h.prior_head->params().size(), h.config.lr);
    h.prior_opt()->step(h.prior_head->params(), *prior_grads);
  }
}

double minibatch_pass(EstimatorHandle& h, const CmiBatch& data,
                      std::span<const int> order,
                      const std::vector<double>* x_neg_full, Rng& rng,
                      const NegativeSampler* sampler, int* clamp_events) {
  const int n = static_cast<int>(order.size());
  const int bs = std::max(1, h.config.batch_size);
  double loss_sum = 0.0;
  int batches = 0;
  std::vector<double> critic_grads, prior_grads, x_neg;
  for (int start = 0; start < n; start += bs) {
    const int count = std::min(bs, n - start);
    const auto mb = data.select(order.subspan(start, count));
    critic_grads.assign(h.critic.params().size(), 0.0);
    LossResult r;
    if (h.kind == EstimatorKind::vlb) {
      prior_grads.assign(h.prior_head->params().size(), 0.0);
      r = vlb_loss(h, mb, &critic_grads, &prior_grads);
      adam_update(h, critic_grads, &prior_grads);
    } else {
      if (x_neg_full != nullptr) {
        x_neg.assign(static_cast<std::size_t>(count) * h.xdim, 0.0);
        for (int j = 0; j < count; ++j) {
          const double* src =
              x_neg_full->data() +
              static_cast<std::size_t>(order[start + j]) * h.xdim;
          std::copy(src, src + h.xdim, x_neg.data() + static_cast<std::size_t>(j) * h.xdim);
        }
      } else {
        (*sampler)(mb, rng, x_neg);
      }
      r = h.kind == EstimatorKind::kld
              ? kld_loss(h, mb, x_neg, &critic_grads)
              : jsd_loss(h, mb, x_neg, &critic_grads);
      adam_update(h, critic_grads, nullptr);
    }
    if (clamp_events != nullptr) *clamp_events += r.clamp_events;
    loss_sum += r.loss;
    ++batches;
  }
  return loss_sum / std::max(1, batches);
}

}  // namespace

TrainReport train_estimator(EstimatorHandle& h, const CmiBatch& data,
                            const NegativeSampler& negatives, int epochs,
                            Rng& rng) {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (data.n < 2) throw std::invalid_argument("need at least 2 samples");

  auto indices = iota_indices(data.n);
  rng.shuffle(indices.begin(), indices.end());
  const int holdout_n =
      std::clamp(static_cast<int>(std::lround(h.config.holdout_frac * data.n)),
                 1, data.n - 1);
  const std::span<const int> hold_idx(indices.data(), holdout_n);
  std::vector<int> train_idx(indices.begin() + holdout_n, indices.end());

  const auto holdout = data.select(hold_idx);
  const int insample_n = std::min<int>(4096, static_cast<int>(train_idx.size()));
  const auto insample =
      data.select(std::span<const int>(train_idx.data(), insample_n));

  TrainReport report;
  const bool need_negs = h.kind != EstimatorKind::vlb;
  std::vector<double> hold_neg, insample_neg;

  auto eval_bound = [&](const CmiBatch& b, std::vector<double>& neg) {
    if (need_negs) negatives(b, rng, neg);
    return bound_value(h, b, neg);
  };

  std::vector<double> best_critic, best_prior;
  double best_bound = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(train_idx.begin(), train_idx.end());
    minibatch_pass(h, data, train_idx, nullptr, rng,
                   need_negs ? &negatives : nullptr, &report.clamp_events);
    const double hb = eval_bound(holdout, hold_neg);
    report.heldout_bound.push_back(hb);
    report.insample_bound.push_back(eval_bound(insample, insample_neg));
    if (!std::isfinite(hb)) {
      throw EstimatorDivergence(
          "estimator diverged: kind=" + to_string(h.kind) + " epoch=" +
          std::to_string(e) + " heldout_bound=" + std::to_string(hb));
    }
    if (h.config.keep_best && hb > best_bound) {
      best_bound = hb;
      best_critic = h.critic.params();
      if (h.prior_head) best_prior = h.prior_head->params();
    }
  }
  if (h.config.keep_best && !best_critic.empty()) {
    h.critic.params() = best_critic;
    if (h.prior_head) h.prior_head->params() = best_prior;
  }
  report.final_heldout_bound =
      report.heldout_bound.empty() ? eval_bound(holdout, hold_neg)
                                   : (h.config.keep_best && !best_critic.empty()
                                          ? best_bound
                                          : report.heldout_bound.back());
  // the conditional JSD objective's supremum is capped at log 4; a held-out
  // estimate past the cap means the critic is overfitting
  report.jsd_overfit_flag =
      h.kind == EstimatorKind::jsd &&
      report.final_heldout_bound > std::log(4.0) + 0.05;
  return report;
}

double train_epoch(EstimatorHandle& h, const CmiBatch& batch,
                   std::span<const double> x_neg, Rng& rng) {
  auto order = iota_indices(batch.n);
  rng.shuffle(order.begin(), order.end());
  const std::vector<double> neg_copy(x_neg.begin(), x_neg.end());
  return minibatch_pass(h, batch, order,
                        h.kind == EstimatorKind::vlb ? nullptr : &neg_copy, rng,
                        nullptr, nullptr);
}

}  // namespace empowerkit
