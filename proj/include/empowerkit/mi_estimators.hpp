#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "empowerkit/network.hpp"
#include "empowerkit/normalizer.hpp"
#include "empowerkit/rng.hpp"

namespace empowerkit {

// the three conditional-MI lower bounds
enum class EstimatorKind { vlb, kld, jsd };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& s);

// batch of (x, y, z) triples, row-major; e.g. x = a_t, y = s^ex_{t+1}, z = s_t
struct CmiBatch {
  int n = 0;
  int xdim = 0, ydim = 0, zdim = 0;
  std::vector<double> x, y, z;

  void resize(int count) {
    n = count;
    x.assign(static_cast<std::size_t>(n) * xdim, 0.0);
    y.assign(static_cast<std::size_t>(n) * ydim, 0.0);
    z.assign(static_cast<std::size_t>(n) * zdim, 0.0);
  }
  const double* xi(int i) const { return x.data() + static_cast<std::size_t>(i) * xdim; }
  const double* yi(int i) const { return y.data() + static_cast<std::size_t>(i) * ydim; }
  const double* zi(int i) const { return z.data() + static_cast<std::size_t>(i) * zdim; }
  CmiBatch select(std::span<const int> indices) const;
};

// Fills x_neg (n x xdim) with samples from p(x|z), independent of y. In RL
// use this draws fresh actions from the behavior policy at z = s_t.
using NegativeSampler =
    std::function<void(const CmiBatch& batch, Rng& rng, std::vector<double>& x_neg)>;

struct EstimatorConfig {
  std::vector<int> hidden = {256};  // critic / head widths
  int epochs = 20;
  int batch_size = 128;
  double lr = 1e-3;
  double holdout_frac = 0.10;
  double logstd_min = -5.0;  // vlb heads
  double logstd_max = 2.0;
  double std_floor = 1e-3;
  double kld_t_clamp = 30.0;  // clamp T before exp(T-1)
  // restore the epoch with the best held-out bound; density heads overfit
  // quickly and the held-out bound is an honest selection criterion
  bool keep_best = true;
};

struct EstimatorDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A trained conditional-MI estimator. For KLD/JSD the critic is the
// T-function over (x, y, z); for VLB the critic models q(x|y,z) and the
// prior head models q(x|z), both as diagonal Gaussians (mean, log-std).
class EstimatorHandle {
 public:
  EstimatorKind kind = EstimatorKind::vlb;
  Network critic;
  std::optional<Network> prior_head;
  EstimatorConfig config;
  NormalizerState normalizer;
  int xdim = 0, ydim = 0, zdim = 0;

  static EstimatorHandle make(EstimatorKind kind, int xdim, int ydim, int zdim,
                              const EstimatorConfig& config, Rng& rng);

  // VLB: log q(x|y,z) - log q(x|z); KLD/JSD: T(x,y,z)
  double pointwise(const double* x, const double* y, const double* z) const;
  std::vector<double> pointwise_batch(const CmiBatch& batch) const;

  // lazily created Adam states so repeated training calls keep momentum
  std::optional<AdamState>& critic_opt() { return critic_opt_; }
  std::optional<AdamState>& prior_opt() { return prior_opt_; }

 private:
  std::optional<AdamState> critic_opt_;
  std::optional<AdamState> prior_opt_;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_sample;  // vlb: pointwise terms; kld/jsd: T on joint
  int clamp_events = 0;
};

// Conditional VLB. Returned loss is -mean[log q(x|y,z) - log q(x|z)]; the
// gradients fit both heads by maximum likelihood of their conditionals (the
// bound's variational freedom is in q(x|y,z) only; the prior head is a
// density estimate of p(x|z), see README).
LossResult vlb_loss(EstimatorHandle& handle, const CmiBatch& batch,
                    std::vector<double>* critic_grads,
                    std::vector<double>* prior_grads);

// Donsker-Varadhan style bound: loss = -(mean_joint[T] - mean_neg[exp(T-1)])
LossResult kld_loss(EstimatorHandle& handle, const CmiBatch& batch,
                    std::span<const double> x_neg,
                    std::vector<double>* critic_grads);

// f-divergence JS bound: loss = mean_joint[sp(-T)] + mean_neg[sp(T)] - log 4
LossResult jsd_loss(EstimatorHandle& handle, const CmiBatch& batch,
                    std::span<const double> x_neg,
                    std::vector<double>* critic_grads);

// Plug-in bound value for a batch (negatives ignored for VLB, where the
// estimate is the mean pointwise term).
double bound_value(const EstimatorHandle& handle, const CmiBatch& batch,
                   std::span<const double> x_neg);

struct TrainReport {
  std::vector<double> heldout_bound;   // per epoch
  std::vector<double> insample_bound;  // per epoch, on the training split
  double final_heldout_bound = 0.0;
  int clamp_events = 0;
  // true JS-MI is capped at log 2; a held-out estimate past the cap means
  // the critic is overfitting
  bool jsd_overfit_flag = false;
};

// Minibatch Adam ascent on the selected bound with a held-out split.
// Divergence (non-finite held-out bound) throws EstimatorDivergence.
TrainReport train_estimator(EstimatorHandle& handle, const CmiBatch& data,
                            const NegativeSampler& negatives, int epochs,
                            Rng& rng);

// One pass of minibatch updates over the given batch without any split;
// used by the RL loop where fresh rollout data arrives each iteration.
double train_epoch(EstimatorHandle& handle, const CmiBatch& batch,
                   std::span<const double> x_neg, Rng& rng);

}  // namespace empowerkit
