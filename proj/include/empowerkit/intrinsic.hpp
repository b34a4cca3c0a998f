#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empowerkit/mi_estimators.hpp"
#include "empowerkit/network.hpp"
#include "empowerkit/normalizer.hpp"

namespace empowerkit {

// Forward dynamics model: (full state, action) -> next extrinsic state.
// Targets are expressed in scaled feature units (feature_scale per extrinsic
// dim); with the default scale of 1 the loss is the plain squared error of
// the spec'd operation.
struct ForwardModel {
  Network net;
  AdamState opt;
  std::vector<double> feature_scale;

  ForwardModel(int obs_dim, int action_dim, int ex_dim, int hidden, double lr,
               Rng& rng, std::vector<double> scale = {});

  int obs_dim() const { return net.input_dim() - action_dim_; }
  int action_dim() const { return action_dim_; }
  int ex_dim() const { return net.output_dim(); }

  // batched prediction in scaled units; out is n x ex_dim
  void predict(std::span<const double> obs, std::span<const double> actions,
               int n, std::vector<double>& out) const;

  // one pass of shuffled minibatch Adam on 1/2 the squared error
  double train_epoch(std::span<const double> obs,
                     std::span<const double> actions,
                     std::span<const double> s_ex_next, int n, int minibatch,
                     Rng& rng);

 private:
  int action_dim_ = 0;
};

// 1/2 || f(s, a) - s_ex_next ||^2 in the model's feature units;
// also the ICM intrinsic reward
double icm_forward_loss(const ForwardModel& model, std::span<const double> s,
                        std::span<const double> a,
                        std::span<const double> s_ex_next);

// batch-mean forward loss; grads (when non-null) receives d loss / d params
double forward_loss_batch(const ForwardModel& model,
                          std::span<const double> obs,
                          std::span<const double> actions,
                          std::span<const double> s_ex_next, int n,
                          std::vector<double>* grads);

// batched raw ICM rewards for n transitions
std::vector<double> icm_rewards(const ForwardModel& model,
                                std::span<const double> obs,
                                std::span<const double> actions,
                                std::span<const double> s_ex_next, int n);

// ensemble of forward models differing only by init seed / minibatch order
struct Ensemble {
  std::vector<ForwardModel> members;

  Ensemble(int size, int obs_dim, int action_dim, int ex_dim, int hidden,
           double lr, Rng& rng, std::vector<double> scale = {});
};

// population variance of the member predictions, averaged over dims
double disagreement_reward(const Ensemble& ensemble, std::span<const double> s,
                           std::span<const double> a);

std::vector<double> disagreement_rewards(const Ensemble& ensemble,
                                         std::span<const double> obs,
                                         std::span<const double> actions,
                                         int n);

struct BlendConfig {
  double threshold = 0.12;
  double slope = 200.0;
  bool use_normalized = false;  // threshold applies to the raw loss by default
};

// w_icm = 0.5 * (1 - tanh(slope * (mean_icm - threshold))), w_emp = 1 - w_icm
std::pair<double, double> blend_weights(double mean_icm,
                                        const BlendConfig& config = {});

// coef * (w_icm * r_icm_norm + w_emp * r_emp_norm) + r_extrinsic
double combined_reward(double w_icm, double w_emp, double r_icm_norm,
                       double r_emp_norm, double r_extrinsic,
                       double intrinsic_coef = 0.01);

// coef * r_norm + r_extrinsic (pure ICM / pure disagreement baselines)
double pure_intrinsic_reward(double r_norm, double r_extrinsic,
                             double intrinsic_coef = 0.01);

// one-step empowerment over (x = a_t, y = s^ex_{t+1}, z = s_t)
struct EmpowermentConfig {
  EstimatorKind bound = EstimatorKind::jsd;  // vlb or jsd; kld excluded
  std::vector<int> jsd_widths = {512, 512, 216, 128, 64, 32};
  int vlb_glu_layers = 4;
  int vlb_glu_width = 256;
  std::vector<int> vlb_dense = {128, 64};
  double lr = 2e-4;
  int batch_size = 256;
  double last_layer_scale = 0.01;
};

struct EmpowermentModel {
  EstimatorHandle estimator;

  EmpowermentModel(const EmpowermentConfig& config, int action_dim, int ex_dim,
                   int obs_dim, Rng& rng);

  // pointwise estimate; pure function of (params, transition)
  double reward(const double* a, const double* s_ex_next,
                const double* s) const;

  // minibatch pass on the selected bound; negatives are fresh policy actions
  double train_epoch(const CmiBatch& batch, std::span<const double> a_neg,
                     Rng& rng);
};

enum class IntrinsicMode { none, icm, disagreement, empowerment_with_icm };

std::string to_string(IntrinsicMode mode);
IntrinsicMode intrinsic_mode_from_string(const std::string& s);

struct IntrinsicConfig {
  IntrinsicMode mode = IntrinsicMode::none;
  int fm_hidden = 256;
  double fm_lr = 2e-4;
  int fm_minibatch = 256;
  int ensemble_size = 5;
  int intrinsic_epochs = 1;
  bool train_before_reward = true;
  BlendConfig blend;
  EmpowermentConfig emp;
  double intrinsic_coef = 0.01;
  // per extrinsic dim; object position dims default to 1/max_step so one
  // action step is O(1) in model units, distractor dims to 1
  std::vector<double> feature_scale;
};

// draws fresh normalized actions from the behavior policy at the given states
using PolicySampler = std::function<void(
    std::span<const double> obs, int n, Rng& rng, std::vector<double>& actions)>;

struct IntrinsicRewards {
  std::vector<double> raw_icm, norm_icm;      // per transition
  std::vector<double> raw_other, norm_other;  // empowerment or disagreement
  std::vector<double> w_icm, w_emp;           // per step
  std::vector<double> intrinsic;              // coef-scaled blended term
};

// The per-mode bundle of intrinsic models the training loop drives.
class IntrinsicStack {
 public:
  IntrinsicStack(const IntrinsicConfig& config, int obs_dim, int action_dim,
                 int ex_dim, Rng& rng);

  const IntrinsicConfig& config() const { return config_; }
  IntrinsicMode mode() const { return config_.mode; }

  // one training pass over a rollout's transitions
  void train(std::span<const double> obs, std::span<const double> actions,
             std::span<const double> s_ex_next, int n,
             const PolicySampler& policy, Rng& rng);

  // Rollout reward computation: updates the running normalizers
  // (update-then-normalize, step-major order) and derives per-step blend
  // weights from the env-mean raw forward loss.
  IntrinsicRewards rollout_rewards(std::span<const double> obs,
                                   std::span<const double> actions,
                                   std::span<const double> s_ex_next,
                                   int steps, int n_envs,
                                   const PolicySampler& policy, Rng& rng);

  // Pure recomputation path for replayed transitions: normalizer stats are
  // read but never updated, so identical params give identical outputs.
  IntrinsicRewards recompute(std::span<const double> obs,
                             std::span<const double> actions,
                             std::span<const double> s_ex_next, int n) const;

  ForwardModel* forward_model() { return fm_ ? &*fm_ : nullptr; }
  Ensemble* ensemble() { return ensemble_ ? &*ensemble_ : nullptr; }
  EmpowermentModel* empowerment() { return emp_ ? &*emp_ : nullptr; }
  const NormalizerState& icm_normalizer() const { return icm_norm_; }
  const NormalizerState& other_normalizer() const { return other_norm_; }

 private:
  IntrinsicConfig config_;
  int obs_dim_ = 0, action_dim_ = 0, ex_dim_ = 0;
  std::optional<ForwardModel> fm_;
  std::optional<Ensemble> ensemble_;
  std::optional<EmpowermentModel> emp_;
  NormalizerState icm_norm_, other_norm_;
};

}  // namespace empowerkit
