#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "empowerkit/rng.hpp"

namespace empowerkit {

// overflow-safe log(1 + exp(u))
inline double softplus(double u) {
  return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

inline double sigmoid(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u))
                  : std::exp(u) / (1.0 + std::exp(u));
}

enum class Activation { linear, tanh, relu, softplus };

struct LayerSpec {
  enum class Kind { dense, gated_linear };
  Kind kind = Kind::dense;
  int in = 0;
  int out = 0;
  Activation act = Activation::linear;  // dense layers only

  static LayerSpec dense(int in, int out, Activation act) {
    return {Kind::dense, in, out, act};
  }
  static LayerSpec gated_linear(int in, int out) {
    return {Kind::gated_linear, in, out, Activation::linear};
  }
};

// dense: in*out weights + out biases; gated-linear: two of those
inline int layer_param_count(const LayerSpec& spec) {
  const int dense = spec.in * spec.out + spec.out;
  return spec.kind == LayerSpec::Kind::dense ? dense : 2 * dense;
}

// thrown when a forward pass produces a non-finite activation
struct NonFiniteError : std::runtime_error {
  int layer_index;
  explicit NonFiniteError(int layer)
      : std::runtime_error("non-finite activation in layer " +
                           std::to_string(layer)),
        layer_index(layer) {}
};

// Feed-forward parameter container over a fixed layer vocabulary with manual
// backpropagation. Parameters live in one flat vector; forward(x) is a pure
// function of (params, x).
class Network {
 public:
  Network() = default;  // empty shell, filled by assignment or loading
  explicit Network(std::vector<LayerSpec> layers);

  // dense stack: in -> hidden... -> out, hidden activation + output activation
  static Network mlp(int input_dim, const std::vector<int>& hidden,
                     int output_dim, Activation hidden_act,
                     Activation output_act = Activation::linear);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // scaled uniform fan-in init, biases zero; last_layer_scale shrinks the
  // output layer (used for heads that should start near zero)
  void init_params(Rng& rng, double last_layer_scale = 1.0);

  // batched forward; x is n rows of input_dim, y is resized to n x output_dim
  void forward(std::span<const double> x, int n, std::vector<double>& y) const;

  // per-layer buffers captured during a forward pass, consumed by backward
  struct Tape {
    int n = 0;
    std::vector<double> input;                  // copy of x
    std::vector<std::vector<double>> pre;       // dense pre-activation / glu content
    std::vector<std::vector<double>> gate_pre;  // glu gate pre-activation
    std::vector<std::vector<double>> post;      // layer outputs
  };

  void forward(std::span<const double> x, int n, std::vector<double>& y,
               Tape& tape) const;

  // Backpropagates upstream (n x output_dim) through the tape. param_grads
  // (size param_count) is accumulated into; input_grads, when given, is
  // resized to n x input_dim and overwritten.
  void backward(const Tape& tape, std::span<const double> upstream,
                std::vector<double>& param_grads,
                std::vector<double>* input_grads = nullptr) const;

  // convenience wrapper: outputs plus exact gradients of
  // sum(upstream ⊙ output) w.r.t. params and inputs
  struct ForwardBackwardResult {
    std::vector<double> outputs;
    std::vector<double> param_grads;
    std::vector<double> input_grads;
  };
  ForwardBackwardResult forward_backward(std::span<const double> x, int n,
                                         std::span<const double> upstream) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<int> param_offsets_;  // offset of each layer's block
  std::vector<double> params_;
  int input_dim_ = 0;
  int output_dim_ = 0;
};

// single gated-linear unit: (W1 x + b1) ⊙ sigmoid(W2 x + b2)
// W row-major out x in; dims are validated against x
std::vector<double> glu_forward(std::span<const double> w1,
                                std::span<const double> b1,
                                std::span<const double> w2,
                                std::span<const double> b2,
                                std::span<const double> x);

// standard Adam with bias correction
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<double> m, v;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate)
      : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads);
};

// Flat binary checkpoint: magic, version, layer specs, then the parameter
// vector as little-endian float64. Layout documented in the README.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace empowerkit
