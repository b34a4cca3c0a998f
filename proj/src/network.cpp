#include "empowerkit/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace empowerkit {

namespace {

double activate(Activation act, double u) {
  switch (act) {
    case Activation::linear:
      return u;
    case Activation::tanh:
      return std::tanh(u);
    case Activation::relu:
      return u > 0.0 ? u : 0.0;
    case Activation::softplus:
      return softplus(u);
  }
  return u;
}

// derivative from the pre-activation value
double activate_grad(Activation act, double u) {
  switch (act) {
    case Activation::linear:
      return 1.0;
    case Activation::tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Activation::relu:
      return u > 0.0 ? 1.0 : 0.0;
    case Activation::softplus:
      return sigmoid(u);
  }
  return 1.0;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// y[n x out] = x[n x in] * W^T + b, W row-major out x in
void affine(const double* w, const double* b, const double* x, int n, int in,
            int out, double* y) {
  for (int i = 0; i < n; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * in;
    double* yi = y + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int k = 0; k < in; ++k) acc += wrow[k] * xi[k];
      yi[o] = acc;
    }
  }
}

// dW += dPre^T x ; db += sum dPre ; dX += dPre W
void affine_backward(const double* w, const double* x, const double* dpre,
                     int n, int in, int out, double* dw, double* db,
                     double* dx) {
  for (int i = 0; i < n; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * in;
    const double* di = dpre + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      const double g = di[o];
      if (g == 0.0) continue;
      double* dwrow = dw + static_cast<std::size_t>(o) * in;
      for (int k = 0; k < in; ++k) dwrow[k] += g * xi[k];
      db[o] += g;
    }
    if (dx != nullptr) {
      double* dxi = dx + static_cast<std::size_t>(i) * in;
      for (int o = 0; o < out; ++o) {
        const double g = di[o];
        if (g == 0.0) continue;
        const double* wrow = w + static_cast<std::size_t>(o) * in;
        for (int k = 0; k < in; ++k) dxi[k] += g * wrow[k];
      }
    }
  }
}

}  // namespace

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network needs >= 1 layer");
  input_dim_ = layers_.front().in;
  output_dim_ = layers_.back().out;
  int offset = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in <= 0 || l.out <= 0)
      throw std::invalid_argument("layer dims must be positive");
    if (i > 0 && l.in != layers_[i - 1].out)
      throw std::invalid_argument("layer dims do not chain");
    param_offsets_.push_back(offset);
    offset += layer_param_count(l);
  }
  params_.assign(offset, 0.0);
}

Network Network::mlp(int input_dim, const std::vector<int>& hidden,
                     int output_dim, Activation hidden_act,
                     Activation output_act) {
  std::vector<LayerSpec> specs;
  int in = input_dim;
  for (int h : hidden) {
    specs.push_back(LayerSpec::dense(in, h, hidden_act));
    in = h;
  }
  specs.push_back(LayerSpec::dense(in, output_dim, output_act));
  return Network(std::move(specs));
}

void Network::init_params(Rng& rng, double last_layer_scale) {
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const double gain = l.act == Activation::relu ? std::sqrt(2.0) : 1.0;
    const double bound = gain * std::sqrt(3.0 / l.in);
    const double scale = li + 1 == layers_.size() ? last_layer_scale : 1.0;
    double* p = params_.data() + param_offsets_[li];
    const int blocks = l.kind == LayerSpec::Kind::dense ? 1 : 2;
    for (int b = 0; b < blocks; ++b) {
      for (int i = 0; i < l.in * l.out; ++i)
        *p++ = scale * rng.uniform(-bound, bound);
      for (int i = 0; i < l.out; ++i) *p++ = 0.0;  // biases
    }
  }
}

void Network::forward(std::span<const double> x, int n,
                      std::vector<double>& y) const {
  Tape tape;
  forward(x, n, y, tape);
}

void Network::forward(std::span<const double> x, int n, std::vector<double>& y,
                      Tape& tape) const {
  if (static_cast<int>(x.size()) != n * input_dim_)
    throw std::invalid_argument("forward: input size mismatch");
  tape.n = n;
  tape.input.assign(x.begin(), x.end());
  tape.pre.assign(layers_.size(), {});
  tape.gate_pre.assign(layers_.size(), {});
  tape.post.assign(layers_.size(), {});

  const double* cur = tape.input.data();
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const double* p = params_.data() + param_offsets_[li];
    auto& pre = tape.pre[li];
    auto& post = tape.post[li];
    pre.assign(static_cast<std::size_t>(n) * l.out, 0.0);
    post.assign(static_cast<std::size_t>(n) * l.out, 0.0);
    if (l.kind == LayerSpec::Kind::dense) {
      const double* w = p;
      const double* b = p + l.in * l.out;
      affine(w, b, cur, n, l.in, l.out, pre.data());
      for (std::size_t i = 0; i < pre.size(); ++i)
        post[i] = activate(l.act, pre[i]);
    } else {
      auto& gate = tape.gate_pre[li];
      gate.assign(static_cast<std::size_t>(n) * l.out, 0.0);
      const int block = l.in * l.out + l.out;
      const double* w1 = p;
      const double* b1 = p + l.in * l.out;
      const double* w2 = p + block;
      const double* b2 = p + block + l.in * l.out;
      affine(w1, b1, cur, n, l.in, l.out, pre.data());
      affine(w2, b2, cur, n, l.in, l.out, gate.data());
      for (std::size_t i = 0; i < pre.size(); ++i)
        post[i] = pre[i] * sigmoid(gate[i]);
    }
    if (!all_finite(post)) throw NonFiniteError(static_cast<int>(li));
    cur = post.data();
  }
  y = tape.post.back();
}

void Network::backward(const Tape& tape, std::span<const double> upstream,
                       std::vector<double>& param_grads,
                       std::vector<double>* input_grads) const {
  const int n = tape.n;
  if (static_cast<int>(upstream.size()) != n * output_dim_)
    throw std::invalid_argument("backward: upstream size mismatch");
  if (param_grads.size() != params_.size())
    param_grads.assign(params_.size(), 0.0);

  std::vector<double> dout(upstream.begin(), upstream.end());
  std::vector<double> din;
  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    const auto& l = layers_[li];
    const double* p = params_.data() + param_offsets_[li];
    double* gp = param_grads.data() + param_offsets_[li];
    const double* layer_in =
        li == 0 ? tape.input.data() : tape.post[li - 1].data();
    const bool need_din = li > 0 || input_grads != nullptr;
    din.assign(need_din ? static_cast<std::size_t>(n) * l.in : 0, 0.0);

    if (l.kind == LayerSpec::Kind::dense) {
      const auto& pre = tape.pre[li];
      std::vector<double> dpre(static_cast<std::size_t>(n) * l.out);
      for (std::size_t i = 0; i < dpre.size(); ++i)
        dpre[i] = dout[i] * activate_grad(l.act, pre[i]);
      affine_backward(p, layer_in, dpre.data(), n, l.in, l.out, gp,
                      gp + l.in * l.out, need_din ? din.data() : nullptr);
    } else {
      const auto& content = tape.pre[li];
      const auto& gate = tape.gate_pre[li];
      const int block = l.in * l.out + l.out;
      std::vector<double> dcontent(static_cast<std::size_t>(n) * l.out);
      std::vector<double> dgate(static_cast<std::size_t>(n) * l.out);
      for (std::size_t i = 0; i < dcontent.size(); ++i) {
        const double s = sigmoid(gate[i]);
        dcontent[i] = dout[i] * s;
        dgate[i] = dout[i] * content[i] * s * (1.0 - s);
      }
      affine_backward(p, layer_in, dcontent.data(), n, l.in, l.out, gp,
                      gp + l.in * l.out, need_din ? din.data() : nullptr);
      affine_backward(p + block, layer_in, dgate.data(), n, l.in, l.out,
                      gp + block, gp + block + l.in * l.out,
                      need_din ? din.data() : nullptr);
    }
    dout.swap(din);
  }
  if (input_grads != nullptr) *input_grads = std::move(dout);
}

Network::ForwardBackwardResult Network::forward_backward(
    std::span<const double> x, int n, std::span<const double> upstream) const {
  ForwardBackwardResult r;
  Tape tape;
  forward(x, n, r.outputs, tape);
  r.param_grads.assign(params_.size(), 0.0);
  backward(tape, upstream, r.param_grads, &r.input_grads);
  return r;
}

std::vector<double> glu_forward(std::span<const double> w1,
                                std::span<const double> b1,
                                std::span<const double> w2,
                                std::span<const double> b2,
                                std::span<const double> x) {
  const int in = static_cast<int>(x.size());
  const int out = static_cast<int>(b1.size());
  if (b2.size() != b1.size() ||
      w1.size() != static_cast<std::size_t>(in) * out || w2.size() != w1.size())
    throw std::invalid_argument("glu_forward: dimension mismatch");
  std::vector<double> y(out);
  for (int o = 0; o < out; ++o) {
    double content = b1[o];
    double gate = b2[o];
    for (int k = 0; k < in; ++k) {
      content += w1[static_cast<std::size_t>(o) * in + k] * x[k];
      gate += w2[static_cast<std::size_t>(o) * in + k] * x[k];
    }
    y[o] = content * sigmoid(gate);
  }
  return y;
}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m.size() || grads.size() != m.size())
    throw std::invalid_argument("adam: size mismatch");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {

constexpr char kMagic[8] = {'E', 'K', 'N', 'E', 'T', 'B', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put_u32(os, l.kind == LayerSpec::Kind::dense ? 0 : 1);
    put_u32(os, static_cast<std::uint32_t>(l.in));
    put_u32(os, static_cast<std::uint32_t>(l.out));
    put_u32(os, static_cast<std::uint32_t>(l.act));
  }
  put_u64(os, static_cast<std::uint64_t>(net.param_count()));
  for (double p : net.params()) put_f64(os, p);
  if (!os) throw std::runtime_error("write failed: " + path);
}

Network load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  if (get_u32(is) != kVersion)
    throw std::runtime_error("unsupported checkpoint version: " + path);
  const std::uint32_t n_layers = get_u32(is);
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.kind = get_u32(is) == 0 ? LayerSpec::Kind::dense
                              : LayerSpec::Kind::gated_linear;
    l.in = static_cast<int>(get_u32(is));
    l.out = static_cast<int>(get_u32(is));
    l.act = static_cast<Activation>(get_u32(is));
    specs.push_back(l);
  }
  Network net(std::move(specs));
  const std::uint64_t count = get_u64(is);
  if (count != static_cast<std::uint64_t>(net.param_count()))
    throw std::runtime_error("checkpoint param count mismatch: " + path);
  for (auto& p : net.params()) p = get_f64(is);
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return net;
}

}  // namespace empowerkit
