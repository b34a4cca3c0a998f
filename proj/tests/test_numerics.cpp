#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "empowerkit/network.hpp"
#include "empowerkit/normalizer.hpp"
#include "empowerkit/rng.hpp"
#include "gradcheck.hpp"

using namespace empowerkit;

TEST_CASE("softplus values and asymptotes") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(softplus(50.0) - 50.0) < 1e-9);
  CHECK(softplus(-50.0) > 0.0);
  CHECK(softplus(-50.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-6));
}

TEST_CASE("softplus stays within [max(u,0), max(u,0)+log2]") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform(-700.0, 700.0);
    const double sp = softplus(u);
    const double gap = sp - std::max(u, 0.0);
    CHECK(sp > 0.0);
    CHECK(gap >= 0.0);
    CHECK(gap <= std::log(2.0) + 1e-12);
  }
}

TEST_CASE("glu_forward hand examples") {
  // identity content, zero gate -> sigmoid(0) = 0.5
  const std::vector<double> w1 = {1, 0, 0, 1};
  const std::vector<double> b1 = {0, 0};
  const std::vector<double> w2 = {0, 0, 0, 0};
  const std::vector<double> b2 = {0, 0};
  const std::vector<double> x = {2, -4};
  auto y = glu_forward(w1, b1, w2, b2, x);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(-2.0));

  // zero content path
  auto zero = glu_forward(w2, b1, w1, b2, x);
  CHECK(zero[0] == doctest::Approx(0.0));
  CHECK(zero[1] == doctest::Approx(0.0));

  // saturated gate approximates identity
  const std::vector<double> w2_big = {1e3, 1e3, 1e3, 1e3};
  const std::vector<double> ones = {1, 1};
  auto sat = glu_forward(w1, b1, w2_big, b2, ones);
  CHECK(sat[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sat[1] == doctest::Approx(1.0).epsilon(1e-9));

  const std::vector<double> short_b = {0.0};
  CHECK_THROWS_AS(glu_forward(w1, b1, w2, short_b, x), std::invalid_argument);
}

TEST_CASE("param count formulas") {
  CHECK(layer_param_count(LayerSpec::dense(5, 7, Activation::tanh)) ==
        5 * 7 + 7);
  CHECK(layer_param_count(LayerSpec::gated_linear(5, 7)) == 2 * (5 * 7 + 7));
  Network net({LayerSpec::dense(3, 4, Activation::relu),
               LayerSpec::gated_linear(4, 2)});
  CHECK(net.param_count() == (3 * 4 + 4) + 2 * (4 * 2 + 2));
}

TEST_CASE("forward is pure and deterministic") {
  Rng rng(3);
  Network net = Network::mlp(4, {8}, 2, Activation::tanh);
  net.init_params(rng);
  std::vector<double> x = {0.1, -0.2, 0.3, 0.4};
  std::vector<double> y1, y2;
  net.forward(x, 1, y1);
  net.forward(x, 1, y2);
  CHECK(y1 == y2);
}

TEST_CASE("linear layer gradient equals outer product") {
  Network net({LayerSpec::dense(3, 2, Activation::linear)});
  Rng rng(11);
  net.init_params(rng);
  const std::vector<double> x = {0.5, -1.0, 2.0};
  const std::vector<double> upstream = {1.0, 1.0};
  auto r = net.forward_backward(x, 1, upstream);
  // dW[o][k] = upstream[o] * x[k], db[o] = upstream[o]
  for (int o = 0; o < 2; ++o) {
    for (int k = 0; k < 3; ++k)
      CHECK(r.param_grads[o * 3 + k] == doctest::Approx(x[k]));
    CHECK(r.param_grads[6 + o] == doctest::Approx(1.0));
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  Rng rng(13);
  Network net = Network::mlp(3, {5, 4}, 2, Activation::tanh);
  net.init_params(rng);
  std::vector<double> x(6), upstream(4, 0.0);
  for (auto& v : x) v = rng.normal();
  auto r = net.forward_backward(x, 2, upstream);
  for (double g : r.param_grads) CHECK(g == 0.0);
  for (double g : r.input_grads) CHECK(g == 0.0);
}

TEST_CASE("gradcheck: every layer type against central differences") {
  struct Case {
    const char* name;
    Network net;
  };
  Rng rng(17);
  std::vector<Case> cases;
  cases.push_back({"linear", Network({LayerSpec::dense(3, 2, Activation::linear)})});
  cases.push_back({"tanh", Network({LayerSpec::dense(3, 4, Activation::tanh)})});
  cases.push_back({"relu", Network({LayerSpec::dense(3, 4, Activation::relu)})});
  cases.push_back(
      {"softplus", Network({LayerSpec::dense(3, 4, Activation::softplus)})});
  cases.push_back({"glu", Network({LayerSpec::gated_linear(3, 4)})});
  cases.push_back({"two-layer tanh",
                   Network::mlp(4, {6}, 3, Activation::tanh)});
  cases.push_back({"glu stack", Network({LayerSpec::gated_linear(3, 5),
                                         LayerSpec::dense(5, 2, Activation::tanh)})});

  for (auto& c : cases) {
    CAPTURE(c.name);
    c.net.init_params(rng);
    const int n = 3;
    std::vector<double> x(static_cast<std::size_t>(n) * c.net.input_dim());
    std::vector<double> upstream(static_cast<std::size_t>(n) * c.net.output_dim());
    for (auto& v : x) v = rng.normal();
    for (auto& v : upstream) v = rng.normal();

    auto r = c.net.forward_backward(x, n, upstream);
    auto eval = [&]() {
      std::vector<double> y;
      c.net.forward(x, n, y);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
      return s;
    };
    CHECK(max_relative_error(c.net.params(), r.param_grads, eval) < 1e-4);

    // input gradients through the same oracle
    auto eval_x = [&]() {
      std::vector<double> y;
      c.net.forward(x, n, y);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
      return s;
    };
    CHECK(max_relative_error(x, r.input_grads, eval_x) < 1e-4);
  }
}

TEST_CASE("non-finite activations raise with layer index") {
  Network net = Network::mlp(2, {3}, 1, Activation::relu);
  for (auto& p : net.params()) p = 1e308;
  std::vector<double> y;
  try {
    net.forward(std::vector<double>{1e8, 1e8}, 1, y);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.layer_index >= 0);
  }
}

TEST_CASE("adam first step magnitude is lr for constant gradient") {
  AdamState adam(1, 0.1);
  std::vector<double> params = {0.0};
  adam.step(params, std::vector<double>{1.0});
  CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
  AdamState adam(3, 0.1);
  std::vector<double> params = {1.0, -2.0, 0.5};
  const auto before = params;
  for (int i = 0; i < 10; ++i) adam.step(params, std::vector<double>{0, 0, 0});
  CHECK(params == before);
}

TEST_CASE("adam updates are bit-deterministic") {
  auto run = []() {
    Rng rng(5);
    Network net = Network::mlp(3, {4}, 2, Activation::tanh);
    net.init_params(rng);
    AdamState adam(net.params().size(), 1e-3);
    std::vector<double> x(3), upstream(2);
    for (int step = 0; step < 25; ++step) {
      for (auto& v : x) v = rng.normal();
      for (auto& v : upstream) v = rng.normal();
      auto r = net.forward_backward(x, 1, upstream);
      adam.step(net.params(), r.param_grads);
    }
    return net.params();
  };
  CHECK(run() == run());
}

TEST_CASE("normalizer on constant stream returns 0") {
  NormalizerState norm;
  for (int i = 0; i < 3; ++i) CHECK(norm.update_and_normalize(7.0) == 0.0);
}

TEST_CASE("normalizer two-point stream") {
  NormalizerState norm;
  norm.update_and_normalize(0.0);
  // after (0, 2): mean 1, population std 1 -> (2 - 1) / 1 = 1
  CHECK(norm.update_and_normalize(2.0) == doctest::Approx(1.0));
}

TEST_CASE("normalizer degenerate guard and clamp") {
  NormalizerState norm;
  CHECK(norm.update_and_normalize(3.0) == 0.0);  // single sample, std floor
  NormalizerState wide;
  wide.update(0.0);
  wide.update(1.0);
  CHECK(wide.normalize(1000.0) == 5.0);
  CHECK(wide.normalize(-1000.0) == -5.0);
}

TEST_CASE("normalizer matches two-pass variance") {
  Rng rng(23);
  NormalizerState norm;
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) {
    xs.push_back(rng.uniform(-3.0, 9.0));
    norm.update(xs.back());
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();
  CHECK(std::abs(norm.variance() - var) < 1e-10);
}

TEST_CASE("rng: identical seeds give identical streams") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c = Rng::derive(1, 2), d = Rng::derive(1, 2), e = Rng::derive(1, 3);
  CHECK(c.next_u64() == d.next_u64());
  CHECK(c.next_u64() != e.next_u64());
}

TEST_CASE("checkpoint round trip preserves spec and params") {
  Rng rng(31);
  Network net({LayerSpec::dense(4, 6, Activation::relu),
               LayerSpec::gated_linear(6, 3),
               LayerSpec::dense(3, 2, Activation::linear)});
  net.init_params(rng);
  const auto path = std::filesystem::temp_directory_path() / "ek_ckpt_test.net";
  save_network(net, path.string());
  const Network loaded = load_network(path.string());
  CHECK(loaded.params() == net.params());
  REQUIRE(loaded.layers().size() == net.layers().size());
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    CHECK(loaded.layers()[i].kind == net.layers()[i].kind);
    CHECK(loaded.layers()[i].in == net.layers()[i].in);
    CHECK(loaded.layers()[i].out == net.layers()[i].out);
    CHECK(loaded.layers()[i].act == net.layers()[i].act);
  }
  std::vector<double> x = {0.1, 0.2, -0.3, 0.4}, y1, y2;
  net.forward(x, 1, y1);
  loaded.forward(x, 1, y2);
  CHECK(y1 == y2);
  std::filesystem::remove(path);
}
