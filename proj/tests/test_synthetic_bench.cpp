#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "empowerkit/synthetic_bench.hpp"

using namespace empowerkit;

TEST_CASE("theoretical_cmi values") {
  CHECK(theoretical_cmi(0.5, 0.5) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(theoretical_cmi(-1.0, 0.5) == 0.0);
  CHECK(theoretical_cmi(-1.0, 2.0) == 0.0);
  CHECK_THROWS_AS(theoretical_cmi(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("theoretical_cmi monotonicity") {
  double prev = 0.0;
  for (double z = 0.1; z < 4.0; z += 0.1) {
    const double v = theoretical_cmi(z, 0.5);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(theoretical_cmi(1.0, 0.25) > theoretical_cmi(1.0, 0.5));
  CHECK(theoretical_cmi(1.0, 0.5) > theoretical_cmi(1.0, 1.0));
}

TEST_CASE("average theoretical MI matches the closed-form average") {
  SynthConfig cfg;
  // exact value of E[0.5 ln(1 + 4 z^2) 1{z>0}] under z ~ N(0,1)
  const double exact = 0.2906779;
  CHECK(std::abs(average_theoretical_mi(cfg, 2000000) - exact) < 0.002);
  // the tabulated average is 0.2911; dim-4 scales linearly
  SynthConfig cfg4 = cfg;
  cfg4.dim = 4;
  CHECK(std::abs(average_theoretical_mi(cfg4, 2000000) - 0.2911 * 4) < 0.005);
  SynthConfig wide = cfg;
  wide.n = 1e6;  // pure noise
  CHECK(average_theoretical_mi(wide, 200000) < 1e-6);
}

TEST_CASE("sample_synth marginals") {
  SynthConfig cfg;
  Rng rng(1);
  const CmiBatch b = sample_synth(cfg, 200000, rng);
  double zsum = 0.0;
  for (double z : b.z) zsum += z;
  CHECK(std::abs(zsum / b.n) < 0.01);

  // corr(x, z) = sigma_z / sqrt(sigma_z^2 + 1) = 0.7071 at defaults
  double mx = 0.0, mz = 0.0;
  for (int i = 0; i < b.n; ++i) {
    mx += b.x[i];
    mz += b.z[i];
  }
  mx /= b.n;
  mz /= b.n;
  double sxz = 0.0, sxx = 0.0, szz = 0.0;
  for (int i = 0; i < b.n; ++i) {
    sxz += (b.x[i] - mx) * (b.z[i] - mz);
    sxx += (b.x[i] - mx) * (b.x[i] - mx);
    szz += (b.z[i] - mz) * (b.z[i] - mz);
  }
  CHECK(std::abs(sxz / std::sqrt(sxx * szz) - 0.7071) < 0.01);
}

TEST_CASE("y is exactly zero on the dead branch as noise vanishes") {
  SynthConfig cfg;
  cfg.n = 1e-300;
  Rng rng(2);
  const CmiBatch b = sample_synth(cfg, 5000, rng);
  for (int i = 0; i < b.n; ++i) {
    if (b.z[i] <= 0.0) CHECK(std::abs(b.y[i]) < 1e-250);
  }
}

TEST_CASE("tabular_cmi: independence, bijection, and mixtures") {
  CHECK(tabular_cmi(tabular_independent(4)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tabular_cmi(tabular_bijection(4)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // 50% uniform mixture: per x, p(y|x) = 0.625 at the match and 0.125 off
  const double expected = 0.625 * std::log(0.625 / 0.25) +
                          3 * 0.125 * std::log(0.125 / 0.25);
  CHECK(tabular_cmi(tabular_noisy_bijection(4, 0.5)) ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("tabular_cmi is invariant to relabeling and z-slice permutation") {
  const auto joint = tabular_noisy_bijection(4, 0.3);
  TabularJoint relabeled = joint;
  // swap two x symbols
  for (int iz = 0; iz < joint.nz; ++iz)
    for (int iy = 0; iy < joint.ny; ++iy) {
      std::swap(relabeled.at(iz, 0, iy), relabeled.at(iz, 3, iy));
    }
  CHECK(tabular_cmi(relabeled) == doctest::Approx(tabular_cmi(joint)).epsilon(1e-12));

  TabularJoint zswapped = joint;
  for (int ix = 0; ix < joint.nx; ++ix)
    for (int iy = 0; iy < joint.ny; ++iy)
      std::swap(zswapped.at(0, ix, iy), zswapped.at(1, ix, iy));
  CHECK(tabular_cmi(zswapped) == doctest::Approx(tabular_cmi(joint)).epsilon(1e-12));
}

TEST_CASE("js_cmi of the 4-way bijection") {
  // per z: KL(P||M) = ln(8/5), KL(Q||M) = 0.25 ln(2/5) + 0.75 ln 2
  const double klp = std::log(1.6);
  const double klq = 0.25 * std::log(0.4) + 0.75 * std::log(2.0);
  const double expected = 0.5 * (klp + klq);
  CHECK(tabular_bijection(4).js_cmi() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(tabular_independent(4).js_cmi() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tabular_bijection(4).js_cmi() < std::log(2.0));
}

TEST_CASE("tabular sampling hits the right cells") {
  const auto joint = tabular_bijection(4);
  Rng rng(3);
  const CmiBatch b = joint.sample(20000, rng);
  for (int i = 0; i < b.n; ++i) {
    const int ix = static_cast<int>(std::lround(b.x[i]));
    const int iy = static_cast<int>(std::lround(b.y[i]));
    const int iz = static_cast<int>(std::lround(b.z[i]));
    CHECK(joint.at(iz, ix, iy) > 0.0);
  }
}

TEST_CASE("negative sampler draws from p(x|z) independent of y") {
  const auto joint = tabular_bijection(4);
  Rng rng(4);
  const CmiBatch b = joint.sample(40000, rng);
  std::vector<double> x_neg;
  joint.negative_sampler()(b, rng, x_neg);
  // marginal over x~ should be uniform over the 4 symbols
  std::vector<int> counts(4, 0);
  for (double v : x_neg) ++counts[static_cast<int>(std::lround(v))];
  for (int c : counts)
    CHECK(std::abs(c / static_cast<double>(b.n) - 0.25) < 0.02);
  // and independent of y: correlation of x~ with y near zero
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < b.n; ++i) {
    mx += x_neg[i];
    my += b.y[i];
  }
  mx /= b.n;
  my /= b.n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < b.n; ++i) {
    sxy += (x_neg[i] - mx) * (b.y[i] - my);
    sxx += (x_neg[i] - mx) * (x_neg[i] - mx);
    syy += (b.y[i] - my) * (b.y[i] - my);
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.02);
}

TEST_CASE("benchmark on a tiny grid produces a reproducible csv") {
  BenchConfig cfg;
  cfg.kinds = {EstimatorKind::vlb};
  cfg.dims = {1};
  cfg.sizes = {3000};
  cfg.n_seeds = 1;
  cfg.est.epochs = 3;
  cfg.est.hidden = {32};
  cfg.eval_contexts = 50;
  cfg.eval_samples_per_context = 64;
  cfg.mc_draws = 100000;
  cfg.threads = 2;

  const auto cells = rmse_benchmark(cfg);
  REQUIRE(cells.size() == 1);
  CHECK_FALSE(cells[0].failed);
  CHECK(cells[0].rmse >= 0.0);
  CHECK(std::isfinite(cells[0].rmse));

  const auto dir = std::filesystem::temp_directory_path();
  write_bench_csv(cells, cfg, (dir / "ek_t1.csv").string());
  const auto cells2 = rmse_benchmark(cfg);
  write_bench_csv(cells2, cfg, (dir / "ek_t2.csv").string());
  std::ifstream a(dir / "ek_t1.csv"), b(dir / "ek_t2.csv");
  const std::string sa((std::istreambuf_iterator<char>(a)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.find("kind,dim,train_size,seed,rmse,theoretical_avg_mi,"
                "wall_seconds") == 0);
  CHECK(sa.find("mean") != std::string::npos);  // aggregate row
  std::filesystem::remove(dir / "ek_t1.csv");
  std::filesystem::remove(dir / "ek_t2.csv");
}

TEST_CASE("self-check: estimator scored against itself gives rmse 0") {
  // harness sanity: evaluating truth against truth is exactly zero
  Rng rng(5);
  double sq = 0.0;
  for (int c = 0; c < 100; ++c) {
    const double z = rng.normal();
    const double t = theoretical_cmi(z, 0.5);
    sq += (t - t) * (t - t);
  }
  CHECK(std::sqrt(sq / 100) == 0.0);
}

TEST_CASE("divergent cell is marked failed and the run continues") {
  BenchConfig cfg;
  cfg.kinds = {EstimatorKind::vlb, EstimatorKind::jsd};
  cfg.dims = {1};
  cfg.sizes = {2000};
  cfg.n_seeds = 1;
  cfg.est.epochs = 3;
  cfg.est.hidden = {16};
  cfg.est.lr = 1e7;  // diverges
  cfg.eval_contexts = 10;
  cfg.eval_samples_per_context = 16;
  cfg.mc_draws = 10000;
  const auto cells = rmse_benchmark(cfg);
  REQUIRE(cells.size() == 2);
  for (const auto& c : cells) CHECK(c.failed);
}
