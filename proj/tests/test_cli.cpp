#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "empowerkit/commands.hpp"
#include "empowerkit/config.hpp"

using namespace empowerkit;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ek_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("config file parsing") {
  TempDir tmp;
  const auto file = tmp.path / "run.cfg";
  std::ofstream(file) << "# comment line\n"
                      << "seed = 7\n"
                      << "kinds = vlb, jsd  # inline comment\n"
                      << "lr=1e-3\n"
                      << "\n";
  const auto cfg = RunConfig::parse_file(file.string());
  CHECK(cfg.get_u64("seed") == 7);
  CHECK(cfg.get_list("kinds") == std::vector<std::string>{"vlb", "jsd"});
  CHECK(cfg.get_double("lr") == doctest::Approx(1e-3));
}

TEST_CASE("config errors") {
  TempDir tmp;
  const auto bad = tmp.path / "bad.cfg";
  std::ofstream(bad) << "no equals sign here\n";
  CHECK_THROWS_AS(RunConfig::parse_file(bad.string()), ConfigError);

  RunConfig defaults = mi_bench_defaults();
  RunConfig overrides;
  overrides.set("not_a_key", "1");
  CHECK_THROWS_AS(defaults.merge_checked(overrides), ConfigError);

  RunConfig c;
  c.set("x", "abc");
  CHECK_THROWS_AS(c.get_double("x"), ConfigError);
  CHECK_THROWS_AS(c.get_bool("x"), ConfigError);
  CHECK_THROWS_AS(c.get_string("missing"), ConfigError);
}

TEST_CASE("echo is sorted and fully resolved") {
  RunConfig cfg = train_defaults();
  const std::string echo = cfg.echo();
  CHECK(echo.find("gamma = 0.99") != std::string::npos);
  CHECK(echo.find("mode = none") != std::string::npos);
  // sorted: blend_slope before gamma before mode
  CHECK(echo.find("blend_slope") < echo.find("gamma"));
  CHECK(echo.find("gamma") < echo.find("mode"));
}

TEST_CASE("cmd_train writes echo + metrics and reruns byte-identically") {
  TempDir tmp;
  RunConfig overrides;
  overrides.set("out_root", tmp.path.string());
  overrides.set("mode", "none");
  overrides.set("total_steps", "64");
  overrides.set("n_envs", "2");
  overrides.set("horizon", "8");
  overrides.set("seed", "3");
  CHECK(cmd_train(overrides) == kExitOk);

  const auto run_dir = tmp.path / "train-none-s3";
  REQUIRE(fs::exists(run_dir / "config.echo"));
  REQUIRE(fs::exists(run_dir / "metrics.csv"));
  const std::string metrics1 = slurp(run_dir / "metrics.csv");
  CHECK(metrics1.find("iteration,env_steps") == 0);

  // re-run purely from the echoed config
  const auto echoed = RunConfig::parse_file((run_dir / "config.echo").string());
  RunConfig rerun;
  for (const auto& [k, v] : echoed.values()) rerun.set(k, v);
  CHECK(cmd_train(rerun) == kExitOk);
  CHECK(slurp(run_dir / "metrics.csv") == metrics1);
}

TEST_CASE("cmd_train rejects an invalid mode with a config error") {
  RunConfig overrides;
  overrides.set("mode", "definitely_not_a_mode");
  CHECK_THROWS_AS(cmd_train(overrides), ConfigError);
}

TEST_CASE("mi-bench tiny run: row cardinality and reproducibility") {
  TempDir tmp;
  RunConfig overrides;
  overrides.set("out_root", tmp.path.string());
  overrides.set("kinds", "vlb");
  overrides.set("dims", "1,2");
  overrides.set("sizes", "400");
  overrides.set("seeds", "2");
  overrides.set("epochs", "1");
  overrides.set("hidden", "8");
  overrides.set("eval_contexts", "5");
  overrides.set("eval_samples", "16");
  overrides.set("mc_draws", "20000");
  CHECK(cmd_mi_bench(overrides) == kExitOk);
  const auto run_dir = tmp.path / "mi-bench-s0";
  const std::string csv = slurp(run_dir / "table1.csv");
  // header + (1 kind x 2 dims x 1 size x 2 seeds) + 2 aggregate rows
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + 4 + 2);
  REQUIRE(fs::exists(run_dir / "summary.txt"));

  const std::string first = csv;
  CHECK(cmd_mi_bench(overrides) == kExitOk);
  CHECK(slurp(run_dir / "table1.csv") == first);
}

TEST_CASE("eval requires a matching checkpoint") {
  TempDir tmp;
  RunConfig overrides;
  overrides.set("out_root", tmp.path.string());
  CHECK_THROWS_AS(cmd_eval(overrides), ConfigError);  // missing checkpoint

  // train a tiny run with a final checkpoint, then eval it
  RunConfig train_overrides;
  train_overrides.set("out_root", tmp.path.string());
  train_overrides.set("mode", "none");
  train_overrides.set("total_steps", "32");
  train_overrides.set("n_envs", "2");
  train_overrides.set("horizon", "8");
  train_overrides.set("ckpt_every", "1");
  CHECK(cmd_train(train_overrides) == kExitOk);
  const auto ckpt = tmp.path / "train-none-s0" / "ckpt" / "iter_2";
  REQUIRE(fs::exists(ckpt / "policy.net"));

  RunConfig eval_overrides;
  eval_overrides.set("out_root", tmp.path.string());
  eval_overrides.set("checkpoint", ckpt.string());
  eval_overrides.set("episodes", "3");
  CHECK(cmd_eval(eval_overrides) == kExitOk);
  const auto report = slurp(tmp.path / "eval-s0" / "eval.json");
  CHECK(report.find("\"episodes\": 3") != std::string::npos);
  CHECK(report.find("\"mean_return\"") != std::string::npos);
  CHECK(report.find("\"success_rate\"") != std::string::npos);

  // identical JSON on re-run
  CHECK(cmd_eval(eval_overrides) == kExitOk);
  CHECK(slurp(tmp.path / "eval-s0" / "eval.json") == report);

  // dimension mismatch: distractor env vs no-distractor checkpoint
  RunConfig bad;
  bad.set("out_root", tmp.path.string());
  bad.set("checkpoint", ckpt.string());
  bad.set("distractor_dim", "2");
  CHECK_THROWS_AS(cmd_eval(bad), ConfigError);

  // zero episodes: empty report, exit 0
  RunConfig zero;
  zero.set("out_root", tmp.path.string());
  zero.set("checkpoint", ckpt.string());
  zero.set("episodes", "0");
  CHECK(cmd_eval(zero) == kExitOk);
}

TEST_CASE("EMPOWERKIT_OUT overrides the output root") {
  RunConfig cfg;
  cfg.set("out_root", "from_config");
  ::setenv("EMPOWERKIT_OUT", "/tmp/from_env", 1);
  CHECK(resolve_out_root(cfg) == "/tmp/from_env");
  ::unsetenv("EMPOWERKIT_OUT");
  CHECK(resolve_out_root(cfg) == "from_config");
}

TEST_CASE("exit code constants") {
  CHECK(kExitOk == 0);
  CHECK(kExitRuntime == 1);
  CHECK(kExitUsage == 2);
}
