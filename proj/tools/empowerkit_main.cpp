#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "empowerkit/commands.hpp"

namespace {

using empowerkit::RunConfig;

struct SubArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // key -> value (set when passed)
};

// file values first, then --set pairs, then named flags
RunConfig assemble_overrides(const SubArgs& args) {
  RunConfig overrides;
  if (!args.config_file.empty())
    overrides = RunConfig::parse_file(args.config_file);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw empowerkit::ConfigError("--set expects key=value, got '" + kv + "'");
    overrides.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : args.flags) overrides.set(key, value);
  return overrides;
}

void add_common(CLI::App* cmd, SubArgs& args) {
  cmd->add_option("--config", args.config_file, "config file (key = value lines)");
  cmd->add_option("--set", args.sets, "override a config key (key=value)");
}

// binds a flag that lands in the override map only when actually passed
void bind(CLI::App* cmd, SubArgs& args, const std::string& flag,
          const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&args, key](const std::string& v) { args.flags[key] = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"empowerkit: conditional-MI lower bounds, intrinsic rewards, "
               "and PPO on the PlanarLift environment"};
  app.require_subcommand(1);

  SubArgs bench_args, train_args, eval_args, oracle_args;

  auto* bench = app.add_subcommand("mi-bench",
                                   "synthetic conditional-MI RMSE benchmark");
  add_common(bench, bench_args);
  bind(bench, bench_args, "--kinds", "kinds", "estimators (vlb,kld,jsd)");
  bind(bench, bench_args, "--dims", "dims", "variable dimensions");
  bind(bench, bench_args, "--sizes", "sizes", "training set sizes");
  bind(bench, bench_args, "--seeds", "seeds", "number of seeds");
  bind(bench, bench_args, "--seed", "seed", "base seed");
  bind(bench, bench_args, "--threads", "threads", "worker threads");
  bench->add_flag_function(
      "--strict",
      [&bench_args](std::int64_t) { bench_args.flags["strict"] = "true"; },
      "exit nonzero if any cell fails");

  auto* train = app.add_subcommand("train", "PPO training on PlanarLift");
  add_common(train, train_args);
  bind(train, train_args, "--mode", "mode",
       "none | icm | disagreement | empowerment_with_icm");
  bind(train, train_args, "--steps", "total_steps", "total environment steps");
  bind(train, train_args, "--seed", "seed", "run seed");
  bind(train, train_args, "--n-envs", "n_envs", "parallel environments");

  auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
  add_common(eval, eval_args);
  bind(eval, eval_args, "--checkpoint", "checkpoint", "checkpoint directory");
  bind(eval, eval_args, "--episodes", "episodes", "evaluation episodes");
  bind(eval, eval_args, "--seed", "seed", "evaluation seed");

  auto* oracle = app.add_subcommand(
      "oracle", "estimator soundness against exact tabular joints");
  add_common(oracle, oracle_args);
  bind(oracle, oracle_args, "--kinds", "kinds", "estimators (vlb,kld,jsd)");
  bind(oracle, oracle_args, "--seed", "seed", "run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << std::endl;
    return empowerkit::kExitUsage;
  }

  try {
    if (bench->parsed())
      return empowerkit::cmd_mi_bench(assemble_overrides(bench_args));
    if (train->parsed())
      return empowerkit::cmd_train(assemble_overrides(train_args));
    if (eval->parsed())
      return empowerkit::cmd_eval(assemble_overrides(eval_args));
    if (oracle->parsed())
      return empowerkit::cmd_oracle(assemble_overrides(oracle_args));
  } catch (const empowerkit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return empowerkit::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return empowerkit::kExitRuntime;
  }
  return empowerkit::kExitUsage;
}
