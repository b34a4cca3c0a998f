#include "empowerkit/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

#include "empowerkit/rl.hpp"
#include "empowerkit/synthetic_bench.hpp"

namespace empowerkit {

namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

// resolve run dir, write the echo, return the dir
std::string prepare_run_dir(const RunConfig& resolved,
                            const std::string& default_run_id) {
  std::string run_id = resolved.get_string("run_id");
  if (run_id.empty()) run_id = default_run_id;
  const std::string root = resolve_out_root(resolved);
  const std::string dir = root + "/" + run_id;
  fs::create_directories(dir);
  RunConfig echoed = resolved;
  echoed.set("run_id", run_id);
  write_text(dir + "/config.echo", echoed.echo());
  return dir;
}

std::vector<EstimatorKind> parse_kinds(const RunConfig& cfg) {
  std::vector<EstimatorKind> kinds;
  try {
    for (const auto& s : cfg.get_list("kinds"))
      kinds.push_back(estimator_kind_from_string(s));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (kinds.empty()) throw ConfigError("kinds must not be empty");
  return kinds;
}

EstimatorConfig parse_estimator_config(const RunConfig& cfg) {
  EstimatorConfig est;
  est.hidden = cfg.get_int_list("hidden");
  est.epochs = static_cast<int>(cfg.get_int("epochs"));
  est.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  est.lr = cfg.get_double("lr");
  est.holdout_frac = cfg.get_double("holdout_frac");
  return est;
}

}  // namespace

std::string resolve_out_root(const RunConfig& resolved) {
  if (const char* env = std::getenv("EMPOWERKIT_OUT"); env != nullptr && *env)
    return env;
  return resolved.get_string("out_root");
}

RunConfig mi_bench_defaults() {
  RunConfig d;
  d.set("run_id", "");
  d.set("out_root", "out");
  d.set("seed", "0");
  d.set("seeds", "5");
  d.set("kinds", "vlb,kld,jsd");
  d.set("dims", "1,2,3,4");
  d.set("sizes", "20000,40000,60000");
  d.set("sigma_z", "1.0");
  d.set("noise_n", "0.5");
  d.set("hidden", "256");
  d.set("epochs", "24");
  d.set("batch_size", "128");
  d.set("lr", "1e-3");
  d.set("holdout_frac", "0.1");
  d.set("eval_contexts", "2000");
  d.set("eval_samples", "256");
  d.set("mc_draws", "2000000");
  d.set("threads", "2");
  d.set("strict", "false");
  d.set("emit_timing", "false");
  return d;
}

int cmd_mi_bench(const RunConfig& overrides) {
  RunConfig cfg = mi_bench_defaults();
  cfg.merge_checked(overrides);
  const std::string dir = prepare_run_dir(
      cfg, "mi-bench-s" + cfg.get_string("seed"));

  BenchConfig bench;
  bench.kinds = parse_kinds(cfg);
  bench.dims = cfg.get_int_list("dims");
  bench.sizes = cfg.get_int_list("sizes");
  bench.n_seeds = static_cast<int>(cfg.get_int("seeds"));
  bench.base_seed = cfg.get_u64("seed");
  bench.sigma_z = cfg.get_double("sigma_z");
  bench.noise_n = cfg.get_double("noise_n");
  bench.est = parse_estimator_config(cfg);
  bench.eval_contexts = static_cast<int>(cfg.get_int("eval_contexts"));
  bench.eval_samples_per_context =
      static_cast<int>(cfg.get_int("eval_samples"));
  bench.mc_draws = static_cast<int>(cfg.get_int("mc_draws"));
  bench.threads = static_cast<int>(cfg.get_int("threads"));
  bench.emit_timing = cfg.get_bool("emit_timing");

  const auto cells = rmse_benchmark(bench, [](const BenchCellResult& c) {
    std::fprintf(stderr, "[mi-bench] %s dim=%d size=%d seed=%llu %s\n",
                 to_string(c.kind).c_str(), c.dim, c.train_size,
                 static_cast<unsigned long long>(c.seed),
                 c.failed ? "FAILED" : "done");
  });
  write_bench_csv(cells, bench, dir + "/table1.csv");
  write_text(dir + "/summary.txt", bench_summary(cells, bench));
  std::cout << bench_summary(cells, bench);

  bool any_failed = false;
  for (const auto& c : cells) any_failed = any_failed || c.failed;
  if (any_failed && cfg.get_bool("strict")) return kExitRuntime;
  return kExitOk;
}

RunConfig train_defaults() {
  RunConfig d;
  d.set("run_id", "");
  d.set("out_root", "out");
  d.set("seed", "0");
  d.set("mode", "none");
  d.set("total_steps", "300000");
  d.set("n_envs", "60");
  d.set("horizon", "128");
  d.set("gamma", "0.99");
  d.set("lam", "0.95");
  d.set("clip_eps", "0.2");
  d.set("ppo_epochs", "10");
  d.set("minibatch", "256");
  d.set("lr", "2e-4");
  d.set("entropy_coef", "0.0");
  d.set("value_coef", "0.5");
  d.set("logstd_init", "-0.5");
  d.set("episode_len", "100");
  d.set("distractor_dim", "0");
  d.set("grasp_radius", "0.03");
  d.set("grip_close_threshold", "0.5");
  d.set("lift_threshold", "0.01");
  d.set("reward_scale", "50");
  d.set("grip_spring", "0.1");
  d.set("fm_hidden", "256");
  d.set("fm_lr", "2e-4");
  d.set("fm_minibatch", "256");
  d.set("ensemble_size", "5");
  d.set("intrinsic_epochs", "1");
  d.set("intrinsic_order", "train_then_reward");
  d.set("blend_threshold", "0.12");
  d.set("blend_slope", "200");
  d.set("blend_on", "raw");
  d.set("emp_bound", "jsd");
  d.set("emp_jsd_widths", "512,512,216,128,64,32");
  d.set("emp_vlb_glu_layers", "4");
  d.set("emp_vlb_glu_width", "256");
  d.set("emp_vlb_dense", "128,64");
  d.set("emp_lr", "2e-4");
  d.set("emp_batch", "256");
  d.set("intrinsic_coef", "0.01");
  d.set("feature_scale_pos", "20");
  d.set("feature_scale_distractor", "1");
  d.set("ckpt_every", "0");
  d.set("replay_capacity", "100000");
  d.set("write_diagnostics", "false");
  d.set("emit_timing", "false");
  return d;
}

namespace {

TrainConfig parse_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.ppo.gamma = cfg.get_double("gamma");
  t.ppo.lam = cfg.get_double("lam");
  t.ppo.clip_eps = cfg.get_double("clip_eps");
  t.ppo.epochs_per_update = static_cast<int>(cfg.get_int("ppo_epochs"));
  t.ppo.minibatch = static_cast<int>(cfg.get_int("minibatch"));
  t.ppo.lr = cfg.get_double("lr");
  t.ppo.entropy_coef = cfg.get_double("entropy_coef");
  t.ppo.value_coef = cfg.get_double("value_coef");
  t.ppo.horizon = static_cast<int>(cfg.get_int("horizon"));
  t.ppo.n_envs = static_cast<int>(cfg.get_int("n_envs"));
  t.ppo.logstd_init = cfg.get_double("logstd_init");

  t.env.episode_len = static_cast<int>(cfg.get_int("episode_len"));
  t.env.distractor_dim = static_cast<int>(cfg.get_int("distractor_dim"));
  t.env.grasp_radius = cfg.get_double("grasp_radius");
  t.env.grip_close_threshold = cfg.get_double("grip_close_threshold");
  t.env.lift_threshold = cfg.get_double("lift_threshold");
  t.env.reward_scale = cfg.get_double("reward_scale");
  t.env.grip_spring = cfg.get_double("grip_spring");

  try {
    t.intrinsic.mode = intrinsic_mode_from_string(cfg.get_string("mode"));
    t.intrinsic.emp.bound =
        estimator_kind_from_string(cfg.get_string("emp_bound"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  t.intrinsic.fm_hidden = static_cast<int>(cfg.get_int("fm_hidden"));
  t.intrinsic.fm_lr = cfg.get_double("fm_lr");
  t.intrinsic.fm_minibatch = static_cast<int>(cfg.get_int("fm_minibatch"));
  t.intrinsic.ensemble_size = static_cast<int>(cfg.get_int("ensemble_size"));
  t.intrinsic.intrinsic_epochs =
      static_cast<int>(cfg.get_int("intrinsic_epochs"));
  const std::string order = cfg.get_string("intrinsic_order");
  if (order == "train_then_reward")
    t.intrinsic.train_before_reward = true;
  else if (order == "reward_then_train")
    t.intrinsic.train_before_reward = false;
  else
    throw ConfigError("intrinsic_order must be train_then_reward or "
                      "reward_then_train");
  t.intrinsic.blend.threshold = cfg.get_double("blend_threshold");
  t.intrinsic.blend.slope = cfg.get_double("blend_slope");
  const std::string blend_on = cfg.get_string("blend_on");
  if (blend_on == "raw")
    t.intrinsic.blend.use_normalized = false;
  else if (blend_on == "normalized")
    t.intrinsic.blend.use_normalized = true;
  else
    throw ConfigError("blend_on must be raw or normalized");
  if (t.intrinsic.emp.bound == EstimatorKind::kld)
    throw ConfigError("emp_bound must be vlb or jsd");
  t.intrinsic.emp.jsd_widths = cfg.get_int_list("emp_jsd_widths");
  t.intrinsic.emp.vlb_glu_layers =
      static_cast<int>(cfg.get_int("emp_vlb_glu_layers"));
  t.intrinsic.emp.vlb_glu_width =
      static_cast<int>(cfg.get_int("emp_vlb_glu_width"));
  t.intrinsic.emp.vlb_dense = cfg.get_int_list("emp_vlb_dense");
  t.intrinsic.emp.lr = cfg.get_double("emp_lr");
  t.intrinsic.emp.batch_size = static_cast<int>(cfg.get_int("emp_batch"));
  t.intrinsic.intrinsic_coef = cfg.get_double("intrinsic_coef");
  const double scale_pos = cfg.get_double("feature_scale_pos");
  const double scale_dis = cfg.get_double("feature_scale_distractor");
  t.intrinsic.feature_scale.assign(2, scale_pos);
  for (int i = 0; i < t.env.distractor_dim; ++i)
    t.intrinsic.feature_scale.push_back(scale_dis);

  t.total_steps = cfg.get_int("total_steps");
  t.seed = cfg.get_u64("seed");
  t.ckpt_every = static_cast<int>(cfg.get_int("ckpt_every"));
  t.replay_capacity = static_cast<int>(cfg.get_int("replay_capacity"));
  t.emit_timing = cfg.get_bool("emit_timing");
  t.write_diagnostics = cfg.get_bool("write_diagnostics");
  return t;
}

}  // namespace

int cmd_train(const RunConfig& overrides) {
  RunConfig cfg = train_defaults();
  cfg.merge_checked(overrides);
  TrainConfig tcfg = parse_train_config(cfg);
  const std::string dir = prepare_run_dir(
      cfg, "train-" + cfg.get_string("mode") + "-s" + cfg.get_string("seed"));
  tcfg.out_dir = dir;

  const TrainResult result = train(tcfg);
  write_metrics_csv(result.metrics, tcfg.emit_timing, dir + "/metrics.csv");
  return result.aborted ? kExitRuntime : kExitOk;
}

RunConfig eval_defaults() {
  RunConfig d;
  d.set("run_id", "");
  d.set("out_root", "out");
  d.set("seed", "0");
  d.set("checkpoint", "");
  d.set("episodes", "100");
  d.set("episode_len", "100");
  d.set("distractor_dim", "0");
  d.set("grasp_radius", "0.03");
  d.set("grip_close_threshold", "0.5");
  d.set("lift_threshold", "0.01");
  d.set("reward_scale", "50");
  d.set("grip_spring", "0.1");
  d.set("dump_trajectory", "");
  return d;
}

int cmd_eval(const RunConfig& overrides) {
  RunConfig cfg = eval_defaults();
  cfg.merge_checked(overrides);
  const std::string ckpt_dir = cfg.get_string("checkpoint");
  if (ckpt_dir.empty()) throw ConfigError("checkpoint is required");

  EnvConfig env;
  env.episode_len = static_cast<int>(cfg.get_int("episode_len"));
  env.distractor_dim = static_cast<int>(cfg.get_int("distractor_dim"));
  env.grasp_radius = cfg.get_double("grasp_radius");
  env.grip_close_threshold = cfg.get_double("grip_close_threshold");
  env.lift_threshold = cfg.get_double("lift_threshold");
  env.reward_scale = cfg.get_double("reward_scale");
  env.grip_spring = cfg.get_double("grip_spring");

  PolicyCheckpoint ckpt = load_policy_checkpoint(ckpt_dir);
  const int expected_obs = kIntrinsicDim + 2 + env.distractor_dim;
  if (ckpt.policy.input_dim() != expected_obs ||
      ckpt.distractor_dim != env.distractor_dim)
    throw ConfigError("checkpoint/config dimension mismatch: policy expects " +
                      std::to_string(ckpt.policy.input_dim()) +
                      " obs dims, env provides " +
                      std::to_string(expected_obs));

  const std::string dir = prepare_run_dir(cfg, "eval-s" + cfg.get_string("seed"));
  const int episodes = static_cast<int>(cfg.get_int("episodes"));
  std::vector<TrajectoryRecord> trajectory;
  const bool want_dump = !cfg.get_string("dump_trajectory").empty();
  const EvalReport report =
      evaluate_policy(ckpt.policy, env, episodes, cfg.get_u64("seed"),
                      want_dump ? &trajectory : nullptr);
  if (want_dump)
    dump_trajectory(trajectory, dir + "/" + cfg.get_string("dump_trajectory"));

  nlohmann::json j = {{"episodes", report.episodes},
                      {"mean_return", report.mean_return},
                      {"success_rate", report.success_rate}};
  write_text(dir + "/eval.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << std::endl;
  return kExitOk;
}

RunConfig oracle_defaults() {
  RunConfig d;
  d.set("run_id", "");
  d.set("out_root", "out");
  d.set("seed", "0");
  d.set("kinds", "vlb,kld,jsd");
  d.set("symbols", "4");
  d.set("train_samples", "20000");
  d.set("eval_samples", "20000");
  d.set("hidden", "256,128");
  d.set("epochs", "40");
  d.set("batch_size", "256");
  d.set("lr", "3e-3");
  d.set("holdout_frac", "0.1");
  return d;
}

int cmd_oracle(const RunConfig& overrides) {
  RunConfig cfg = oracle_defaults();
  cfg.merge_checked(overrides);
  const std::string dir =
      prepare_run_dir(cfg, "oracle-s" + cfg.get_string("seed"));

  const int symbols = static_cast<int>(cfg.get_int("symbols"));
  const auto kinds = parse_kinds(cfg);
  const EstimatorConfig est = parse_estimator_config(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");
  const int train_n = static_cast<int>(cfg.get_int("train_samples"));
  const int eval_n = static_cast<int>(cfg.get_int("eval_samples"));

  struct NamedJoint {
    std::string name;
    TabularJoint joint;
  };
  std::vector<double> probs(symbols);
  for (int i = 0; i < symbols; ++i) probs[i] = symbols - i;
  const std::vector<NamedJoint> joints = {
      {"independent", tabular_independent(symbols)},
      {"bijection", tabular_bijection(symbols)},
      {"weighted_bijection", tabular_weighted_bijection(probs)},
      {"noisy_bijection", tabular_noisy_bijection(symbols, 0.5)},
  };

  std::ofstream csv(dir + "/oracle.csv");
  if (!csv) throw std::runtime_error("cannot open " + dir + "/oracle.csv");
  csv << "joint,kind,exact,estimate,abs_error\n";
  std::printf("%-16s %-5s %10s %10s %10s\n", "joint", "kind", "exact",
              "estimate", "abs_error");
  char buf[256];
  int row = 0;
  for (const auto& [name, joint] : joints) {
    for (const EstimatorKind kind : kinds) {
      Rng rng = Rng::derive(seed, (static_cast<std::uint64_t>(row) << 8) | 1);
      const CmiBatch data = joint.sample(train_n, rng);
      EstimatorHandle handle = EstimatorHandle::make(kind, 1, 1, 1, est, rng);
      train_estimator(handle, data, joint.negative_sampler(), est.epochs, rng);

      const CmiBatch eval = joint.sample(eval_n, rng);
      std::vector<double> x_neg;
      if (kind != EstimatorKind::vlb) joint.negative_sampler()(eval, rng, x_neg);
      const double estimate = bound_value(handle, eval, x_neg);
      // JSD estimates the Jensen-Shannon conditional MI, capped at log 2
      const double exact =
          kind == EstimatorKind::jsd ? joint.js_cmi() : joint.cmi();
      const double err = std::abs(estimate - exact);
      std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", name.c_str(),
                    to_string(kind).c_str(), exact, estimate, err);
      csv << buf;
      std::printf("%-16s %-5s %10.4f %10.4f %10.4f\n", name.c_str(),
                  to_string(kind).c_str(), exact, estimate, err);
      ++row;
    }
  }
  if (!csv) throw std::runtime_error("write failed: " + dir + "/oracle.csv");
  return kExitOk;
}

}  // namespace empowerkit
