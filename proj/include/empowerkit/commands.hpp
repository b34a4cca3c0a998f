#pragma once

#include <string>

#include "empowerkit/config.hpp"

namespace empowerkit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// default key sets, exposed for tests
RunConfig mi_bench_defaults();
RunConfig train_defaults();
RunConfig eval_defaults();
RunConfig oracle_defaults();

// Each command resolves defaults <- file <- flag overrides, echoes the
// resolved config into <out_root>/<run_id>/config.echo and writes its
// outputs there. Unknown keys raise ConfigError (exit 2 in the CLI).
int cmd_mi_bench(const RunConfig& overrides);
int cmd_train(const RunConfig& overrides);
int cmd_eval(const RunConfig& overrides);
int cmd_oracle(const RunConfig& overrides);

// out_root resolution: EMPOWERKIT_OUT env var wins, then the config value
std::string resolve_out_root(const RunConfig& resolved);

}  // namespace empowerkit
