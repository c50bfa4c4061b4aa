#pragma once

#include "iclab/harness/json.hpp"

namespace iclab::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitOracle = 3;
inline constexpr int kExitRuntime = 4;

/// Runs the experiment named by config["experiment"], writing CSVs,
/// summary.txt and manifest.json into config["out_dir"]. Returns kExitOk, or
/// kExitOracle when a verification experiment finds a failing check.
/// Configuration and runtime problems are thrown as iclab::Error.
int run_experiment(const Json& config);

}  // namespace iclab::harness
