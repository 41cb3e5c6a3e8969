// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "fedvar/harness/config.hpp"

namespace fedvar {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

inline constexpr const char* kFedvarVersion = "0.1.0";

// Validates everything before touching the output directory, then runs and
// writes into cfg.output:
//   manifest.json  config, seed, version, kernel ISA
//   metrics.csv    round,elbo,kl_to_exact (deterministic)
//   trace.csv      round,elbo,grad_norm_theta,grad_norm_etaG,wall_ms
//   bary.csv       round,bary_iters,bary_residual (averaging only)
//   summary.json   final metrics, including per-silo test accuracy
//   checkpoint.json
// Returns kExitOk, kExitConfig or kExitDivergence; progress goes to `log`.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace fedvar
