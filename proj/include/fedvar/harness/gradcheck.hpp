// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedvar/data.hpp"
#include "fedvar/models/model.hpp"
#include "fedvar/rng.hpp"

namespace fedvar {

struct GradCheckLine {
  std::string what;  // e.g. "log_local_joint d_zG"
  double max_error = 0.0;
};

struct GradCheckReport {
  std::size_t trials = 0;
  double tolerance = 0.0;
  std::vector<GradCheckLine> lines;
  bool passed() const;
};

// Compares every analytic gradient of the model's two log-density terms with
// central differences at `trials` random points. Errors are
// |analytic - fd| / max(1, |fd|). ReLU models resample points that sit within
// 1e-3 of a kink and use the looser tolerance.
GradCheckReport check_model_gradients(const Model& model, const Shard& shard, const RngKey& key,
                                      std::size_t trials);

// A small shard suited to the model, for gradient checks and demos.
Shard gradcheck_shard(const Model& model, const RngKey& key);

}  // namespace fedvar
