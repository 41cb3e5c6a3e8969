// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "fedvar/checkpoint.hpp"
#include "fedvar/data.hpp"
#include "fedvar/models/model.hpp"
#include "fedvar/rng.hpp"
#include "fedvar/vfamily.hpp"

namespace fedvar {

// Monte Carlo posterior predictive class probabilities for every observation
// of `test`: the average of the model's softmax output over n_samples joint
// draws (z_G, z_L) from q. Per-silo local latents come from that silo's
// q(z_L | z_G); models with per-unit local latents are rejected.
// Row i of the result holds the probabilities of observation i.
Mat posterior_predict(const Model& model, const GlobalVarParams& eta_G,
                      const LocalVarParams& eta_L, const Shard& test, std::size_t n_samples,
                      const RngKey& key);
// Uses the parameters of silo `silo_id` in a checkpoint.
Mat posterior_predict(const Checkpoint& ckpt, const Model& model, std::size_t silo_id,
                      const Shard& test, std::size_t n_samples, const RngKey& key);

struct Accuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double value() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

// Argmax accuracy over the observations accepted by `keep` (label -> bool).
Accuracy accuracy(const Mat& probs, const Shard& test,
                  const std::function<bool(std::size_t)>& keep = nullptr);

}  // namespace fedvar
