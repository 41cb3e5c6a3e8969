// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedvar/averaging.hpp"
#include "fedvar/federation.hpp"

namespace fedvar {

inline constexpr int kCheckpointVersion = 1;

// Everything needed to resume a run except the silo data, which stays with
// each silo and is rebound by silo id on restore.
struct Checkpoint {
  std::string algorithm;  // "sfvi" or "sfvi_avg"
  std::string model;
  std::size_t round = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> rng_path;
  RunConfig config;
  Vec theta;
  GlobalVarParams eta_G;
  AdamState adam_theta;
  AdamState adam_eta_G;

  struct Silo {
    std::size_t silo_id = 0;
    std::size_t round = 0;
    LocalVarParams eta_L;
    AdamState adam_L;
    // Averaging runs only: the silo's drifted copies and their optimizers.
    std::optional<Vec> theta;
    std::optional<GlobalVarParams> eta_G;
    std::optional<AdamState> adam_theta;
    std::optional<AdamState> adam_eta_G;
  };
  std::vector<Silo> silos;
};

Checkpoint capture(const FederatedRun& run, const Model& model);
Checkpoint capture(const AvgResult& run, const AvgConfig& config, const Model& model);
// Throws ConfigError if the model, silo ids or dimensions do not match.
FederatedRun restore(const Checkpoint& ckpt, const Model& model, const Dataset& data);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedvar
