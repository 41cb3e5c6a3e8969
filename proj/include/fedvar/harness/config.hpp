// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "fedvar/averaging.hpp"
#include "fedvar/data.hpp"
#include "fedvar/federation.hpp"
#include "fedvar/models/model.hpp"

namespace fedvar {

struct ModelConfig {
  std::string id;  // conjugate | glmm | multinom | hierbnn
  double tau = 1.0;
  double lambda = 1.0;
  double noise = 1.0;
  std::size_t features = 2;  // multinom and hierbnn inputs
  std::size_t classes = 3;
  std::size_t hidden = 8;
};

struct DataConfig {
  // Either a generator name (conjugate | glmm | multinom | heterogeneous)
  // or a CSV path with its format (scalar | classification | glmm).
  std::string generator;
  std::filesystem::path csv;
  std::string format;
  bool repartition = false;  // CSV with silo ids: reshuffle into `silos`
  std::uint64_t seed = 0;
  std::size_t n = 200;          // conjugate, glmm (subjects), multinom
  std::size_t per_silo = 200;   // heterogeneous
  double skew = 0.9;
  double separation = 2.5;
  std::size_t test_n = 0;         // multinom held-out points
  std::size_t test_per_class = 0; // heterogeneous per-silo test points per class
};

struct ExperimentConfig {
  std::string algorithm = "sfvi";  // sfvi | sfvi_avg
  ModelConfig model;
  DataConfig data;
  std::size_t silos = 1;
  RunConfig run;
  std::size_t local_steps = 200;
  BarycenterMode barycenter = BarycenterMode::diagonal;
  double bary_tol = 1e-9;
  std::size_t bary_max_iter = 200;
  bool weighted_theta = false;
  std::size_t predict_samples = 100;
  std::filesystem::path output = "fedvar-out";

  // Throws ConfigError describing the first problem found.
  void validate() const;
  AvgConfig avg_config() const;
};

// JSON text -> config. Unknown keys are errors. `base_dir` resolves a
// relative CSV path.
ExperimentConfig parse_experiment_config(std::string_view text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Canonical JSON of every field, for manifests.
std::string experiment_config_json(const ExperimentConfig& cfg);

std::unique_ptr<Model> make_model(const ModelConfig& cfg);

struct ExperimentData {
  Dataset train;
  std::optional<Dataset> test;  // classification generators only
};
ExperimentData build_data(const ExperimentConfig& cfg);

}  // namespace fedvar
