// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedvar/linalg.hpp"
#include "fedvar/rng.hpp"

namespace fedvar {

struct Observation {
  Vec x;
  double y = 0.0;
};

// The unit of exchangeability: one observation for regression-type data,
// one subject (with repeated visits) for the mixed model. Per-unit local
// latents and their noise are keyed by global_index.
struct Unit {
  std::uint64_t global_index = 0;
  std::vector<Observation> obs;
};

struct Shard {
  std::size_t silo_id = 0;
  std::vector<Unit> units;

  std::size_t size() const noexcept { return units.size(); }
};

struct Dataset {
  std::vector<Shard> silos;

  std::size_t num_silos() const noexcept { return silos.size(); }
  std::size_t total_units() const noexcept;
  // Silo ids are 0..J-1 in order and global indices are a permutation of
  // 0..N-1. Throws ConfigError otherwise.
  void validate() const;
};

// Random permutation of units, then contiguous near-equal split into J silos.
// Units within a silo are kept in ascending global_index order.
Dataset partition_even(std::vector<Unit> units, std::size_t J, const RngKey& key);
Dataset partition_sizes(std::vector<Unit> units, const std::vector<std::size_t>& sizes,
                        const RngKey& key);
Dataset repartition(const Dataset& data, std::size_t J, const RngKey& key);
std::vector<Unit> pooled_units(const Dataset& data);
// All units in one silo with id 0.
Shard pooled_shard(const Dataset& data);

// CSV schemas (header row, base-10 integers, decimal floats):
//   classification: silo_id,global_index,label,x0..x{d-1}
//   glmm:           subject,visit,smoke,age_c,y
//   scalar:         silo_id,global_index,y
Dataset read_classification_csv(const std::filesystem::path& path);
void write_classification_csv(const std::filesystem::path& path, const Dataset& data);
// Subjects are renumbered 0..N-1 in ascending subject-id order.
std::vector<Unit> read_glmm_csv(const std::filesystem::path& path);
void write_glmm_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_scalar_csv(const std::filesystem::path& path);
void write_scalar_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace fedvar
