// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/model.hpp"

#include "fedvar/error.hpp"

namespace fedvar {

void Model::validate(const Shard&) const {}

Vec Model::class_probabilities(std::span<const double>, std::span<const double>,
                               std::span<const double>) const {
  throw ConfigError(name() + " is not a classification model");
}

std::size_t Model::local_dim(const Shard& shard) const {
  const LocalShape s = local_shape();
  return s.kind == LocalKind::per_unit ? s.dim * shard.size() : s.dim;
}

std::vector<std::size_t> Model::default_local_blocks(const Shard& shard) const {
  const LocalShape s = local_shape();
  if (s.dim == 0) return {};
  if (s.kind == LocalKind::per_silo) return {s.dim};
  return std::vector<std::size_t>(shard.size(), s.dim);
}

}  // namespace fedvar
