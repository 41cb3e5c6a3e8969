// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedvar/data.hpp"
#include "fedvar/linalg.hpp"

namespace fedvar {

enum class LocalKind {
  per_unit,  // `dim` latents per unit; dimension of z_L is N_j * dim
  per_silo,  // `dim` latents for the whole silo
};

struct LocalShape {
  LocalKind kind = LocalKind::per_unit;
  std::size_t dim = 0;
};

// A log-density term and its gradients. Unused gradients are empty.
struct JointEval {
  double value = 0.0;
  Vec d_theta;
  Vec d_zG;
  Vec d_zL;
};

// p_theta(z_G) prod_j p_theta(y_j, z_Lj | z_G). Implementations are
// immutable and safe to evaluate concurrently.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::size_t global_dim() const = 0;
  virtual std::size_t theta_dim() const { return 0; }
  virtual LocalShape local_shape() const = 0;
  virtual Vec initial_theta() const { return Vec(theta_dim(), 0.0); }
  // Observations across silos share one likelihood and i.i.d. local
  // structure, the precondition for likelihood rescaling and averaging.
  virtual bool exchangeable() const { return local_shape().kind == LocalKind::per_unit; }

  // log p_theta(z_G) with d_theta, d_zG.
  virtual JointEval log_prior_global(std::span<const double> theta,
                                     std::span<const double> z_G) const = 0;
  // log p_theta(y_j, z_Lj | z_G) with d_theta, d_zG, d_zL. Reads only `shard`.
  virtual JointEval log_local_joint(const Shard& shard, std::span<const double> theta,
                                    std::span<const double> z_G,
                                    std::span<const double> z_L) const = 0;

  // Throws ConfigError for data the likelihood cannot accept.
  virtual void validate(const Shard& shard) const;

  // Classification models only.
  virtual std::size_t num_classes() const { return 0; }
  virtual Vec class_probabilities(std::span<const double> z_G, std::span<const double> z_L,
                                  std::span<const double> x) const;

  std::size_t local_dim(const Shard& shard) const;
  // Per-unit models get one independent block per unit, per-silo models a
  // single dense block.
  std::vector<std::size_t> default_local_blocks(const Shard& shard) const;
};

}  // namespace fedvar
