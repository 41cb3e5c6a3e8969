// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedvar/models/model.hpp"
#include "fedvar/rng.hpp"
#include "fedvar/vfamily.hpp"

// Single-sample ELBO and sticking-the-landing gradients, split into the
// server term L0 = log p(z_G) - log q(z_G) and per-silo terms
// Lj = log p(y_j, z_Lj | z_G) - log q(z_Lj | z_G). Variational parameters
// appear in log q only as constants; gradients flow through the sampling
// maps alone.

namespace fedvar {

// What a silo sends the server each round.
struct SiloGradReport {
  std::size_t silo_id = 0;
  std::size_t round = 0;
  Vec g_theta;
  Vec g_eta_G;
  double elbo_term = 0.0;
};

struct ElboEstimate {
  double value = 0.0;
  double server_term = 0.0;
  std::vector<double> silo_terms;
};

// Noise for one round. eps_G is shared by every silo; per-unit local noise
// is keyed by global index so it does not depend on the partition.
Vec global_noise(const RngKey& round_key, std::size_t n_G);
Vec local_noise(const Model& model, const Shard& shard, const RngKey& round_key);

// L0 with its z_G gradient, the eta_G VJP of that gradient, and d_theta of
// the global prior.
struct ServerTerms {
  double value = 0.0;
  Vec d_zG;
  Vec g_eta_G;
  Vec g_theta;
};
ServerTerms server_terms(const Model& model, std::span<const double> theta,
                         const GlobalVarParams& eta_G, std::span<const double> z_G,
                         std::span<const double> eps_G);

// Lj and its gradients at a fixed sample. `scale` multiplies the local
// joint only (likelihood rescaling during averaging phases).
struct SiloTerm {
  double value = 0.0;
  Vec d_theta;
  Vec d_zG;
  Vec d_zL;
};
SiloTerm silo_term(const Model& model, const Shard& shard, std::span<const double> theta,
                   const GlobalVarParams& eta_G, const LocalVarParams& eta_L,
                   const LatentSample& sample, double scale = 1.0);

// dLj/d eta_Lj through z_Lj.
Vec silo_local_grad(const LocalVarParams& eta_L, const GlobalVarParams& eta_G,
                    const LatentSample& sample, const SiloTerm& term);
// g_j^eta: dLj/d eta_G through z_G and through the local sampling map.
Vec silo_global_grad_contrib(const LocalVarParams& eta_L, const GlobalVarParams& eta_G,
                             const LatentSample& sample, const SiloTerm& term);

// Server aggregate: the L0 VJP plus every silo's g_j^eta, folded in
// ascending silo id. Throws ProtocolError unless ids are exactly 0..J-1.
Vec server_global_grad(std::span<const double> server_eta_term,
                       std::span<const SiloGradReport> reports, std::size_t J);
Vec server_theta_grad(std::span<const double> server_theta_term,
                      std::span<const SiloGradReport> reports, std::size_t J);

// Throws NumericalError naming `what` if any entry is non-finite.
void require_finite(std::span<const double> v, const char* what);
void require_finite(double v, const char* what);

}  // namespace fedvar
