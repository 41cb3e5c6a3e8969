// SPDX-License-Identifier: Apache-2.0
#include "fedvar/estimator.hpp"

#include <cmath>
#include <string>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw NumericalError(std::string("non-finite ") + what);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what);
}

Vec global_noise(const RngKey& round_key, std::size_t n_G) {
  return std_normal(round_key.derive(rng_label::kGlobal), n_G);
}

Vec local_noise(const Model& model, const Shard& shard, const RngKey& round_key) {
  const LocalShape s = model.local_shape();
  if (s.dim == 0) return {};
  if (s.kind == LocalKind::per_silo) {
    return std_normal(round_key.derive(rng_label::kLocalSilo).derive(shard.silo_id), s.dim);
  }
  const RngKey base = round_key.derive(rng_label::kLocal);
  Vec eps;
  eps.reserve(s.dim * shard.size());
  for (const auto& u : shard.units) {
    const Vec e = std_normal(base.derive(u.global_index), s.dim);
    eps.insert(eps.end(), e.begin(), e.end());
  }
  return eps;
}

ServerTerms server_terms(const Model& model, std::span<const double> theta,
                         const GlobalVarParams& eta_G, std::span<const double> z_G,
                         std::span<const double> eps_G) {
  const JointEval prior = model.log_prior_global(theta, z_G);
  const GlobalLogq q = logq_global_with_grad(eta_G, z_G);
  ServerTerms t;
  t.value = prior.value - q.value;
  t.d_zG = prior.d_zG;
  kernels::axpy(-1.0, q.d_zG, t.d_zG);
  t.g_eta_G = jacobian_vjp_global(eta_G, eps_G, t.d_zG);
  t.g_theta = prior.d_theta;
  if (t.g_theta.empty()) t.g_theta.assign(model.theta_dim(), 0.0);
  require_finite(t.value, "server ELBO term");
  require_finite(t.g_eta_G, "server eta_G gradient");
  require_finite(t.g_theta, "server theta gradient");
  return t;
}

SiloTerm silo_term(const Model& model, const Shard& shard, std::span<const double> theta,
                   const GlobalVarParams& eta_G, const LocalVarParams& eta_L,
                   const LatentSample& sample, double scale) {
  const JointEval p = model.log_local_joint(shard, theta, sample.z_G, sample.z_L);
  const LocalLogq q = logq_local_with_grad(eta_L, eta_G.mu, sample.z_G, sample.z_L);
  SiloTerm t;
  t.value = scale * p.value - q.value;
  t.d_zG.assign(sample.z_G.size(), 0.0);
  t.d_zL.assign(sample.z_L.size(), 0.0);
  if (!p.d_zG.empty()) kernels::axpy(scale, p.d_zG, t.d_zG);
  if (!p.d_zL.empty()) kernels::axpy(scale, p.d_zL, t.d_zL);
  kernels::axpy(-1.0, q.d_zG, t.d_zG);
  kernels::axpy(-1.0, q.d_zL, t.d_zL);
  t.d_theta.assign(model.theta_dim(), 0.0);
  if (!p.d_theta.empty()) kernels::axpy(scale, p.d_theta, t.d_theta);
  require_finite(t.value, "silo ELBO term");
  require_finite(t.d_zG, "silo z_G gradient");
  require_finite(t.d_zL, "silo z_L gradient");
  require_finite(t.d_theta, "silo theta gradient");
  return t;
}

Vec silo_local_grad(const LocalVarParams& eta_L, const GlobalVarParams& eta_G,
                    const LatentSample& sample, const SiloTerm& term) {
  Vec g = jacobian_vjp_local(eta_L, eta_G, sample.eps_G, sample.eps_L, term.d_zL).local;
  require_finite(g, "eta_L gradient");
  return g;
}

Vec silo_global_grad_contrib(const LocalVarParams& eta_L, const GlobalVarParams& eta_G,
                             const LatentSample& sample, const SiloTerm& term) {
  Vec g = jacobian_vjp_global(eta_G, sample.eps_G, term.d_zG);
  const LocalVjp through_local =
      jacobian_vjp_local(eta_L, eta_G, sample.eps_G, sample.eps_L, term.d_zL);
  kernels::axpy(1.0, through_local.global, g);
  require_finite(g, "g_eta_G");
  return g;
}

namespace {

std::vector<const SiloGradReport*> ordered(std::span<const SiloGradReport> reports,
                                           std::size_t J) {
  if (reports.size() != J) {
    throw ProtocolError("expected " + std::to_string(J) + " silo reports, got " +
                        std::to_string(reports.size()));
  }
  std::vector<const SiloGradReport*> slot(J, nullptr);
  for (const auto& r : reports) {
    if (r.silo_id >= J) throw ProtocolError("report from unknown silo " + std::to_string(r.silo_id));
    if (slot[r.silo_id] != nullptr) {
      throw ProtocolError("duplicate report from silo " + std::to_string(r.silo_id));
    }
    slot[r.silo_id] = &r;
  }
  return slot;
}

}  // namespace

Vec server_global_grad(std::span<const double> server_eta_term,
                       std::span<const SiloGradReport> reports, std::size_t J) {
  Vec g(server_eta_term.begin(), server_eta_term.end());
  for (const SiloGradReport* r : ordered(reports, J)) {
    require_dims(r->g_eta_G.size() == g.size(), "g_eta_G size does not match eta_G layout");
    kernels::axpy(1.0, r->g_eta_G, g);
  }
  return g;
}

Vec server_theta_grad(std::span<const double> server_theta_term,
                      std::span<const SiloGradReport> reports, std::size_t J) {
  Vec g(server_theta_term.begin(), server_theta_term.end());
  for (const SiloGradReport* r : ordered(reports, J)) {
    require_dims(r->g_theta.size() == g.size(), "g_theta size does not match theta");
    kernels::axpy(1.0, r->g_theta, g);
  }
  return g;
}

}  // namespace fedvar
