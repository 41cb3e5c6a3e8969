// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedvar/linalg.hpp"

namespace fedvar {

inline constexpr double kDefaultLogSigma = -2.302585092994045684;  // log(0.1)

// q(z_G) = N(mu, diag(sigma) L L^T diag(sigma)), sampled as
// z_G = mu + sigma ⊙ (L eps_G).
//
// Flat layout: mu, log_sigma, then the strict-lower entries of L (row-major)
// when full_cov is set. With full_cov unset, L is the identity and carries
// no parameters.
struct GlobalVarParams {
  Vec mu;
  Vec log_sigma;
  LowerUnitriangular L;
  bool full_cov = true;

  static GlobalVarParams initial(std::size_t dim, bool full_cov,
                                 double log_sigma0 = kDefaultLogSigma);
  static GlobalVarParams unflatten(std::size_t dim, bool full_cov, std::span<const double> flat);
  static std::size_t flat_size(std::size_t dim, bool full_cov);

  std::size_t dim() const noexcept { return mu.size(); }
  std::size_t flat_size() const noexcept { return flat_size(dim(), full_cov); }
  Vec sigma() const;
  Vec flatten() const;
  void assign_flat(std::span<const double> flat);
  Mat covariance() const;
};

// q(z_L | z_G) = N(mu_bar + C (z_G - mu_G), diag(sigma) L L^T diag(sigma)),
// sampled as z_L = mu_bar + C (z_G - mu_G) + sigma ⊙ (L eps_L).
//
// L is block diagonal over `blocks` (sizes summing to dim); entries outside
// the blocks are structurally zero and not parameters. `coupled` unset means
// C is identically zero and not a parameter either.
//
// Flat layout: mu_bar, log_sigma, strict-lower entries of each L block in
// block order, then C row-major (only when coupled).
struct LocalVarParams {
  Vec mu_bar;
  Mat C;
  Vec log_sigma;
  std::vector<std::size_t> blocks;
  std::vector<LowerUnitriangular> L;
  bool coupled = true;

  // No block structure means one dense block.
  static LocalVarParams initial(std::size_t dim, std::size_t global_dim,
                                std::optional<std::vector<std::size_t>> block_structure,
                                bool coupled, double log_sigma0 = kDefaultLogSigma);

  std::size_t dim() const noexcept { return mu_bar.size(); }
  std::size_t global_dim() const noexcept { return C.cols; }
  std::size_t flat_size() const noexcept;
  Vec sigma() const;
  Vec flatten() const;
  void assign_flat(std::span<const double> flat);
  // diag(sigma) L L^T diag(sigma), dense.
  Mat conditional_covariance() const;
  Mat dense_L() const;
};

struct LatentSample {
  Vec z_G;
  Vec z_L;
  Vec eps_G;
  Vec eps_L;
};

Vec sample_global(const GlobalVarParams& p, std::span<const double> eps_G);
Vec sample_local(const LocalVarParams& p, std::span<const double> mu_G,
                 std::span<const double> z_G, std::span<const double> eps_L);
LatentSample draw_latents(const GlobalVarParams& g, const LocalVarParams& l,
                          std::span<const double> eps_G, std::span<const double> eps_L);

double logq_global(const GlobalVarParams& p, std::span<const double> z_G);
double logq_local(const LocalVarParams& p, std::span<const double> mu_G,
                  std::span<const double> z_G, std::span<const double> z_L);

// Gradients with respect to z, variational parameters held fixed.
Vec grad_logq_global_wrt_z(const GlobalVarParams& p, std::span<const double> z_G);

struct LocalScoreGrad {
  Vec d_zG;
  Vec d_zL;
};
LocalScoreGrad grad_logq_local_wrt_z(const LocalVarParams& p, std::span<const double> mu_G,
                                     std::span<const double> z_G, std::span<const double> z_L);

struct GlobalLogq {
  double value;
  Vec d_zG;
};
GlobalLogq logq_global_with_grad(const GlobalVarParams& p, std::span<const double> z_G);

struct LocalLogq {
  double value;
  Vec d_zG;
  Vec d_zL;
};
LocalLogq logq_local_with_grad(const LocalVarParams& p, std::span<const double> mu_G,
                               std::span<const double> z_G, std::span<const double> z_L);

// (d sample_global / d eta_G)^T cotangent, in the flat eta_G layout.
Vec jacobian_vjp_global(const GlobalVarParams& p, std::span<const double> eps_G,
                        std::span<const double> cotangent);

struct LocalVjp {
  Vec local;   // flat eta_L layout
  Vec global;  // flat eta_G layout
};
// VJP of z_L = f(eta_G, eta_L; eps_G, eps_L) against both parameter blocks.
// The mu_G entries of `global` are zero: mu_G enters through z_G and the
// explicit -C mu_G with opposite signs.
LocalVjp jacobian_vjp_local(const LocalVarParams& p, const GlobalVarParams& g,
                            std::span<const double> eps_G, std::span<const double> eps_L,
                            std::span<const double> cotangent);

}  // namespace fedvar
