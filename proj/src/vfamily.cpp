// SPDX-License-Identifier: Apache-2.0
#include "fedvar/vfamily.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

template <class F>
void for_each_block(const std::vector<std::size_t>& blocks, F&& f) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    f(k, off, blocks[k]);
    off += blocks[k];
  }
}

// out = L x, blockwise
Vec block_unitri_matvec(const LocalVarParams& p, std::span<const double> x) {
  Vec out(x.begin(), x.end());
  for_each_block(p.blocks, [&](std::size_t k, std::size_t off, std::size_t size) {
    if (size < 2) return;
    const Vec y = unitri_matvec(p.L[k], x.subspan(off, size));
    std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
  });
  return out;
}

Vec block_unitri_solve(const LocalVarParams& p, std::span<const double> b, bool transposed) {
  Vec out(b.begin(), b.end());
  for_each_block(p.blocks, [&](std::size_t k, std::size_t off, std::size_t size) {
    if (size < 2) return;
    const Vec y = transposed ? unitri_solve_transposed(p.L[k], b.subspan(off, size))
                             : unitri_solve(p.L[k], b.subspan(off, size));
    std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
  });
  return out;
}

std::size_t block_strict_total(const std::vector<std::size_t>& blocks) {
  std::size_t s = 0;
  for (std::size_t b : blocks) s += LowerUnitriangular::strict_size(b);
  return s;
}

Vec exp_each(std::span<const double> x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
  return out;
}

// z - mu
Vec centered_global(const GlobalVarParams& g, std::span<const double> eps_G) {
  const Vec a = g.full_cov ? unitri_matvec(g.L, eps_G) : Vec(eps_G.begin(), eps_G.end());
  Vec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::exp(g.log_sigma[i]) * a[i];
  return d;
}

// Mean of z_L given z_G.
Vec conditional_mean(const LocalVarParams& p, std::span<const double> mu_G,
                     std::span<const double> z_G) {
  Vec m = p.mu_bar;
  if (p.coupled && p.global_dim() > 0) {
    Vec dz(z_G.size());
    kernels::scale_add(z_G, -1.0, mu_G, dz);
    const Vec c = matvec(p.C, dz);
    kernels::axpy(1.0, c, m);
  }
  return m;
}

}  // namespace

// ---- GlobalVarParams -------------------------------------------------------

GlobalVarParams GlobalVarParams::initial(std::size_t dim, bool full_cov, double log_sigma0) {
  require_dims(dim > 0, "GlobalVarParams: dim must be positive");
  GlobalVarParams p;
  p.mu.assign(dim, 0.0);
  p.log_sigma.assign(dim, log_sigma0);
  p.L = LowerUnitriangular(dim);
  p.full_cov = full_cov;
  return p;
}

std::size_t GlobalVarParams::flat_size(std::size_t dim, bool full_cov) {
  return 2 * dim + (full_cov ? LowerUnitriangular::strict_size(dim) : 0);
}

GlobalVarParams GlobalVarParams::unflatten(std::size_t dim, bool full_cov,
                                           std::span<const double> flat) {
  GlobalVarParams p = initial(dim, full_cov);
  p.assign_flat(flat);
  return p;
}

Vec GlobalVarParams::sigma() const { return exp_each(log_sigma); }

Vec GlobalVarParams::flatten() const {
  Vec out;
  out.reserve(flat_size());
  out.insert(out.end(), mu.begin(), mu.end());
  out.insert(out.end(), log_sigma.begin(), log_sigma.end());
  if (full_cov) out.insert(out.end(), L.strict().begin(), L.strict().end());
  return out;
}

void GlobalVarParams::assign_flat(std::span<const double> flat) {
  const std::size_t n = dim();
  require_dims(flat.size() == flat_size(), "GlobalVarParams: flat size mismatch");
  std::copy_n(flat.begin(), n, mu.begin());
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(n), n, log_sigma.begin());
  if (full_cov) {
    auto strict = L.strict();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(2 * n), flat.end(), strict.begin());
  }
}

Mat GlobalVarParams::covariance() const {
  const std::size_t n = dim();
  Mat A = full_cov ? dense_from_unitri(L) : Mat::identity(n);
  const Vec s = sigma();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) A(i, j) *= s[i];
  return matmul(A, transpose(A));
}

// ---- LocalVarParams --------------------------------------------------------

LocalVarParams LocalVarParams::initial(std::size_t dim, std::size_t global_dim,
                                       std::optional<std::vector<std::size_t>> block_structure,
                                       bool coupled, double log_sigma0) {
  LocalVarParams p;
  p.mu_bar.assign(dim, 0.0);
  p.log_sigma.assign(dim, log_sigma0);
  p.coupled = coupled;
  p.C = coupled ? Mat(dim, global_dim) : Mat(dim, 0);
  if (block_structure) {
    p.blocks = *block_structure;
    const std::size_t total = std::accumulate(p.blocks.begin(), p.blocks.end(), std::size_t{0});
    require_dims(total == dim, "LocalVarParams: block sizes do not sum to dim");
  } else if (dim > 0) {
    p.blocks = {dim};
  }
  p.L.reserve(p.blocks.size());
  for (std::size_t b : p.blocks) p.L.emplace_back(b);
  return p;
}

std::size_t LocalVarParams::flat_size() const noexcept {
  return 2 * dim() + block_strict_total(blocks) + (coupled ? C.rows * C.cols : 0);
}

Vec LocalVarParams::sigma() const { return exp_each(log_sigma); }

Vec LocalVarParams::flatten() const {
  Vec out;
  out.reserve(flat_size());
  out.insert(out.end(), mu_bar.begin(), mu_bar.end());
  out.insert(out.end(), log_sigma.begin(), log_sigma.end());
  for (const auto& l : L) out.insert(out.end(), l.strict().begin(), l.strict().end());
  if (coupled) out.insert(out.end(), C.data.begin(), C.data.end());
  return out;
}

void LocalVarParams::assign_flat(std::span<const double> flat) {
  require_dims(flat.size() == flat_size(), "LocalVarParams: flat size mismatch");
  const std::size_t n = dim();
  auto it = flat.begin();
  std::copy_n(it, n, mu_bar.begin());
  it += static_cast<std::ptrdiff_t>(n);
  std::copy_n(it, n, log_sigma.begin());
  it += static_cast<std::ptrdiff_t>(n);
  for (auto& l : L) {
    auto s = l.strict();
    std::copy_n(it, s.size(), s.begin());
    it += static_cast<std::ptrdiff_t>(s.size());
  }
  if (coupled) std::copy(it, flat.end(), C.data.begin());
}

Mat LocalVarParams::dense_L() const {
  Mat out(dim(), dim());
  for_each_block(blocks, [&](std::size_t k, std::size_t off, std::size_t size) {
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j <= i; ++j) out(off + i, off + j) = L[k].at(i, j);
  });
  return out;
}

Mat LocalVarParams::conditional_covariance() const {
  Mat A = dense_L();
  const Vec s = sigma();
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) A(i, j) *= s[i];
  return matmul(A, transpose(A));
}

// ---- sampling --------------------------------------------------------------

Vec sample_global(const GlobalVarParams& p, std::span<const double> eps_G) {
  require_dims(eps_G.size() == p.dim(), "sample_global: eps_G dimension mismatch");
  const Vec d = centered_global(p, eps_G);
  Vec z(p.dim());
  kernels::scale_add(p.mu, 1.0, d, z);
  return z;
}

Vec sample_local(const LocalVarParams& p, std::span<const double> mu_G,
                 std::span<const double> z_G, std::span<const double> eps_L) {
  require_dims(eps_L.size() == p.dim(), "sample_local: eps_L dimension mismatch");
  require_dims(!p.coupled || (mu_G.size() == p.global_dim() && z_G.size() == p.global_dim()),
               "sample_local: global dimension mismatch");
  Vec z = conditional_mean(p, mu_G, z_G);
  const Vec a = block_unitri_matvec(p, eps_L);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = z[i] + std::exp(p.log_sigma[i]) * a[i];
  return z;
}

LatentSample draw_latents(const GlobalVarParams& g, const LocalVarParams& l,
                          std::span<const double> eps_G, std::span<const double> eps_L) {
  LatentSample s;
  s.eps_G.assign(eps_G.begin(), eps_G.end());
  s.eps_L.assign(eps_L.begin(), eps_L.end());
  s.z_G = sample_global(g, eps_G);
  s.z_L = sample_local(l, g.mu, s.z_G, eps_L);
  return s;
}

// ---- densities -------------------------------------------------------------

GlobalLogq logq_global_with_grad(const GlobalVarParams& p, std::span<const double> z_G) {
  const std::size_t n = p.dim();
  require_dims(z_G.size() == n, "logq_global: z_G dimension mismatch");
  Vec r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = (z_G[i] - p.mu[i]) / std::exp(p.log_sigma[i]);
  const Vec w = p.full_cov ? unitri_solve(p.L, r) : r;
  double logdet = 0.0;
  for (double ls : p.log_sigma) logdet += ls;
  GlobalLogq out;
  out.value = -static_cast<double>(n) * kHalfLog2Pi - logdet - 0.5 * kernels::dot(w, w);
  Vec u = p.full_cov ? unitri_solve_transposed(p.L, w) : w;
  for (std::size_t i = 0; i < n; ++i) u[i] = -u[i] / std::exp(p.log_sigma[i]);
  out.d_zG = std::move(u);
  return out;
}

LocalLogq logq_local_with_grad(const LocalVarParams& p, std::span<const double> mu_G,
                               std::span<const double> z_G, std::span<const double> z_L) {
  const std::size_t n = p.dim();
  require_dims(z_L.size() == n, "logq_local: z_L dimension mismatch");
  require_dims(!p.coupled || (mu_G.size() == p.global_dim() && z_G.size() == p.global_dim()),
               "logq_local: global dimension mismatch");
  const Vec m = conditional_mean(p, mu_G, z_G);
  Vec r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = (z_L[i] - m[i]) / std::exp(p.log_sigma[i]);
  const Vec w = block_unitri_solve(p, r, false);
  double logdet = 0.0;
  for (double ls : p.log_sigma) logdet += ls;
  LocalLogq out;
  out.value = -static_cast<double>(n) * kHalfLog2Pi - logdet - 0.5 * kernels::dot(w, w);
  Vec u = block_unitri_solve(p, w, true);
  for (std::size_t i = 0; i < n; ++i) u[i] = -u[i] / std::exp(p.log_sigma[i]);
  if (p.coupled) {
    out.d_zG = matvec_transposed(p.C, u);
    for (double& x : out.d_zG) x = -x;
  } else {
    out.d_zG.assign(z_G.size(), 0.0);
  }
  out.d_zL = std::move(u);
  return out;
}

double logq_global(const GlobalVarParams& p, std::span<const double> z_G) {
  return logq_global_with_grad(p, z_G).value;
}

double logq_local(const LocalVarParams& p, std::span<const double> mu_G,
                  std::span<const double> z_G, std::span<const double> z_L) {
  return logq_local_with_grad(p, mu_G, z_G, z_L).value;
}

Vec grad_logq_global_wrt_z(const GlobalVarParams& p, std::span<const double> z_G) {
  return logq_global_with_grad(p, z_G).d_zG;
}

LocalScoreGrad grad_logq_local_wrt_z(const LocalVarParams& p, std::span<const double> mu_G,
                                     std::span<const double> z_G, std::span<const double> z_L) {
  LocalLogq e = logq_local_with_grad(p, mu_G, z_G, z_L);
  return {std::move(e.d_zG), std::move(e.d_zL)};
}

// ---- vector-Jacobian products ----------------------------------------------

Vec jacobian_vjp_global(const GlobalVarParams& p, std::span<const double> eps_G,
                        std::span<const double> cot) {
  const std::size_t n = p.dim();
  require_dims(eps_G.size() == n && cot.size() == n, "jacobian_vjp_global: dimension mismatch");
  Vec out(p.flat_size(), 0.0);
  const Vec a = p.full_cov ? unitri_matvec(p.L, eps_G) : Vec(eps_G.begin(), eps_G.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::exp(p.log_sigma[i]);
    out[i] = cot[i];
    out[n + i] = cot[i] * s * a[i];
    if (p.full_cov) {
      for (std::size_t j = 0; j < i; ++j) {
        out[2 * n + LowerUnitriangular::offset(i, j)] = cot[i] * s * eps_G[j];
      }
    }
  }
  return out;
}

LocalVjp jacobian_vjp_local(const LocalVarParams& p, const GlobalVarParams& g,
                            std::span<const double> eps_G, std::span<const double> eps_L,
                            std::span<const double> cot) {
  const std::size_t n = p.dim();
  require_dims(eps_L.size() == n && cot.size() == n, "jacobian_vjp_local: dimension mismatch");
  require_dims(eps_G.size() == g.dim(), "jacobian_vjp_local: eps_G dimension mismatch");
  require_dims(!p.coupled || p.global_dim() == g.dim(), "jacobian_vjp_local: C shape mismatch");

  LocalVjp out;
  out.local.assign(p.flat_size(), 0.0);
  const Vec a = block_unitri_matvec(p, eps_L);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::exp(p.log_sigma[i]);
    out.local[i] = cot[i];
    out.local[n + i] = cot[i] * s * a[i];
  }
  std::size_t l_off = 2 * n;
  for_each_block(p.blocks, [&](std::size_t, std::size_t off, std::size_t size) {
    for (std::size_t i = 1; i < size; ++i) {
      const double ci = cot[off + i] * std::exp(p.log_sigma[off + i]);
      for (std::size_t j = 0; j < i; ++j) {
        out.local[l_off + LowerUnitriangular::offset(i, j)] = ci * eps_L[off + j];
      }
    }
    l_off += LowerUnitriangular::strict_size(size);
  });

  if (!p.coupled) {
    out.global.assign(g.flat_size(), 0.0);
    return out;
  }

  // d z_L / d C_ab = (z_G - mu_G)_b; z_G - mu_G depends on (sigma_G, L_G) only.
  const Vec d_G = centered_global(g, eps_G);
  const std::size_t m = g.dim();
  for (std::size_t r = 0; r < n; ++r) {
    std::span<double> grad_row(out.local.data() + l_off + r * m, m);
    kernels::axpy(cot[r], d_G, grad_row);
  }
  const Vec back = matvec_transposed(p.C, cot);
  out.global = jacobian_vjp_global(g, eps_G, back);
  std::fill_n(out.global.begin(), m, 0.0);
  return out;
}

}  // namespace fedvar
