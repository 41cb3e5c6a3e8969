// SPDX-License-Identifier: Apache-2.0
#include "fedvar/averaging.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"
#include "fedvar/thread_pool.hpp"

namespace fedvar {

GaussianSummary GaussianSummary::full(Vec mean, Mat cov) {
  require_dims(cov.rows == mean.size() && cov.cols == mean.size(),
               "GaussianSummary: covariance shape does not match mean");
  return {std::move(mean), std::move(cov), {}};
}

GaussianSummary GaussianSummary::diagonal(Vec mean, Vec var) {
  require_dims(var.size() == mean.size(), "GaussianSummary: variance size does not match mean");
  return {std::move(mean), {}, std::move(var)};
}

namespace {

std::size_t common_dim(std::span<const GaussianSummary> s) {
  if (s.empty()) throw DimensionError("barycenter of an empty collection");
  const std::size_t n = s.front().dim();
  for (const auto& g : s) require_dims(g.dim() == n, "barycenter inputs differ in dimension");
  return n;
}

Mat dense_cov(const GaussianSummary& g) {
  return g.is_diagonal() ? Mat::diagonal(g.var) : g.cov;
}

// J^-1 sum_j (R S_j R)^1/2 with R = S^1/2.
Mat fixed_point_map(const Mat& root, std::span<const Mat> covs) {
  Mat acc(root.rows, root.cols);
  for (const Mat& c : covs) {
    const Mat inner = sqrtm_psd(matmul(matmul(root, c), root));
    kernels::axpy(1.0, inner.data, acc.data);
  }
  return scaled(acc, 1.0 / static_cast<double>(covs.size()));
}

Mat symmetrized(const Mat& m) { return scaled(add(m, transpose(m)), 0.5); }

}  // namespace

Vec barycenter_mean(std::span<const GaussianSummary> summaries) {
  const std::size_t n = common_dim(summaries);
  Vec mean(n, 0.0);
  for (const auto& g : summaries) kernels::axpy(1.0, g.mean, mean);
  const double w = 1.0 / static_cast<double>(summaries.size());
  for (double& v : mean) v *= w;
  return mean;
}

Vec barycenter_cov_diagonal(std::span<const GaussianSummary> summaries) {
  const std::size_t n = common_dim(summaries);
  Vec sd(n, 0.0);
  for (const auto& g : summaries) {
    if (!g.is_diagonal()) throw DimensionError("diagonal barycenter needs diagonal inputs");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(g.var[i] > 0.0)) throw NumericalError("barycenter input variance must be positive");
      sd[i] += std::sqrt(g.var[i]);
    }
  }
  const double w = 1.0 / static_cast<double>(summaries.size());
  for (double& v : sd) v = (v * w) * (v * w);
  return sd;
}

double barycenter_residual(const Mat& S, std::span<const GaussianSummary> summaries) {
  common_dim(summaries);
  std::vector<Mat> covs;
  for (const auto& g : summaries) covs.push_back(dense_cov(g));
  return frobenius_norm(subtract(S, fixed_point_map(sqrtm_psd(S), covs)));
}

FixedPointResult barycenter_cov_fixed_point(std::span<const GaussianSummary> summaries,
                                            double tol, std::size_t max_iter) {
  const std::size_t n = common_dim(summaries);
  if (!(tol > 0.0)) throw ConfigError("barycenter tolerance must be positive");
  std::vector<Mat> covs;
  Mat S(n, n);
  for (const auto& g : summaries) {
    covs.push_back(dense_cov(g));
    kernels::axpy(1.0, covs.back().data, S.data);
  }
  S = scaled(S, 1.0 / static_cast<double>(covs.size()));
  FixedPointResult r;
  for (;;) {
    const Mat root = sqrtm_psd(S);
    const Mat T = fixed_point_map(root, covs);
    r.residual = frobenius_norm(subtract(S, T));
    if (r.residual < tol) break;
    if (r.iterations == max_iter) {
      throw ConvergenceError("barycenter fixed point did not converge", r.iterations, r.residual);
    }
    const Mat inv_root = inv_sqrtm_pd(S);
    const Mat next = symmetrized(matmul(matmul(inv_root, matmul(T, T)), inv_root));
    r.change = frobenius_norm(subtract(next, S));
    S = next;
    ++r.iterations;
  }
  r.cov = S;
  return r;
}

GaussianSummary summarize(const GlobalVarParams& p) {
  if (!p.full_cov) {
    Vec var = p.sigma();
    for (double& v : var) v *= v;
    return GaussianSummary::diagonal(p.mu, std::move(var));
  }
  return GaussianSummary::full(p.mu, p.covariance());
}

GlobalVarParams from_summary(const Vec& mean, const Mat& cov) {
  const std::size_t n = mean.size();
  const Mat K = cholesky_lower(cov);
  GlobalVarParams p = GlobalVarParams::initial(n, true);
  p.mu = mean;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = K(i, i);
    p.log_sigma[i] = std::log(s);
    for (std::size_t k = 0; k < i; ++k) {
      p.L.strict()[LowerUnitriangular::offset(i, k)] = K(i, k) / s;
    }
  }
  return p;
}

GlobalVarParams from_summary_diagonal(const Vec& mean, std::span<const double> sd) {
  require_dims(sd.size() == mean.size(), "standard deviations do not match mean");
  GlobalVarParams p = GlobalVarParams::initial(mean.size(), false);
  p.mu = mean;
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (!(sd[i] > 0.0)) throw NumericalError("barycenter standard deviation must be positive");
    p.log_sigma[i] = std::log(sd[i]);
  }
  return p;
}

GlobalAverage average_global(std::span<const GlobalVarParams> params, BarycenterMode mode,
                             double tol, std::size_t max_iter) {
  if (params.empty()) throw DimensionError("barycenter of an empty collection");
  if (params.size() == 1) return {params.front(), 0, 0.0};
  std::vector<GaussianSummary> summaries;
  for (const auto& p : params) {
    if (mode == BarycenterMode::diagonal && p.full_cov) {
      throw ConfigError("diagonal barycenter needs diagonal global covariances");
    }
    summaries.push_back(summarize(p));
  }
  const Vec mean = barycenter_mean(summaries);
  if (mode == BarycenterMode::diagonal) {
    // sigma_* is the mean of the sigma_j; this is the square root of the
    // closed-form barycenter variance without a square/root round trip.
    const std::size_t n = mean.size();
    Vec sd(n, 0.0);
    for (const auto& p : params) kernels::axpy(1.0, p.sigma(), sd);
    const double w = 1.0 / static_cast<double>(params.size());
    for (double& v : sd) v *= w;
    return {from_summary_diagonal(mean, sd), 0, 0.0};
  }
  const FixedPointResult fp = barycenter_cov_fixed_point(summaries, tol, max_iter);
  return {from_summary(mean, fp.cov), fp.iterations, fp.residual};
}

void AvgConfig::validate() const {
  base.validate();
  if (rounds == 0) throw ConfigError("averaging needs at least one round");
  if (local_steps == 0) throw ConfigError("averaging needs at least one local step");
  if (!(tol > 0.0)) throw ConfigError("barycenter tolerance must be positive");
  if (max_iter == 0) throw ConfigError("barycenter max_iter must be positive");
  if ((mode == BarycenterMode::full) != base.family.full_cov_global) {
    throw ConfigError("barycenter mode must match the global covariance structure");
  }
}

void local_training_phase(AvgSiloState& silo, const Model& model, std::span<const double> theta,
                          const GlobalVarParams& eta_G, std::size_t m, std::size_t N,
                          std::size_t first_step) {
  if (m == 0) throw ConfigError("local phase needs at least one step");
  SiloState& s = silo.local;
  if (s.shard.size() == 0) throw ConfigError("local phase on an empty silo");
  const double scale = static_cast<double>(N) / static_cast<double>(s.shard.size());
  const double w = 1.0 / static_cast<double>(s.samples);
  const std::size_t n = eta_G.dim();
  silo.theta.assign(theta.begin(), theta.end());
  silo.eta_G = eta_G;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t t = first_step + i;
    std::vector<LatentSample> samples;
    Vec g_L(s.eta_L.flat_size(), 0.0);
    for (std::size_t k = 0; k < s.samples; ++k) {
      const RngKey key = sample_key(s.run_key, t, k);
      const Vec eps_G = global_noise(key, n);
      const Vec eps_L = local_noise(model, s.shard, key);
      samples.push_back(draw_latents(silo.eta_G, s.eta_L, eps_G, eps_L));
      const SiloTerm term =
          silo_term(model, s.shard, silo.theta, silo.eta_G, s.eta_L, samples.back(), scale);
      kernels::axpy(w, silo_local_grad(s.eta_L, silo.eta_G, samples.back(), term), g_L);
    }
    if (!g_L.empty()) {
      Vec flat = s.eta_L.flatten();
      adam_step(s.adam_L, flat, g_L, Direction::ascend);
      require_finite(flat, "eta_L after step");
      s.eta_L.assign_flat(flat);
    }
    Vec eta_term(silo.eta_G.flat_size(), 0.0);
    Vec theta_term(silo.theta.size(), 0.0);
    Vec eta_local(silo.eta_G.flat_size(), 0.0);
    Vec theta_local(silo.theta.size(), 0.0);
    for (const auto& sample : samples) {
      const ServerTerms st = server_terms(model, silo.theta, silo.eta_G, sample.z_G, sample.eps_G);
      kernels::axpy(w, st.g_eta_G, eta_term);
      kernels::axpy(w, st.g_theta, theta_term);
      const SiloTerm term =
          silo_term(model, s.shard, silo.theta, silo.eta_G, s.eta_L, sample, scale);
      kernels::axpy(w, silo_global_grad_contrib(s.eta_L, silo.eta_G, sample, term), eta_local);
      kernels::axpy(w, term.d_theta, theta_local);
    }
    kernels::axpy(1.0, eta_local, eta_term);
    kernels::axpy(1.0, theta_local, theta_term);
    Vec flat = silo.eta_G.flatten();
    adam_step(silo.adam_eta_G, flat, eta_term, Direction::ascend);
    require_finite(flat, "local eta_G after step");
    silo.eta_G.assign_flat(flat);
    if (!silo.theta.empty()) {
      adam_step(silo.adam_theta, silo.theta, theta_term, Direction::ascend);
      require_finite(silo.theta, "local theta after step");
    }
  }
  s.round = first_step + m;
}

namespace {

RoundStats evaluate_at(std::vector<AvgSiloState>& silos, const Model& model,
                       const RunConfig& base, std::size_t step, const Vec& theta,
                       const GlobalVarParams& eta_G, ThreadPool& pool) {
  ServerState ev;
  ev.round = step;
  ev.num_silos = silos.size();
  ev.samples = base.samples;
  ev.theta = theta;
  ev.eta_G = eta_G;
  ev.run_key = RngKey(base.seed);
  const ServerBroadcast b = make_broadcast(ev);
  std::vector<SiloGradReport> reports(silos.size());
  pool.parallel_for(silos.size(), [&](std::size_t j) {
    silos[j].local.round = step;
    reports[j] = silo_evaluate(silos[j].local, b, model);
  });
  return server_evaluate(ev, model, reports);
}

}  // namespace

AvgResult run_sfvi_avg(const AvgConfig& config, const Model& model, const Dataset& data) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  data.validate();
  if (!model.exchangeable()) {
    throw ConfigError(model.name() + " lacks the exchangeable local structure averaging needs");
  }
  const RunConfig& base = config.base;
  const std::size_t J = data.num_silos();
  const std::size_t N = data.total_units();
  const std::size_t m = config.local_steps;

  AvgResult res;
  res.theta = model.initial_theta();
  res.eta_G = GlobalVarParams::initial(model.global_dim(), base.family.full_cov_global,
                                       base.family.log_sigma0);
  for (const auto& shard : data.silos) {
    res.silos.push_back({make_silo(model, base, shard), res.theta, res.eta_G,
                         AdamState::fresh(res.theta.size(), base.adam),
                         AdamState::fresh(res.eta_G.flat_size(), base.adam)});
  }
  ThreadPool pool(base.threads > 0 ? (base.threads > 1 ? base.threads : 0)
                                   : ThreadPool::default_workers(J));

  std::vector<GlobalVarParams> locals(J);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto t0 = Clock::now();
    const RoundStats s = evaluate_at(res.silos, model, base, r * m, res.theta, res.eta_G, pool);
    pool.parallel_for(J, [&](std::size_t j) {
      local_training_phase(res.silos[j], model, res.theta, res.eta_G, m, N, r * m);
    });
    Vec theta(res.theta.size(), 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      const double w = config.weighted_theta
                           ? static_cast<double>(res.silos[j].local.shard.size()) /
                                 static_cast<double>(N)
                           : 1.0;
      kernels::axpy(w, res.silos[j].theta, theta);
      locals[j] = res.silos[j].eta_G;
    }
    if (!config.weighted_theta) {
      const double w = 1.0 / static_cast<double>(J);
      for (double& v : theta) v *= w;
    }
    res.theta = std::move(theta);
    const GlobalAverage avg = average_global(locals, config.mode, config.tol, config.max_iter);
    res.eta_G = avg.params;
    res.bary.push_back({r, avg.iterations, avg.residual});
    const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
    res.trace.rows.push_back({r, s.elbo, s.grad_norm_theta, s.grad_norm_eta_G, dt.count()});
  }
  const auto t0 = Clock::now();
  const RoundStats s =
      evaluate_at(res.silos, model, base, config.rounds * m, res.theta, res.eta_G, pool);
  const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
  res.trace.rows.push_back({config.rounds, s.elbo, s.grad_norm_theta, s.grad_norm_eta_G, dt.count()});
  return res;
}

void write_bary_csv(const std::filesystem::path& path, std::span<const BaryRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "round,bary_iters,bary_residual\n";
  for (const auto& r : rows) out << r.round << ',' << r.iterations << ',' << r.residual << '\n';
}

}  // namespace fedvar
