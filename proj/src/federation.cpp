// SPDX-License-Identifier: Apache-2.0
#include "fedvar/federation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"
#include "fedvar/thread_pool.hpp"

namespace fedvar {

void RunConfig::validate() const {
  adam.validate();
  if (samples == 0) throw ConfigError("samples must be at least 1");
  if (!std::isfinite(family.log_sigma0)) throw ConfigError("initial log sigma must be finite");
}

RngKey sample_key(const RngKey& run_key, std::uint64_t round, std::size_t s) {
  const RngKey r = run_key.derive(round);
  return s == 0 ? r : r.derive(rng_label::kSample).derive(s);
}

ServerState make_server(const Model& model, const RunConfig& config, std::size_t num_silos) {
  if (num_silos == 0) throw ConfigError("need at least one silo");
  ServerState s;
  s.num_silos = num_silos;
  s.samples = config.samples;
  s.theta = model.initial_theta();
  require_dims(s.theta.size() == model.theta_dim(), "initial theta has wrong size");
  s.eta_G = GlobalVarParams::initial(model.global_dim(), config.family.full_cov_global,
                                     config.family.log_sigma0);
  s.adam_theta = AdamState::fresh(s.theta.size(), config.adam);
  s.adam_eta_G = AdamState::fresh(s.eta_G.flat_size(), config.adam);
  s.run_key = RngKey(config.seed);
  return s;
}

SiloState make_silo(const Model& model, const RunConfig& config, Shard shard) {
  model.validate(shard);
  SiloState s;
  s.silo_id = shard.silo_id;
  s.samples = config.samples;
  s.full_cov_global = config.family.full_cov_global;
  s.eta_L = LocalVarParams::initial(model.local_dim(shard), model.global_dim(),
                                    model.default_local_blocks(shard),
                                    config.family.coupled_local, config.family.log_sigma0);
  s.adam_L = AdamState::fresh(s.eta_L.flat_size(), config.adam);
  s.shard = std::move(shard);
  s.run_key = RngKey(config.seed);
  return s;
}

ServerBroadcast make_broadcast(const ServerState& server) {
  ServerBroadcast b;
  b.round = server.round;
  b.theta = server.theta;
  b.eta_G = server.eta_G.flatten();
  const std::size_t n = server.eta_G.dim();
  b.eps_G.reserve(n * server.samples);
  for (std::size_t s = 0; s < server.samples; ++s) {
    const Vec e = global_noise(sample_key(server.run_key, server.round, s), n);
    b.eps_G.insert(b.eps_G.end(), e.begin(), e.end());
  }
  return b;
}

namespace {

struct SiloView {
  GlobalVarParams eta_G;
  std::vector<LatentSample> samples;
};

SiloView unpack(const SiloState& silo, const ServerBroadcast& b, const Model& model) {
  if (b.round != silo.round) {
    throw ProtocolError("silo " + std::to_string(silo.silo_id) + " expected round " +
                        std::to_string(silo.round) + ", got " + std::to_string(b.round));
  }
  const std::size_t n = model.global_dim();
  require_dims(b.eps_G.size() == n * silo.samples, "broadcast eps_G has wrong size");
  require_dims(b.theta.size() == model.theta_dim(), "broadcast theta has wrong size");
  SiloView v{GlobalVarParams::unflatten(n, silo.full_cov_global, b.eta_G), {}};
  for (std::size_t s = 0; s < silo.samples; ++s) {
    const std::span<const double> eps_G(b.eps_G.data() + s * n, n);
    const Vec eps_L = local_noise(model, silo.shard, sample_key(silo.run_key, b.round, s));
    v.samples.push_back(draw_latents(v.eta_G, silo.eta_L, eps_G, eps_L));
  }
  return v;
}

SiloGradReport report_at(const SiloState& silo, const ServerBroadcast& b, const Model& model,
                         const SiloView& v, double* elbo_out) {
  const double w = 1.0 / static_cast<double>(silo.samples);
  SiloGradReport r;
  r.silo_id = silo.silo_id;
  r.round = b.round;
  r.g_theta.assign(model.theta_dim(), 0.0);
  r.g_eta_G.assign(v.eta_G.flat_size(), 0.0);
  double elbo = 0.0;
  for (const auto& sample : v.samples) {
    const SiloTerm t = silo_term(model, silo.shard, b.theta, v.eta_G, silo.eta_L, sample);
    elbo += w * t.value;
    kernels::axpy(w, t.d_theta, r.g_theta);
    kernels::axpy(w, silo_global_grad_contrib(silo.eta_L, v.eta_G, sample, t), r.g_eta_G);
  }
  if (elbo_out != nullptr) *elbo_out = elbo;
  return r;
}

}  // namespace

SiloGradReport silo_round(SiloState& silo, const ServerBroadcast& b, const Model& model) {
  const SiloView v = unpack(silo, b, model);
  const double w = 1.0 / static_cast<double>(silo.samples);
  Vec g_L(silo.eta_L.flat_size(), 0.0);
  double elbo = 0.0;
  for (const auto& sample : v.samples) {
    const SiloTerm t = silo_term(model, silo.shard, b.theta, v.eta_G, silo.eta_L, sample);
    elbo += w * t.value;
    kernels::axpy(w, silo_local_grad(silo.eta_L, v.eta_G, sample, t), g_L);
  }
  if (!g_L.empty()) {
    Vec flat = silo.eta_L.flatten();
    adam_step(silo.adam_L, flat, g_L, Direction::ascend);
    require_finite(flat, "eta_L after step");
    silo.eta_L.assign_flat(flat);
  }
  SiloGradReport r = report_at(silo, b, model, v, nullptr);
  r.elbo_term = elbo;
  silo.round += 1;
  return r;
}

SiloGradReport silo_evaluate(const SiloState& silo, const ServerBroadcast& b,
                             const Model& model) {
  const SiloView v = unpack(silo, b, model);
  double elbo = 0.0;
  SiloGradReport r = report_at(silo, b, model, v, &elbo);
  r.elbo_term = elbo;
  return r;
}

namespace {

struct Assembled {
  RoundStats stats;
  Vec g_theta;
  Vec g_eta_G;
};

Assembled assemble(const ServerState& server, const Model& model,
                   std::span<const SiloGradReport> reports) {
  for (const auto& r : reports) {
    if (r.round != server.round) {
      throw ProtocolError("report for round " + std::to_string(r.round) + " in round " +
                          std::to_string(server.round));
    }
  }
  const std::size_t n = server.eta_G.dim();
  const double w = 1.0 / static_cast<double>(server.samples);
  Vec eta_term(server.eta_G.flat_size(), 0.0);
  Vec theta_term(server.theta.size(), 0.0);
  double value = 0.0;
  for (std::size_t s = 0; s < server.samples; ++s) {
    const Vec eps_G = global_noise(sample_key(server.run_key, server.round, s), n);
    const Vec z_G = sample_global(server.eta_G, eps_G);
    const ServerTerms t = server_terms(model, server.theta, server.eta_G, z_G, eps_G);
    value += w * t.value;
    kernels::axpy(w, t.g_eta_G, eta_term);
    kernels::axpy(w, t.g_theta, theta_term);
  }
  Assembled a;
  a.g_eta_G = server_global_grad(eta_term, reports, server.num_silos);
  a.g_theta = server_theta_grad(theta_term, reports, server.num_silos);
  // Fold the ELBO in silo order too; reports may arrive in any order.
  std::vector<double> terms(server.num_silos);
  for (const auto& r : reports) terms[r.silo_id] = r.elbo_term;
  for (double t : terms) value += t;
  a.stats = {server.round, value, norm2(a.g_theta), norm2(a.g_eta_G)};
  return a;
}

}  // namespace

RoundStats server_evaluate(const ServerState& server, const Model& model,
                           std::span<const SiloGradReport> reports) {
  return assemble(server, model, reports).stats;
}

ServerBroadcast server_round(ServerState& server, const Model& model,
                             std::span<const SiloGradReport> reports) {
  const Assembled a = assemble(server, model, reports);
  require_finite(a.stats.elbo, "ELBO estimate");
  Vec flat = server.eta_G.flatten();
  adam_step(server.adam_eta_G, flat, a.g_eta_G, Direction::ascend);
  require_finite(flat, "eta_G after step");
  server.eta_G.assign_flat(flat);
  if (!server.theta.empty()) {
    adam_step(server.adam_theta, server.theta, a.g_theta, Direction::ascend);
    require_finite(server.theta, "theta after step");
  }
  server.last = a.stats;
  server.round += 1;
  return make_broadcast(server);
}

FederatedRun init_sfvi(const RunConfig& config, const Model& model, const Dataset& data) {
  config.validate();
  data.validate();
  FederatedRun run;
  run.config = config;
  run.server = make_server(model, config, data.num_silos());
  for (const auto& shard : data.silos) run.silos.push_back(make_silo(model, config, shard));
  return run;
}

TrainingTrace continue_sfvi(FederatedRun& run, const Model& model, std::size_t rounds) {
  using Clock = std::chrono::steady_clock;
  const std::size_t J = run.silos.size();
  ThreadPool pool(run.config.threads > 0 ? (run.config.threads > 1 ? run.config.threads : 0)
                                         : ThreadPool::default_workers(J));
  TrainingTrace trace;
  std::vector<SiloGradReport> reports(J);
  ServerBroadcast b = make_broadcast(run.server);
  const auto snapshot = [&] {
    const std::size_t every = run.config.snapshot_every;
    if (every > 0 && run.server.round % every == 0) {
      trace.snapshots.push_back({run.server.round, run.server.theta, run.server.eta_G.flatten()});
    }
  };
  snapshot();
  for (std::size_t i = 0; i < rounds; ++i) {
    const auto t0 = Clock::now();
    pool.parallel_for(J, [&](std::size_t j) { reports[j] = silo_round(run.silos[j], b, model); });
    b = server_round(run.server, model, reports);
    const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
    const RoundStats& s = run.server.last;
    trace.rows.push_back({s.round, s.elbo, s.grad_norm_theta, s.grad_norm_eta_G, dt.count()});
    snapshot();
  }
  const auto t0 = Clock::now();
  pool.parallel_for(J, [&](std::size_t j) { reports[j] = silo_evaluate(run.silos[j], b, model); });
  const RoundStats s = server_evaluate(run.server, model, reports);
  const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
  trace.rows.push_back({s.round, s.elbo, s.grad_norm_theta, s.grad_norm_eta_G, dt.count()});
  return trace;
}

SfviResult run_sfvi(const RunConfig& config, const Model& model, const Dataset& data) {
  SfviResult r;
  r.state = init_sfvi(config, model, data);
  r.trace = continue_sfvi(r.state, model, config.rounds);
  return r;
}

void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "round,elbo,grad_norm_theta,grad_norm_etaG,wall_ms\n";
  for (const auto& r : trace.rows) {
    out << r.round << ',' << r.elbo << ',' << r.grad_norm_theta << ',' << r.grad_norm_eta_G << ','
        << r.wall_ms << '\n';
  }
}

}  // namespace fedvar
