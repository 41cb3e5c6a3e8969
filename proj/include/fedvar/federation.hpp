// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedvar/data.hpp"
#include "fedvar/estimator.hpp"
#include "fedvar/models/model.hpp"
#include "fedvar/optimizer.hpp"
#include "fedvar/rng.hpp"
#include "fedvar/vfamily.hpp"

namespace fedvar {

struct FamilyOptions {
  bool full_cov_global = true;  // L_G free; otherwise identity
  bool coupled_local = true;    // C_j free; otherwise zero
  double log_sigma0 = kDefaultLogSigma;
};

struct RunConfig {
  std::size_t rounds = 1000;
  std::uint64_t seed = 0;
  AdamConfig adam;
  FamilyOptions family;
  std::size_t samples = 1;         // Monte Carlo samples per round
  std::size_t threads = 0;         // 0 picks min(J, hardware threads)
  std::size_t snapshot_every = 0;  // 0 disables parameter snapshots

  void validate() const;
};

// Server -> silo. The only payload that leaves the server.
struct ServerBroadcast {
  std::size_t round = 0;
  Vec theta;
  Vec eta_G;  // flat layout of GlobalVarParams
  Vec eps_G;  // samples * n_G, sample-major
};

struct RoundStats {
  std::size_t round = 0;
  double elbo = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_eta_G = 0.0;
};

struct ServerState {
  std::size_t round = 0;
  std::size_t num_silos = 0;
  std::size_t samples = 1;
  Vec theta;
  GlobalVarParams eta_G;
  AdamState adam_theta;
  AdamState adam_eta_G;
  RngKey run_key;
  RoundStats last;
};

// Never serialized into a message.
struct SiloState {
  std::size_t silo_id = 0;
  std::size_t round = 0;  // next round this silo expects
  std::size_t samples = 1;
  bool full_cov_global = true;
  Shard shard;
  LocalVarParams eta_L;
  AdamState adam_L;
  RngKey run_key;
};

// Key for Monte Carlo sample s of round r. Sample 0 uses the round key
// itself, so S = 1 runs and the first sample of S > 1 runs share noise.
RngKey sample_key(const RngKey& run_key, std::uint64_t round, std::size_t s);

ServerState make_server(const Model& model, const RunConfig& config, std::size_t num_silos);
SiloState make_silo(const Model& model, const RunConfig& config, Shard shard);

ServerBroadcast make_broadcast(const ServerState& server);

// One SFVI silo round: draw noise, step eta_L on its gradient, then report
// g_theta and g_eta_G computed with the stepped eta_L at the same sample.
SiloGradReport silo_round(SiloState& silo, const ServerBroadcast& b, const Model& model);
// Same report without stepping eta_L (diagnostic pass).
SiloGradReport silo_evaluate(const SiloState& silo, const ServerBroadcast& b,
                             const Model& model);

// Sums the L0 terms and the J reports (ascending silo id), steps theta and
// eta_G, and returns the next broadcast. Records the round in `server.last`.
ServerBroadcast server_round(ServerState& server, const Model& model,
                             std::span<const SiloGradReport> reports);
// Stats for the current broadcast without stepping.
RoundStats server_evaluate(const ServerState& server, const Model& model,
                           std::span<const SiloGradReport> reports);

struct TraceRow {
  std::size_t round = 0;
  double elbo = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_eta_G = 0.0;
  double wall_ms = 0.0;
};

struct Snapshot {
  std::size_t round = 0;
  Vec theta;
  Vec eta_G;
};

// Row r holds the estimate drawn in round r at the parameters entering it;
// the last row is an evaluation pass after the final update.
struct TrainingTrace {
  std::vector<TraceRow> rows;
  std::vector<Snapshot> snapshots;
};

struct FederatedRun {
  RunConfig config;
  ServerState server;
  std::vector<SiloState> silos;
};

FederatedRun init_sfvi(const RunConfig& config, const Model& model, const Dataset& data);
// Runs `rounds` more rounds and appends the closing evaluation row.
TrainingTrace continue_sfvi(FederatedRun& run, const Model& model, std::size_t rounds);

struct SfviResult {
  TrainingTrace trace;
  FederatedRun state;
};
SfviResult run_sfvi(const RunConfig& config, const Model& model, const Dataset& data);

// round,elbo,grad_norm_theta,grad_norm_etaG,wall_ms
void write_trace_csv(const std::filesystem::path& path, const TrainingTrace& trace);

}  // namespace fedvar
