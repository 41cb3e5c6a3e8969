// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fedvar/federation.hpp"

namespace fedvar {

// N(mean, cov) with a dense covariance, or N(mean, diag(var)) when `cov` is
// empty.
struct GaussianSummary {
  Vec mean;
  Mat cov;
  Vec var;

  static GaussianSummary full(Vec mean, Mat cov);
  static GaussianSummary diagonal(Vec mean, Vec var);
  bool is_diagonal() const noexcept { return cov.rows == 0; }
  std::size_t dim() const noexcept { return mean.size(); }
};

Vec barycenter_mean(std::span<const GaussianSummary> summaries);
// (mean of standard deviations)^2, elementwise.
Vec barycenter_cov_diagonal(std::span<const GaussianSummary> summaries);

struct FixedPointResult {
  Mat cov;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||S - J^-1 sum_j (S^1/2 S_j S^1/2)^1/2||_F at `cov`
  double change = 0.0;    // Frobenius norm of the last update
};

// S <- S^-1/2 (J^-1 sum_j (S^1/2 S_j S^1/2)^1/2)^2 S^-1/2 from the arithmetic
// mean, stopping once the defining-equation residual of the current iterate
// drops below `tol`. Diagonal summaries are promoted to dense matrices.
// Throws ConvergenceError after `max_iter` updates.
FixedPointResult barycenter_cov_fixed_point(std::span<const GaussianSummary> summaries,
                                            double tol = 1e-9, std::size_t max_iter = 200);
double barycenter_residual(const Mat& S, std::span<const GaussianSummary> summaries);

enum class BarycenterMode { diagonal, full };

GaussianSummary summarize(const GlobalVarParams& p);
// Back-map by Cholesky: sigma_i = K_ii, L = diag(1/sigma) K.
GlobalVarParams from_summary(const Vec& mean, const Mat& cov);
GlobalVarParams from_summary_diagonal(const Vec& mean, std::span<const double> sd);

struct GlobalAverage {
  GlobalVarParams params;
  std::size_t iterations = 0;
  double residual = 0.0;
};
// Wasserstein barycenter of the distributions q(z_G; eta_G^(j)). A single
// input is returned unchanged.
GlobalAverage average_global(std::span<const GlobalVarParams> params, BarycenterMode mode,
                             double tol = 1e-9, std::size_t max_iter = 200);

struct AvgConfig {
  std::size_t rounds = 20;
  std::size_t local_steps = 200;
  BarycenterMode mode = BarycenterMode::diagonal;
  double tol = 1e-9;
  std::size_t max_iter = 200;
  bool weighted_theta = false;  // N_j-weighted theta average instead of 1/J
  RunConfig base;               // seed, optimizer, family, samples, threads

  void validate() const;
};

// Silo-side state of an averaging run: the local copies of theta and eta_G
// drift during a phase, with their own optimizer states kept across rounds.
struct AvgSiloState {
  SiloState local;
  Vec theta;
  GlobalVarParams eta_G;
  AdamState adam_theta;
  AdamState adam_eta_G;
};

// m local steps starting at global step `first_step`. The local joint term is
// multiplied by N / N_j in every gradient; log q(z_L | z_G) is not.
void local_training_phase(AvgSiloState& silo, const Model& model, std::span<const double> theta,
                          const GlobalVarParams& eta_G, std::size_t m, std::size_t N,
                          std::size_t first_step);

struct BaryRow {
  std::size_t round = 0;
  std::size_t iterations = 0;
  double residual = 0.0;
};

struct AvgResult {
  TrainingTrace trace;  // row r evaluated at the parameters broadcast in round r
  std::vector<BaryRow> bary;
  Vec theta;
  GlobalVarParams eta_G;
  std::vector<AvgSiloState> silos;
};

AvgResult run_sfvi_avg(const AvgConfig& config, const Model& model, const Dataset& data);

// round,bary_iters,bary_residual
void write_bary_csv(const std::filesystem::path& path, std::span<const BaryRow> rows);

}  // namespace fedvar
