// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fedvar/averaging.hpp"
#include "fedvar/error.hpp"
#include "fedvar/models/conjugate.hpp"
#include "fedvar/models/generators.hpp"
#include "fedvar/models/glmm.hpp"
#include "fedvar/models/hierbnn.hpp"
#include "fedvar/models/multinom.hpp"
#include "oracles.hpp"

namespace {

using namespace fedvar;

// Random SPD matrix A A^T + 0.1 I.
Mat random_spd(std::size_t n, const RngKey& key) {
  const Vec a = std_normal(key, n * n);
  Mat A(n, n, a);
  Mat S = matmul(A, transpose(A));
  for (std::size_t i = 0; i < n; ++i) S(i, i) += 0.1;
  return S;
}

Mat rotation(double angle) {
  return Mat(2, 2, {std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle)});
}

double max_abs(const Mat& a, const Mat& b) { return oracle::max_abs_diff(a.data, b.data); }

TEST(BarycenterMean, Examples) {
  const std::vector<GaussianSummary> one{GaussianSummary::diagonal({1.0, 2.0}, {1.0, 1.0})};
  EXPECT_EQ(barycenter_mean(one), (Vec{1.0, 2.0}));
  std::vector<GaussianSummary> two{GaussianSummary::diagonal({1.0, 5.0}, {1.0, 1.0}),
                                   GaussianSummary::diagonal({3.0, -1.0}, {1.0, 1.0})};
  EXPECT_EQ(barycenter_mean(two), (Vec{2.0, 2.0}));
  std::swap(two[0], two[1]);
  EXPECT_EQ(barycenter_mean(two), (Vec{2.0, 2.0}));
  EXPECT_THROW(barycenter_mean(std::vector<GaussianSummary>{}), DimensionError);
  two[1].mean.push_back(0.0);
  two[1].var.push_back(1.0);
  EXPECT_THROW(barycenter_mean(two), DimensionError);
}

TEST(BarycenterDiagonal, ClosedForm) {
  const std::vector<GaussianSummary> s{GaussianSummary::diagonal({0.0}, {1.0}),
                                       GaussianSummary::diagonal({0.0}, {9.0})};
  const Vec v = barycenter_cov_diagonal(s);
  EXPECT_DOUBLE_EQ(v[0], 4.0);
  // Parameter-space averaging would give 5.
  EXPECT_LT(v[0], 5.0);
  const std::vector<GaussianSummary> same{GaussianSummary::diagonal({0.0, 1.0}, {2.5, 0.3}),
                                          GaussianSummary::diagonal({1.0, 1.0}, {2.5, 0.3})};
  const Vec w = barycenter_cov_diagonal(same);
  EXPECT_NEAR(w[0], 2.5, 1e-15);
  EXPECT_NEAR(w[1], 0.3, 1e-15);
  const std::vector<GaussianSummary> bad{GaussianSummary::diagonal({0.0}, {0.0})};
  EXPECT_THROW(barycenter_cov_diagonal(bad), NumericalError);
}

TEST(BarycenterDiagonal, StrictlyBelowArithmeticMeanForHeterogeneousInputs) {
  for (std::uint64_t t = 0; t < 50; ++t) {
    const Vec u = uniform01(RngKey(120).derive(t), 6);
    std::vector<GaussianSummary> s;
    for (std::size_t j = 0; j < 3; ++j) s.push_back(GaussianSummary::diagonal({0.0, 0.0}, {0.1 + 5 * u[2 * j], 0.1 + 5 * u[2 * j + 1]}));
    const Vec v = barycenter_cov_diagonal(s);
    for (std::size_t i = 0; i < 2; ++i) {
      const double arith = (s[0].var[i] + s[1].var[i] + s[2].var[i]) / 3.0;
      EXPECT_LT(v[i], arith);
    }
  }
}

TEST(BarycenterFixedPoint, IdenticalInputsAreFixed) {
  const Mat S = random_spd(3, RngKey(121));
  const std::vector<GaussianSummary> s(4, GaussianSummary::full({0, 0, 0}, S));
  const FixedPointResult r = barycenter_cov_fixed_point(s);
  EXPECT_LT(max_abs(r.cov, S), 1e-9);
  EXPECT_LT(r.residual, 1e-9);
}

TEST(BarycenterFixedPoint, AgreesWithDiagonalClosedForm) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Vec u = uniform01(RngKey(122).derive(t), 9);
    std::vector<GaussianSummary> diag, full;
    for (std::size_t j = 0; j < 3; ++j) {
      const Vec v{0.05 + 4 * u[3 * j], 0.05 + 4 * u[3 * j + 1], 0.05 + 4 * u[3 * j + 2]};
      diag.push_back(GaussianSummary::diagonal({0, 0, 0}, v));
      full.push_back(GaussianSummary::full({0, 0, 0}, Mat::diagonal(v)));
    }
    const Vec closed = barycenter_cov_diagonal(diag);
    const FixedPointResult a = barycenter_cov_fixed_point(full);
    const FixedPointResult b = barycenter_cov_fixed_point(diag);
    EXPECT_LT(max_abs(a.cov, Mat::diagonal(closed)), 1e-8);
    EXPECT_LT(max_abs(b.cov, Mat::diagonal(closed)), 1e-8);
  }
}

// Matrices sharing eigenvectors Q: the barycenter is Q ((sqrt d1 + sqrt d2)/2)^2 Q^T.
TEST(BarycenterFixedPoint, CommutingClosedForm) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Vec u = uniform01(RngKey(123).derive(t), 5);
    const Mat Q = rotation(6.283 * u[0]);
    const Vec d1{0.1 + 3 * u[1], 0.1 + 3 * u[2]}, d2{0.1 + 3 * u[3], 0.1 + 3 * u[4]};
    const auto conj = [&](const Vec& d) { return matmul(matmul(Q, Mat::diagonal(d)), transpose(Q)); };
    Vec db(2);
    for (std::size_t i = 0; i < 2; ++i) {
      const double s = 0.5 * (std::sqrt(d1[i]) + std::sqrt(d2[i]));
      db[i] = s * s;
    }
    const std::vector<GaussianSummary> s{GaussianSummary::full({0, 0}, conj(d1)),
                                         GaussianSummary::full({0, 0}, conj(d2))};
    EXPECT_LT(max_abs(barycenter_cov_fixed_point(s).cov, conj(db)), 1e-8) << t;
  }
}

TEST(BarycenterFixedPoint, ResidualBelowToleranceAndPermutationInvariant) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const RngKey k = RngKey(124).derive(t);
    std::vector<GaussianSummary> s;
    for (std::size_t j = 0; j < 4; ++j) s.push_back(GaussianSummary::full({0, 0, 0}, random_spd(3, k.derive(j))));
    const FixedPointResult a = barycenter_cov_fixed_point(s, 1e-9);
    EXPECT_LT(a.residual, 1e-9);
    // Independent check of the defining equation.
    EXPECT_LT(barycenter_residual(a.cov, s), 1e-9);
    EXPECT_LT(max_abs_asymmetry(a.cov), 1e-12);
    std::reverse(s.begin(), s.end());
    const FixedPointResult b = barycenter_cov_fixed_point(s, 1e-9);
    EXPECT_LT(max_abs(a.cov, b.cov), 1e-8);
  }
}

TEST(BarycenterFixedPoint, NonConvergenceIsReported) {
  std::vector<GaussianSummary> s{GaussianSummary::full({0, 0}, Mat(2, 2, {10.0, 2.9, 2.9, 1.0})),
                                 GaussianSummary::full({0, 0}, Mat(2, 2, {0.2, -0.1, -0.1, 8.0}))};
  try {
    barycenter_cov_fixed_point(s, 1e-12, 1);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 1u);
    EXPECT_GT(e.residual(), 1e-12);
  }
  EXPECT_THROW(barycenter_cov_fixed_point(s, 0.0), ConfigError);
}

TEST(BackMap, CholeskyRoundTrip) {
  for (std::uint64_t t = 0; t < 10; ++t) {
    const Mat S = random_spd(4, RngKey(125).derive(t));
    const Vec mu = std_normal(RngKey(126).derive(t), 4);
    const GlobalVarParams p = from_summary(mu, S);
    EXPECT_EQ(p.mu, mu);
    EXPECT_LT(max_abs(p.covariance(), S), 1e-12);
    const GaussianSummary back = summarize(p);
    EXPECT_LT(max_abs(back.cov, S), 1e-12);
  }
  const GlobalVarParams d = from_summary_diagonal({1.0, 2.0}, Vec{0.5, 3.0});
  EXPECT_FALSE(d.full_cov);
  EXPECT_NEAR(std::exp(d.log_sigma[1]), 3.0, 1e-15);
}

TEST(AverageGlobal, SingleInputUnchangedAndIdenticalInputsFixed) {
  GlobalVarParams g = GlobalVarParams::initial(3, true);
  oracle::randomize(g, RngKey(127), 0.5);
  const std::vector<GlobalVarParams> one{g};
  EXPECT_EQ(average_global(one, BarycenterMode::full).params.flatten(), g.flatten());
  const std::vector<GlobalVarParams> three(3, g);
  const GlobalAverage a = average_global(three, BarycenterMode::full);
  EXPECT_LT(oracle::max_abs_diff(a.params.flatten(), g.flatten()), 1e-8);
  GlobalVarParams dg = GlobalVarParams::initial(3, false);
  oracle::randomize(dg, RngKey(128), 0.5);
  const std::vector<GlobalVarParams> dd(3, dg);
  EXPECT_LT(oracle::max_abs_diff(average_global(dd, BarycenterMode::diagonal).params.flatten(), dg.flatten()), 1e-14);
  EXPECT_THROW(average_global(three, BarycenterMode::diagonal), ConfigError);
}

AvgConfig avg_config(std::size_t rounds, std::size_t m, bool full = false) {
  AvgConfig c;
  c.rounds = rounds;
  c.local_steps = m;
  c.mode = full ? BarycenterMode::full : BarycenterMode::diagonal;
  c.base.seed = 9;
  c.base.adam.lr = 0.01;
  c.base.family.full_cov_global = full;
  return c;
}

// One silo: the barycenter is the identity and the likelihood scale is 1.
TEST(SfviAvg, SingleSiloEqualsPlainSfvi) {
  for (bool full : {false, true}) {
    const MultinomRegModel m(2, 3);
    const Dataset d = partition_even(gen_multinom(RngKey(129), 30, 2, 3), 1, RngKey(130));
    const AvgConfig c = avg_config(4, 25, full);
    const AvgResult avg = run_sfvi_avg(c, m, d);
    RunConfig rc = c.base;
    rc.rounds = 100;
    const SfviResult ref = run_sfvi(rc, m, d);
    EXPECT_EQ(avg.eta_G.flatten(), ref.state.server.eta_G.flatten());
    EXPECT_EQ(avg.theta, ref.state.server.theta);
    // Row r of the averaging trace is SFVI's row r * m.
    for (std::size_t r = 0; r <= 4; ++r) EXPECT_EQ(avg.trace.rows[r].elbo, ref.trace.rows[r * 25].elbo);
  }
  const ConjugateGaussianModel cm(2.0, 1.0, 0.5);
  const Dataset cd = partition_even(gen_conjugate(RngKey(131), 20, 2.0, 1.0, 0.5), 1, RngKey(132));
  const AvgConfig c = avg_config(3, 10);
  const AvgResult avg = run_sfvi_avg(c, cm, cd);
  RunConfig rc = c.base;
  rc.rounds = 30;
  const SfviResult ref = run_sfvi(rc, cm, cd);
  EXPECT_EQ(avg.eta_G.flatten(), ref.state.server.eta_G.flatten());
  EXPECT_EQ(avg.silos[0].local.eta_L.flatten(), ref.state.silos[0].eta_L.flatten());
}

TEST(LocalPhase, IdenticalSilosGiveIdenticalCopies) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  const Dataset d = partition_even(gen_conjugate(RngKey(133), 10, 2.0, 1.0, 0.5), 1, RngKey(134));
  const AvgConfig c = avg_config(1, 1);
  const GlobalVarParams g = GlobalVarParams::initial(1, false);
  const auto fresh = [&] {
    return AvgSiloState{make_silo(m, c.base, d.silos[0]), {}, g, AdamState::fresh(0, c.base.adam),
                        AdamState::fresh(g.flat_size(), c.base.adam)};
  };
  AvgSiloState a = fresh(), b = fresh();
  local_training_phase(a, m, {}, g, 15, 30, 0);
  local_training_phase(b, m, {}, g, 15, 30, 0);
  EXPECT_EQ(a.eta_G.flatten(), b.eta_G.flatten());
  EXPECT_EQ(a.local.eta_L.flatten(), b.local.eta_L.flatten());
  EXPECT_NE(a.eta_G.flatten(), g.flatten());
  EXPECT_THROW(local_training_phase(a, m, {}, g, 0, 30, 15), ConfigError);
}

// N / N_j = 1 with one step: a local phase is one SFVI round.
TEST(LocalPhase, OneStepUnscaledIsOneSfviRound) {
  const LogisticMixedModel m;
  const Dataset d = partition_even(gen_glmm(RngKey(135), 12), 1, RngKey(136));
  const AvgConfig c = avg_config(1, 1);
  FederatedRun run = init_sfvi(c.base, m, d);
  const GlobalVarParams g0 = run.server.eta_G;
  AvgSiloState s{run.silos[0], {}, g0, AdamState::fresh(0, c.base.adam),
                 AdamState::fresh(g0.flat_size(), c.base.adam)};
  local_training_phase(s, m, {}, g0, 1, 12, 0);
  continue_sfvi(run, m, 1);
  EXPECT_EQ(s.eta_G.flatten(), run.server.eta_G.flatten());
  EXPECT_EQ(s.local.eta_L.flatten(), run.silos[0].eta_L.flatten());
}

TEST(SfviAvg, ConfigurationErrors) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  const Dataset d = partition_even(gen_conjugate(RngKey(137), 12, 2.0, 1.0, 0.5), 2, RngKey(138));
  EXPECT_THROW(run_sfvi_avg(avg_config(1, 0), m, d), ConfigError);
  EXPECT_THROW(run_sfvi_avg(avg_config(0, 5), m, d), ConfigError);
  AvgConfig mismatch = avg_config(1, 5);
  mismatch.base.family.full_cov_global = true;
  EXPECT_THROW(run_sfvi_avg(mismatch, m, d), ConfigError);

  const ToyHierBNNModel h(2, 4, 3);
  const Dataset hd = gen_heterogeneous_classification(RngKey(139), 2, 10, 2, 3, 0.5);
  EXPECT_THROW(run_sfvi_avg(avg_config(1, 5), h, hd), ConfigError);
}

TEST(SfviAvg, TraceAndBarycenterRows) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  const Dataset d = partition_even(gen_conjugate(RngKey(140), 30, 2.0, 1.0, 0.5), 3, RngKey(141));
  const AvgResult r = run_sfvi_avg(avg_config(5, 20, true), m, d);
  ASSERT_EQ(r.trace.rows.size(), 6u);
  ASSERT_EQ(r.bary.size(), 5u);
  for (const BaryRow& b : r.bary) EXPECT_LT(b.residual, 1e-9);
  const AvgResult again = run_sfvi_avg(avg_config(5, 20, true), m, d);
  EXPECT_EQ(r.eta_G.flatten(), again.eta_G.flatten());
}

}  // namespace
