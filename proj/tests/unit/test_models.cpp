// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <map>
#include <memory>

#include <gtest/gtest.h>

#include "fedvar/error.hpp"
#include "fedvar/harness/fd.hpp"
#include "fedvar/models/conjugate.hpp"
#include "fedvar/models/generators.hpp"
#include "fedvar/models/glmm.hpp"
#include "fedvar/models/hierbnn.hpp"
#include "fedvar/models/multinom.hpp"

namespace {

using namespace fedvar;

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_normal(double x, double m, double sd) {
  const double r = (x - m) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * r * r;
}

Shard single_obs_shard(double y) {
  Shard s;
  s.units.push_back(Unit{0, {Observation{{}, y}}});
  return s;
}

// z_L for a shard gathered from a per-global-index table.
Vec gather_locals(const Shard& shard, const Vec& table, std::size_t d) {
  Vec out;
  for (const Unit& u : shard.units)
    for (std::size_t i = 0; i < d; ++i) out.push_back(table[u.global_index * d + i]);
  return out;
}

double total_log_joint(const Model& m, const Dataset& data, const Vec& theta, const Vec& zG,
                       const Vec& table) {
  double t = m.log_prior_global(theta, zG).value;
  for (const Shard& s : data.silos)
    t += m.log_local_joint(s, theta, zG, gather_locals(s, table, m.local_shape().dim)).value;
  return t;
}

// ---- conjugate ----

TEST(Conjugate, RejectsNonpositiveScales) {
  EXPECT_THROW(ConjugateGaussianModel(0.0, 1.0, 1.0), ConfigError);
  EXPECT_THROW(ConjugateGaussianModel(1.0, -1.0, 1.0), ConfigError);
  EXPECT_THROW(ConjugateGaussianModel(1.0, 1.0, 0.0), ConfigError);
}

TEST(Conjugate, LogJointIsDirectDensity) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  const Shard s = single_obs_shard(0.3);
  EXPECT_NEAR(m.log_prior_global({}, Vec{0.4}).value, log_normal(0.4, 0.0, 2.0), 1e-14);
  EXPECT_NEAR(m.log_local_joint(s, {}, Vec{0.4}, Vec{-0.1}).value,
              log_normal(-0.1, 0.4, 1.0) + log_normal(0.3, -0.1, 0.5), 1e-14);
}

TEST(Conjugate, NoDataGivesPrior) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  Dataset d;
  d.silos.push_back(Shard{});
  const auto post = m.exact_posterior(d);
  EXPECT_EQ(post.mean, 0.0);
  EXPECT_DOUBLE_EQ(post.var, 4.0);
  EXPECT_EQ(m.log_evidence(d), 0.0);
}

TEST(Conjugate, SymmetricSingleObservation) {
  const ConjugateGaussianModel m(1.0, 1.0, 1.0);
  Dataset d;
  d.silos.push_back(single_obs_shard(0.0));
  EXPECT_EQ(m.exact_posterior(d).mean, 0.0);
}

// Posterior moments of Z_G and the evidence by trapezoid quadrature over
// (Z_G, Z_L) for a single observation.
TEST(Conjugate, ExactPosteriorMatchesQuadrature) {
  for (std::uint64_t t = 0; t < 4; ++t) {
    const Vec u = uniform01(RngKey(21).derive(t), 4);
    const double tau = 0.5 + 1.5 * u[0], lambda = 0.3 + u[1], noise = 0.3 + u[2];
    const double y = 4.0 * u[3] - 2.0;
    const ConjugateGaussianModel m(tau, lambda, noise);
    Dataset d;
    d.silos.push_back(single_obs_shard(y));
    const Shard& s = d.silos[0];

    const double rG = 9.0 * tau, rL = 9.0 * std::sqrt(tau * tau + lambda * lambda);
    const int n = 1200;
    const double hG = 2 * rG / n, hL = 2 * rL / n;
    double z0 = 0, z1 = 0, z2 = 0;
    for (int i = 0; i <= n; ++i) {
      const double zg = -rG + i * hG;
      const double wi = (i == 0 || i == n) ? 0.5 : 1.0;
      const double prior = m.log_prior_global({}, Vec{zg}).value;
      for (int j = 0; j <= n; ++j) {
        const double zl = -rL + j * hL;
        const double w = wi * ((j == 0 || j == n) ? 0.5 : 1.0);
        const double p = std::exp(prior + m.log_local_joint(s, {}, Vec{zg}, Vec{zl}).value) * w;
        z0 += p;
        z1 += p * zg;
        z2 += p * zg * zg;
      }
    }
    const double ev = z0 * hG * hL;
    const double mean = z1 / z0;
    const double var = z2 / z0 - mean * mean;
    const auto post = m.exact_posterior(d);
    EXPECT_NEAR(post.mean, mean, 1e-6);
    EXPECT_NEAR(post.var, var, 1e-6);
    EXPECT_NEAR(m.log_evidence(d), std::log(ev), 1e-6);
  }
}

TEST(Conjugate, KlToExactIsZeroAtExactParams) {
  const ConjugateGaussianModel m(2.0, 1.0, 0.5);
  const Dataset d = partition_even(gen_conjugate(RngKey(22), 40, 2.0, 1.0, 0.5), 4, RngKey(23));
  EXPECT_NEAR(m.kl_to_exact(m.exact_global_params(d), d), 0.0, 1e-14);
  GlobalVarParams off = m.exact_global_params(d);
  off.mu[0] += 0.1;
  EXPECT_GT(m.kl_to_exact(off, d), 0.0);
}

// ---- glmm ----

Shard glmm_shard(std::size_t subjects, const RngKey& key) {
  Shard s;
  s.units = gen_glmm(key, subjects);
  return s;
}

TEST(Glmm, ZeroCoefficientsGiveLogHalf) {
  const LogisticMixedModel m;
  const Shard s = glmm_shard(6, RngKey(24));
  const Vec zG(5, 0.0), zL(6, 0.0);
  double expect = 0.0;
  std::size_t nobs = 0;
  for (const Unit& u : s.units) nobs += u.obs.size();
  expect += static_cast<double>(nobs) * std::log(0.5);
  expect += 6 * log_normal(0.0, 0.0, 1.0);
  EXPECT_NEAR(m.log_local_joint(s, {}, zG, zL).value, expect, 1e-12);
  EXPECT_NEAR(m.log_prior_global({}, zG).value, 5 * log_normal(0.0, 0.0, 10.0), 1e-12);
}

TEST(Glmm, RejectsBadLabels) {
  const LogisticMixedModel m;
  Shard s = glmm_shard(3, RngKey(25));
  EXPECT_NO_THROW(m.validate(s));
  s.units[1].obs[2].y = 2.0;
  EXPECT_THROW(m.validate(s), ConfigError);
}

TEST(Glmm, GeneratorSchema) {
  const auto units = gen_glmm(RngKey(26));
  ASSERT_EQ(units.size(), 537u);
  std::size_t smokers = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    EXPECT_EQ(units[i].global_index, i);
    ASSERT_EQ(units[i].obs.size(), 4u);
    for (std::size_t v = 0; v < 4; ++v) {
      EXPECT_EQ(units[i].obs[v].x[1], static_cast<double>(v) - 2.0);
      EXPECT_EQ(units[i].obs[v].x[0], units[i].obs[0].x[0]);
    }
    smokers += units[i].obs[0].x[0] == 1.0;
  }
  EXPECT_NEAR(static_cast<double>(smokers) / 537.0, 0.35, 0.07);
}

// ---- multinom ----

TEST(Multinom, UniformSoftmaxAtZero) {
  const MultinomRegModel m(3, 4);
  Shard s;
  s.units = gen_multinom(RngKey(27), 10, 3, 4);
  const Vec zG(m.global_dim(), 0.0);
  EXPECT_NEAR(m.log_local_joint(s, m.initial_theta(), zG, {}).value, -10 * std::log(4.0), 1e-12);
  const Vec p = m.class_probabilities(zG, {}, s.units[0].obs[0].x);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Multinom, FlatPriorLimit) {
  const MultinomRegModel m(3, 3);
  const Vec theta{std::log(1e6), 0.0};
  const Vec zG = std_normal(RngKey(28), m.global_dim());
  const JointEval e = m.log_prior_global(theta, zG);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_LT(std::abs(e.d_zG[i]), 1e-5);
}

TEST(Multinom, RejectsOutOfRangeLabels) {
  const MultinomRegModel m(2, 3);
  Shard s;
  s.units = gen_multinom(RngKey(29), 5, 2, 3);
  EXPECT_NO_THROW(m.validate(s));
  s.units[0].obs[0].y = 3.0;
  EXPECT_THROW(m.validate(s), ConfigError);
  s.units[0].obs[0].y = 0.5;
  EXPECT_THROW(m.validate(s), ConfigError);
  EXPECT_THROW(MultinomRegModel(2, 1), ConfigError);
}

TEST(Softmax, StableForLargeLogits) {
  Vec x{1000.0, 1000.0};
  EXPECT_NEAR(softmax_inplace(x), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_EQ(x[0], 0.5);
}

// ---- hierbnn ----

Shard classification_shard(std::size_t n, std::size_t d, std::size_t K, const RngKey& key) {
  const Dataset data = gen_heterogeneous_classification(key, 1, n, d, K, 1.0 / K);
  return data.silos[0];
}

TEST(HierBnn, ZeroWeightsGiveUniformLikelihood) {
  const ToyHierBNNModel m(2, 4, 3);
  const Shard s = classification_shard(7, 2, 3, RngKey(30));
  Vec zG(m.global_dim(), 0.0);
  const Vec zL(m.local_dim(s), 0.0);
  const double prior_L = static_cast<double>(zL.size()) * log_normal(0.0, 0.0, 1.0);
  EXPECT_NEAR(m.log_local_joint(s, {}, zG, zL).value, prior_L - 7 * std::log(3.0), 1e-12);
}

TEST(HierBnn, HalfNormalPriorWithJacobian) {
  const ToyHierBNNModel m(1, 1, 2);
  const double ls = 0.3, sigma = std::exp(ls);
  const double expect = log_normal(0.2, 0.0, 1.0) + std::log(2.0) + log_normal(sigma, 0.0, 1.0) + ls;
  EXPECT_NEAR(m.log_prior_global({}, Vec{0.2, ls}).value, expect, 1e-13);
}

TEST(HierBnn, IdenticalSilosGiveIdenticalJoints) {
  const ToyHierBNNModel m(2, 5, 3);
  Shard a = classification_shard(12, 2, 3, RngKey(31));
  Shard b = a;
  b.silo_id = 3;
  for (Unit& u : b.units) u.global_index += 100;
  const Vec zG = std_normal(RngKey(32), m.global_dim());
  const Vec zL = std_normal(RngKey(33), m.local_dim(a));
  const JointEval ea = m.log_local_joint(a, {}, zG, zL);
  const JointEval eb = m.log_local_joint(b, {}, zG, zL);
  EXPECT_EQ(ea.value, eb.value);
  EXPECT_EQ(ea.d_zG, eb.d_zG);
  EXPECT_EQ(ea.d_zL, eb.d_zL);
  EXPECT_FALSE(m.exchangeable());
}

TEST(HierBnn, RejectsOversizedDimensions) {
  EXPECT_THROW(ToyHierBNNModel(9, 4, 2), ConfigError);
  EXPECT_THROW(ToyHierBNNModel(2, 17, 2), ConfigError);
  EXPECT_THROW(ToyHierBNNModel(2, 4, 5), ConfigError);
  const ToyHierBNNModel m(2, 4, 3);
  const Shard s = classification_shard(4, 2, 3, RngKey(34));
  EXPECT_THROW(m.log_local_joint(s, {}, Vec(m.global_dim()), Vec(3)), DimensionError);
}

// Within one silo the per-silo latents are shared, so splitting its
// observations adds likelihoods and counts the z_L prior once.
TEST(HierBnn, LikelihoodAdditiveOverObservations) {
  const ToyHierBNNModel m(3, 6, 4);
  const Shard s = classification_shard(20, 3, 4, RngKey(35));
  Shard a, b;
  for (std::size_t i = 0; i < s.size(); ++i) (i % 3 == 0 ? a : b).units.push_back(s.units[i]);
  const Vec zG = std_normal(RngKey(36), m.global_dim());
  const Vec zL = std_normal(RngKey(37), m.local_dim(s));
  const double prior_only = m.log_local_joint(Shard{}, {}, zG, zL).value;
  EXPECT_NEAR(m.log_local_joint(s, {}, zG, zL).value,
              m.log_local_joint(a, {}, zG, zL).value + m.log_local_joint(b, {}, zG, zL).value -
                  prior_only,
              1e-10);
}

// ---- properties shared by the models ----

struct Case {
  std::string name;
  std::shared_ptr<Model> model;
  std::vector<Unit> units;
};

std::vector<Case> per_unit_cases() {
  std::vector<Case> c;
  c.push_back({"conjugate", std::make_shared<ConjugateGaussianModel>(1.5, 0.8, 0.6),
               gen_conjugate(RngKey(40), 30, 1.5, 0.8, 0.6)});
  c.push_back({"glmm", std::make_shared<LogisticMixedModel>(), gen_glmm(RngKey(41), 30)});
  c.push_back({"multinom", std::make_shared<MultinomRegModel>(3, 3),
               gen_multinom(RngKey(42), 30, 3, 3)});
  return c;
}

TEST(Models, TotalIsInvariantToPartition) {
  for (const Case& c : per_unit_cases()) {
    const Model& m = *c.model;
    const std::size_t N = c.units.size();
    const Vec theta = std_normal(RngKey(43), m.theta_dim());
    const Vec zG = std_normal(RngKey(44), m.global_dim());
    const Vec table = std_normal(RngKey(45), N * m.local_shape().dim);
    const double ref = total_log_joint(m, partition_even(c.units, 1, RngKey(46)), theta, zG, table);
    for (std::size_t J : {2u, 3u, 7u}) {
      const Dataset d = partition_even(c.units, J, RngKey(47).derive(J));
      EXPECT_NEAR(total_log_joint(m, d, theta, zG, table), ref, 1e-10 * std::max(1.0, std::abs(ref)))
          << c.name << " J=" << J;
    }
  }
}

void expect_grads_match(const Model& m, const Shard& s, const Vec& theta, const Vec& zG,
                        const Vec& zL, double rtol, const std::string& what) {
  const JointEval p = m.log_prior_global(theta, zG);
  const JointEval l = m.log_local_joint(s, theta, zG, zL);
  const auto prior_at = [&](const Vec& th, const Vec& g) { return m.log_prior_global(th, g).value; };
  const auto local_at = [&](const Vec& th, const Vec& g, const Vec& z) {
    return m.log_local_joint(s, th, g, z).value;
  };
  EXPECT_LT(max_relative_error(
                p.d_zG, fd_gradient_oracle(
                            [&](std::span<const double> x) { return prior_at(theta, Vec(x.begin(), x.end())); }, zG)),
            rtol)
      << what << " prior d_zG";
  EXPECT_LT(max_relative_error(
                l.d_zG, fd_gradient_oracle(
                            [&](std::span<const double> x) { return local_at(theta, Vec(x.begin(), x.end()), zL); }, zG)),
            rtol)
      << what << " local d_zG";
  if (!zL.empty()) {
    EXPECT_LT(max_relative_error(
                  l.d_zL, fd_gradient_oracle(
                              [&](std::span<const double> x) { return local_at(theta, zG, Vec(x.begin(), x.end())); }, zL)),
              rtol)
        << what << " local d_zL";
  }
  if (!theta.empty()) {
    Vec total = p.d_theta;
    if (total.empty()) total.assign(theta.size(), 0.0);
    for (std::size_t i = 0; i < l.d_theta.size(); ++i) total[i] += l.d_theta[i];
    const Vec fd = fd_gradient_oracle(
        [&](std::span<const double> x) {
          const Vec th(x.begin(), x.end());
          return prior_at(th, zG) + local_at(th, zG, zL);
        },
        theta);
    EXPECT_LT(max_relative_error(total, fd), rtol) << what << " d_theta";
  }
}

TEST(Models, GradientsMatchFiniteDifferences) {
  for (const Case& c : per_unit_cases()) {
    Shard s;
    s.units.assign(c.units.begin(), c.units.begin() + 8);
    for (std::uint64_t t = 0; t < 25; ++t) {
      const RngKey k = RngKey(48).derive(t);
      const Model& m = *c.model;
      Vec theta = std_normal(k.derive(1), m.theta_dim());
      const Vec zG = std_normal(k.derive(2), m.global_dim());
      const Vec zL = std_normal(k.derive(3), m.local_dim(s));
      expect_grads_match(m, s, theta, zG, zL, 1e-5, c.name + " trial " + std::to_string(t));
    }
  }
}

TEST(HierBnn, GradientsMatchFiniteDifferencesAwayFromKinks) {
  const ToyHierBNNModel m(3, 6, 3);
  const Shard s = classification_shard(10, 3, 3, RngKey(49));
  std::size_t accepted = 0;
  for (std::uint64_t t = 0; accepted < 25 && t < 1000; ++t) {
    const RngKey k = RngKey(50).derive(t);
    const Vec zG = std_normal(k.derive(1), m.global_dim());
    const Vec zL = std_normal(k.derive(2), m.local_dim(s));
    bool near_kink = false;
    for (const Unit& u : s.units)
      for (double a : m.hidden_preactivations(zG, zL, u.obs[0].x))
        near_kink = near_kink || std::abs(a) <= 1e-3;
    if (near_kink) continue;
    ++accepted;
    expect_grads_match(m, s, {}, zG, zL, 1e-4, "hierbnn trial " + std::to_string(t));
  }
  EXPECT_EQ(accepted, 25u);
}

// ---- generators ----

TEST(Generators, DominantClassFraction) {
  const std::size_t K = 4;
  const Dataset d = gen_heterogeneous_classification(RngKey(51), 5, 500, 2, K, 0.9);
  ASSERT_EQ(d.num_silos(), 5u);
  d.validate();
  for (const Shard& s : d.silos) {
    ASSERT_EQ(s.size(), 500u);
    std::map<int, int> count;
    for (const Unit& u : s.units) ++count[static_cast<int>(u.obs[0].y)];
    const double frac = count[static_cast<int>(s.silo_id % K)] / 500.0;
    EXPECT_NEAR(frac, 0.9, 0.05);
  }
}

TEST(Generators, NoSkewIsRoughlyUniform) {
  const std::size_t K = 4;
  const Dataset d = gen_heterogeneous_classification(RngKey(52), 3, 800, 2, K, 1.0 / K);
  for (const Shard& s : d.silos) {
    std::map<int, int> count;
    for (const Unit& u : s.units) ++count[static_cast<int>(u.obs[0].y)];
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(count[c] / 800.0, 0.25, 0.06) << c;
  }
}

TEST(Generators, InfeasibleSkewRejected) {
  EXPECT_THROW(gen_heterogeneous_classification(RngKey(53), 2, 10, 2, 4, 0.2), ConfigError);
  EXPECT_THROW(gen_heterogeneous_classification(RngKey(53), 2, 10, 2, 4, 1.01), ConfigError);
}

TEST(Generators, DeterministicGivenKey) {
  const Dataset a = gen_heterogeneous_classification(RngKey(54), 2, 30, 3, 3, 0.8);
  const Dataset b = gen_heterogeneous_classification(RngKey(54), 2, 30, 3, 3, 0.8);
  const Dataset c = gen_heterogeneous_classification(RngKey(55), 2, 30, 3, 3, 0.8);
  bool differs = false;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 30; ++i) {
      EXPECT_EQ(a.silos[j].units[i].obs[0].x, b.silos[j].units[i].obs[0].x);
      EXPECT_EQ(a.silos[j].units[i].obs[0].y, b.silos[j].units[i].obs[0].y);
      differs = differs || a.silos[j].units[i].obs[0].x != c.silos[j].units[i].obs[0].x;
    }
  EXPECT_TRUE(differs);
}

TEST(Generators, BalancedTestSets) {
  const Dataset d = gen_balanced_classification(RngKey(56), 3, 5, 2, 4);
  for (const Shard& s : d.silos) {
    std::map<int, int> count;
    for (const Unit& u : s.units) ++count[static_cast<int>(u.obs[0].y)];
    for (int c = 0; c < 4; ++c) EXPECT_EQ(count[c], 5);
  }
}

}  // namespace
