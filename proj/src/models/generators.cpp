// SPDX-License-Identifier: Apache-2.0
#include "fedvar/models/generators.hpp"

#include <cmath>
#include <numbers>

#include "fedvar/error.hpp"
#include "fedvar/models/multinom.hpp"

namespace fedvar {
namespace {

enum : std::uint64_t { kLatent = 1, kNoise, kLabels, kFeatures, kSilo };

Vec class_mean(std::size_t k, std::size_t K, std::size_t d, double separation) {
  Vec m(d, 0.0);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
  m[0] = separation * std::cos(angle);
  if (d > 1) m[1] = separation * std::sin(angle);
  return m;
}

Observation blob_point(const RngKey& key, std::size_t label, std::size_t K, std::size_t d,
                       double separation) {
  Observation o;
  o.x = std_normal(key, d);
  const Vec m = class_mean(label, K, d, separation);
  for (std::size_t i = 0; i < d; ++i) o.x[i] += m[i];
  o.y = static_cast<double>(label);
  return o;
}

void check_blob_dims(std::size_t J, std::size_t d, std::size_t K) {
  if (J == 0) throw ConfigError("generator: need at least one silo");
  if (d == 0) throw ConfigError("generator: need at least one feature");
  if (K < 2) throw ConfigError("generator: need at least two classes");
}

}  // namespace

Dataset gen_heterogeneous_classification(const RngKey& key, std::size_t J, std::size_t N_j,
                                         std::size_t d, std::size_t K, double skew,
                                         double separation) {
  check_blob_dims(J, d, K);
  const double floor_skew = 1.0 / static_cast<double>(K);
  if (!(skew >= floor_skew - 1e-12 && skew <= 1.0)) {
    throw ConfigError("generator: skew must lie in [1/K, 1]");
  }
  Dataset data;
  std::uint64_t next = 0;
  for (std::size_t j = 0; j < J; ++j) {
    const RngKey silo = key.derive(kSilo).derive(j);
    const std::size_t dominant = j % K;
    const auto n_dom = static_cast<std::size_t>(std::llround(skew * static_cast<double>(N_j)));
    const Vec u = uniform01(silo.derive(kLabels), N_j);
    Shard shard;
    shard.silo_id = j;
    for (std::size_t i = 0; i < N_j; ++i) {
      std::size_t label = dominant;
      if (i >= n_dom) {
        // Uniform over the K - 1 other classes.
        auto pick = static_cast<std::size_t>(u[i] * static_cast<double>(K - 1));
        if (pick >= K - 1) pick = K - 2;
        label = pick >= dominant ? pick + 1 : pick;
      }
      Unit unit;
      unit.global_index = next++;
      unit.obs.push_back(blob_point(silo.derive(kFeatures).derive(i), label, K, d, separation));
      shard.units.push_back(std::move(unit));
    }
    data.silos.push_back(std::move(shard));
  }
  return data;
}

Dataset gen_balanced_classification(const RngKey& key, std::size_t J, std::size_t per_class,
                                    std::size_t d, std::size_t K, double separation) {
  check_blob_dims(J, d, K);
  Dataset data;
  std::uint64_t next = 0;
  for (std::size_t j = 0; j < J; ++j) {
    const RngKey silo = key.derive(kSilo).derive(j);
    Shard shard;
    shard.silo_id = j;
    for (std::size_t i = 0; i < per_class * K; ++i) {
      Unit unit;
      unit.global_index = next++;
      unit.obs.push_back(blob_point(silo.derive(kFeatures).derive(i), i % K, K, d, separation));
      shard.units.push_back(std::move(unit));
    }
    data.silos.push_back(std::move(shard));
  }
  return data;
}

std::vector<Unit> gen_conjugate(const RngKey& key, std::size_t N, double tau, double lambda,
                                double noise) {
  if (!(tau > 0.0 && lambda > 0.0 && noise > 0.0)) {
    throw ConfigError("generator: conjugate scales must be positive");
  }
  const double z_G = tau * std_normal(key.derive(kLatent), 1)[0];
  const Vec a = std_normal(key.derive(kLatent).derive(1), N);
  const Vec e = std_normal(key.derive(kNoise), N);
  std::vector<Unit> units(N);
  for (std::size_t k = 0; k < N; ++k) {
    units[k].global_index = k;
    units[k].obs.push_back({{}, z_G + lambda * a[k] + noise * e[k]});
  }
  return units;
}

std::vector<Unit> gen_glmm(const RngKey& key, std::size_t subjects, const GlmmTruth& truth) {
  if (subjects == 0) throw ConfigError("generator: need at least one subject");
  const Vec b = std_normal(key.derive(kLatent), subjects);
  const Vec smoke_u = uniform01(key.derive(kFeatures), subjects);
  const Vec y_u = uniform01(key.derive(kLabels), subjects * 4);
  const double sd = std::exp(-truth.omega);
  std::vector<Unit> units(subjects);
  for (std::size_t i = 0; i < subjects; ++i) {
    units[i].global_index = i;
    const double smoke = smoke_u[i] < truth.smoke_rate ? 1.0 : 0.0;
    for (int visit = 0; visit < 4; ++visit) {
      const double age = static_cast<double>(visit - 2);
      const double eta = truth.beta[0] + truth.beta[1] * smoke + truth.beta[2] * age +
                         truth.beta[3] * smoke * age + sd * b[i];
      const double p = 1.0 / (1.0 + std::exp(-eta));
      units[i].obs.push_back({{smoke, age}, y_u[i * 4 + visit] < p ? 1.0 : 0.0});
    }
  }
  return units;
}

std::vector<Unit> gen_multinom(const RngKey& key, std::size_t N, std::size_t d, std::size_t K,
                               double w_scale) {
  check_blob_dims(1, d, K);
  Vec w = std_normal(key.derive(kLatent), K * d);
  for (double& v : w) v *= w_scale;
  const Vec b = std_normal(key.derive(kLatent).derive(1), K);
  const Vec u = uniform01(key.derive(kLabels), N);
  std::vector<Unit> units(N);
  Vec p(K);
  for (std::size_t n = 0; n < N; ++n) {
    Observation o;
    o.x = std_normal(key.derive(kFeatures).derive(n), d);
    for (std::size_t k = 0; k < K; ++k) {
      double s = b[k];
      for (std::size_t i = 0; i < d; ++i) s += w[k * d + i] * o.x[i];
      p[k] = s;
    }
    softmax_inplace(p);
    std::size_t label = K - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      acc += p[k];
      if (u[n] < acc) {
        label = k;
        break;
      }
    }
    o.y = static_cast<double>(label);
    units[n].global_index = n;
    units[n].obs.push_back(std::move(o));
  }
  return units;
}

}  // namespace fedvar
