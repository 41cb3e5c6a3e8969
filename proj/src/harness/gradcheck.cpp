// SPDX-License-Identifier: Apache-2.0
#include "fedvar/harness/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fedvar/error.hpp"
#include "fedvar/harness/fd.hpp"
#include "fedvar/models/generators.hpp"
#include "fedvar/models/hierbnn.hpp"
#include "fedvar/models/multinom.hpp"

namespace fedvar {

bool GradCheckReport::passed() const {
  return std::all_of(lines.begin(), lines.end(),
                     [&](const GradCheckLine& l) { return l.max_error <= tolerance; });
}

Shard gradcheck_shard(const Model& model, const RngKey& key) {
  std::vector<Unit> units;
  if (model.name() == "conjugate") {
    units = gen_conjugate(key, 6, 1.0, 1.0, 1.0);
  } else if (model.name() == "glmm") {
    units = gen_glmm(key, 5);
  } else if (const auto* m = dynamic_cast<const MultinomRegModel*>(&model)) {
    units = gen_multinom(key, 12, m->features(), m->num_classes());
  } else if (const auto* h = dynamic_cast<const ToyHierBNNModel*>(&model)) {
    Dataset d = gen_heterogeneous_classification(key, 1, 12, h->inputs(), h->num_classes(),
                                                 1.0 / static_cast<double>(h->num_classes()));
    return d.silos.front();
  } else {
    throw ConfigError("no gradient-check data for model " + model.name());
  }
  Shard s;
  s.units = std::move(units);
  return s;
}

namespace {

bool near_kink(const Model& model, const Shard& shard, std::span<const double> z_G,
               std::span<const double> z_L) {
  const auto* h = dynamic_cast<const ToyHierBNNModel*>(&model);
  if (h == nullptr) return false;
  for (const auto& u : shard.units) {
    for (const auto& o : u.obs) {
      for (double a : h->hidden_preactivations(z_G, z_L, o.x)) {
        if (std::abs(a) <= 1e-3) return true;
      }
    }
  }
  return false;
}

void track(GradCheckReport& r, const std::string& what, std::span<const double> analytic,
           std::span<const double> fd) {
  const double err = analytic.empty() && fd.empty() ? 0.0 : max_relative_error(analytic, fd);
  for (auto& l : r.lines) {
    if (l.what == what) {
      l.max_error = std::max(l.max_error, err);
      return;
    }
  }
  r.lines.push_back({what, err});
}

Vec or_zeros(const Vec& v, std::size_t n) { return v.empty() ? Vec(n, 0.0) : v; }

}  // namespace

GradCheckReport check_model_gradients(const Model& model, const Shard& shard, const RngKey& key,
                                      std::size_t trials) {
  const bool relu = dynamic_cast<const ToyHierBNNModel*>(&model) != nullptr;
  GradCheckReport r;
  r.trials = trials;
  r.tolerance = relu ? 1e-4 : 1e-5;
  const std::size_t nT = model.theta_dim();
  const std::size_t nG = model.global_dim();
  const std::size_t nL = model.local_dim(shard);
  std::size_t attempt = 0;
  for (std::size_t t = 0; t < trials; ++attempt) {
    const RngKey k = key.derive(attempt);
    Vec theta = std_normal(k.derive(1), nT);
    Vec z_G = std_normal(k.derive(2), nG);
    Vec z_L = std_normal(k.derive(3), nL);
    for (double& v : theta) v *= 0.5;
    for (double& v : z_G) v *= 0.5;
    if (near_kink(model, shard, z_G, z_L)) {
      if (attempt > 100 * trials) throw NumericalError("could not avoid ReLU kinks");
      continue;
    }
    ++t;
    const JointEval prior = model.log_prior_global(theta, z_G);
    const JointEval local = model.log_local_joint(shard, theta, z_G, z_L);
    track(r, "log_prior_global d_theta", or_zeros(prior.d_theta, nT),
          fd_gradient_oracle([&](std::span<const double> x) {
            return model.log_prior_global(x, z_G).value;
          }, theta));
    track(r, "log_prior_global d_zG", or_zeros(prior.d_zG, nG),
          fd_gradient_oracle([&](std::span<const double> x) {
            return model.log_prior_global(theta, x).value;
          }, z_G));
    track(r, "log_local_joint d_theta", or_zeros(local.d_theta, nT),
          fd_gradient_oracle([&](std::span<const double> x) {
            return model.log_local_joint(shard, x, z_G, z_L).value;
          }, theta));
    track(r, "log_local_joint d_zG", or_zeros(local.d_zG, nG),
          fd_gradient_oracle([&](std::span<const double> x) {
            return model.log_local_joint(shard, theta, x, z_L).value;
          }, z_G));
    track(r, "log_local_joint d_zL", or_zeros(local.d_zL, nL),
          fd_gradient_oracle([&](std::span<const double> x) {
            return model.log_local_joint(shard, theta, z_G, x).value;
          }, z_L));
  }
  return r;
}

}  // namespace fedvar
