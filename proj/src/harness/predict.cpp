// SPDX-License-Identifier: Apache-2.0
#include "fedvar/harness/predict.hpp"

#include <algorithm>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {

Mat posterior_predict(const Model& model, const GlobalVarParams& eta_G,
                      const LocalVarParams& eta_L, const Shard& test, std::size_t n_samples,
                      const RngKey& key) {
  if (n_samples == 0) throw ConfigError("posterior_predict needs at least one sample");
  const std::size_t K = model.num_classes();
  if (K == 0) throw ConfigError(model.name() + " is not a classification model");
  const LocalShape shape = model.local_shape();
  if (shape.kind == LocalKind::per_unit && shape.dim > 0) {
    throw ConfigError("posterior_predict needs per-silo or no local latents");
  }
  require_dims(eta_G.dim() == model.global_dim(), "posterior_predict: eta_G does not fit model");
  const std::size_t nL = shape.kind == LocalKind::per_silo ? shape.dim : 0;
  require_dims(eta_L.dim() == nL, "posterior_predict: eta_L does not fit model");

  std::size_t n_obs = 0;
  for (const auto& u : test.units) n_obs += u.obs.size();
  Mat probs(n_obs, K);
  const double w = 1.0 / static_cast<double>(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const RngKey k = key.derive(s);
    const Vec eps_G = std_normal(k.derive(rng_label::kGlobal), eta_G.dim());
    const Vec eps_L = std_normal(k.derive(rng_label::kLocalSilo), nL);
    const LatentSample z = draw_latents(eta_G, eta_L, eps_G, eps_L);
    std::size_t row = 0;
    for (const auto& u : test.units) {
      for (const auto& o : u.obs) {
        const Vec p = model.class_probabilities(z.z_G, z.z_L, o.x);
        kernels::axpy(w, p, probs.row(row++));
      }
    }
  }
  return probs;
}

Mat posterior_predict(const Checkpoint& ckpt, const Model& model, std::size_t silo_id,
                      const Shard& test, std::size_t n_samples, const RngKey& key) {
  if (ckpt.model != model.name()) {
    throw ConfigError("checkpoint model " + ckpt.model + " does not match " + model.name());
  }
  const auto it = std::find_if(ckpt.silos.begin(), ckpt.silos.end(),
                               [&](const Checkpoint::Silo& s) { return s.silo_id == silo_id; });
  if (it == ckpt.silos.end()) throw ConfigError("checkpoint has no silo " + std::to_string(silo_id));
  return posterior_predict(model, ckpt.eta_G, it->eta_L, test, n_samples, key);
}

Accuracy accuracy(const Mat& probs, const Shard& test,
                  const std::function<bool(std::size_t)>& keep) {
  Accuracy a;
  std::size_t row = 0;
  for (const auto& u : test.units) {
    for (const auto& o : u.obs) {
      const auto label = static_cast<std::size_t>(o.y);
      const auto r = probs.row(row++);
      if (keep && !keep(label)) continue;
      const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
      a.total += 1;
      if (best == label) a.correct += 1;
    }
  }
  require_dims(row == probs.rows, "accuracy: probabilities do not match test data");
  return a;
}

}  // namespace fedvar
