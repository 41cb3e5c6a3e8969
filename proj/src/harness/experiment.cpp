// SPDX-License-Identifier: Apache-2.0
#include "fedvar/harness/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedvar/checkpoint.hpp"
#include "fedvar/error.hpp"
#include "fedvar/harness/predict.hpp"
#include "fedvar/kernels.hpp"
#include "fedvar/models/conjugate.hpp"

namespace fedvar {
namespace {

using nlohmann::json;

struct Outcome {
  TrainingTrace trace;
  std::vector<BaryRow> bary;
  Checkpoint ckpt;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string number(double v) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  std::unique_ptr<Model> model;
  ExperimentData data;
  try {
    cfg.validate();
    model = make_model(cfg.model);
    data = build_data(cfg);
    if (cfg.algorithm == "sfvi_avg" && !model->exchangeable()) {
      throw ConfigError(model->name() + " cannot be trained with sfvi_avg");
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::filesystem::create_directories(cfg.output);
  {
    json manifest;
    manifest["version"] = kFedvarVersion;
    manifest["seed"] = cfg.run.seed;
    manifest["kernel_isa"] = std::string(kernels::isa_name(kernels::active_isa()));
    manifest["config"] = json::parse(experiment_config_json(cfg));
    manifest["data"] = {{"silos", data.train.num_silos()}, {"units", data.train.total_units()}};
    write_text(cfg.output / "manifest.json", manifest.dump(2) + "\n");
  }

  Outcome out;
  try {
    log << "running " << cfg.algorithm << " on " << model->name() << " with "
        << data.train.num_silos() << " silos, " << data.train.total_units() << " units\n";
    if (cfg.algorithm == "sfvi") {
      SfviResult r = run_sfvi(cfg.run, *model, data.train);
      out.trace = std::move(r.trace);
      out.ckpt = capture(r.state, *model);
    } else {
      const AvgConfig avg = cfg.avg_config();
      AvgResult r = run_sfvi_avg(avg, *model, data.train);
      out.trace = r.trace;
      out.bary = r.bary;
      out.ckpt = capture(r, avg, *model);
    }
  } catch (const NumericalError& e) {
    log << "diverged: " << e.what() << '\n';
    write_text(cfg.output / "summary.json",
               json{{"status", "diverged"}, {"error", e.what()}}.dump(2) + "\n");
    return kExitDivergence;
  }

  json summary;
  summary["status"] = "ok";
  summary["rounds"] = cfg.run.rounds;
  summary["final_elbo"] = out.trace.rows.back().elbo;

  const auto* conj = dynamic_cast<const ConjugateGaussianModel*>(model.get());
  std::map<std::size_t, double> kl_by_round;
  if (conj != nullptr) {
    for (const auto& s : out.trace.snapshots) {
      kl_by_round[s.round] = conj->kl_to_exact(
          GlobalVarParams::unflatten(1, cfg.run.family.full_cov_global, s.eta_G), data.train);
    }
    const double kl = conj->kl_to_exact(out.ckpt.eta_G, data.train);
    kl_by_round[out.trace.rows.back().round] = kl;
    const double evidence = conj->log_evidence(data.train);
    summary["kl_to_exact"] = kl;
    summary["log_evidence"] = evidence;
    summary["evidence_gap"] = std::abs(out.trace.rows.back().elbo - evidence);
  }

  if (data.test && model->num_classes() > 0) {
    const RngKey key = RngKey(cfg.run.seed).derive(rng_label::kEval);
    json per_silo = json::array();
    double mean = 0.0;
    for (const auto& shard : data.test->silos) {
      const Mat probs = posterior_predict(out.ckpt, *model, shard.silo_id, shard,
                                          cfg.predict_samples, key.derive(shard.silo_id));
      const Accuracy all = accuracy(probs, shard);
      const std::size_t dominant = shard.silo_id % model->num_classes();
      const Accuracy minor = accuracy(probs, shard, [&](std::size_t c) { return c != dominant; });
      per_silo.push_back({{"silo_id", shard.silo_id},
                          {"accuracy", all.value()},
                          {"non_dominant_accuracy", minor.value()},
                          {"n_test", all.total}});
      mean += all.value() / static_cast<double>(data.test->num_silos());
    }
    summary["test_accuracy"] = {{"mean", mean}, {"per_silo", per_silo}};
  }

  {
    std::ofstream m(cfg.output / "metrics.csv");
    if (!m) throw std::runtime_error("cannot write metrics.csv");
    m << "round,elbo,kl_to_exact\n";
    for (const auto& r : out.trace.rows) {
      const auto it = kl_by_round.find(r.round);
      m << r.round << ',' << number(r.elbo) << ','
        << (it == kl_by_round.end() ? std::string("NA") : number(it->second)) << '\n';
    }
  }
  write_trace_csv(cfg.output / "trace.csv", out.trace);
  if (cfg.algorithm == "sfvi_avg") write_bary_csv(cfg.output / "bary.csv", out.bary);
  save_checkpoint(cfg.output / "checkpoint.json", out.ckpt);
  write_text(cfg.output / "summary.json", summary.dump(2) + "\n");
  log << "final ELBO " << number(out.trace.rows.back().elbo) << "; artifacts in "
      << cfg.output.string() << '\n';
  return kExitOk;
}

}  // namespace fedvar
