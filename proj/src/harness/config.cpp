// SPDX-License-Identifier: Apache-2.0
#include "fedvar/harness/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "fedvar/error.hpp"
#include "fedvar/models/conjugate.hpp"
#include "fedvar/models/generators.hpp"
#include "fedvar/models/glmm.hpp"
#include "fedvar/models/hierbnn.hpp"
#include "fedvar/models/multinom.hpp"

namespace fedvar {
namespace {

using nlohmann::json;

void only_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.contains(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    // nlohmann converts -1 to a huge unsigned value without complaint.
    if (!j.at(key).is_number_unsigned()) {
      throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
    }
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

std::string mode_name(BarycenterMode m) { return m == BarycenterMode::full ? "full" : "diagonal"; }

}  // namespace

void ExperimentConfig::validate() const {
  if (algorithm != "sfvi" && algorithm != "sfvi_avg") {
    throw ConfigError("algorithm must be sfvi or sfvi_avg, got '" + algorithm + "'");
  }
  static const std::set<std::string> models{"conjugate", "glmm", "multinom", "hierbnn"};
  if (!models.contains(model.id)) throw ConfigError("unknown model id '" + model.id + "'");
  if (silos == 0) throw ConfigError("silos must be at least 1");
  run.validate();
  if (predict_samples == 0) throw ConfigError("predict_samples must be at least 1");
  if (algorithm == "sfvi_avg") avg_config().validate();

  const bool has_gen = !data.generator.empty();
  const bool has_csv = !data.csv.empty();
  if (has_gen == has_csv) throw ConfigError("data needs exactly one of generator or csv");
  if (has_gen) {
    static const std::map<std::string, std::set<std::string>> fits{
        {"conjugate", {"conjugate"}},
        {"glmm", {"glmm"}},
        {"multinom", {"multinom"}},
        {"heterogeneous", {"multinom", "hierbnn"}}};
    const auto it = fits.find(data.generator);
    if (it == fits.end()) throw ConfigError("unknown generator '" + data.generator + "'");
    if (!it->second.contains(model.id)) {
      throw ConfigError("generator " + data.generator + " does not fit model " + model.id);
    }
    if (data.generator == "heterogeneous" && data.per_silo == 0) {
      throw ConfigError("per_silo must be positive");
    }
    if (data.generator != "heterogeneous" && data.n < silos) {
      throw ConfigError("fewer units than silos");
    }
  } else {
    static const std::set<std::string> formats{"scalar", "classification", "glmm"};
    if (!formats.contains(data.format)) throw ConfigError("unknown CSV format '" + data.format + "'");
    if (!std::filesystem::exists(data.csv)) {
      throw ConfigError("data file not found: " + data.csv.string());
    }
  }
  // Construct once so hyperparameter errors surface here.
  const auto m = make_model(model);
  if (algorithm == "sfvi_avg" && !m->exchangeable()) {
    throw ConfigError(model.id + " lacks the exchangeable local structure averaging needs");
  }
}

AvgConfig ExperimentConfig::avg_config() const {
  AvgConfig a;
  a.rounds = run.rounds;
  a.local_steps = local_steps;
  a.mode = barycenter;
  a.tol = bary_tol;
  a.max_iter = bary_max_iter;
  a.weighted_theta = weighted_theta;
  a.base = run;
  return a;
}

ExperimentConfig parse_experiment_config(std::string_view text,
                                         const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(j, "config",
            {"algorithm", "model", "data", "silos", "seed", "rounds", "samples", "threads",
             "snapshot_every", "optimizer", "family", "averaging", "predict_samples", "output"});
  ExperimentConfig c;
  read(j, "algorithm", c.algorithm);
  read(j, "silos", c.silos);
  read(j, "seed", c.run.seed);
  read(j, "rounds", c.run.rounds);
  read(j, "samples", c.run.samples);
  read(j, "threads", c.run.threads);
  read(j, "snapshot_every", c.run.snapshot_every);
  read(j, "predict_samples", c.predict_samples);
  std::string out;
  read(j, "output", out);
  if (!out.empty()) c.output = out;

  if (!j.contains("model")) throw ConfigError("config needs a model section");
  const json& m = j.at("model");
  only_keys(m, "model", {"id", "tau", "lambda", "noise", "features", "classes", "hidden"});
  read(m, "id", c.model.id);
  read(m, "tau", c.model.tau);
  read(m, "lambda", c.model.lambda);
  read(m, "noise", c.model.noise);
  read(m, "features", c.model.features);
  read(m, "classes", c.model.classes);
  read(m, "hidden", c.model.hidden);

  c.data.seed = c.run.seed;
  if (!j.contains("data")) throw ConfigError("config needs a data section");
  const json& d = j.at("data");
  only_keys(d, "data",
            {"generator", "csv", "format", "repartition", "seed", "n", "per_silo", "skew",
             "separation", "test_n", "test_per_class"});
  read(d, "generator", c.data.generator);
  std::string csv;
  read(d, "csv", csv);
  if (!csv.empty()) {
    c.data.csv = std::filesystem::path(csv).is_absolute() ? std::filesystem::path(csv)
                                                          : base_dir / csv;
  }
  read(d, "format", c.data.format);
  read(d, "repartition", c.data.repartition);
  read(d, "seed", c.data.seed);
  read(d, "n", c.data.n);
  read(d, "per_silo", c.data.per_silo);
  read(d, "skew", c.data.skew);
  read(d, "separation", c.data.separation);
  read(d, "test_n", c.data.test_n);
  read(d, "test_per_class", c.data.test_per_class);

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    only_keys(o, "optimizer", {"lr", "beta1", "beta2", "eps"});
    read(o, "lr", c.run.adam.lr);
    read(o, "beta1", c.run.adam.beta1);
    read(o, "beta2", c.run.adam.beta2);
    read(o, "eps", c.run.adam.eps);
  }
  std::optional<bool> full_cov;
  if (j.contains("family")) {
    const json& f = j.at("family");
    only_keys(f, "family", {"full_cov_global", "coupled_local", "log_sigma0"});
    if (f.contains("full_cov_global")) {
      bool v = true;
      read(f, "full_cov_global", v);
      full_cov = v;
    }
    read(f, "coupled_local", c.run.family.coupled_local);
    read(f, "log_sigma0", c.run.family.log_sigma0);
  }
  if (j.contains("averaging")) {
    const json& a = j.at("averaging");
    only_keys(a, "averaging", {"local_steps", "barycenter", "tol", "max_iter", "weighted_theta"});
    read(a, "local_steps", c.local_steps);
    std::string mode = "diagonal";
    read(a, "barycenter", mode);
    if (mode == "diagonal") {
      c.barycenter = BarycenterMode::diagonal;
    } else if (mode == "full") {
      c.barycenter = BarycenterMode::full;
    } else {
      throw ConfigError("barycenter must be diagonal or full, got '" + mode + "'");
    }
    read(a, "tol", c.bary_tol);
    read(a, "max_iter", c.bary_max_iter);
    read(a, "weighted_theta", c.weighted_theta);
  }
  // Averaging ties the global covariance structure to the barycenter mode.
  if (full_cov) {
    c.run.family.full_cov_global = *full_cov;
  } else if (c.algorithm == "sfvi_avg") {
    c.run.family.full_cov_global = c.barycenter == BarycenterMode::full;
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json j;
  j["algorithm"] = c.algorithm;
  j["silos"] = c.silos;
  j["seed"] = c.run.seed;
  j["rounds"] = c.run.rounds;
  j["samples"] = c.run.samples;
  j["threads"] = c.run.threads;
  j["snapshot_every"] = c.run.snapshot_every;
  j["predict_samples"] = c.predict_samples;
  j["output"] = c.output.string();
  j["model"] = {{"id", c.model.id},       {"tau", c.model.tau},
                {"lambda", c.model.lambda}, {"noise", c.model.noise},
                {"features", c.model.features}, {"classes", c.model.classes},
                {"hidden", c.model.hidden}};
  json d = {{"seed", c.data.seed},           {"n", c.data.n},
            {"per_silo", c.data.per_silo},   {"skew", c.data.skew},
            {"separation", c.data.separation}, {"test_n", c.data.test_n},
            {"test_per_class", c.data.test_per_class}, {"repartition", c.data.repartition}};
  if (!c.data.generator.empty()) d["generator"] = c.data.generator;
  if (!c.data.csv.empty()) {
    d["csv"] = c.data.csv.string();
    d["format"] = c.data.format;
  }
  j["data"] = d;
  j["optimizer"] = {{"lr", c.run.adam.lr},
                    {"beta1", c.run.adam.beta1},
                    {"beta2", c.run.adam.beta2},
                    {"eps", c.run.adam.eps}};
  j["family"] = {{"full_cov_global", c.run.family.full_cov_global},
                 {"coupled_local", c.run.family.coupled_local},
                 {"log_sigma0", c.run.family.log_sigma0}};
  j["averaging"] = {{"local_steps", c.local_steps},
                    {"barycenter", mode_name(c.barycenter)},
                    {"tol", c.bary_tol},
                    {"max_iter", c.bary_max_iter},
                    {"weighted_theta", c.weighted_theta}};
  return j.dump(2);
}

std::unique_ptr<Model> make_model(const ModelConfig& cfg) {
  if (cfg.id == "conjugate") {
    return std::make_unique<ConjugateGaussianModel>(cfg.tau, cfg.lambda, cfg.noise);
  }
  if (cfg.id == "glmm") return std::make_unique<LogisticMixedModel>();
  if (cfg.id == "multinom") return std::make_unique<MultinomRegModel>(cfg.features, cfg.classes);
  if (cfg.id == "hierbnn") {
    return std::make_unique<ToyHierBNNModel>(cfg.features, cfg.hidden, cfg.classes);
  }
  throw ConfigError("unknown model id '" + cfg.id + "'");
}

ExperimentData build_data(const ExperimentConfig& cfg) {
  const RngKey key = RngKey(cfg.data.seed).derive(rng_label::kData);
  const RngKey split = key.derive(0x73706c6974ULL);  // "split"
  const DataConfig& d = cfg.data;
  ExperimentData out;
  if (!d.csv.empty()) {
    if (d.format == "glmm") {
      out.train = partition_even(read_glmm_csv(d.csv), cfg.silos, split);
    } else {
      out.train = d.format == "scalar" ? read_scalar_csv(d.csv) : read_classification_csv(d.csv);
      if (d.repartition) {
        out.train = repartition(out.train, cfg.silos, split);
      } else if (out.train.num_silos() != cfg.silos) {
        throw ConfigError("CSV has " + std::to_string(out.train.num_silos()) +
                          " silos but the config asks for " + std::to_string(cfg.silos));
      }
    }
  } else if (d.generator == "conjugate") {
    out.train = partition_even(
        gen_conjugate(key, d.n, cfg.model.tau, cfg.model.lambda, cfg.model.noise), cfg.silos, split);
  } else if (d.generator == "glmm") {
    out.train = partition_even(gen_glmm(key, d.n), cfg.silos, split);
  } else if (d.generator == "multinom") {
    std::vector<Unit> units =
        gen_multinom(key, d.n + d.test_n, cfg.model.features, cfg.model.classes);
    std::vector<Unit> test(units.begin() + static_cast<std::ptrdiff_t>(d.n), units.end());
    units.resize(d.n);
    out.train = partition_even(std::move(units), cfg.silos, split);
    if (d.test_n > 0) {
      for (std::size_t i = 0; i < test.size(); ++i) test[i].global_index = i;
      out.test = partition_even(std::move(test), cfg.silos, split.derive(1));
    }
  } else if (d.generator == "heterogeneous") {
    out.train = gen_heterogeneous_classification(key, cfg.silos, d.per_silo, cfg.model.features,
                                                 cfg.model.classes, d.skew, d.separation);
    if (d.test_per_class > 0) {
      out.test = gen_balanced_classification(key.derive(1), cfg.silos, d.test_per_class,
                                             cfg.model.features, cfg.model.classes, d.separation);
    }
  } else {
    throw ConfigError("unknown generator '" + d.generator + "'");
  }
  out.train.validate();
  const auto model = make_model(cfg.model);
  for (const auto& s : out.train.silos) {
    if (s.size() == 0) throw ConfigError("silo " + std::to_string(s.silo_id) + " has no data");
    model->validate(s);
  }
  return out;
}

}  // namespace fedvar
