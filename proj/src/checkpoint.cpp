// SPDX-License-Identifier: Apache-2.0
#include "fedvar/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "fedvar/error.hpp"

namespace fedvar {
namespace {

using nlohmann::json;

json adam_json(const AdamState& s) {
  return {{"m", s.m},
          {"v", s.v},
          {"t", s.t},
          {"lr", s.config.lr},
          {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},
          {"eps", s.config.eps}};
}

AdamState adam_from(const json& j) {
  AdamState s;
  s.m = j.at("m").get<Vec>();
  s.v = j.at("v").get<Vec>();
  s.t = j.at("t").get<std::uint64_t>();
  s.config = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
              j.at("eps").get<double>()};
  return s;
}

json global_json(const GlobalVarParams& p) {
  return {{"dim", p.dim()}, {"full_cov", p.full_cov}, {"flat", p.flatten()}};
}

GlobalVarParams global_from(const json& j) {
  return GlobalVarParams::unflatten(j.at("dim").get<std::size_t>(), j.at("full_cov").get<bool>(),
                                    j.at("flat").get<Vec>());
}

json local_json(const LocalVarParams& p) {
  return {{"dim", p.dim()},
          {"global_dim", p.coupled ? p.C.cols : 0},
          {"blocks", p.blocks},
          {"coupled", p.coupled},
          {"flat", p.flatten()}};
}

LocalVarParams local_from(const json& j, std::size_t global_dim) {
  LocalVarParams p = LocalVarParams::initial(
      j.at("dim").get<std::size_t>(), global_dim,
      j.at("blocks").get<std::vector<std::size_t>>(), j.at("coupled").get<bool>());
  p.assign_flat(j.at("flat").get<Vec>());
  return p;
}

json config_json(const RunConfig& c) {
  return {{"rounds", c.rounds},
          {"seed", c.seed},
          {"samples", c.samples},
          {"threads", c.threads},
          {"snapshot_every", c.snapshot_every},
          {"full_cov_global", c.family.full_cov_global},
          {"coupled_local", c.family.coupled_local},
          {"log_sigma0", c.family.log_sigma0},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps}};
}

RunConfig config_from(const json& j) {
  RunConfig c;
  c.rounds = j.at("rounds").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.samples = j.at("samples").get<std::size_t>();
  c.threads = j.at("threads").get<std::size_t>();
  c.snapshot_every = j.at("snapshot_every").get<std::size_t>();
  c.family = {j.at("full_cov_global").get<bool>(), j.at("coupled_local").get<bool>(),
              j.at("log_sigma0").get<double>()};
  c.adam = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
            j.at("eps").get<double>()};
  return c;
}

}  // namespace

Checkpoint capture(const FederatedRun& run, const Model& model) {
  Checkpoint c;
  c.algorithm = "sfvi";
  c.model = model.name();
  c.round = run.server.round;
  c.seed = run.server.run_key.seed();
  c.rng_path = run.server.run_key.path();
  c.config = run.config;
  c.theta = run.server.theta;
  c.eta_G = run.server.eta_G;
  c.adam_theta = run.server.adam_theta;
  c.adam_eta_G = run.server.adam_eta_G;
  for (const auto& s : run.silos) {
    c.silos.push_back({s.silo_id, s.round, s.eta_L, s.adam_L, {}, {}, {}, {}});
  }
  return c;
}

Checkpoint capture(const AvgResult& run, const AvgConfig& config, const Model& model) {
  Checkpoint c;
  c.algorithm = "sfvi_avg";
  c.model = model.name();
  c.round = config.rounds;
  c.seed = config.base.seed;
  c.config = config.base;
  c.theta = run.theta;
  c.eta_G = run.eta_G;
  for (const auto& s : run.silos) {
    c.silos.push_back({s.local.silo_id, s.local.round, s.local.eta_L, s.local.adam_L, s.theta,
                       s.eta_G, s.adam_theta, s.adam_eta_G});
  }
  if (!run.silos.empty()) c.rng_path = run.silos.front().local.run_key.path();
  return c;
}

FederatedRun restore(const Checkpoint& ckpt, const Model& model, const Dataset& data) {
  if (ckpt.algorithm != "sfvi") throw ConfigError("only SFVI checkpoints can be resumed");
  if (ckpt.model != model.name()) {
    throw ConfigError("checkpoint model " + ckpt.model + " does not match " + model.name());
  }
  if (ckpt.eta_G.dim() != model.global_dim() || ckpt.theta.size() != model.theta_dim()) {
    throw ConfigError("checkpoint dimensions do not match the model");
  }
  if (ckpt.silos.size() != data.num_silos()) {
    throw ConfigError("checkpoint silo count does not match the data");
  }
  FederatedRun run;
  run.config = ckpt.config;
  run.server = make_server(model, ckpt.config, data.num_silos());
  run.server.round = ckpt.round;
  run.server.run_key = RngKey::from_path(ckpt.seed, ckpt.rng_path);
  run.server.theta = ckpt.theta;
  run.server.eta_G = ckpt.eta_G;
  run.server.adam_theta = ckpt.adam_theta;
  run.server.adam_eta_G = ckpt.adam_eta_G;
  for (const auto& cs : ckpt.silos) {
    if (cs.silo_id >= data.num_silos()) throw ConfigError("checkpoint names an unknown silo");
    SiloState s = make_silo(model, ckpt.config, data.silos[cs.silo_id]);
    if (cs.eta_L.flat_size() != s.eta_L.flat_size() || cs.eta_L.dim() != s.eta_L.dim()) {
      throw ConfigError("checkpoint local parameters do not match silo " +
                        std::to_string(cs.silo_id));
    }
    s.round = cs.round;
    s.run_key = run.server.run_key;
    s.eta_L = cs.eta_L;
    s.adam_L = cs.adam_L;
    run.silos.push_back(std::move(s));
  }
  return run;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  json j;
  j["format"] = "fedvar-checkpoint";
  j["version"] = kCheckpointVersion;
  j["algorithm"] = c.algorithm;
  j["model"] = c.model;
  j["round"] = c.round;
  j["rng"] = {{"seed", c.seed}, {"path", c.rng_path}};
  j["config"] = config_json(c.config);
  j["encryption"] = "none";
  j["server"] = {{"theta", c.theta},
                 {"eta_G", global_json(c.eta_G)},
                 {"adam_theta", adam_json(c.adam_theta)},
                 {"adam_eta_G", adam_json(c.adam_eta_G)}};
  json silos = json::array();
  for (const auto& s : c.silos) {
    json e = {{"silo_id", s.silo_id},
              {"round", s.round},
              {"eta_L", local_json(s.eta_L)},
              {"adam_L", adam_json(s.adam_L)}};
    if (s.theta) e["theta"] = *s.theta;
    if (s.eta_G) e["eta_G"] = global_json(*s.eta_G);
    if (s.adam_theta) e["adam_theta"] = adam_json(*s.adam_theta);
    if (s.adam_eta_G) e["adam_eta_G"] = adam_json(*s.adam_eta_G);
    silos.push_back(std::move(e));
  }
  j["silos"] = std::move(silos);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != "fedvar-checkpoint") throw ConfigError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version");
    }
    Checkpoint c;
    c.algorithm = j.at("algorithm").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.round = j.at("round").get<std::size_t>();
    c.seed = j.at("rng").at("seed").get<std::uint64_t>();
    c.rng_path = j.at("rng").at("path").get<std::vector<std::uint64_t>>();
    c.config = config_from(j.at("config"));
    const json& srv = j.at("server");
    c.theta = srv.at("theta").get<Vec>();
    c.eta_G = global_from(srv.at("eta_G"));
    c.adam_theta = adam_from(srv.at("adam_theta"));
    c.adam_eta_G = adam_from(srv.at("adam_eta_G"));
    for (const json& e : j.at("silos")) {
      Checkpoint::Silo s;
      s.silo_id = e.at("silo_id").get<std::size_t>();
      s.round = e.at("round").get<std::size_t>();
      s.eta_L = local_from(e.at("eta_L"), c.eta_G.dim());
      s.adam_L = adam_from(e.at("adam_L"));
      if (e.contains("theta")) s.theta = e.at("theta").get<Vec>();
      if (e.contains("eta_G")) s.eta_G = global_from(e.at("eta_G"));
      if (e.contains("adam_theta")) s.adam_theta = adam_from(e.at("adam_theta"));
      if (e.contains("adam_eta_G")) s.adam_eta_G = adam_from(e.at("adam_eta_G"));
      c.silos.push_back(std::move(s));
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace fedvar
