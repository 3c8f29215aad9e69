#pragma once

// JSON run configuration shared by the CLI and the service. Relative paths
// resolve against the directory holding the config file.

#include "lmtcfe/cfe_engine.hpp"
#include "lmtcfe/environment.hpp"
#include "lmtcfe/lmt_builder.hpp"
#include "lmtcfe/tree_json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lmtcfe::app {

struct Paths {
  std::string tree = "tree.json";
  std::string weights;
  std::string dataset = "dataset.csv";
  std::string report;  // empty prints to stdout
};

struct SampleSettings {
  std::size_t count = 50000;
  std::string sampler = "uniform";
  std::size_t steps_per_rollout = 200;
};

struct EngineSettings {
  ObjectiveWeights weights;
  std::size_t num_explanations = 3;
  std::size_t max_leaves = 0;
  double min_output_change_fraction = 0.1;
  double target_tolerance_fraction = 0.05;
  double feasibility_tolerance = 1e-6;
  DistanceNorm norm = DistanceNorm::L1;
  SolverOptions solver;
};

struct ModelEntry {
  std::string name;
  std::string environment;
  std::string tree;
};

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<ModelEntry> models;  // empty serves the main environment and tree
};

struct RunConfig {
  std::string environment = "pendulum-engineered";
  std::uint64_t seed = 0;
  std::uint64_t docking_seed = 42;
  Paths paths;
  SampleSettings sample;
  TrainConfig train;
  double r2_gate = 0.9;
  double heldout_fraction = 0.2;
  EngineSettings engine;
  std::size_t bench_states = 250;
  ServiceSettings service;

  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    engine.solver.seed = s;
  }

  EnvironmentOptions environment_options() const {
    EnvironmentOptions o;
    o.docking_seed = docking_seed;
    o.weights_path = paths.weights;
    o.feasibility_tolerance = engine.feasibility_tolerance;
    o.steps_per_rollout = sample.steps_per_rollout;
    return o;
  }

  void validate() const {
    const auto& names = environment_names();
    auto known = [&](const std::string& e) { return std::find(names.begin(), names.end(), e) != names.end(); };
    if (!known(environment)) throw InputError("unknown environment \"" + environment + "\"");
    for (double t : {engine.min_output_change_fraction, engine.target_tolerance_fraction,
                     engine.feasibility_tolerance, r2_gate}) {
      if (!(t > 0.0) || !std::isfinite(t)) throw InputError("tolerances must be positive");
    }
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) throw InputError("heldout_fraction must be in (0, 1)");
    if (engine.num_explanations < 1) throw InputError("num_explanations must be at least 1");
    engine.weights.validate();
    auto must_exist = [](const std::string& p, const char* what) {
      if (!std::filesystem::exists(p)) throw InputError(std::string(what) + " not found: " + p);
    };
    if (environment == "external-mlp") {
      if (paths.weights.empty()) throw InputError("external-mlp needs paths.weights");
      must_exist(paths.weights, "weights file");
    }
    for (const auto& m : service.models) {
      if (!known(m.environment)) throw InputError("model " + m.name + ": unknown environment \"" + m.environment + "\"");
      must_exist(m.tree, "tree file");
    }
  }
};

namespace config_detail {

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline DistanceNorm parse_norm(const std::string& s) {
  if (s == "l1" || s == "L1") return DistanceNorm::L1;
  if (s == "l2" || s == "L2") return DistanceNorm::L2;
  throw ParseError("engine.distance: expected \"l1\" or \"l2\", got \"" + s + "\"");
}

}  // namespace config_detail

/// `base` is the directory relative paths are resolved against.
inline RunConfig config_from_json(const Json& doc, const std::filesystem::path& base = ".") {
  using config_detail::read;
  if (!doc.is_object()) throw ParseError("config: expected an object");
  RunConfig c;
  read(doc, "environment", c.environment, "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "docking_seed", c.docking_seed, "config");
  if (doc.contains("paths")) {
    const Json& p = doc["paths"];
    read(p, "tree", c.paths.tree, "paths");
    read(p, "weights", c.paths.weights, "paths");
    read(p, "dataset", c.paths.dataset, "paths");
    read(p, "report", c.paths.report, "paths");
  }
  c.paths.tree = config_detail::resolve(base, c.paths.tree);
  c.paths.weights = config_detail::resolve(base, c.paths.weights);
  c.paths.dataset = config_detail::resolve(base, c.paths.dataset);
  c.paths.report = config_detail::resolve(base, c.paths.report);
  if (doc.contains("sample")) {
    const Json& s = doc["sample"];
    read(s, "count", c.sample.count, "sample");
    read(s, "sampler", c.sample.sampler, "sample");
    read(s, "steps_per_rollout", c.sample.steps_per_rollout, "sample");
  }
  if (doc.contains("train")) {
    const Json& t = doc["train"];
    read(t, "max_depth", c.train.max_depth, "train");
    read(t, "min_samples_leaf", c.train.min_samples_leaf, "train");
    read(t, "candidate_quantiles", c.train.candidate_quantiles, "train");
    read(t, "min_sse_improvement", c.train.min_sse_improvement, "train");
    read(t, "max_leaves", c.train.max_leaves, "train");
    read(t, "r2_gate", c.r2_gate, "train");
    read(t, "heldout_fraction", c.heldout_fraction, "train");
  }
  if (doc.contains("engine")) {
    const Json& e = doc["engine"];
    if (e.contains("weights")) {
      const Json& w = e["weights"];
      read(w, "input", c.engine.weights.input, "engine.weights");
      read(w, "output", c.engine.weights.output, "engine.weights");
      read(w, "sparsity_input", c.engine.weights.sparsity_input, "engine.weights");
      read(w, "sparsity_output", c.engine.weights.sparsity_output, "engine.weights");
      read(w, "feasibility", c.engine.weights.feasibility, "engine.weights");
    }
    read(e, "num_explanations", c.engine.num_explanations, "engine");
    read(e, "max_leaves", c.engine.max_leaves, "engine");
    read(e, "min_output_change_fraction", c.engine.min_output_change_fraction, "engine");
    read(e, "target_tolerance_fraction", c.engine.target_tolerance_fraction, "engine");
    read(e, "feasibility_tolerance", c.engine.feasibility_tolerance, "engine");
    std::string norm;
    read(e, "distance", norm, "engine");
    if (!norm.empty()) c.engine.norm = config_detail::parse_norm(norm);
    if (e.contains("solver")) {
      const Json& s = e["solver"];
      read(s, "starts", c.engine.solver.starts, "engine.solver");
      read(s, "iterations", c.engine.solver.iterations, "engine.solver");
      read(s, "initial_step", c.engine.solver.initial_step, "engine.solver");
    }
  }
  if (doc.contains("bench")) read(doc["bench"], "states", c.bench_states, "bench");
  if (doc.contains("service")) {
    const Json& s = doc["service"];
    read(s, "host", c.service.host, "service");
    read(s, "port", c.service.port, "service");
    if (s.contains("models")) {
      if (!s["models"].is_array()) throw ParseError("service.models: expected an array");
      for (std::size_t i = 0; i < s["models"].size(); ++i) {
        const Json& m = s["models"][i];
        const std::string where = "service.models[" + std::to_string(i) + "]";
        ModelEntry entry;
        read(m, "name", entry.name, where);
        read(m, "environment", entry.environment, where);
        read(m, "tree", entry.tree, where);
        if (entry.name.empty() || entry.environment.empty() || entry.tree.empty()) {
          throw ParseError(where + ": name, environment and tree are required");
        }
        entry.tree = config_detail::resolve(base, entry.tree);
        c.service.models.push_back(std::move(entry));
      }
    }
  }
  c.set_seed(c.seed);
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path();
  return config_from_json(load_json_file(path), base.empty() ? std::filesystem::path(".") : base);
}

}  // namespace lmtcfe::app
