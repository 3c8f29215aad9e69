#pragma once

// Named problem setups: a black box, the physical relations its inputs must
// satisfy, and samplers over its state space.

#include "lmtcfe/blackbox.hpp"
#include "lmtcfe/constraints.hpp"
#include "lmtcfe/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lmtcfe {

struct Environment {
  std::string name;
  BlackBoxPtr blackbox;
  std::vector<ConstraintFn> feasibility;
  /// Physically valid random states, used for benchmark queries.
  StateSampler query_sampler;
  std::optional<StateSampler> trajectory_sampler;
  bool pendulum = false;
  PendulumFeatures pendulum_features = PendulumFeatures::Engineered;
};

inline const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"pendulum-raw", "pendulum-engineered", "synthetic-docking",
                                              "external-mlp"};
  return names;
}

inline StateSampler pendulum_state_sampler(PendulumFeatures features) {
  return {"pendulum-states", [features](std::size_t count, Rng& rng) {
            Matrix X(static_cast<Eigen::Index>(count), features == PendulumFeatures::Raw ? 3 : 2);
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
              const auto s = pendulum::PendulumState::make(rng.uniform(-std::numbers::pi, std::numbers::pi),
                                                           rng.uniform(-pendulum::kMaxSpeed, pendulum::kMaxSpeed));
              X.row(i) = (features == PendulumFeatures::Raw ? pendulum::raw_features(s)
                                                             : pendulum::engineered_features(s))
                             .transpose();
            }
            return X;
          }};
}

struct EnvironmentOptions {
  std::uint64_t docking_seed = 42;
  std::string weights_path;  // external-mlp only
  double feasibility_tolerance = 1e-6;
  std::size_t steps_per_rollout = 200;
};

inline Environment make_environment(const std::string& name, const EnvironmentOptions& opt = {}) {
  Environment env;
  env.name = name;
  if (name == "pendulum-raw" || name == "pendulum-engineered") {
    const bool raw = name == "pendulum-raw";
    env.pendulum = true;
    env.pendulum_features = raw ? PendulumFeatures::Raw : PendulumFeatures::Engineered;
    if (raw) {
      env.blackbox = std::make_shared<PendulumRawPolicy>();
      env.feasibility.push_back(unit_circle_constraint(0, 1, pendulum::kLength, opt.feasibility_tolerance));
    } else {
      env.blackbox = std::make_shared<PendulumEngineeredPolicy>();
      env.feasibility.push_back(engineered_circle_constraint(opt.feasibility_tolerance));
    }
    env.query_sampler = pendulum_state_sampler(env.pendulum_features);
    env.trajectory_sampler = pendulum_trajectory_sampler(env.pendulum_features, opt.steps_per_rollout);
  } else if (name == "synthetic-docking") {
    env.blackbox = synthetic_docking_predictor(opt.docking_seed);
    env.query_sampler = uniform_sampler(env.blackbox->input_bounds());
  } else if (name == "external-mlp") {
    if (opt.weights_path.empty()) throw InputError("external-mlp needs a weights file");
    env.blackbox = load_mlp_predictor(opt.weights_path);
    env.query_sampler = uniform_sampler(env.blackbox->input_bounds());
  } else {
    throw InputError("unknown environment \"" + name + "\"");
  }
  return env;
}

inline StateSampler training_sampler(const Environment& env, const std::string& sampler) {
  if (sampler == "uniform" || sampler == "uniform-in-bounds") return uniform_sampler(env.blackbox->input_bounds());
  if (sampler == "trajectory" || sampler == "trajectory-rollout") {
    if (!env.trajectory_sampler) throw InputError("environment " + env.name + " has no trajectory sampler");
    return *env.trajectory_sampler;
  }
  throw InputError("unknown sampler \"" + sampler + "\"");
}

}  // namespace lmtcfe
