#pragma once

// The opaque predictor contract plus the concrete black boxes shipped with
// the library: a feed-forward network evaluator, the analytic pendulum
// controller, and the seeded synthetic docking network.

#include "lmtcfe/common.hpp"
#include "lmtcfe/linear_model_tree.hpp"
#include "lmtcfe/pendulum.hpp"
#include "lmtcfe/tree_json.hpp"

#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace lmtcfe {

class BlackBox {
 public:
  virtual ~BlackBox() = default;

  std::size_t input_dim() const { return input_bounds_.size(); }
  std::size_t output_dim() const { return output_bounds_.size(); }
  const Bounds& input_bounds() const { return input_bounds_; }
  const Bounds& output_bounds() const { return output_bounds_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& output_names() const { return output_names_; }

  /// Deterministic evaluation, clamped to the output bounds.
  Vector predict(const Vector& x) const {
    require_dim(x, input_dim(), "black-box input");
    require_finite(x, "black-box input");
    Vector y = evaluate(x);
    if (static_cast<std::size_t>(y.size()) != output_dim()) {
      throw EvaluationError("black box returned " + std::to_string(y.size()) + " outputs, expected " +
                            std::to_string(output_dim()));
    }
    if (!y.allFinite()) throw EvaluationError("black box returned a non-finite output");
    return clamp_to(y, output_bounds_);
  }

 protected:
  BlackBox(Bounds input_bounds, Bounds output_bounds, std::vector<std::string> feature_names,
           std::vector<std::string> output_names)
      : input_bounds_(std::move(input_bounds)),
        output_bounds_(std::move(output_bounds)),
        feature_names_(std::move(feature_names)),
        output_names_(std::move(output_names)) {
    if (feature_names_.empty()) {
      for (std::size_t j = 0; j < input_bounds_.size(); ++j) feature_names_.push_back("x" + std::to_string(j));
    }
    if (output_names_.empty()) {
      for (std::size_t k = 0; k < output_bounds_.size(); ++k) output_names_.push_back("y" + std::to_string(k));
    }
  }

  virtual Vector evaluate(const Vector& x) const = 0;

 private:
  Bounds input_bounds_;
  Bounds output_bounds_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> output_names_;
};

using BlackBoxPtr = std::shared_ptr<const BlackBox>;

/// Wraps any callable as a black box.
class FunctionPredictor final : public BlackBox {
 public:
  using Fn = std::function<Vector(const Vector&)>;

  FunctionPredictor(Fn fn, Bounds input_bounds, Bounds output_bounds, std::vector<std::string> feature_names = {},
                    std::vector<std::string> output_names = {})
      : BlackBox(std::move(input_bounds), std::move(output_bounds), std::move(feature_names),
                 std::move(output_names)),
        fn_(std::move(fn)) {}

 protected:
  Vector evaluate(const Vector& x) const override { return fn_(x); }

 private:
  Fn fn_;
};

/// A linear model tree used as the black box itself. Useful when the surrogate
/// and the predictor must agree exactly.
class TreePredictor final : public BlackBox {
 public:
  explicit TreePredictor(LinearModelTree tree)
      : BlackBox(tree.input_bounds(), tree.output_bounds(), tree.feature_names(), tree.output_names()),
        tree_(std::move(tree)) {}

  const LinearModelTree& tree() const { return tree_; }

 protected:
  Vector evaluate(const Vector& x) const override { return tree_.predict(x); }

 private:
  LinearModelTree tree_;
};

// ---------------------------------------------------------------------------
// Feed-forward networks

enum class Activation { Tanh, Relu, Identity };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw ParseError("unknown activation \"" + s + "\"");
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Identity;
};

struct MlpSpec {
  std::vector<DenseLayer> layers;
  Vector output_scale;  // per-output multiplier after the last activation; empty means 1
  Bounds input_bounds;
  Bounds output_bounds;
  std::vector<std::string> feature_names;
  std::vector<std::string> output_names;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols()); }
  std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows()); }

  void validate() const {
    if (layers.empty()) throw InputError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.bias.size() != l.weights.rows()) {
        throw InputError("layer " + std::to_string(i) + ": bias length differs from row count");
      }
      if (i > 0 && l.weights.cols() != layers[i - 1].weights.rows()) {
        throw InputError("layer " + std::to_string(i) + ": input width does not chain from previous layer");
      }
    }
    if (output_scale.size() != 0 && static_cast<std::size_t>(output_scale.size()) != output_dim()) {
      throw InputError("output_scale length differs from output dimension");
    }
    if (!input_bounds.empty() && input_bounds.size() != input_dim()) {
      throw InputError("input_bounds length differs from input dimension");
    }
    if (!output_bounds.empty() && output_bounds.size() != output_dim()) {
      throw InputError("output_bounds length differs from output dimension");
    }
  }
};

/// Forward pass; clamped to the spec's output bounds when present.
inline Vector mlp_forward(const MlpSpec& spec, const Vector& x) {
  require_dim(x, spec.input_dim(), "network input");
  Vector a = x;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    Vector z = layer.weights * a + layer.bias;
    switch (layer.activation) {
      case Activation::Tanh: a = z.array().tanh().matrix(); break;
      case Activation::Relu: a = z.cwiseMax(0.0); break;
      case Activation::Identity: a = std::move(z); break;
    }
    if (!a.allFinite()) throw EvaluationError("non-finite activation in layer " + std::to_string(i));
  }
  if (spec.output_scale.size() != 0) a = a.cwiseProduct(spec.output_scale);
  if (!spec.output_bounds.empty()) a = clamp_to(a, spec.output_bounds);
  return a;
}

class MlpPredictor final : public BlackBox {
 public:
  explicit MlpPredictor(MlpSpec spec)
      : BlackBox(checked(spec).input_bounds, spec.output_bounds, spec.feature_names, spec.output_names),
        spec_(std::move(spec)) {}

  const MlpSpec& spec() const { return spec_; }

 protected:
  Vector evaluate(const Vector& x) const override { return mlp_forward(spec_, x); }

 private:
  static const MlpSpec& checked(const MlpSpec& spec) {
    spec.validate();
    if (spec.input_bounds.empty() || spec.output_bounds.empty()) {
      throw InputError("network predictor needs input_bounds and output_bounds");
    }
    return spec;
  }

  MlpSpec spec_;
};

inline Json to_json(const MlpSpec& spec) {
  Json layers = Json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"weights", json_detail::matrix_json(l.weights)},
                      {"bias", to_std(l.bias)},
                      {"activation", activation_name(l.activation)}});
  }
  Json doc{{"layers", std::move(layers)},
           {"input_bounds", json_detail::bounds_json(spec.input_bounds)},
           {"output_bounds", json_detail::bounds_json(spec.output_bounds)}};
  if (spec.output_scale.size() != 0) doc["output_scale"] = to_std(spec.output_scale);
  if (!spec.feature_names.empty()) doc["feature_names"] = spec.feature_names;
  if (!spec.output_names.empty()) doc["output_names"] = spec.output_names;
  return doc;
}

inline MlpSpec mlp_from_json(const Json& doc) {
  using namespace json_detail;
  MlpSpec spec;
  const Json& layers = field(doc, "layers", "weights");
  if (!layers.is_array()) throw ParseError("layers: expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string at = "layers[" + std::to_string(i) + "]";
    DenseLayer l;
    l.weights = matrix(field(layers[i], "weights", at), at + ".weights");
    l.bias = vector(field(layers[i], "bias", at), at + ".bias");
    l.activation = layers[i].contains("activation") ? parse_activation(layers[i]["activation"].get<std::string>())
                                                    : Activation::Identity;
    spec.layers.push_back(std::move(l));
  }
  spec.input_bounds = bounds(field(doc, "input_bounds", "weights"), "input_bounds");
  spec.output_bounds = bounds(field(doc, "output_bounds", "weights"), "output_bounds");
  if (doc.contains("output_scale")) spec.output_scale = vector(doc["output_scale"], "output_scale");
  if (doc.contains("feature_names")) spec.feature_names = names(doc["feature_names"], "feature_names");
  if (doc.contains("output_names")) spec.output_names = names(doc["output_names"], "output_names");
  try {
    spec.validate();
  } catch (const InputError& e) {
    throw ParseError(std::string("weights: ") + e.what());
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Pendulum controller

/// Energy-pumping swing-up outside the capture band, PD stabilization inside.
struct PendulumControllerGains {
  double energy_gain = 1.0;
  double switch_angle = 0.5;  // rad
  double kp = 8.0;
  double kd = 2.0;
  double target_energy = pendulum::kMass * pendulum::kGravity * 0.5 * pendulum::kLength;
};

inline double pendulum_policy(const pendulum::PendulumState& s, const PendulumControllerGains& g = {}) {
  double u = 0.0;
  if (std::abs(s.theta) <= g.switch_angle) {
    u = -g.kp * s.theta - g.kd * s.theta_dot;
  } else {
    u = g.energy_gain * s.theta_dot * (g.target_energy - pendulum::energy(s));
  }
  return pendulum::clamp_torque(u);
}

/// Raw observation entry point; (x, y) is normalized onto the unit circle.
inline double pendulum_policy(const pendulum::RawObservation& obs, const PendulumControllerGains& g = {}) {
  return pendulum_policy(pendulum::from_raw(obs), g);
}

inline Bounds pendulum_raw_bounds() {
  return {{-1.0, 1.0}, {-1.0, 1.0}, {-pendulum::kMaxSpeed, pendulum::kMaxSpeed}};
}

inline Bounds pendulum_engineered_bounds() {
  return {{-std::numbers::pi, std::numbers::pi}, {-pendulum::kMaxSpeed, pendulum::kMaxSpeed}};
}

inline Bounds pendulum_torque_bounds() { return {{-pendulum::kMaxTorque, pendulum::kMaxTorque}}; }

/// Controller over raw (x, y, theta_dot) observations.
class PendulumRawPolicy final : public BlackBox {
 public:
  explicit PendulumRawPolicy(PendulumControllerGains gains = {})
      : BlackBox(pendulum_raw_bounds(), pendulum_torque_bounds(), {"x", "y", "theta_dot"}, {"torque"}),
        gains_(gains) {}

 protected:
  Vector evaluate(const Vector& x) const override {
    return Vector::Constant(1, pendulum_policy(pendulum::raw_from_vector(x), gains_));
  }

 private:
  PendulumControllerGains gains_;
};

/// Same controller over engineered (theta, theta_dot) features.
class PendulumEngineeredPolicy final : public BlackBox {
 public:
  explicit PendulumEngineeredPolicy(PendulumControllerGains gains = {})
      : BlackBox(pendulum_engineered_bounds(), pendulum_torque_bounds(), {"theta", "theta_dot"}, {"torque"}),
        gains_(gains) {}

 protected:
  Vector evaluate(const Vector& x) const override {
    // Route through the raw observation exactly as the deployed policy sees it.
    return Vector::Constant(1, pendulum_policy(pendulum::to_raw(pendulum::state_from_engineered(x)), gains_));
  }

 private:
  PendulumControllerGains gains_;
};

// ---------------------------------------------------------------------------
// Synthetic docking network (8 inputs, 5 outputs)

inline std::vector<std::string> docking_feature_names() {
  return {"x_rel", "y_rel", "heading_rel", "surge", "sway", "yaw_rate", "quay_distance", "quay_bearing"};
}

inline std::vector<std::string> docking_output_names() {
  return {"tunnel_force", "port_force", "port_angle", "starboard_force", "starboard_angle"};
}

/// Fixed random 8-16-16-5 tanh network. Weights are Xavier-uniform from the
/// seeded generator, so a seed pins the function bit-exactly.
inline MlpSpec synthetic_docking_spec(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x646f636bULL));
  const std::vector<int> sizes{8, 16, 16, 5};
  MlpSpec spec;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i];
    const int out = sizes[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer l;
    l.weights.resize(out, in);
    l.bias.resize(out);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weights(r, c) = rng.uniform(-a, a);
      l.bias[r] = rng.uniform(-0.2, 0.2);
    }
    l.activation = Activation::Tanh;
    spec.layers.push_back(std::move(l));
  }
  constexpr double half_pi = std::numbers::pi / 2.0;
  spec.output_scale = Vector{{1.0, 1.0, half_pi, 1.0, half_pi}};
  spec.input_bounds = Bounds(8, Interval{-1.0, 1.0});
  spec.output_bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-half_pi, half_pi}, {-1.0, 1.0}, {-half_pi, half_pi}};
  spec.feature_names = docking_feature_names();
  spec.output_names = docking_output_names();
  return spec;
}

inline BlackBoxPtr synthetic_docking_predictor(std::uint64_t seed) {
  return std::make_shared<MlpPredictor>(synthetic_docking_spec(seed));
}

inline BlackBoxPtr load_mlp_predictor(const std::string& path) {
  return std::make_shared<MlpPredictor>(mlp_from_json(load_json_file(path)));
}

}  // namespace lmtcfe
