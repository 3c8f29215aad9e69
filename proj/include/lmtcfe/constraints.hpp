#pragma once

// Known physical relations between input features, used both as a soft
// penalty during the counterfactual search and as a feasibility check.

#include "lmtcfe/common.hpp"
#include "lmtcfe/pendulum.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace lmtcfe {

struct ConstraintFn {
  enum class Kind { Equality, Inequality };

  std::string id;
  Kind kind = Kind::Equality;
  std::function<double(const Vector&)> residual;
  /// Optional analytic gradient; central differences are used otherwise.
  std::function<Vector(const Vector&)> gradient;
  nlohmann::json parameters = nlohmann::json::object();
  double tolerance = 1e-6;

  bool satisfied(double r) const {
    return kind == Kind::Equality ? std::abs(r) <= tolerance : r <= tolerance;
  }

  /// Violation magnitude that the search penalizes: |c| for equalities,
  /// max(c, 0) for inequalities.
  double violation(const Vector& x) const {
    const double r = residual(x);
    return kind == Kind::Equality ? r : std::max(r, 0.0);
  }

  Vector violation_gradient(const Vector& x) const {
    if (kind == Kind::Inequality && residual(x) <= 0.0) return Vector::Zero(x.size());
    if (gradient) return gradient(x);
    Vector g(x.size());
    Vector probe = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
      probe[j] = x[j] + h;
      const double up = residual(probe);
      probe[j] = x[j] - h;
      const double down = residual(probe);
      probe[j] = x[j];
      g[j] = (up - down) / (2.0 * h);
    }
    return g;
  }
};

struct FeasibilityResult {
  bool feasible = true;
  std::vector<double> residuals;
};

inline FeasibilityResult check_feasibility(const std::vector<ConstraintFn>& constraints, const Vector& x) {
  FeasibilityResult out;
  out.residuals.reserve(constraints.size());
  for (const auto& c : constraints) {
    const double r = c.residual(x);
    out.residuals.push_back(r);
    if (!c.satisfied(r)) out.feasible = false;
  }
  return out;
}

/// Pendulum tip on its circle: c(x) = x_i^2 + x_j^2 - L^2.
inline ConstraintFn unit_circle_constraint(std::size_t xi = 0, std::size_t yi = 1, double length = 1.0,
                                           double tolerance = 1e-6) {
  ConstraintFn c;
  c.id = "unit-circle";
  c.kind = ConstraintFn::Kind::Equality;
  const auto i = static_cast<Eigen::Index>(xi);
  const auto j = static_cast<Eigen::Index>(yi);
  c.residual = [=](const Vector& x) { return x[i] * x[i] + x[j] * x[j] - length * length; };
  c.gradient = [=](const Vector& x) {
    Vector g = Vector::Zero(x.size());
    g[i] = 2.0 * x[i];
    g[j] = 2.0 * x[j];
    return g;
  };
  c.parameters = {{"x_index", xi}, {"y_index", yi}, {"length", length}};
  c.tolerance = tolerance;
  return c;
}

/// The same circle relation evaluated after mapping engineered (theta,
/// theta_dot) features back to raw coordinates.
inline ConstraintFn engineered_circle_constraint(double tolerance = 1e-6) {
  ConstraintFn c;
  c.id = "unit-circle";
  c.kind = ConstraintFn::Kind::Equality;
  c.residual = [](const Vector& v) {
    const auto o = pendulum::to_raw(pendulum::state_from_engineered(v));
    return o.x * o.x + o.y * o.y - 1.0;
  };
  c.gradient = [](const Vector& v) { return Vector::Zero(v.size()); };
  c.parameters = {{"space", "engineered"}, {"length", 1.0}};
  c.tolerance = tolerance;
  return c;
}

}  // namespace lmtcfe
