#pragma once

// Inverted pendulum with the classic-control constants (g = 10, m = 1,
// l = 1, dt = 0.05). theta = 0 is upright, positive counter-clockwise.

#include "lmtcfe/common.hpp"

#include <algorithm>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace lmtcfe::pendulum {

inline constexpr double kGravity = 10.0;
inline constexpr double kMass = 1.0;
inline constexpr double kLength = 1.0;
inline constexpr double kDt = 0.05;
inline constexpr double kMaxTorque = 2.0;
inline constexpr double kMaxSpeed = 8.0;

/// Wraps to (-pi, pi].
inline double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  return r == -std::numbers::pi ? std::numbers::pi : r;
}

inline double clamp_speed(double v) { return std::clamp(v, -kMaxSpeed, kMaxSpeed); }
inline double clamp_torque(double u) { return std::clamp(u, -kMaxTorque, kMaxTorque); }

struct PendulumState {
  double theta = 0.0;      // rad, (-pi, pi]
  double theta_dot = 0.0;  // rad/s, [-8, 8]

  static PendulumState make(double theta, double theta_dot) {
    return {wrap_angle(theta), clamp_speed(theta_dot)};
  }
};

struct RawObservation {
  double x = 1.0;  // cos(theta)
  double y = 0.0;  // sin(theta)
  double theta_dot = 0.0;
};

/// Angular acceleration for the given torque.
inline double angular_acceleration(double theta, double torque) {
  return 3.0 * kGravity / (2.0 * kLength) * std::sin(theta) +
         3.0 / (kMass * kLength * kLength) * torque;
}

/// Semi-implicit Euler step; the torque is clamped to [-2, 2].
inline PendulumState step(const PendulumState& s, double torque, double dt = kDt) {
  const double u = clamp_torque(torque);
  const double theta_dot = clamp_speed(s.theta_dot + angular_acceleration(s.theta, u) * dt);
  return {wrap_angle(s.theta + theta_dot * dt), theta_dot};
}

/// Total mechanical energy with the pivot as reference height; the upright
/// rest state has energy m g l / 2.
inline double energy(const PendulumState& s) {
  const double inertia = kMass * kLength * kLength / 3.0;
  return 0.5 * inertia * s.theta_dot * s.theta_dot + kMass * kGravity * 0.5 * kLength * std::cos(s.theta);
}

inline RawObservation to_raw(const PendulumState& s) {
  return {std::cos(s.theta), std::sin(s.theta), s.theta_dot};
}

/// Projects (x, y) onto the unit circle before taking the angle.
inline PendulumState from_raw(const RawObservation& obs) {
  const double r = std::hypot(obs.x, obs.y);
  if (!(r > 0.0) || !std::isfinite(r)) throw InputError("from_raw: (x, y) must be a nonzero finite point");
  return PendulumState::make(std::atan2(obs.y / r, obs.x / r), obs.theta_dot);
}

inline Vector engineered_features(const PendulumState& s) { return Vector{{s.theta, s.theta_dot}}; }

inline Vector raw_features(const PendulumState& s) {
  const auto o = to_raw(s);
  return Vector{{o.x, o.y, o.theta_dot}};
}

inline PendulumState state_from_engineered(const Vector& v) {
  require_dim(v, 2, "engineered pendulum features");
  return PendulumState::make(v[0], v[1]);
}

inline RawObservation raw_from_vector(const Vector& v) {
  require_dim(v, 3, "raw pendulum features");
  return {v[0], v[1], v[2]};
}

struct Trajectory {
  std::vector<PendulumState> states;  // steps + 1 entries
  std::vector<double> actions;        // steps entries; actions[i] applied at states[i]

  std::vector<RawObservation> observations() const {
    std::vector<RawObservation> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(to_raw(s));
    return out;
  }
};

/// Runs `policy` (RawObservation -> torque) for `steps` ticks.
template <class Policy>
Trajectory rollout(Policy&& policy, const PendulumState& initial, std::size_t steps, double dt = kDt) {
  if (steps == 0) throw InputError("rollout: steps must be at least 1");
  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.actions.reserve(steps);
  traj.states.push_back(PendulumState::make(initial.theta, initial.theta_dot));
  for (std::size_t i = 0; i < steps; ++i) {
    double u = 0.0;
    try {
      u = clamp_torque(policy(to_raw(traj.states.back())));
    } catch (const std::exception& e) {
      throw EvaluationError("rollout step " + std::to_string(i) + ": " + e.what());
    }
    traj.actions.push_back(u);
    traj.states.push_back(step(traj.states.back(), u, dt));
  }
  return traj;
}

/// CSV with columns t, theta, theta_dot, x, y, torque. The final state has
/// no action and leaves the torque column empty.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, double dt = kDt) {
  out << "t,theta,theta_dot,x,y,torque\n";
  out.precision(17);
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    const auto& s = traj.states[i];
    const auto o = to_raw(s);
    out << static_cast<double>(i) * dt << ',' << s.theta << ',' << s.theta_dot << ',' << o.x << ',' << o.y << ',';
    if (i < traj.actions.size()) out << traj.actions[i];
    out << '\n';
  }
}

}  // namespace lmtcfe::pendulum
