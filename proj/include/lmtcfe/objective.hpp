#pragma once

#include "lmtcfe/common.hpp"
#include "lmtcfe/constraints.hpp"
#include "lmtcfe/linear_model_tree.hpp"

#include <vector>

namespace lmtcfe {

struct ObjectiveWeights {
  double input = 1.0;            // distance between x and x'
  double output = 1.0;           // squared output distance
  double sparsity_input = 0.1;   // count of changed inputs
  double sparsity_output = 0.1;  // count of changed outputs
  double feasibility = 10.0;     // quadratic constraint penalty

  void validate() const {
    for (double w : {input, output, sparsity_input, sparsity_output, feasibility}) {
      if (!std::isfinite(w) || w < 0.0) throw InputError("objective weights must be finite and nonnegative");
    }
  }

  ObjectiveWeights scaled(double c) const {
    return {input * c, output * c, sparsity_input * c, sparsity_output * c, feasibility * c};
  }
};

/// Exploratory: move the output as far as possible from the factual one.
/// Targeted: bring the output as close as possible to a requested one.
enum class SearchMode { Exploratory, Targeted };

enum class DistanceNorm { L1, L2 };

/// Number of coordinates differing by more than the per-coordinate tolerance.
inline std::size_t sparsity(const Vector& ref, const Vector& v, const Vector& tol) {
  std::size_t n = 0;
  for (Eigen::Index j = 0; j < ref.size(); ++j) {
    const double t = tol.size() == 1 ? tol[0] : tol[j];
    if (std::abs(ref[j] - v[j]) > t) ++n;
  }
  return n;
}

inline std::size_t sparsity(const Vector& ref, const Vector& v, double tol) {
  return sparsity(ref, v, Vector::Constant(1, tol));
}

/// The counterfactual objective restricted to one leaf's affine model:
///
///   z = w_in * d(x, x') -/+ w_out * |anchor - f(x')|^2
///       + w_s0_in * |x - x'|_0 + w_s0_out * |y - f(x')|_0
///       + w_feas * sum_k c_k(x')^2
///
/// with "-" in exploratory mode and "+" in targeted mode. The anchor is the
/// factual output y (exploratory) or the requested output Y (targeted).
class Objective {
 public:
  Objective(Vector x, Vector y_factual, Vector anchor, Matrix weights_map, Vector bias,
            ObjectiveWeights weights, SearchMode mode, DistanceNorm norm, Vector input_tol, Vector output_tol,
            const std::vector<ConstraintFn>* constraints = nullptr)
      : x_(std::move(x)),
        y_(std::move(y_factual)),
        anchor_(std::move(anchor)),
        W_(std::move(weights_map)),
        c_(std::move(bias)),
        w_(weights),
        mode_(mode),
        norm_(norm),
        input_tol_(std::move(input_tol)),
        output_tol_(std::move(output_tol)),
        constraints_(constraints) {}

  const Vector& x() const { return x_; }
  const Matrix& leaf_weights() const { return W_; }
  const Vector& leaf_bias() const { return c_; }
  const ObjectiveWeights& weights() const { return w_; }
  DistanceNorm norm() const { return norm_; }

  Vector leaf_output(const Vector& xp) const { return W_ * xp + c_; }

  double distance(const Vector& xp) const {
    return norm_ == DistanceNorm::L1 ? (x_ - xp).lpNorm<1>() : (x_ - xp).norm();
  }

  /// Everything except the counting terms; this is what the descent sees.
  double continuous(const Vector& xp) const {
    const double out = (anchor_ - leaf_output(xp)).squaredNorm();
    const double sign = mode_ == SearchMode::Exploratory ? -1.0 : 1.0;
    return w_.input * distance(xp) + sign * w_.output * out + w_.feasibility * penalty(xp);
  }

  double value(const Vector& xp) const {
    return continuous(xp) + w_.sparsity_input * static_cast<double>(sparsity(x_, xp, input_tol_)) +
           w_.sparsity_output * static_cast<double>(sparsity(y_, leaf_output(xp), output_tol_));
  }

  /// Gradient of the differentiable part (output term and penalty).
  Vector smooth_gradient(const Vector& xp) const {
    const double sign = mode_ == SearchMode::Exploratory ? -1.0 : 1.0;
    // d/dx' |a - W x' - c|^2 = -2 W'(a - W x' - c)
    Vector g = sign * w_.output * (-2.0) * (W_.transpose() * (anchor_ - leaf_output(xp)));
    if (constraints_ && w_.feasibility > 0.0) {
      for (const auto& c : *constraints_) {
        const double v = c.violation(xp);
        if (v != 0.0) g += w_.feasibility * 2.0 * v * c.violation_gradient(xp);
      }
    }
    return g;
  }

  double penalty(const Vector& xp) const {
    if (!constraints_) return 0.0;
    double s = 0.0;
    for (const auto& c : *constraints_) {
      const double v = c.violation(xp);
      s += v * v;
    }
    return s;
  }

 private:
  Vector x_;
  Vector y_;
  Vector anchor_;
  Matrix W_;
  Vector c_;
  ObjectiveWeights w_;
  SearchMode mode_;
  DistanceNorm norm_;
  Vector input_tol_;
  Vector output_tol_;
  const std::vector<ConstraintFn>* constraints_;
};

/// One-shot evaluation of the objective at x' for the leaf model `leaf`.
/// `y_factual` feeds the output sparsity count; in exploratory mode it is also
/// the anchor.
inline double objective(const Vector& x, const Vector& x_prime, const Vector& y_anchor, const Leaf& leaf,
                        const ObjectiveWeights& weights, SearchMode mode, const Vector& y_factual,
                        const Vector& input_tol, const Vector& output_tol,
                        const std::vector<ConstraintFn>* constraints = nullptr,
                        DistanceNorm norm = DistanceNorm::L1) {
  return Objective(x, y_factual, y_anchor, leaf.weights, leaf.bias, weights, mode, norm, input_tol, output_tol,
                   constraints)
      .value(x_prime);
}

}  // namespace lmtcfe
