#pragma once

// Counterfactual search over a linear model tree surrogate.
//
// Leaves are visited from structurally closest to furthest; inside each leaf
// the objective is minimized over the leaf's box (and the output bounds), and
// every candidate is re-evaluated by the black box. Only the black box's
// output is ever reported as the counterfactual action.

#include "lmtcfe/blackbox.hpp"
#include "lmtcfe/constraints.hpp"
#include "lmtcfe/leaf_ordering.hpp"
#include "lmtcfe/leaf_solver.hpp"
#include "lmtcfe/linear_model_tree.hpp"
#include "lmtcfe/objective.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lmtcfe {

struct CfeQuery {
  Vector x;                     // instance to explain
  Vector y;                     // black-box output at x; filled in by the engine when empty
  std::optional<Vector> target;  // requested output for targeted queries
  std::size_t num_explanations = 3;
  std::size_t max_leaves = 0;  // 0 searches every leaf
  ObjectiveWeights weights;
  std::vector<ConstraintFn> constraints;
  std::optional<Bounds> output_bounds;
  // Length 1 (applies to every output) or one entry per output. Empty means
  // 0.1 (validity) and 0.05 (target match) of each output's range.
  Vector min_output_change;
  Vector target_tolerance;
  DistanceNorm norm = DistanceNorm::L1;
  SolverOptions solver;
};

struct Counterfactual {
  Vector x_prime;
  Vector y_lmt;    // leaf model output at x'
  Vector y_prime;  // black-box output at x'
  Vector delta_x;
  Vector delta_y;  // y' - y
  double objective_value = 0.0;
  LeafId leaf_id = 0;
  std::size_t sparsity_in = 0;
  std::size_t sparsity_out = 0;
  bool valid = false;
  bool feasible = true;
  std::vector<double> feasibility_residuals;
  std::vector<std::string> warnings;

  bool has_warning(const std::string& w) const {
    return std::find(warnings.begin(), warnings.end(), w) != warnings.end();
  }
};

struct ExplanationResult {
  SearchMode mode = SearchMode::Exploratory;
  Vector x;
  Vector y;
  std::optional<Vector> target;
  std::vector<Counterfactual> counterfactuals;  // sorted by objective
  std::vector<Counterfactual> candidates;       // every black-box-checked candidate, search order
  std::size_t leaves_examined = 0;
  std::string diagnostic;
  double wall_time_ms = 0.0;
};

struct ValidationResult {
  Vector y_prime;
  bool valid = false;
};

/// Validity of an output change. A length-1 tolerance compares the largest
/// componentwise change; a per-output tolerance accepts when any output moves
/// by at least its own threshold.
inline bool output_changed(const Vector& y, const Vector& y_prime, const Vector& eps) {
  const Vector diff = (y_prime - y).cwiseAbs();
  if (eps.size() == 1) return diff.maxCoeff() >= eps[0];
  for (Eigen::Index j = 0; j < diff.size(); ++j) {
    if (diff[j] >= eps[j]) return true;
  }
  return false;
}

inline bool target_matched(const Vector& y_prime, const Vector& target, const Vector& eps) {
  const Vector diff = (y_prime - target).cwiseAbs();
  if (eps.size() == 1) return diff.maxCoeff() <= eps[0];
  return (diff.array() <= eps.array()).all();
}

inline ValidationResult validate_with_blackbox(const BlackBox& bb, const Vector& x_prime, const Vector& y,
                                               const Vector& eps_y) {
  if (!within(x_prime, bb.input_bounds(), 1e-12)) throw InputError("counterfactual state outside input bounds");
  ValidationResult out;
  out.y_prime = bb.predict(x_prime);
  out.valid = output_changed(y, out.y_prime, eps_y);
  return out;
}

inline ValidationResult validate_with_blackbox(const BlackBox& bb, const Vector& x_prime, const Vector& y,
                                               double eps_y) {
  return validate_with_blackbox(bb, x_prime, y, Vector::Constant(1, eps_y));
}

namespace engine_detail {

inline Vector fraction_of_range(const Bounds& b, double f) {
  Vector out(static_cast<Eigen::Index>(b.size()));
  for (std::size_t k = 0; k < b.size(); ++k) out[static_cast<Eigen::Index>(k)] = f * b[k].width();
  return out;
}

inline Vector input_snap_tolerance(const LinearModelTree& tree) { return 1e-4 * widths(tree.input_bounds()); }
inline Vector output_snap_tolerance(const LinearModelTree& tree) { return 1e-4 * widths(tree.output_bounds()); }

struct Prepared {
  Vector y;
  Vector eps_y;
  Vector eps_target;
  Bounds output_bounds;
};

inline Prepared prepare(const LinearModelTree& tree, const BlackBox& bb, const CfeQuery& q) {
  require_dim(q.x, tree.input_dim(), "query x");
  require_finite(q.x, "query x");
  if (bb.input_dim() != tree.input_dim() || bb.output_dim() != tree.output_dim()) {
    throw InputError("black box and tree dimensions differ");
  }
  if (!within(q.x, tree.input_bounds())) throw InputError("query x outside input bounds");
  if (q.num_explanations < 1) throw InputError("num_explanations must be at least 1");
  q.weights.validate();
  Prepared p;
  p.output_bounds = q.output_bounds ? *q.output_bounds : tree.output_bounds();
  if (p.output_bounds.size() != tree.output_dim()) throw InputError("output bound override has wrong length");
  p.y = q.y.size() ? q.y : bb.predict(q.x);
  require_dim(p.y, tree.output_dim(), "query y");
  auto check_tol = [&](const Vector& v, const char* what) {
    if (v.size() != 1 && static_cast<std::size_t>(v.size()) != tree.output_dim()) {
      throw InputError(std::string(what) + " must have length 1 or output_dim");
    }
    if (!v.allFinite() || (v.array() < 0.0).any()) throw InputError(std::string(what) + " must be nonnegative");
  };
  p.eps_y = q.min_output_change.size() ? q.min_output_change : fraction_of_range(tree.output_bounds(), 0.1);
  p.eps_target = q.target_tolerance.size() ? q.target_tolerance : fraction_of_range(tree.output_bounds(), 0.05);
  check_tol(p.eps_y, "min_output_change");
  check_tol(p.eps_target, "target_tolerance");
  return p;
}

inline std::optional<Counterfactual> solve_leaf(const LinearModelTree& tree, LeafId leaf_id, const CfeQuery& q,
                                                const Prepared& p, SearchMode mode) {
  const Leaf& leaf = tree.leaf(leaf_id);
  const Vector anchor = mode == SearchMode::Targeted ? *q.target : p.y;
  const Vector in_tol = input_snap_tolerance(tree);
  const Vector out_tol = output_snap_tolerance(tree);
  Objective obj(q.x, p.y, anchor, leaf.weights, leaf.bias, q.weights, mode, q.norm, in_tol, out_tol,
                &q.constraints);
  const Bounds box = tree.region_of(leaf_id).box(tree.input_dim());
  auto sol = solve_region(obj, box, tree.input_bounds(), p.output_bounds, in_tol, q.solver, leaf_id);
  if (!sol) return std::nullopt;
  Counterfactual cf;
  cf.x_prime = std::move(sol->x_prime);
  cf.y_lmt = leaf.evaluate(cf.x_prime);
  cf.delta_x = cf.x_prime - q.x;
  cf.objective_value = sol->objective;
  cf.leaf_id = leaf_id;
  cf.sparsity_in = sparsity(q.x, cf.x_prime, in_tol);
  if (!sol->converged) cf.warnings.push_back("not-converged");
  return cf;
}

}  // namespace engine_detail

/// Best point of one leaf region for the query, before black-box validation
/// (y_prime, delta_y and the validity flag are left unset). Empty when the
/// region intersected with the output bounds is empty.
inline std::optional<Counterfactual> solve_leaf(const LinearModelTree& tree, LeafId leaf_id, const CfeQuery& query,
                                                SearchMode mode, const BlackBox* bb = nullptr) {
  if (mode == SearchMode::Targeted && !query.target) throw InputError("targeted search needs a target");
  engine_detail::Prepared p;
  if (bb) {
    p = engine_detail::prepare(tree, *bb, query);
  } else {
    if (!query.y.size()) throw InputError("solve_leaf without a black box needs query.y");
    p.y = query.y;
    p.output_bounds = query.output_bounds ? *query.output_bounds : tree.output_bounds();
  }
  return engine_detail::solve_leaf(tree, leaf_id, query, p, mode);
}

namespace engine_detail {

inline ExplanationResult search(const LinearModelTree& tree, const BlackBox& bb, const CfeQuery& q,
                                SearchMode mode) {
  const auto t0 = std::chrono::steady_clock::now();
  const Prepared p = prepare(tree, bb, q);
  if (mode == SearchMode::Targeted) {
    if (!q.target) throw InputError("targeted query needs a target");
    require_dim(*q.target, tree.output_dim(), "target");
    require_finite(*q.target, "target");
    if (!within(*q.target, p.output_bounds)) throw InputError("target outside output bounds");
  }

  ExplanationResult res;
  res.mode = mode;
  res.x = q.x;
  res.y = p.y;
  res.target = mode == SearchMode::Targeted ? q.target : std::nullopt;
  const Vector out_tol = output_snap_tolerance(tree);
  std::vector<std::string> failures;

  const LeafOrder order = ordered_prefix(tree, q.x, q.max_leaves);
  std::size_t valid_count = 0;
  for (LeafId leaf : order.ordered) {
    ++res.leaves_examined;
    auto cf = solve_leaf(tree, leaf, q, p, mode);
    if (!cf) continue;
    try {
      auto v = validate_with_blackbox(bb, cf->x_prime, p.y, p.eps_y);
      cf->y_prime = std::move(v.y_prime);
      cf->valid = v.valid;
    } catch (const std::exception& e) {
      failures.push_back("leaf " + std::to_string(leaf) + ": " + e.what());
      continue;
    }
    if (mode == SearchMode::Targeted) cf->valid = cf->valid && target_matched(cf->y_prime, *q.target, p.eps_target);
    cf->delta_y = cf->y_prime - p.y;
    cf->sparsity_out = sparsity(p.y, cf->y_prime, out_tol);
    const auto feas = check_feasibility(q.constraints, cf->x_prime);
    cf->feasible = feas.feasible;
    cf->feasibility_residuals = feas.residuals;
    res.candidates.push_back(*cf);
    if (cf->valid) {
      res.counterfactuals.push_back(std::move(*cf));
      if (++valid_count >= q.num_explanations) break;
    }
  }
  std::stable_sort(res.counterfactuals.begin(), res.counterfactuals.end(),
                   [](const Counterfactual& a, const Counterfactual& b) { return a.objective_value < b.objective_value; });

  if (mode == SearchMode::Targeted) {
    const bool degenerate = target_matched(p.y, *q.target, p.eps_target);
    if (res.counterfactuals.empty() && !res.candidates.empty()) {
      // Closest black-box output to the target; objective breaks ties.
      const auto closest = std::min_element(
          res.candidates.begin(), res.candidates.end(), [&](const Counterfactual& a, const Counterfactual& b) {
            const double da = (a.y_prime - *q.target).lpNorm<Eigen::Infinity>();
            const double db = (b.y_prime - *q.target).lpNorm<Eigen::Infinity>();
            return da != db ? da < db : a.objective_value < b.objective_value;
          });
      Counterfactual approx = *closest;
      approx.warnings.push_back("approximate");
      res.counterfactuals.push_back(std::move(approx));
    }
    if (degenerate) {
      for (auto& cf : res.counterfactuals) cf.warnings.push_back("degenerate");
    }
  }

  if (res.counterfactuals.empty()) {
    std::ostringstream diag;
    const bool any_change = std::any_of(res.candidates.begin(), res.candidates.end(), [&](const Counterfactual& c) {
      return (c.y_prime - p.y).lpNorm<Eigen::Infinity>() > 0.0;
    });
    diag << (any_change ? "no candidate met the validity threshold" : "no output change achievable") << " ("
         << res.leaves_examined << " leaves searched, " << res.candidates.size() << " candidates";
    if (!res.candidates.empty()) {
      const auto best = std::min_element(res.candidates.begin(), res.candidates.end(),
                                         [](const Counterfactual& a, const Counterfactual& b) {
                                           return a.objective_value < b.objective_value;
                                         });
      diag << ", best invalid candidate in leaf " << best->leaf_id << " with objective " << best->objective_value
           << " and max |dy| " << best->delta_y.lpNorm<Eigen::Infinity>();
    }
    diag << ")";
    for (const auto& f : failures) diag << "; black box failed at " << f;
    res.diagnostic = diag.str();
  }
  res.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace engine_detail

/// "What if the state were different?": up to num_explanations valid
/// counterfactuals in search order, returned sorted by objective.
inline ExplanationResult explain(const LinearModelTree& tree, const BlackBox& bb, const CfeQuery& query) {
  return engine_detail::search(tree, bb, query, SearchMode::Exploratory);
}

/// "Why y rather than Y?": counterfactuals whose black-box output is within
/// target_tolerance of Y. When none is found, the candidate closest to Y is
/// returned with the "approximate" warning.
inline ExplanationResult explain_targeted(const LinearModelTree& tree, const BlackBox& bb, const CfeQuery& query) {
  return engine_detail::search(tree, bb, query, SearchMode::Targeted);
}

}  // namespace lmtcfe
