#pragma once

// Multi-start projected descent for the counterfactual objective over one
// leaf region intersected with the output-bound slabs.
//
// The work happens in coordinates normalized by the global input ranges, so
// a step of 0.1 moves at most a tenth of a feature's range. The leaf box is
// handled by exact clamping; the slabs lower <= W x + c <= upper by Dykstra's
// alternating projections, which only run when a slab is violated.

#include "lmtcfe/linear_model_tree.hpp"
#include "lmtcfe/objective.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace lmtcfe {

struct SolverOptions {
  std::size_t starts = 8;
  std::size_t iterations = 200;
  double initial_step = 0.1;
  std::size_t max_halvings = 30;
  std::uint64_t seed = 0;
};

struct LeafSolution {
  Vector x_prime;
  double objective = 0.0;
  bool converged = true;
  std::size_t best_start = 0;
};

namespace solver_detail {

class Problem {
 public:
  Problem(const Objective& obj, const Bounds& region_box, const Bounds& global_box, const Bounds& output_bounds)
      : obj_(obj) {
    const auto m = static_cast<Eigen::Index>(global_box.size());
    origin_.resize(m);
    range_.resize(m);
    lo_.resize(m);
    hi_.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& g = global_box[static_cast<std::size_t>(j)];
      const auto& r = region_box[static_cast<std::size_t>(j)];
      origin_[j] = g.lower;
      range_[j] = g.width() > 0.0 ? g.width() : 1.0;
      lo_[j] = (r.lower - origin_[j]) / range_[j];
      hi_[j] = (r.upper - origin_[j]) / range_[j];
    }
    // Slabs in normalized coordinates: a_k . u + b_k in [out_lo_k, out_hi_k].
    const Matrix& W = obj.leaf_weights();
    A_ = W * range_.asDiagonal();
    b_ = W * origin_ + obj.leaf_bias();
    out_lo_.resize(static_cast<Eigen::Index>(output_bounds.size()));
    out_hi_.resize(out_lo_.size());
    for (std::size_t k = 0; k < output_bounds.size(); ++k) {
      out_lo_[static_cast<Eigen::Index>(k)] = output_bounds[k].lower;
      out_hi_[static_cast<Eigen::Index>(k)] = output_bounds[k].upper;
      slab_tol_.push_back(1e-9 * std::max(1.0, output_bounds[k].width()));
    }
    anchor_ = to_unit(obj.x());
  }

  Vector to_unit(const Vector& x) const { return (x - origin_).cwiseQuotient(range_); }
  Vector to_input(const Vector& u) const { return origin_ + range_.cwiseProduct(u); }

  bool box_empty() const { return (lo_.array() > hi_.array()).any(); }

  /// Interval test per output over the box; a necessary condition for the
  /// region/slab intersection to be nonempty.
  bool slabs_reachable() const {
    for (Eigen::Index k = 0; k < A_.rows(); ++k) {
      double mn = b_[k], mx = b_[k];
      for (Eigen::Index j = 0; j < A_.cols(); ++j) {
        const double p = A_(k, j) * lo_[j];
        const double q = A_(k, j) * hi_[j];
        mn += std::min(p, q);
        mx += std::max(p, q);
      }
      const auto tol = slab_tol_[static_cast<std::size_t>(k)];
      if (mn > out_hi_[k] + tol || mx < out_lo_[k] - tol) return false;
    }
    return true;
  }

  double slab_violation(const Vector& u) const {
    double worst = 0.0;
    const Vector s = A_ * u + b_;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      const double v = std::max({0.0, out_lo_[k] - s[k], s[k] - out_hi_[k]}) - slab_tol_[static_cast<std::size_t>(k)];
      worst = std::max(worst, v);
    }
    return worst;
  }

  Vector clamp(const Vector& u) const { return u.cwiseMax(lo_).cwiseMin(hi_); }

  Vector project(const Vector& u) const {
    Vector x = clamp(u);
    if (slab_violation(x) <= 0.0) return x;
    // Dykstra over {box, slab_0, ..., slab_{n-1}}.
    const Eigen::Index sets = A_.rows() + 1;
    std::vector<Vector> incr(static_cast<std::size_t>(sets), Vector::Zero(u.size()));
    for (int cycle = 0; cycle < 500; ++cycle) {
      const Vector before = x;
      for (Eigen::Index s = 0; s < sets; ++s) {
        auto& p = incr[static_cast<std::size_t>(s)];
        const Vector v = x + p;
        Vector y = s == 0 ? clamp(v) : project_slab(v, s - 1);
        p = v - y;
        x = std::move(y);
      }
      if ((x - before).lpNorm<Eigen::Infinity>() < 1e-14) break;
    }
    return clamp(x);
  }

  double value(const Vector& u) const { return obj_.value(to_input(u)); }
  double continuous(const Vector& u) const { return obj_.continuous(to_input(u)); }

  /// Steepest-descent direction of the continuous objective in normalized
  /// coordinates, restricted to directions that keep active box bounds.
  Vector descent_direction(const Vector& u) const {
    const Vector xp = to_input(u);
    const Vector gs = range_.cwiseProduct(obj_.smooth_gradient(xp));
    const double w_in = obj_.weights().input;
    Vector g(u.size());
    if (obj_.norm() == DistanceNorm::L1) {
      for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double w = w_in * range_[j];
        if (u[j] > anchor_[j]) {
          g[j] = gs[j] + w;
        } else if (u[j] < anchor_[j]) {
          g[j] = gs[j] - w;
        } else {
          // minimal-norm element of gs_j + w * [-1, 1]
          g[j] = std::copysign(std::max(std::abs(gs[j]) - w, 0.0), gs[j]);
        }
      }
    } else {
      const Vector dx = range_.cwiseProduct(u - anchor_);
      const double nrm = dx.norm();
      if (nrm > 0.0) {
        g = gs + w_in * range_.cwiseProduct(dx) / nrm;
      } else {
        const double gn = gs.cwiseQuotient(range_).norm();
        g = gn > w_in ? Vector(gs * (1.0 - w_in / gn)) : Vector(Vector::Zero(u.size()));
      }
    }
    Vector d = -g;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
      if ((u[j] <= lo_[j] && d[j] < 0.0) || (u[j] >= hi_[j] && d[j] > 0.0)) d[j] = 0.0;
    }
    return d;
  }

  /// u + alpha d, except that L1 coordinates crossing their factual value
  /// stop on it, so unchanged features can be reached exactly.
  Vector step(const Vector& u, const Vector& d, double alpha) const {
    Vector t = u + alpha * d;
    if (obj_.norm() != DistanceNorm::L1) return t;
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const double before = u[j] - anchor_[j];
      const double after = t[j] - anchor_[j];
      if ((before > 0.0 && after < 0.0) || (before < 0.0 && after > 0.0)) t[j] = anchor_[j];
    }
    return t;
  }

  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const Vector& anchor() const { return anchor_; }

 private:
  Vector project_slab(const Vector& v, Eigen::Index k) const {
    const auto a = A_.row(k);
    const double nn = a.squaredNorm();
    if (nn == 0.0) return v;
    const double s = a.dot(v) + b_[k];
    if (s > out_hi_[k]) return v - ((s - out_hi_[k]) / nn) * a.transpose();
    if (s < out_lo_[k]) return v + ((out_lo_[k] - s) / nn) * a.transpose();
    return v;
  }

  const Objective& obj_;
  Vector origin_, range_, lo_, hi_, anchor_;
  Matrix A_;
  Vector b_, out_lo_, out_hi_;
  std::vector<double> slab_tol_;
};

struct Descent {
  Vector u;
  bool converged = false;
};

inline Descent descend(const Problem& prob, Vector u, const SolverOptions& opt) {
  double f = prob.continuous(u);
  double last_step = opt.initial_step;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    Vector d = prob.descent_direction(u);
    const double dn = d.lpNorm<Eigen::Infinity>();
    if (!(dn > 0.0)) return {std::move(u), true};
    d /= dn;
    double alpha = opt.initial_step;
    bool moved = false;
    for (std::size_t h = 0; h <= opt.max_halvings; ++h, alpha *= 0.5) {
      Vector trial = prob.project(prob.step(u, d, alpha));
      const double ft = prob.continuous(trial);
      if (ft < f) {
        u = std::move(trial);
        f = ft;
        moved = true;
        last_step = alpha;
        break;
      }
    }
    if (!moved) return {std::move(u), true};
  }
  return {std::move(u), last_step < 1e-6 * opt.initial_step};
}

}  // namespace solver_detail

namespace solver_detail {

struct Polished {
  Vector x_prime;
  double objective = 0.0;
  bool converged = true;
};

// Descends from `start`, then resets each coordinate within `snap_tol` of the
// factual value to it whenever that keeps the point feasible and does not
// raise the objective by more than 1e-9.
inline std::optional<Polished> polish(const Problem& prob, const Objective& obj, const Bounds& box,
                                      const Vector& start, const Vector& snap_tol, const SolverOptions& opt) {
  auto run = descend(prob, prob.project(start), opt);
  if (prob.slab_violation(run.u) > 0.0) return std::nullopt;
  Vector xp = clamp_to(prob.to_input(run.u), box);
  double z = obj.value(xp);
  for (Eigen::Index j = 0; j < xp.size(); ++j) {
    const double xj = obj.x()[j];
    if (xp[j] == xj || std::abs(xp[j] - xj) > snap_tol[j]) continue;
    if (!box[static_cast<std::size_t>(j)].contains(xj)) continue;
    Vector trial = xp;
    trial[j] = xj;
    if (prob.slab_violation(prob.to_unit(trial)) > 0.0) continue;
    const double zt = obj.value(trial);
    if (zt <= z + 1e-9) {
      xp = std::move(trial);
      z = zt;
    }
  }
  return Polished{std::move(xp), z, run.converged};
}

}  // namespace solver_detail

/// Minimizes `obj` over `region_box` intersected with the output slabs.
/// Returns nothing when that intersection is empty.
///
/// The sparsity terms are invisible to descent, so the multi-start result is
/// followed by greedy backward elimination: each changed coordinate is in
/// turn pinned to its factual value and the rest re-solved; the best pin is
/// kept while it lowers the full objective.
inline std::optional<LeafSolution> solve_region(const Objective& obj, const Bounds& region_box,
                                                const Bounds& global_box, const Bounds& output_bounds,
                                                const Vector& snap_tol, const SolverOptions& opt,
                                                std::uint64_t stream) {
  using solver_detail::polish;
  solver_detail::Problem prob(obj, region_box, global_box, output_bounds);
  if (prob.box_empty() || !prob.slabs_reachable()) return std::nullopt;

  std::vector<Vector> starts;
  starts.push_back(prob.clamp(prob.anchor()));
  starts.push_back(0.5 * (prob.lo() + prob.hi()));
  Rng rng(mix_seed(opt.seed, stream));
  while (starts.size() < std::max<std::size_t>(opt.starts, 1)) {
    Vector u(prob.lo().size());
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = rng.uniform(prob.lo()[j], prob.hi()[j]);
    starts.push_back(std::move(u));
  }
  starts.resize(std::max<std::size_t>(opt.starts, 1));

  std::optional<LeafSolution> best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto p = polish(prob, obj, region_box, starts[s], snap_tol, opt);
    if (p && (!best || p->objective < best->objective)) {
      best = LeafSolution{std::move(p->x_prime), p->objective, p->converged, s};
    }
  }
  if (!best) return best;

  Bounds pinned = region_box;
  for (;;) {
    std::optional<solver_detail::Polished> improved;
    std::size_t pin = 0;
    for (std::size_t j = 0; j < pinned.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double xj = obj.x()[jj];
      if (best->x_prime[jj] == xj || !pinned[j].contains(xj)) continue;
      Bounds box = pinned;
      box[j] = {xj, xj};
      solver_detail::Problem sub(obj, box, global_box, output_bounds);
      if (!sub.slabs_reachable()) continue;
      Vector from = best->x_prime;
      from[jj] = xj;
      for (const Vector& start : {sub.to_unit(from), sub.clamp(sub.anchor())}) {
        auto p = polish(sub, obj, box, start, snap_tol, opt);
        if (p && p->objective < (improved ? improved->objective : best->objective - 1e-12)) {
          improved = std::move(p);
          pin = j;
        }
      }
    }
    if (!improved) break;
    pinned[pin] = {obj.x()[static_cast<Eigen::Index>(pin)], obj.x()[static_cast<Eigen::Index>(pin)]};
    best->x_prime = std::move(improved->x_prime);
    best->objective = improved->objective;
    best->converged = best->converged && improved->converged;
  }
  return best;
}

}  // namespace lmtcfe
