#pragma once

// Greedy top-down growth of a linear model tree from black-box samples.
//
// Every node carries an affine least-squares fit. A node is split on the
// (feature, threshold) pair minimizing the summed SSE of two child fits, with
// thresholds drawn from per-feature sample quantiles. Sufficient statistics
// (Z'Z, Z'Y, Y'Y over the augmented design Z = [x, 1]) are accumulated along
// each feature's sort order, so all candidates of a feature cost one pass.

#include "lmtcfe/dataset.hpp"
#include "lmtcfe/linear_model_tree.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace lmtcfe {

struct TrainConfig {
  std::size_t max_depth = 10;
  std::size_t min_samples_leaf = 35;
  std::size_t candidate_quantiles = 15;
  double min_sse_improvement = 1e-3;  // relative to the node's own SSE
  std::size_t max_leaves = 0;         // 0 = unlimited; otherwise largest-gain splits first
  std::uint64_t seed = 0;             // drives the held-out split in the train workflow

  void validate(std::size_t input_dim) const {
    if (min_samples_leaf < 2 * (input_dim + 1)) {
      throw InputError("min_samples_leaf must be at least 2 * (input_dim + 1) = " +
                       std::to_string(2 * (input_dim + 1)));
    }
    if (candidate_quantiles < 1) throw InputError("candidate_quantiles must be at least 1");
    if (!(min_sse_improvement >= 0.0)) throw InputError("min_sse_improvement must be nonnegative");
  }
};

struct FidelityReport {
  std::vector<double> r2;
  std::vector<double> rmse;
  std::size_t leaf_count = 0;
  std::size_t depth = 0;
  double heldout_fraction = 0.0;

  double min_r2() const { return r2.empty() ? 0.0 : *std::min_element(r2.begin(), r2.end()); }
};

namespace builder_detail {

struct Stats {
  Matrix zz;  // p x p
  Matrix zy;  // p x n
  Vector yy;  // n
  std::size_t count = 0;

  Stats(Eigen::Index p, Eigen::Index n) : zz(Matrix::Zero(p, p)), zy(Matrix::Zero(p, n)), yy(Vector::Zero(n)) {}

  void add(const Vector& z, const Vector& y) {
    zz.selfadjointView<Eigen::Lower>().rankUpdate(z);
    zy.noalias() += z * y.transpose();
    yy += y.cwiseAbs2();
    ++count;
  }

  Stats minus(const Stats& other) const {
    Stats out = *this;
    out.zz -= other.zz;
    out.zy -= other.zy;
    out.yy -= other.yy;
    out.count -= other.count;
    return out;
  }
};

struct Fit {
  Matrix coef;  // p x n, standardized coordinates
  double sse = 0.0;
  bool ridge = false;
};

inline Fit solve(const Stats& s, std::size_t input_dim) {
  Matrix a = s.zz.selfadjointView<Eigen::Lower>();
  Fit fit;
  Eigen::LDLT<Matrix> ldlt(a);
  const Vector d = ldlt.vectorD().cwiseAbs();
  const double dmax = d.size() ? d.maxCoeff() : 0.0;
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * dmax)) {
    const double lambda = std::max(1e-6 * a.trace() / static_cast<double>(input_dim), 1e-300);
    a.diagonal().array() += lambda;
    ldlt.compute(a);
    fit.ridge = true;
  }
  fit.coef = ldlt.solve(s.zy);
  // SSE = y'y - 2 b'Z'y + b'Z'Z b, summed over outputs.
  const Matrix zz_full = s.zz.selfadjointView<Eigen::Lower>();
  double sse = s.yy.sum() - 2.0 * (fit.coef.cwiseProduct(s.zy)).sum() +
               (fit.coef.cwiseProduct(zz_full * fit.coef)).sum();
  fit.sse = std::max(sse, 0.0);
  return fit;
}

struct Candidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left_count = 0;
  double children_sse = 0.0;
};

struct Pending {
  std::vector<std::size_t> rows;
  Stats stats;
  Fit fit;
  std::size_t depth = 0;
  std::optional<Candidate> split;
  // arena slots of the children once split
  NodeId left = kNoNode;
  NodeId right = kNoNode;
};

class Grower {
 public:
  Grower(const Dataset& ds, const TrainConfig& cfg) : ds_(ds), cfg_(cfg) {
    m_ = ds.input_dim();
    n_ = ds.output_dim();
    p_ = static_cast<Eigen::Index>(m_ + 1);
    mean_ = ds.X.colwise().mean().transpose();
    scale_ = ((ds.X.rowwise() - mean_.transpose()).cwiseAbs2().colwise().mean()).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < scale_.size(); ++j) {
      if (!(scale_[j] > 0.0)) scale_[j] = 1.0;
    }
    y_mean_ = ds.Y.colwise().mean().transpose();
    Z_.resize(ds.X.rows(), p_);
    Z_.leftCols(static_cast<Eigen::Index>(m_)) = (ds.X.rowwise() - mean_.transpose()).array().rowwise() /
                                                 scale_.transpose().array();
    Z_.col(p_ - 1).setOnes();
    Yc_ = ds.Y.rowwise() - y_mean_.transpose();
    root_sst_ = Yc_.cwiseAbs2().sum();
  }

  LinearModelTree grow(std::vector<std::string>* warnings) {
    std::vector<std::size_t> all(ds_.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    arena_.push_back(make_pending(std::move(all), 0));

    // Largest gain first; ties resolved by creation order.
    auto cmp = [this](NodeId a, NodeId b) {
      const double ga = gain(arena_[a]);
      const double gb = gain(arena_[b]);
      return ga != gb ? ga < gb : a > b;
    };
    std::priority_queue<NodeId, std::vector<NodeId>, decltype(cmp)> frontier(cmp);
    if (arena_[0].split) frontier.push(0);
    std::size_t leaves = 1;
    while (!frontier.empty()) {
      if (cfg_.max_leaves != 0 && leaves >= cfg_.max_leaves) break;
      const NodeId id = frontier.top();
      frontier.pop();
      auto [lrows, rrows] = partition(arena_[id]);
      const std::size_t depth = arena_[id].depth + 1;
      // make_pending may reallocate the arena; no references held across it.
      Pending left = make_pending(std::move(lrows), depth);
      Pending right = make_pending(std::move(rrows), depth);
      arena_[id].left = arena_.size();
      arena_.push_back(std::move(left));
      arena_[id].right = arena_.size();
      arena_.push_back(std::move(right));
      arena_[id].rows.clear();
      arena_[id].rows.shrink_to_fit();
      ++leaves;
      for (NodeId child : {arena_[id].left, arena_[id].right}) {
        if (arena_[child].split) frontier.push(child);
      }
    }
    return assemble(warnings);
  }

 private:
  double gain(const Pending& p) const { return p.split ? p.fit.sse - p.split->children_sse : 0.0; }

  Pending make_pending(std::vector<std::size_t> rows, std::size_t depth) {
    Stats s(p_, static_cast<Eigen::Index>(n_));
    for (auto r : rows) s.add(Z_.row(static_cast<Eigen::Index>(r)).transpose(), Yc_.row(static_cast<Eigen::Index>(r)).transpose());
    Fit f = solve(s, m_);
    Pending p{std::move(rows), std::move(s), std::move(f), depth, std::nullopt};
    p.split = best_split(p);
    return p;
  }

  std::optional<Candidate> best_split(const Pending& node) const {
    const std::size_t count = node.rows.size();
    if (node.depth >= cfg_.max_depth || count < 2 * cfg_.min_samples_leaf) return std::nullopt;
    std::optional<Candidate> best;
    std::vector<std::size_t> order = node.rows;
    std::vector<std::size_t> cuts;
    for (std::size_t j = 0; j < m_; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds_.X(static_cast<Eigen::Index>(a), col) < ds_.X(static_cast<Eigen::Index>(b), col);
      });
      auto value = [&](std::size_t pos) { return ds_.X(static_cast<Eigen::Index>(order[pos]), col); };

      // Left-side sizes at the quantile positions, moved forward past ties.
      cuts.clear();
      for (std::size_t k = 1; k <= cfg_.candidate_quantiles; ++k) {
        std::size_t c = k * count / (cfg_.candidate_quantiles + 1);
        if (c == 0) continue;
        while (c < count && value(c) == value(c - 1)) ++c;
        if (c >= count || c < cfg_.min_samples_leaf || count - c < cfg_.min_samples_leaf) continue;
        if (!cuts.empty() && cuts.back() == c) continue;
        cuts.push_back(c);
      }
      if (cuts.empty()) continue;

      Stats left(p_, static_cast<Eigen::Index>(n_));
      std::size_t pos = 0;
      for (std::size_t c : cuts) {
        for (; pos < c; ++pos) {
          const auto r = static_cast<Eigen::Index>(order[pos]);
          left.add(Z_.row(r).transpose(), Yc_.row(r).transpose());
        }
        const double sse = solve(left, m_).sse + solve(node.stats.minus(left), m_).sse;
        if (!best || sse < best->children_sse) {
          const double lo = value(c - 1);
          const double hi = value(c);
          double t = lo + 0.5 * (hi - lo);
          if (!(t < hi)) t = lo;
          best = Candidate{j, t, c, sse};
        }
      }
    }
    if (!best) return std::nullopt;
    const double improvement = node.fit.sse - best->children_sse;
    if (!(improvement > 0.0) || improvement < cfg_.min_sse_improvement * std::max(node.fit.sse, 1e-9 * root_sst_)) return std::nullopt;
    return best;
  }

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(const Pending& node) const {
    std::vector<std::size_t> l, r;
    const auto col = static_cast<Eigen::Index>(node.split->feature);
    for (auto row : node.rows) {
      (ds_.X(static_cast<Eigen::Index>(row), col) <= node.split->threshold ? l : r).push_back(row);
    }
    return {std::move(l), std::move(r)};
  }

  Leaf to_leaf(const Fit& fit) const {
    Leaf leaf;
    const auto m = static_cast<Eigen::Index>(m_);
    const auto n = static_cast<Eigen::Index>(n_);
    leaf.weights.resize(n, m);
    leaf.bias = y_mean_;
    for (Eigen::Index k = 0; k < n; ++k) {
      leaf.bias[k] += fit.coef(m, k);
      for (Eigen::Index j = 0; j < m; ++j) {
        leaf.weights(k, j) = fit.coef(j, k) / scale_[j];
        leaf.bias[k] -= fit.coef(j, k) * mean_[j] / scale_[j];
      }
    }
    return leaf;
  }

  LinearModelTree assemble(std::vector<std::string>* warnings) const {
    std::vector<Node> nodes;
    nodes.reserve(arena_.size());
    std::size_t ridge = 0;
    for (const auto& p : arena_) {
      if (p.left != kNoNode) {
        nodes.emplace_back(Branch{p.split->feature, p.split->threshold, p.left, p.right});
      } else {
        if (p.fit.ridge) ++ridge;
        nodes.emplace_back(to_leaf(p.fit));
      }
    }
    if (warnings && ridge > 0) {
      warnings->push_back(std::to_string(ridge) + " leaf fit(s) were rank-deficient and used the ridge fallback");
    }
    return LinearModelTree(std::move(nodes), 0, ds_.input_bounds, ds_.output_bounds, ds_.feature_names,
                           ds_.output_names);
  }

  const Dataset& ds_;
  const TrainConfig& cfg_;
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  Eigen::Index p_ = 0;
  Vector mean_, scale_, y_mean_;
  Matrix Z_, Yc_;
  double root_sst_ = 0.0;
  std::vector<Pending> arena_;
};

}  // namespace builder_detail

/// Grows a tree on `ds`. Rank-deficient leaf fits fall back to ridge
/// regression and are reported through `warnings`.
inline LinearModelTree build(const Dataset& ds, const TrainConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  ds.validate();
  cfg.validate(ds.input_dim());
  if (ds.rows() < cfg.min_samples_leaf) throw InputError("dataset has fewer rows than min_samples_leaf");
  return builder_detail::Grower(ds, cfg).grow(warnings);
}

inline FidelityReport fidelity(const LinearModelTree& tree, const Dataset& heldout) {
  if (heldout.rows() == 0) throw InputError("held-out set is empty");
  require_dim(Vector(heldout.X.row(0).transpose()), tree.input_dim(), "held-out features");
  if (heldout.output_dim() != tree.output_dim()) throw InputError("held-out outputs do not match tree");
  const auto n = static_cast<Eigen::Index>(tree.output_dim());
  Matrix pred(heldout.X.rows(), n);
  for (Eigen::Index i = 0; i < heldout.X.rows(); ++i) pred.row(i) = tree.predict(heldout.X.row(i).transpose()).transpose();
  FidelityReport rep;
  const double rows = static_cast<double>(heldout.rows());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double sse = (heldout.Y.col(k) - pred.col(k)).squaredNorm();
    const double sst = (heldout.Y.col(k).array() - heldout.Y.col(k).mean()).square().sum();
    rep.r2.push_back(sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0));
    rep.rmse.push_back(std::sqrt(sse / rows));
  }
  rep.leaf_count = tree.leaf_count();
  rep.depth = tree.max_depth();
  return rep;
}

/// Seeded shuffle into (train, heldout).
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double heldout_fraction, std::uint64_t seed) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) throw InputError("heldout_fraction must be in (0, 1)");
  std::vector<std::size_t> idx(ds.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto held = static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(ds.rows())));
  if (held == 0 || held >= ds.rows()) throw InputError("dataset too small for the requested held-out split");
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
  return {ds.subset(train), ds.subset(test)};
}

inline Json to_json(const FidelityReport& rep) {
  return Json{{"r2", rep.r2},
              {"rmse", rep.rmse},
              {"leaf_count", rep.leaf_count},
              {"depth", rep.depth},
              {"heldout_fraction", rep.heldout_fraction}};
}

}  // namespace lmtcfe
