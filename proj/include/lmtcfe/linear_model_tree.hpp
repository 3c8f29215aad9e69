#pragma once

// Linear model trees: binary trees with univariate splits and an affine
// multi-output model in each leaf. Globally a piecewise-linear function over
// an axis-aligned partition of the input box.

#include "lmtcfe/common.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace lmtcfe {

using NodeId = std::size_t;
/// Dense leaf index in [0, leaf_count), assigned in left-first DFS order.
using LeafId = std::size_t;

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// Offset realizing the strict inequality x > t as x >= t + strict_offset(t).
inline double strict_offset(double threshold) {
  return 1e-9 * std::max(1.0, std::abs(threshold));
}

struct Branch {
  std::size_t feature = 0;
  double threshold = 0.0;
  NodeId left = kNoNode;   // x[feature] <= threshold
  NodeId right = kNoNode;  // x[feature] >  threshold
};

struct Leaf {
  Matrix weights;  // output_dim x input_dim
  Vector bias;     // output_dim
  LeafId ordinal = 0;

  Vector evaluate(const Vector& x) const { return weights * x + bias; }
};

using Node = std::variant<Branch, Leaf>;

struct Halfspace {
  enum class Sense { LessEqual, GreaterEqual };
  enum class Origin { Path, GlobalBound };

  std::size_t feature = 0;
  Sense sense = Sense::LessEqual;
  double bound = 0.0;
  Origin origin = Origin::Path;

  bool satisfied(const Vector& x, double tol = 0.0) const {
    const double v = x[static_cast<Eigen::Index>(feature)];
    return sense == Sense::LessEqual ? v <= bound + tol : v >= bound - tol;
  }
};

/// Polytope of the inputs routed to one leaf: path constraints followed by
/// the global input bounds.
struct LeafRegion {
  LeafId leaf = 0;
  std::vector<Halfspace> halfspaces;

  bool contains(const Vector& x, double tol = 0.0) const {
    return std::all_of(halfspaces.begin(), halfspaces.end(),
                       [&](const Halfspace& h) { return h.satisfied(x, tol); });
  }

  /// Intersection of the halfspaces per feature. Every region is a box
  /// because all constraints are axis-aligned.
  Bounds box(std::size_t input_dim) const {
    Bounds out(input_dim, Interval{-std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity()});
    for (const auto& h : halfspaces) {
      auto& iv = out[h.feature];
      if (h.sense == Halfspace::Sense::LessEqual) {
        iv.upper = std::min(iv.upper, h.bound);
      } else {
        iv.lower = std::max(iv.lower, h.bound);
      }
    }
    return out;
  }

  bool empty(std::size_t input_dim) const {
    const auto b = box(input_dim);
    return std::any_of(b.begin(), b.end(), [](const Interval& iv) { return iv.lower > iv.upper; });
  }
};

class LinearModelTree {
 public:
  LinearModelTree() = default;

  /// Validates the structure and assigns leaf ordinals. Any ordinal stored in
  /// the incoming leaves is overwritten.
  LinearModelTree(std::vector<Node> nodes, NodeId root, Bounds input_bounds, Bounds output_bounds,
                  std::vector<std::string> feature_names = {},
                  std::vector<std::string> output_names = {})
      : nodes_(std::move(nodes)),
        root_(root),
        input_bounds_(std::move(input_bounds)),
        output_bounds_(std::move(output_bounds)),
        feature_names_(std::move(feature_names)),
        output_names_(std::move(output_names)) {
    if (feature_names_.empty()) {
      for (std::size_t j = 0; j < input_bounds_.size(); ++j) feature_names_.push_back("x" + std::to_string(j));
    }
    if (output_names_.empty()) {
      for (std::size_t k = 0; k < output_bounds_.size(); ++k) output_names_.push_back("y" + std::to_string(k));
    }
    validate_and_index();
  }

  std::size_t input_dim() const { return input_bounds_.size(); }
  std::size_t output_dim() const { return output_bounds_.size(); }
  NodeId root_id() const { return root_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Bounds& input_bounds() const { return input_bounds_; }
  const Bounds& output_bounds() const { return output_bounds_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& output_names() const { return output_names_; }

  std::size_t leaf_count() const { return leaf_nodes_.size(); }
  std::size_t branch_count() const { return nodes_.size() - leaf_nodes_.size(); }
  NodeId leaf_node_id(LeafId leaf) const {
    if (leaf >= leaf_nodes_.size()) throw LookupError("unknown leaf id " + std::to_string(leaf));
    return leaf_nodes_[leaf];
  }
  const Leaf& leaf(LeafId id) const { return std::get<Leaf>(nodes_[leaf_node_id(id)]); }
  NodeId parent(NodeId id) const { return parents_.at(id); }
  std::size_t depth(NodeId id) const { return depths_.at(id); }
  std::size_t max_depth() const {
    return depths_.empty() ? 0 : *std::max_element(depths_.begin(), depths_.end());
  }
  bool is_leaf(NodeId id) const { return std::holds_alternative<Leaf>(nodes_.at(id)); }

  LeafId locate_leaf(const Vector& x) const {
    check_input(x);
    return std::get<Leaf>(nodes_[descend(x)]).ordinal;
  }

  Vector predict(const Vector& x) const {
    check_input(x);
    return std::get<Leaf>(nodes_[descend(x)]).evaluate(x);
  }

  LeafRegion region_of(LeafId leaf_id) const {
    LeafRegion region;
    region.leaf = leaf_id;
    NodeId child = leaf_node_id(leaf_id);
    std::vector<Halfspace> path;
    for (NodeId up = parents_[child]; up != kNoNode; child = up, up = parents_[up]) {
      const auto& b = std::get<Branch>(nodes_[up]);
      if (b.left == child) {
        path.push_back({b.feature, Halfspace::Sense::LessEqual, b.threshold, Halfspace::Origin::Path});
      } else {
        path.push_back({b.feature, Halfspace::Sense::GreaterEqual, b.threshold + strict_offset(b.threshold),
                        Halfspace::Origin::Path});
      }
    }
    // root-to-leaf order
    region.halfspaces.assign(path.rbegin(), path.rend());
    for (std::size_t j = 0; j < input_dim(); ++j) {
      region.halfspaces.push_back(
          {j, Halfspace::Sense::GreaterEqual, input_bounds_[j].lower, Halfspace::Origin::GlobalBound});
      region.halfspaces.push_back(
          {j, Halfspace::Sense::LessEqual, input_bounds_[j].upper, Halfspace::Origin::GlobalBound});
    }
    return region;
  }

 private:
  void check_input(const Vector& x) const {
    require_dim(x, input_dim(), "tree input");
    require_finite(x, "tree input");
  }

  NodeId descend(const Vector& x) const {
    NodeId id = root_;
    while (const auto* b = std::get_if<Branch>(&nodes_[id])) {
      id = x[static_cast<Eigen::Index>(b->feature)] <= b->threshold ? b->left : b->right;
    }
    return id;
  }

  void validate_and_index() {
    if (nodes_.empty()) throw InputError("tree has no nodes");
    if (root_ >= nodes_.size()) throw InputError("root_id out of range");
    if (input_bounds_.empty() || output_bounds_.empty()) throw InputError("tree dimensions must be positive");
    if (feature_names_.size() != input_dim() || output_names_.size() != output_dim()) {
      throw InputError("name list length does not match tree dimensions");
    }
    for (const auto& iv : input_bounds_) {
      if (!(iv.lower <= iv.upper)) throw InputError("input bound with lower > upper");
    }
    parents_.assign(nodes_.size(), kNoNode);
    depths_.assign(nodes_.size(), 0);
    std::vector<bool> seen(nodes_.size(), false);
    leaf_nodes_.clear();

    // Iterative left-first DFS; a revisit means a cycle or a shared child.
    std::vector<NodeId> stack{root_};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      if (seen[id]) throw InputError("node " + std::to_string(id) + " reachable twice");
      seen[id] = true;
      if (auto* leaf = std::get_if<Leaf>(&nodes_[id])) {
        if (static_cast<std::size_t>(leaf->weights.rows()) != output_dim() ||
            static_cast<std::size_t>(leaf->weights.cols()) != input_dim() ||
            static_cast<std::size_t>(leaf->bias.size()) != output_dim()) {
          throw InputError("leaf " + std::to_string(id) + " has mismatched model dimensions");
        }
        if (!leaf->weights.allFinite() || !leaf->bias.allFinite()) {
          throw InputError("leaf " + std::to_string(id) + " has non-finite coefficients");
        }
        leaf->ordinal = leaf_nodes_.size();
        leaf_nodes_.push_back(id);
        continue;
      }
      const auto& b = std::get<Branch>(nodes_[id]);
      if (b.feature >= input_dim()) throw InputError("branch " + std::to_string(id) + " splits unknown feature");
      if (!input_bounds_[b.feature].contains(b.threshold)) {
        throw InputError("branch " + std::to_string(id) + " threshold outside input bounds");
      }
      for (NodeId child : {b.left, b.right}) {
        if (child >= nodes_.size()) throw InputError("branch " + std::to_string(id) + " has invalid child");
        if (child == root_) throw InputError("root used as a child");
        parents_[child] = id;
        depths_[child] = depths_[id] + 1;
      }
      stack.push_back(b.right);
      stack.push_back(b.left);
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw InputError("tree contains unreachable nodes");
    }
  }

  std::vector<Node> nodes_;
  NodeId root_ = 0;
  Bounds input_bounds_;
  Bounds output_bounds_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> output_names_;

  std::vector<NodeId> parents_;
  std::vector<std::size_t> depths_;
  std::vector<NodeId> leaf_nodes_;
};

}  // namespace lmtcfe
