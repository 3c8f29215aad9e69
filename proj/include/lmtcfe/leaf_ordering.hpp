#pragma once

#include "lmtcfe/linear_model_tree.hpp"

#include <vector>

namespace lmtcfe {

/// Leaves ranked from structurally closest to furthest relative to the leaf
/// holding the query point.
///
/// The distance of a leaf is the number of levels climbed from the origin to
/// the lowest common ancestor plus the one edge that enters the exposed
/// sibling subtree; the origin itself is at distance 0. Leaves at equal
/// distance keep left-first DFS discovery order.
struct LeafOrder {
  LeafId origin_leaf = 0;
  std::vector<LeafId> ordered;
  std::vector<std::size_t> distances;
};

namespace ordering_detail {

// Appends the leaves of the subtree rooted at `start`, left child first,
// stopping once `limit` leaves are held in total.
inline void collect_subtree(const LinearModelTree& tree, NodeId start, std::size_t distance,
                            std::size_t limit, LeafOrder& order, std::vector<NodeId>& stack) {
  stack.clear();
  stack.push_back(start);
  while (!stack.empty() && order.ordered.size() < limit) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (const auto* b = std::get_if<Branch>(&tree.node(id))) {
      stack.push_back(b->right);
      stack.push_back(b->left);
    } else {
      order.ordered.push_back(std::get<Leaf>(tree.node(id)).ordinal);
      order.distances.push_back(distance);
    }
  }
}

}  // namespace ordering_detail

/// First `max_leaves` entries of the full ordering (all leaves when
/// `max_leaves` is 0). Ascent stops as soon as enough leaves are held.
inline LeafOrder ordered_prefix(const LinearModelTree& tree, const Vector& x, std::size_t max_leaves) {
  if (!within(x, tree.input_bounds())) throw InputError("query point outside input bounds");
  const std::size_t limit = max_leaves == 0 ? tree.leaf_count() : std::min(max_leaves, tree.leaf_count());

  LeafOrder order;
  order.origin_leaf = tree.locate_leaf(x);
  order.ordered.reserve(limit);
  order.distances.reserve(limit);
  order.ordered.push_back(order.origin_leaf);
  order.distances.push_back(0);

  // Only the sibling side of each ancestor is new; the side we came from has
  // been emitted already, which keeps the walk linear in the node count.
  std::vector<NodeId> stack;
  NodeId child = tree.leaf_node_id(order.origin_leaf);
  std::size_t levels = 0;
  for (NodeId up = tree.parent(child); up != kNoNode && order.ordered.size() < limit;
       child = up, up = tree.parent(up)) {
    ++levels;
    const auto& b = std::get<Branch>(tree.node(up));
    const NodeId sibling = b.left == child ? b.right : b.left;
    ordering_detail::collect_subtree(tree, sibling, levels + 1, limit, order, stack);
  }
  return order;
}

inline LeafOrder order_leaves(const LinearModelTree& tree, const Vector& x) {
  return ordered_prefix(tree, x, 0);
}

}  // namespace lmtcfe
