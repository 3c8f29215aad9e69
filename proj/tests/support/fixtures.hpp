#pragma once

#include "lmtcfe/blackbox.hpp"
#include "lmtcfe/cfe_engine.hpp"
#include "lmtcfe/linear_model_tree.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace fixtures {

using namespace lmtcfe;

inline Leaf leaf(Matrix W, Vector c) { return Leaf{std::move(W), std::move(c), 0}; }

inline Leaf leaf1(std::initializer_list<double> w, double c) {
  Matrix W(1, static_cast<Eigen::Index>(w.size()));
  Eigen::Index j = 0;
  for (double v : w) W(0, j++) = v;
  return leaf(W, Vector::Constant(1, c));
}

inline LinearModelTree single_leaf(std::size_t m, Matrix W, Vector c, double lo = -1.0, double hi = 1.0,
                                   Interval out = {-10.0, 10.0}) {
  const auto n = static_cast<std::size_t>(W.rows());
  std::vector<Node> nodes{leaf(std::move(W), std::move(c))};
  return LinearModelTree(std::move(nodes), 0, Bounds(m, Interval{lo, hi}), Bounds(n, out));
}

/// Split x0 <= 0: left y = x0, right y = 2 x0, on [-1, 1].
inline LinearModelTree depth1_tree() {
  std::vector<Node> nodes{Branch{0, 0.0, 1, 2}, leaf1({1.0}, 0.0), leaf1({2.0}, 0.0)};
  return LinearModelTree(std::move(nodes), 0, {{-1.0, 1.0}}, {{-2.0, 2.0}});
}

/// Complete depth-2 tree on [-1,1]^2: root x0 <= 0, children x1 <= 0.
/// Leaves in DFS order LL, LR, RL, RR carry constant outputs 0, 1, 2, 3.
inline LinearModelTree complete_depth2() {
  std::vector<Node> nodes{Branch{0, 0.0, 1, 2},
                          Branch{1, 0.0, 3, 4},
                          Branch{1, 0.0, 5, 6},
                          leaf1({0.0, 0.0}, 0.0),
                          leaf1({0.0, 0.0}, 1.0),
                          leaf1({0.0, 0.0}, 2.0),
                          leaf1({0.0, 0.0}, 3.0)};
  return LinearModelTree(std::move(nodes), 0, Bounds(2, Interval{-1.0, 1.0}), {{-5.0, 5.0}});
}

/// Two leaves on [0,1]^2 split at x0 <= 0.5 with different slopes.
inline LinearModelTree two_leaf_fixture() {
  std::vector<Node> nodes{Branch{0, 0.5, 1, 2}, leaf1({1.0, 0.5}, 0.0), leaf1({-2.0, 1.0}, 1.5)};
  return LinearModelTree(std::move(nodes), 0, Bounds(2, Interval{0.0, 1.0}), {{-2.0, 3.0}});
}

inline bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

/// Every returned counterfactual's y' must be exactly what the black box
/// says at x'.
inline void expect_truthful(const ExplanationResult& r, const BlackBox& bb) {
  for (const auto& cf : r.counterfactuals) {
    EXPECT_TRUE(bit_equal(bb.predict(cf.x_prime), cf.y_prime)) << "leaf " << cf.leaf_id;
  }
}

inline CfeQuery query_at(Vector x) {
  CfeQuery q;
  q.x = std::move(x);
  return q;
}

}  // namespace fixtures
