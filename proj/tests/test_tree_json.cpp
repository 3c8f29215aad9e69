#include "lmtcfe/tree_json.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace lmtcfe;

namespace {

void expect_same_tree(const LinearModelTree& a, const LinearModelTree& b) {
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  EXPECT_EQ(a.root_id(), b.root_id());
  EXPECT_EQ(a.feature_names(), b.feature_names());
  EXPECT_EQ(a.output_names(), b.output_names());
  for (std::size_t j = 0; j < a.input_dim(); ++j) {
    EXPECT_EQ(a.input_bounds()[j].lower, b.input_bounds()[j].lower);
    EXPECT_EQ(a.input_bounds()[j].upper, b.input_bounds()[j].upper);
  }
  for (NodeId i = 0; i < a.nodes().size(); ++i) {
    ASSERT_EQ(a.is_leaf(i), b.is_leaf(i));
    if (a.is_leaf(i)) {
      const auto& la = std::get<Leaf>(a.node(i));
      const auto& lb = std::get<Leaf>(b.node(i));
      EXPECT_TRUE(la.weights == lb.weights);
      EXPECT_TRUE(fixtures::bit_equal(la.bias, lb.bias));
      EXPECT_EQ(la.ordinal, lb.ordinal);
    } else {
      const auto& ba = std::get<Branch>(a.node(i));
      const auto& bb = std::get<Branch>(b.node(i));
      EXPECT_EQ(ba.feature, bb.feature);
      EXPECT_EQ(ba.threshold, bb.threshold);
      EXPECT_EQ(ba.left, bb.left);
      EXPECT_EQ(ba.right, bb.right);
    }
  }
}

}  // namespace

TEST(TreeJson, RoundTripIsLossless) {
  Rng rng(17);
  auto t = oracle::random_tree(rng, {3, 2, 25});
  const std::string text = to_json(t).dump();
  expect_same_tree(t, tree_from_json(Json::parse(text)));
}

TEST(TreeJson, LargeTreePredictsIdentically) {
  Rng rng(312);
  auto t = oracle::random_tree(rng, {8, 5, 312, -1.0, 1.0, 1.0, 0.002});
  ASSERT_EQ(t.leaf_count(), 312u);
  const auto path = (std::filesystem::temp_directory_path() / "lmtcfe_roundtrip_tree.json").string();
  save_tree(t, path);
  const auto back = load_tree(path);
  for (int i = 0; i < 100; ++i) {
    Vector x(8);
    for (int j = 0; j < 8; ++j) x[j] = rng.uniform(-1, 1);
    EXPECT_TRUE(fixtures::bit_equal(t.predict(x), back.predict(x)));
  }
  std::filesystem::remove(path);
}

TEST(TreeJson, MissingRootIdNamesTheField) {
  Json doc = to_json(fixtures::depth1_tree());
  doc.erase("root_id");
  try {
    tree_from_json(doc);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("root_id"), std::string::npos) << e.what();
  }
}

TEST(TreeJson, UnknownSchemaVersion) {
  Json doc = to_json(fixtures::depth1_tree());
  doc["schema_version"] = 99;
  EXPECT_THROW(tree_from_json(doc), ParseError);
  doc.erase("schema_version");
  EXPECT_THROW(tree_from_json(doc), ParseError);
}

TEST(TreeJson, ErrorsCarryNodeLocation) {
  Json doc = to_json(fixtures::depth1_tree());
  doc["nodes"][0]["threshold"] = "zero";
  try {
    tree_from_json(doc);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("nodes[0].threshold"), std::string::npos) << e.what();
  }
}

TEST(TreeJson, StructuralErrorsBecomeParseErrors) {
  Json doc = to_json(fixtures::depth1_tree());
  doc["nodes"][0]["right"] = 1;
  EXPECT_THROW(tree_from_json(doc), ParseError);
  EXPECT_THROW(tree_from_json(Json::array()), ParseError);
}

TEST(TreeJson, SchemaFields) {
  const Json doc = to_json(fixtures::depth1_tree());
  for (const char* key : {"schema_version", "input_dim", "output_dim", "feature_names", "output_names",
                          "input_bounds", "output_bounds", "nodes", "root_id"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["nodes"][0]["kind"], "branch");
  EXPECT_EQ(doc["nodes"][1]["kind"], "leaf");
}
