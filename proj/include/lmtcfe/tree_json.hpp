#pragma once

#include "lmtcfe/linear_model_tree.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace lmtcfe {

using Json = nlohmann::json;

inline constexpr int kTreeSchemaVersion = 1;

namespace json_detail {

inline const Json& field(const Json& obj, const char* name, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(where + ": missing field \"" + name + "\"");
  return *it;
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where + ": expected a number");
  return v.get<double>();
}

inline std::size_t index(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ParseError(where + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline Vector vector(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + ": expected an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

inline Matrix matrix(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + ": expected an array of rows");
  const auto rows = v.size();
  const auto cols = rows == 0 ? 0 : (v[0].is_array() ? v[0].size() : 0);
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = vector(v[r], where + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != cols) throw ParseError(where + ": ragged matrix");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_std(m.row(r).transpose()));
  return rows;
}

inline Bounds bounds(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + ": expected an array of [lower, upper]");
  Bounds out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != 2) throw ParseError(at + ": expected [lower, upper]");
    out.push_back({number(v[i][0], at), number(v[i][1], at)});
  }
  return out;
}

inline Json bounds_json(const Bounds& b) {
  Json out = Json::array();
  for (const auto& iv : b) out.push_back({iv.lower, iv.upper});
  return out;
}

inline std::vector<std::string> names(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ParseError(where + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

}  // namespace json_detail

inline Json to_json(const LinearModelTree& tree) {
  using json_detail::bounds_json;
  Json nodes = Json::array();
  for (NodeId id = 0; id < tree.nodes().size(); ++id) {
    Json n{{"id", id}};
    if (const auto* b = std::get_if<Branch>(&tree.node(id))) {
      n["kind"] = "branch";
      n["feature"] = b->feature;
      n["threshold"] = b->threshold;
      n["left"] = b->left;
      n["right"] = b->right;
    } else {
      const auto& leaf = std::get<Leaf>(tree.node(id));
      n["kind"] = "leaf";
      n["weights"] = json_detail::matrix_json(leaf.weights);
      n["bias"] = to_std(leaf.bias);
    }
    nodes.push_back(std::move(n));
  }
  return Json{{"schema_version", kTreeSchemaVersion},
              {"input_dim", tree.input_dim()},
              {"output_dim", tree.output_dim()},
              {"feature_names", tree.feature_names()},
              {"output_names", tree.output_names()},
              {"input_bounds", bounds_json(tree.input_bounds())},
              {"output_bounds", bounds_json(tree.output_bounds())},
              {"nodes", std::move(nodes)},
              {"root_id", tree.root_id()}};
}

/// Parses a tree document. Errors name the offending field path.
inline LinearModelTree tree_from_json(const Json& doc) {
  using namespace json_detail;
  const std::string top = "tree";
  const auto version = index(field(doc, "schema_version", top), "schema_version");
  if (version != static_cast<std::size_t>(kTreeSchemaVersion)) {
    throw ParseError("schema_version: unsupported version " + std::to_string(version));
  }
  const auto input_dim = index(field(doc, "input_dim", top), "input_dim");
  const auto output_dim = index(field(doc, "output_dim", top), "output_dim");
  auto in_bounds = bounds(field(doc, "input_bounds", top), "input_bounds");
  auto out_bounds = bounds(field(doc, "output_bounds", top), "output_bounds");
  if (in_bounds.size() != input_dim) throw ParseError("input_bounds: length differs from input_dim");
  if (out_bounds.size() != output_dim) throw ParseError("output_bounds: length differs from output_dim");
  auto feature_names = doc.contains("feature_names") ? names(doc["feature_names"], "feature_names")
                                                     : std::vector<std::string>{};
  auto output_names = doc.contains("output_names") ? names(doc["output_names"], "output_names")
                                                   : std::vector<std::string>{};
  const auto root = index(field(doc, "root_id", top), "root_id");

  const Json& jnodes = field(doc, "nodes", top);
  if (!jnodes.is_array()) throw ParseError("nodes: expected an array");
  std::vector<std::optional<Node>> slots(jnodes.size());
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string at = "nodes[" + std::to_string(i) + "]";
    const Json& jn = jnodes[i];
    const auto id = index(field(jn, "id", at), at + ".id");
    if (id >= slots.size()) throw ParseError(at + ".id: out of range");
    if (slots[id]) throw ParseError(at + ".id: duplicate id " + std::to_string(id));
    const Json& kind = field(jn, "kind", at);
    if (kind == "branch") {
      Branch b;
      b.feature = index(field(jn, "feature", at), at + ".feature");
      b.threshold = number(field(jn, "threshold", at), at + ".threshold");
      b.left = index(field(jn, "left", at), at + ".left");
      b.right = index(field(jn, "right", at), at + ".right");
      slots[id] = b;
    } else if (kind == "leaf") {
      Leaf leaf;
      leaf.weights = matrix(field(jn, "weights", at), at + ".weights");
      leaf.bias = vector(field(jn, "bias", at), at + ".bias");
      slots[id] = std::move(leaf);
    } else {
      throw ParseError(at + ".kind: expected \"branch\" or \"leaf\"");
    }
  }
  std::vector<Node> nodes;
  nodes.reserve(slots.size());
  for (auto& s : slots) nodes.push_back(std::move(*s));
  try {
    return LinearModelTree(std::move(nodes), root, std::move(in_bounds), std::move(out_bounds),
                           std::move(feature_names), std::move(output_names));
  } catch (const InputError& e) {
    throw ParseError(std::string("tree structure: ") + e.what());
  }
}

inline void save_tree(const LinearModelTree& tree, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write tree file " + path);
  out << to_json(tree).dump(1) << '\n';
  if (!out) throw InputError("failed writing tree file " + path);
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline LinearModelTree load_tree(const std::string& path) { return tree_from_json(load_json_file(path)); }

}  // namespace lmtcfe
