#pragma once

// The single explanation path behind both the CLI and the HTTP service:
// request parsing, query assembly, the JSON document and the delta table.

#include "lmtcfe/app/config.hpp"

#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace lmtcfe::app {

struct Model {
  std::string name;
  Environment env;
  std::shared_ptr<const LinearModelTree> tree;
};

inline Model load_model(const std::string& name, const std::string& environment, const std::string& tree_path,
                        const RunConfig& cfg) {
  Model m{name, make_environment(environment, cfg.environment_options()),
          std::make_shared<const LinearModelTree>(load_tree(tree_path))};
  if (m.tree->input_dim() != m.env.blackbox->input_dim() || m.tree->output_dim() != m.env.blackbox->output_dim()) {
    throw InputError("tree " + tree_path + " does not match environment " + environment + " dimensions");
  }
  return m;
}

inline Model load_main_model(const RunConfig& cfg) {
  return load_model(cfg.environment, cfg.environment, cfg.paths.tree, cfg);
}

struct ExplainRequest {
  Vector x;
  std::optional<Vector> target;
  std::optional<std::size_t> num_explanations;
  std::optional<std::size_t> max_leaves;
  std::optional<ObjectiveWeights> weights;
};

inline CfeQuery make_query(const Model& model, const EngineSettings& s, const ExplainRequest& req) {
  CfeQuery q;
  q.x = req.x;
  q.target = req.target;
  q.num_explanations = req.num_explanations.value_or(s.num_explanations);
  q.max_leaves = req.max_leaves.value_or(s.max_leaves);
  q.weights = req.weights.value_or(s.weights);
  q.constraints = model.env.feasibility;
  q.min_output_change = s.min_output_change_fraction * widths(model.tree->output_bounds());
  q.target_tolerance = s.target_tolerance_fraction * widths(model.tree->output_bounds());
  q.norm = s.norm;
  q.solver = s.solver;
  return q;
}

inline ExplanationResult run_explanation(const Model& model, const EngineSettings& s, const ExplainRequest& req) {
  const CfeQuery q = make_query(model, s, req);
  return req.target ? explain_targeted(*model.tree, *model.env.blackbox, q)
                    : explain(*model.tree, *model.env.blackbox, q);
}

inline Json counterfactual_json(const Counterfactual& cf) {
  return Json{{"x_prime", to_std(cf.x_prime)},
              {"y_prime", to_std(cf.y_prime)},
              {"y_lmt", to_std(cf.y_lmt)},
              {"delta_x", to_std(cf.delta_x)},
              {"delta_y", to_std(cf.delta_y)},
              {"leaf_id", cf.leaf_id},
              {"objective", cf.objective_value},
              {"sparsity_in", cf.sparsity_in},
              {"sparsity_out", cf.sparsity_out},
              {"valid", cf.valid},
              {"feasible", cf.feasible},
              {"feasibility_residuals", cf.feasibility_residuals},
              {"warnings", cf.warnings}};
}

inline Json explanation_json(const ExplanationResult& r) {
  Json query{{"x", to_std(r.x)}, {"y", to_std(r.y)}};
  if (r.target) query["target"] = to_std(*r.target);
  Json cfs = Json::array();
  for (const auto& cf : r.counterfactuals) cfs.push_back(counterfactual_json(cf));
  Json search{{"mode", r.mode == SearchMode::Targeted ? "targeted" : "exploratory"},
              {"leaves_examined", r.leaves_examined},
              {"wall_time_ms", r.wall_time_ms}};
  if (!r.diagnostic.empty()) search["diagnostic"] = r.diagnostic;
  return Json{{"query", std::move(query)}, {"counterfactuals", std::move(cfs)}, {"search", std::move(search)}};
}

/// Parses "v1,v2,..." as given on the command line.
inline Vector parse_vector(const std::string& text, const char* what) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(cell, &used));
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InputError(std::string(what) + ": bad number \"" + cell + "\"");
    }
  }
  if (vals.empty()) throw InputError(std::string(what) + " is empty");
  Vector v = from_std(vals);
  require_finite(v, what);
  return v;
}

inline Vector json_vector(const Json& v, std::size_t dim, const char* what) {
  if (!v.is_array()) throw InputError(std::string(what) + " must be an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw InputError(std::string(what) + " must be an array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  require_dim(out, dim, what);
  require_finite(out, what);
  return out;
}

inline ExplainRequest explain_request_from_json(const Json& body, const Model& model) {
  if (!body.is_object()) throw InputError("request body must be a JSON object");
  if (!body.contains("x")) throw InputError("missing field x");
  ExplainRequest req;
  req.x = json_vector(body["x"], model.tree->input_dim(), "x");
  if (body.contains("target") && !body["target"].is_null()) {
    req.target = json_vector(body["target"], model.tree->output_dim(), "target");
  }
  auto count = [&](const char* key) -> std::optional<std::size_t> {
    if (!body.contains(key)) return std::nullopt;
    if (!body[key].is_number_unsigned()) throw InputError(std::string(key) + " must be a nonnegative integer");
    return body[key].get<std::size_t>();
  };
  req.num_explanations = count("num_explanations");
  req.max_leaves = count("max_leaves");
  if (body.contains("weights")) {
    const Json& w = body["weights"];
    if (!w.is_object()) throw InputError("weights must be an object");
    ObjectiveWeights ow;
    auto get = [&](const char* key, double& out) {
      if (!w.contains(key)) return;
      if (!w[key].is_number()) throw InputError(std::string("weights.") + key + " must be a number");
      out = w[key].get<double>();
    };
    get("input", ow.input);
    get("output", ow.output);
    get("sparsity_input", ow.sparsity_input);
    get("sparsity_output", ow.sparsity_output);
    get("feasibility", ow.feasibility);
    req.weights = ow;
  }
  return req;
}

/// One block per counterfactual: feature, factual, counterfactual, delta.
inline std::string delta_table(const ExplanationResult& r, const LinearModelTree& tree) {
  std::ostringstream out;
  char line[256];
  auto row = [&](const std::string& name, double a, double b) {
    std::snprintf(line, sizeof line, "  %-18s %14.6g %14.6g %14.6g\n", name.c_str(), a, b, b - a);
    out << line;
  };
  if (r.counterfactuals.empty()) {
    out << "no counterfactuals";
    if (!r.diagnostic.empty()) out << ": " << r.diagnostic;
    out << '\n';
    return out.str();
  }
  for (std::size_t i = 0; i < r.counterfactuals.size(); ++i) {
    const auto& cf = r.counterfactuals[i];
    out << "counterfactual " << i + 1 << " (leaf " << cf.leaf_id << ", objective " << cf.objective_value
        << (cf.valid ? ", valid" : ", not valid") << (cf.feasible ? ", feasible" : ", infeasible");
    for (const auto& w : cf.warnings) out << ", " << w;
    out << ")\n";
    std::snprintf(line, sizeof line, "  %-18s %14s %14s %14s\n", "feature", "factual", "counterfactual", "delta");
    out << line;
    for (std::size_t j = 0; j < tree.input_dim(); ++j) {
      row(tree.feature_names()[j], r.x[static_cast<Eigen::Index>(j)], cf.x_prime[static_cast<Eigen::Index>(j)]);
    }
    for (std::size_t k = 0; k < tree.output_dim(); ++k) {
      row(tree.output_names()[k], r.y[static_cast<Eigen::Index>(k)], cf.y_prime[static_cast<Eigen::Index>(k)]);
    }
  }
  return out.str();
}

}  // namespace lmtcfe::app
