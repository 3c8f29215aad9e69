#pragma once

// sample -> train -> explain -> bench. Each command returns a process exit
// code: 0 ok, 2 usage or input, 3 quality gate, 4 environment.

#include "lmtcfe/app/explanation.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

namespace lmtcfe::app {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kQualityGate = 3, kEnvironment = 4 };

/// The host refused something outside the inputs' control: a busy port or
/// an unwritable file.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const LookupError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const EnvironmentError& e) {
    err << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const EvaluationError& e) {
    err << "error: black box failed: " << e.what() << '\n';
    return kEnvironment;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

inline bool has_json_extension(const std::string& path) {
  return std::filesystem::path(path).extension() == ".json";
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw EnvironmentError("cannot create " + parent.string() + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EnvironmentError("cannot write " + path);
  out << text;
  if (!out) throw EnvironmentError("failed writing " + path);
}

// ---------------------------------------------------------------- sample

inline Dataset sample_dataset(const RunConfig& cfg) {
  if (cfg.sample.count == 0) throw InputError("sample count must be positive");
  const Environment env = make_environment(cfg.environment, cfg.environment_options());
  Dataset ds = sample_blackbox(*env.blackbox, training_sampler(env, cfg.sample.sampler), cfg.sample.count, cfg.seed);
  ds.provenance = cfg.environment + "/" + cfg.sample.sampler + "/seed=" + std::to_string(cfg.seed);
  return ds;
}

inline int cmd_sample(const RunConfig& cfg, std::ostream& out) {
  const Dataset ds = sample_dataset(cfg);
  std::ostringstream text;
  if (has_json_extension(cfg.paths.dataset)) {
    text << to_json(ds).dump() << '\n';
  } else {
    write_dataset_csv(text, ds);
  }
  write_text(cfg.paths.dataset, text.str());
  out << ds.rows() << " rows written to " << cfg.paths.dataset << '\n';
  return kOk;
}

// ----------------------------------------------------------------- train

inline Dataset load_dataset(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.paths.dataset)) throw InputError("dataset not found: " + cfg.paths.dataset);
  if (has_json_extension(cfg.paths.dataset)) return dataset_from_json(load_json_file(cfg.paths.dataset));
  const Environment env = make_environment(cfg.environment, cfg.environment_options());
  std::ifstream in(cfg.paths.dataset);
  return read_dataset_csv(in, env.blackbox->input_dim(), env.blackbox->input_bounds(),
                          env.blackbox->output_bounds(), cfg.paths.dataset);
}

struct TrainOutcome {
  std::optional<LinearModelTree> tree;
  FidelityReport report;
  std::vector<std::string> warnings;
  bool passed = false;
};

inline TrainOutcome train_tree(const Dataset& ds, const RunConfig& cfg) {
  ds.validate();
  auto [train, heldout] = split_dataset(ds, cfg.heldout_fraction, cfg.seed);
  TrainOutcome t;
  t.tree = build(train, cfg.train, &t.warnings);
  t.report = fidelity(*t.tree, heldout);
  t.report.heldout_fraction = cfg.heldout_fraction;
  t.passed = t.report.min_r2() >= cfg.r2_gate;
  return t;
}

inline int cmd_train(const RunConfig& cfg, bool force, std::ostream& out, std::ostream& err) {
  const TrainOutcome t = train_tree(load_dataset(cfg), cfg);
  Json report = to_json(t.report);
  report["r2_gate"] = cfg.r2_gate;
  report["passed"] = t.passed;
  report["warnings"] = t.warnings;
  const bool write = t.passed || force;
  report["tree"] = write ? Json(cfg.paths.tree) : Json(nullptr);
  if (write) write_text(cfg.paths.tree, to_json(*t.tree).dump(1) + "\n");
  if (cfg.paths.report.empty()) {
    out << report.dump(2) << '\n';
  } else {
    write_text(cfg.paths.report, report.dump(2) + "\n");
    out << "report written to " << cfg.paths.report << '\n';
  }
  if (!t.passed) {
    err << (force ? "warning" : "error") << ": held-out R2 " << t.report.min_r2() << " is below the gate "
        << cfg.r2_gate << (force ? "; tree written anyway (--force)" : "; tree not written (use --force)") << '\n';
    if (!force) return kQualityGate;
  } else {
    out << t.report.leaf_count << " leaves, min R2 " << t.report.min_r2() << ", tree written to " << cfg.paths.tree
        << '\n';
  }
  return kOk;
}

// --------------------------------------------------------------- explain

struct ExplainArgs {
  std::string x;
  std::string target;
  std::optional<std::size_t> num;
  std::string out_path;  // JSON destination; empty prints it after the table
};

inline int cmd_explain(const RunConfig& cfg, const ExplainArgs& args, std::ostream& out) {
  const Model model = load_main_model(cfg);
  ExplainRequest req;
  req.x = parse_vector(args.x, "--x");
  require_dim(req.x, model.tree->input_dim(), "--x");
  if (!args.target.empty()) {
    req.target = parse_vector(args.target, "--target");
    require_dim(*req.target, model.tree->output_dim(), "--target");
  }
  req.num_explanations = args.num;
  const ExplanationResult res = run_explanation(model, cfg.engine, req);
  out << delta_table(res, *model.tree);
  const std::string doc = explanation_json(res).dump(2) + "\n";
  if (args.out_path.empty()) {
    out << doc;
  } else {
    write_text(args.out_path, doc);
  }
  return kOk;
}

// ----------------------------------------------------------------- bench

struct BenchReport {
  std::size_t states = 0;
  std::size_t leaf_count = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  double total_s = 0.0;
  double mean_leaves_examined = 0.0;
  std::size_t answered = 0;  // queries with at least one counterfactual
  std::size_t infeasible = 0;
};

inline Json to_json(const BenchReport& b) {
  return Json{{"states", b.states},         {"leaf_count", b.leaf_count},
              {"mean_ms", b.mean_ms},       {"median_ms", b.median_ms},
              {"p95_ms", b.p95_ms},         {"max_ms", b.max_ms},
              {"total_s", b.total_s},       {"mean_leaves_examined", b.mean_leaves_examined},
              {"answered", b.answered},     {"infeasible_counterfactuals", b.infeasible}};
}

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline Matrix bench_states(const Model& model, std::size_t count, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x62656e6368ULL));
  return model.env.query_sampler.draw(count, rng);
}

/// Times one explanation per state. The tree and black box are already
/// loaded, so only the search itself is measured.
inline BenchReport bench(const Model& model, const EngineSettings& s, const Matrix& states,
                         std::vector<ExplanationResult>* results = nullptr) {
  if (states.rows() == 0) throw InputError("bench needs at least one state");
  BenchReport b;
  b.states = static_cast<std::size_t>(states.rows());
  b.leaf_count = model.tree->leaf_count();
  std::vector<double> times;
  double leaves = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    ExplainRequest req;
    req.x = states.row(i).transpose();
    ExplanationResult r = run_explanation(model, s, req);
    times.push_back(r.wall_time_ms);
    leaves += static_cast<double>(r.leaves_examined);
    if (!r.counterfactuals.empty()) ++b.answered;
    for (const auto& cf : r.counterfactuals) b.infeasible += cf.feasible ? 0 : 1;
    if (results) results->push_back(std::move(r));
  }
  b.total_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  b.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  b.median_ms = percentile(times, 0.5);
  b.p95_ms = percentile(times, 0.95);
  b.max_ms = *std::max_element(times.begin(), times.end());
  b.mean_leaves_examined = leaves / static_cast<double>(times.size());
  return b;
}

inline int cmd_bench(const RunConfig& cfg, std::optional<std::size_t> states, std::ostream& out) {
  const Model model = load_main_model(cfg);
  const std::size_t n = states.value_or(cfg.bench_states);
  if (n == 0) throw InputError("bench states must be positive");
  const BenchReport b = bench(model, cfg.engine, bench_states(model, n, cfg.seed));
  out << to_json(b).dump(2) << '\n';
  return kOk;
}

}  // namespace lmtcfe::app
