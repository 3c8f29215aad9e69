#pragma once

#include "lmtcfe/blackbox.hpp"
#include "lmtcfe/pendulum.hpp"
#include "lmtcfe/tree_json.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace lmtcfe {

/// Samples of a black box: one row per state.
struct Dataset {
  Matrix X;  // N x m
  Matrix Y;  // N x n
  std::vector<std::string> feature_names;
  std::vector<std::string> output_names;
  Bounds input_bounds;
  Bounds output_bounds;
  std::string provenance;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(Y.cols()); }

  void validate() const {
    if (X.rows() != Y.rows()) throw InputError("dataset: X and Y row counts differ");
    if (X.rows() == 0) throw InputError("dataset is empty");
    if (!X.allFinite() || !Y.allFinite()) throw InputError("dataset contains non-finite entries");
    if (input_bounds.size() != input_dim() || output_bounds.size() != output_dim()) {
      throw InputError("dataset bounds do not match its dimensions");
    }
    if (feature_names.size() != input_dim() || output_names.size() != output_dim()) {
      throw InputError("dataset names do not match its dimensions");
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!within(X.row(i).transpose(), input_bounds, 1e-12)) {
        throw InputError("dataset row " + std::to_string(i) + " outside input bounds");
      }
      if (!within(Y.row(i).transpose(), output_bounds, 1e-12)) {
        throw InputError("dataset row " + std::to_string(i) + " outside output bounds");
      }
    }
  }

  Dataset subset(const std::vector<std::size_t>& rows_idx) const {
    Dataset out{Matrix(static_cast<Eigen::Index>(rows_idx.size()), X.cols()),
                Matrix(static_cast<Eigen::Index>(rows_idx.size()), Y.cols()),
                feature_names, output_names, input_bounds, output_bounds, provenance};
    for (std::size_t i = 0; i < rows_idx.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows_idx[i]));
      out.Y.row(static_cast<Eigen::Index>(i)) = Y.row(static_cast<Eigen::Index>(rows_idx[i]));
    }
    return out;
  }
};

/// Produces `count` input rows from a seeded generator.
struct StateSampler {
  std::string name;
  std::function<Matrix(std::size_t count, Rng& rng)> draw;
};

inline StateSampler uniform_sampler(Bounds bounds) {
  return {"uniform-in-bounds", [bounds = std::move(bounds)](std::size_t count, Rng& rng) {
            Matrix X(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(bounds.size()));
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
              for (std::size_t j = 0; j < bounds.size(); ++j) {
                X(i, static_cast<Eigen::Index>(j)) = rng.uniform(bounds[j].lower, bounds[j].upper);
              }
            }
            return X;
          }};
}

enum class PendulumFeatures { Raw, Engineered };

/// Closed-loop controller rollouts from uniformly random initial states.
/// Rows are the states visited before each step, in the chosen feature space.
inline StateSampler pendulum_trajectory_sampler(PendulumFeatures features, std::size_t steps_per_rollout = 200) {
  return {"trajectory-rollout", [features, steps_per_rollout](std::size_t count, Rng& rng) {
            const Eigen::Index width = features == PendulumFeatures::Raw ? 3 : 2;
            Matrix X(static_cast<Eigen::Index>(count), width);
            std::size_t row = 0;
            while (row < count) {
              const auto init = pendulum::PendulumState::make(rng.uniform(-std::numbers::pi, std::numbers::pi),
                                                              rng.uniform(-1.0, 1.0));
              const auto traj = pendulum::rollout(
                  [](const pendulum::RawObservation& o) { return pendulum_policy(o); }, init, steps_per_rollout);
              for (std::size_t i = 0; i < steps_per_rollout && row < count; ++i, ++row) {
                const auto& s = traj.states[i];
                X.row(static_cast<Eigen::Index>(row)) =
                    (features == PendulumFeatures::Raw ? pendulum::raw_features(s) : pendulum::engineered_features(s))
                        .transpose();
              }
            }
            return X;
          }};
}

/// Draws inputs with `sampler` and labels them with the black box.
inline Dataset sample_blackbox(const BlackBox& predictor, const StateSampler& sampler, std::size_t count,
                               std::uint64_t seed) {
  if (count == 0) throw InputError("sample count must be at least 1");
  Rng rng(seed);
  Dataset ds;
  ds.X = sampler.draw(count, rng);
  if (static_cast<std::size_t>(ds.X.cols()) != predictor.input_dim()) {
    throw InputError("sampler width does not match predictor input dimension");
  }
  ds.Y.resize(ds.X.rows(), static_cast<Eigen::Index>(predictor.output_dim()));
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    try {
      ds.Y.row(i) = predictor.predict(ds.X.row(i).transpose()).transpose();
    } catch (const std::exception& e) {
      throw EvaluationError("black box failed at sample " + std::to_string(i) + ": " + e.what());
    }
  }
  ds.feature_names = predictor.feature_names();
  ds.output_names = predictor.output_names();
  ds.input_bounds = predictor.input_bounds();
  ds.output_bounds = predictor.output_bounds();
  ds.provenance = sampler.name + ", seed " + std::to_string(seed) + ", " + std::to_string(count) + " rows";
  return ds;
}

// ---------------------------------------------------------------------------
// Files

inline void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  bool first = true;
  for (const auto* names : {&ds.feature_names, &ds.output_names}) {
    for (const auto& n : *names) {
      out << (first ? "" : ",") << n;
      first = false;
    }
  }
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
      out << (j ? "," : "") << buf;
    }
    for (Eigen::Index k = 0; k < ds.Y.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.Y(i, k));
      out << ',' << buf;
    }
    out << '\n';
  }
}

/// CSV rows carry no bounds, so the caller supplies the input width and the
/// bounds (normally from the environment that produced the file).
inline Dataset read_dataset_csv(std::istream& in, std::size_t input_dim, const Bounds& input_bounds,
                                const Bounds& output_bounds, const std::string& source = "csv") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": missing header row");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() <= input_dim) throw ParseError(source + ": header has no output columns");
  const std::size_t width = header.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": bad number \"" + cell + "\"");
      }
    }
    if (row.size() != width) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) + " columns");
    }
    rows.push_back(std::move(row));
  }
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(input_dim));
  ds.Y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - input_dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      if (j < input_dim) {
        ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      } else {
        ds.Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - input_dim)) = rows[i][j];
      }
    }
  }
  ds.feature_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(input_dim));
  ds.output_names.assign(header.begin() + static_cast<std::ptrdiff_t>(input_dim), header.end());
  ds.input_bounds = input_bounds;
  ds.output_bounds = output_bounds;
  ds.provenance = source;
  return ds;
}

inline Json to_json(const Dataset& ds) {
  return Json{{"X", json_detail::matrix_json(ds.X)},
              {"Y", json_detail::matrix_json(ds.Y)},
              {"meta",
               {{"feature_names", ds.feature_names},
                {"output_names", ds.output_names},
                {"input_bounds", json_detail::bounds_json(ds.input_bounds)},
                {"output_bounds", json_detail::bounds_json(ds.output_bounds)},
                {"provenance", ds.provenance}}}};
}

inline Dataset dataset_from_json(const Json& doc) {
  using namespace json_detail;
  Dataset ds;
  ds.X = matrix(field(doc, "X", "dataset"), "X");
  ds.Y = matrix(field(doc, "Y", "dataset"), "Y");
  const Json& meta = field(doc, "meta", "dataset");
  ds.feature_names = names(field(meta, "feature_names", "meta"), "meta.feature_names");
  ds.output_names = names(field(meta, "output_names", "meta"), "meta.output_names");
  ds.input_bounds = bounds(field(meta, "input_bounds", "meta"), "meta.input_bounds");
  ds.output_bounds = bounds(field(meta, "output_bounds", "meta"), "meta.output_bounds");
  if (meta.contains("provenance") && meta["provenance"].is_string()) ds.provenance = meta["provenance"];
  return ds;
}

}  // namespace lmtcfe
