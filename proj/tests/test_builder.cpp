#include "lmtcfe/dataset.hpp"
#include "lmtcfe/environment.hpp"
#include "lmtcfe/lmt_builder.hpp"
#include "lmtcfe/tree_json.hpp"
#include "support/fixtures.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <sstream>

using namespace lmtcfe;

namespace {

Dataset function_dataset(const std::function<Vector(const Vector&)>& f, const Bounds& in, const Bounds& out,
                         std::size_t rows, std::uint64_t seed) {
  FunctionPredictor bb(f, in, out);
  return sample_blackbox(bb, uniform_sampler(in), rows, seed);
}

double training_sse(const LinearModelTree& t, const Dataset& ds) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    s += (t.predict(ds.X.row(i).transpose()) - ds.Y.row(i).transpose()).squaredNorm();
  }
  return s;
}

const Dataset& pendulum_dataset() {
  static const Dataset ds = [] {
    const auto env = make_environment("pendulum-engineered");
    return sample_blackbox(*env.blackbox, uniform_sampler(env.blackbox->input_bounds()), 50000, 7);
  }();
  return ds;
}

}  // namespace

TEST(Build, AffineDataGivesOneLeaf) {
  const Bounds in(3, Interval{-1.0, 1.0});
  auto f = [](const Vector& x) { return Vector{{0.5 * x[0] - 2.0 * x[1] + 0.25 * x[2] + 1.0, x[2] - x[0]}}; };
  const auto ds = function_dataset(f, in, {{-5, 5}, {-5, 5}}, 2000, 1);
  TrainConfig cfg;
  cfg.max_depth = 3;
  const auto t = build(ds, cfg);
  ASSERT_EQ(t.leaf_count(), 1u);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    Vector x{{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    EXPECT_LE((t.predict(x) - f(x)).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Build, AbsoluteValueSplitsNearZero) {
  auto f = [](const Vector& x) { return Vector::Constant(1, std::abs(x[0])); };
  const auto ds = function_dataset(f, {{-1, 1}}, {{0, 1}}, 10000, 3);
  TrainConfig cfg;
  cfg.max_depth = 1;
  const auto t = build(ds, cfg);
  ASSERT_EQ(t.leaf_count(), 2u);
  const auto& root = std::get<Branch>(t.node(t.root_id()));
  EXPECT_LT(std::abs(root.threshold), 0.1);
}

TEST(Build, PendulumFidelityAndSize) {
  const auto [train, held] = split_dataset(pendulum_dataset(), 0.2, 7);
  const auto t = build(train, TrainConfig{});
  const auto rep = fidelity(t, held);
  EXPECT_GE(rep.min_r2(), 0.9);
  // within +-50% of 220 leaves
  EXPECT_GE(t.leaf_count(), 110u);
  EXPECT_LE(t.leaf_count(), 330u);
}

TEST(Build, RespectsMinSamplesLeaf) {
  const auto& ds = pendulum_dataset();
  TrainConfig cfg;
  cfg.min_samples_leaf = 200;
  const auto t = build(ds, cfg);
  std::vector<std::size_t> counts(t.leaf_count(), 0);
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) ++counts[t.locate_leaf(ds.X.row(i).transpose())];
  for (auto c : counts) EXPECT_GE(c, 200u);
  EXPECT_LE(t.max_depth(), cfg.max_depth);
}

TEST(Build, SplitsNeverIncreaseTrainingError) {
  const auto& ds = pendulum_dataset();
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t leaves = 1; leaves <= 30; ++leaves) {
    TrainConfig cfg;
    cfg.max_leaves = leaves;
    const double sse = training_sse(build(ds, cfg), ds);
    EXPECT_LE(sse, previous * (1 + 1e-12)) << leaves;
    previous = sse;
  }
}

TEST(Build, Reproducible) {
  const auto& ds = pendulum_dataset();
  EXPECT_EQ(to_json(build(ds, TrainConfig{})).dump(), to_json(build(ds, TrainConfig{})).dump());
}

TEST(Build, RankDeficientLeafFallsBackToRidge) {
  // The second feature is constant, so the design matrix is singular.
  Dataset ds;
  ds.X.resize(200, 2);
  ds.Y.resize(200, 1);
  for (int i = 0; i < 200; ++i) {
    ds.X(i, 0) = -1.0 + 2.0 * i / 199.0;
    ds.X(i, 1) = 0.5;
    ds.Y(i, 0) = 3.0 * ds.X(i, 0);
  }
  ds.feature_names = {"a", "b"};
  ds.output_names = {"y"};
  ds.input_bounds = {{-1, 1}, {-1, 1}};
  ds.output_bounds = {{-3, 3}};
  std::vector<std::string> warnings;
  TrainConfig cfg;
  cfg.max_depth = 0;
  const auto t = build(ds, cfg, &warnings);
  EXPECT_FALSE(warnings.empty());
  EXPECT_TRUE(t.leaf(0).weights.allFinite());
  EXPECT_NEAR(t.predict(Vector{{0.5, 0.5}})[0], 1.5, 1e-4);
}

TEST(Build, ConfigValidation) {
  const auto& ds = pendulum_dataset();
  TrainConfig cfg;
  cfg.min_samples_leaf = 5;  // below 2 * (2 + 1)
  EXPECT_THROW(build(ds, cfg), InputError);
  cfg = {};
  cfg.candidate_quantiles = 0;
  EXPECT_THROW(build(ds, cfg), InputError);
  Dataset tiny = ds.subset({0, 1, 2});
  EXPECT_THROW(build(tiny, TrainConfig{}), InputError);
}

TEST(Fidelity, PerfectAffineFit) {
  auto f = [](const Vector& x) { return Vector::Constant(1, 2.0 * x[0] + 1.0); };
  const auto ds = function_dataset(f, {{-1, 1}}, {{-3, 3}}, 500, 4);
  const auto rep = fidelity(build(ds, TrainConfig{}), ds);
  EXPECT_NEAR(rep.r2[0], 1.0, 1e-12);
  EXPECT_LE(rep.r2[0], 1.0);
}

TEST(Fidelity, ConstantTreeOnVaryingData) {
  auto f = [](const Vector& x) { return Vector::Constant(1, x[0]); };
  const auto ds = function_dataset(f, {{-1, 1}}, {{-1, 1}}, 500, 5);
  const auto t = fixtures::single_leaf(1, Matrix::Zero(1, 1), Vector::Constant(1, 0.3));
  EXPECT_LE(fidelity(t, ds).r2[0], 0.0);
}

TEST(Fidelity, HandComputedFixture) {
  // y = x on x = 1..10 with residuals alternating +0.5, -0.5:
  // SSE = 2.5, SST = 80, so R^2 = 0.96875 and RMSE = 0.5.
  Dataset ds;
  ds.X.resize(10, 1);
  ds.Y.resize(10, 1);
  for (int i = 0; i < 10; ++i) {
    ds.X(i, 0) = i + 1;
    ds.Y(i, 0) = (i + 1) + (i % 2 == 0 ? 0.5 : -0.5);
  }
  const auto t = fixtures::single_leaf(1, Matrix::Constant(1, 1, 1.0), Vector::Zero(1), 0.0, 11.0, {-20, 20});
  const auto rep = fidelity(t, ds);
  EXPECT_NEAR(rep.r2[0], 0.96875, 1e-12);
  EXPECT_NEAR(rep.rmse[0], 0.5, 1e-12);
  EXPECT_EQ(rep.leaf_count, 1u);
}

TEST(Fidelity, EmptyHeldout) {
  Dataset empty;
  empty.X.resize(0, 1);
  empty.Y.resize(0, 1);
  EXPECT_THROW(fidelity(fixtures::depth1_tree(), empty), InputError);
}

TEST(Fidelity, ReportJsonFields) {
  const auto [train, held] = split_dataset(pendulum_dataset(), 0.2, 1);
  const auto t = build(train, TrainConfig{});
  auto rep = fidelity(t, held);
  rep.heldout_fraction = 0.2;
  const Json j = to_json(rep);
  for (const char* key : {"r2", "rmse", "leaf_count", "depth", "heldout_fraction"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j["leaf_count"].get<std::size_t>(), t.branch_count() + 1);
  for (double r : rep.r2) EXPECT_LE(r, 1.0);
}

TEST(Sample, ConstantPredictorGivesEqualRows) {
  FunctionPredictor bb([](const Vector&) { return Vector::Constant(2, 0.25); }, Bounds(2, Interval{-1, 1}),
                       Bounds(2, Interval{-1, 1}));
  for (const auto& sampler : {uniform_sampler(bb.input_bounds()), pendulum_trajectory_sampler(PendulumFeatures::Engineered, 50)}) {
    const auto ds = sample_blackbox(bb, sampler, 300, 9);
    for (Eigen::Index i = 0; i < ds.Y.rows(); ++i) EXPECT_TRUE(ds.Y.row(i) == ds.Y.row(0));
  }
}

TEST(Sample, TrajectoryRowsWithinBounds) {
  const auto env = make_environment("pendulum-engineered", {42, "", 1e-6, 200});
  const auto ds = sample_blackbox(*env.blackbox, *env.trajectory_sampler, 10 * 200, 3);
  EXPECT_EQ(ds.rows(), 2000u);
  EXPECT_NO_THROW(ds.validate());
  const auto raw = make_environment("pendulum-raw");
  const auto dr = sample_blackbox(*raw.blackbox, *raw.trajectory_sampler, 2000, 3);
  EXPECT_NO_THROW(dr.validate());
}

TEST(Sample, UniformPassesChiSquare) {
  FunctionPredictor bb([](const Vector& x) { return Vector::Constant(1, x[0]); }, {{-2, 3}, {0, 1}}, {{-2, 3}});
  const auto ds = sample_blackbox(bb, uniform_sampler(bb.input_bounds()), 10000, 12);
  for (Eigen::Index j = 0; j < 2; ++j) {
    std::vector<double> bins(10, 0.0);
    const auto& iv = bb.input_bounds()[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
      const auto k = std::min<std::size_t>(9, static_cast<std::size_t>((ds.X(i, j) - iv.lower) / iv.width() * 10));
      bins[k] += 1.0;
    }
    double chi2 = 0.0;
    for (double b : bins) chi2 += (b - 1000.0) * (b - 1000.0) / 1000.0;
    const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(9), chi2);
    EXPECT_GT(p, 0.01) << "feature " << j << " chi2 " << chi2;
  }
}

TEST(Sample, DeterministicUnderSeed) {
  const auto env = make_environment("synthetic-docking");
  const auto a = sample_blackbox(*env.blackbox, env.query_sampler, 100, 5);
  const auto b = sample_blackbox(*env.blackbox, env.query_sampler, 100, 5);
  EXPECT_TRUE(a.X == b.X);
  EXPECT_TRUE(a.Y == b.Y);
}

TEST(Sample, FailureCarriesSampleIndex) {
  FunctionPredictor bb(
      [](const Vector& x) {
        if (x[0] > 0.9) throw std::runtime_error("boom");
        return Vector::Constant(1, 0.0);
      },
      {{-1, 1}}, {{-1, 1}});
  try {
    sample_blackbox(bb, uniform_sampler(bb.input_bounds()), 1000, 1);
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("sample "), std::string::npos);
  }
  EXPECT_THROW(sample_blackbox(bb, uniform_sampler(bb.input_bounds()), 0, 1), InputError);
}

TEST(DatasetFiles, CsvAndJsonRoundTrip) {
  const auto env = make_environment("synthetic-docking");
  const auto ds = sample_blackbox(*env.blackbox, env.query_sampler, 50, 5);
  std::stringstream csv;
  write_dataset_csv(csv, ds);
  const auto back = read_dataset_csv(csv, 8, ds.input_bounds, ds.output_bounds);
  EXPECT_EQ(back.feature_names.size(), 8u);
  EXPECT_EQ(back.output_names.size(), 5u);
  EXPECT_TRUE(back.X == ds.X);
  EXPECT_TRUE(back.Y == ds.Y);
  const auto j = dataset_from_json(Json::parse(to_json(ds).dump()));
  EXPECT_TRUE(j.X == ds.X);
  EXPECT_TRUE(j.Y == ds.Y);
  EXPECT_EQ(j.feature_names, ds.feature_names);
}

TEST(DatasetFiles, CsvErrorsNameTheLine) {
  std::stringstream bad("a,b,y\n1,2,3\n1,x,3\n");
  try {
    read_dataset_csv(bad, 2, {{0, 5}, {0, 5}}, {{0, 5}}, "data.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("data.csv:3"), std::string::npos) << e.what();
  }
}
