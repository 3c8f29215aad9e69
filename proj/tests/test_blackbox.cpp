#include "lmtcfe/blackbox.hpp"
#include "lmtcfe/tree_json.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace lmtcfe;

namespace {

MlpSpec two_layer() {
  MlpSpec s;
  s.layers.push_back({Matrix{{1.0, -2.0}, {0.5, 0.25}}, Vector{{0.1, -0.3}}, Activation::Tanh});
  s.layers.push_back({Matrix{{2.0, -1.0}}, Vector{{0.05}}, Activation::Identity});
  s.input_bounds = Bounds(2, Interval{-1.0, 1.0});
  s.output_bounds = {{-10.0, 10.0}};
  return s;
}

}  // namespace

TEST(Mlp, ZeroWeightsGiveZero) {
  MlpSpec s;
  s.layers.push_back({Matrix::Zero(4, 3), Vector::Zero(4), Activation::Tanh});
  s.layers.push_back({Matrix::Zero(2, 4), Vector::Zero(2), Activation::Identity});
  s.input_bounds = Bounds(3, Interval{-1.0, 1.0});
  s.output_bounds = Bounds(2, Interval{-1.0, 1.0});
  MlpPredictor p(s);
  EXPECT_TRUE(p.predict(Vector{{0.3, -0.2, 0.9}}).isZero(0.0));
}

TEST(Mlp, IdentityLayer) {
  MlpSpec s;
  s.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3), Activation::Identity});
  s.input_bounds = Bounds(3, Interval{-1.0, 1.0});
  s.output_bounds = Bounds(3, Interval{-1.0, 1.0});
  MlpPredictor p(s);
  const Vector x{{0.3, -0.2, 0.9}};
  EXPECT_TRUE(fixtures::bit_equal(p.predict(x), x));
}

TEST(Mlp, HandComputedTwoLayer) {
  MlpPredictor p(two_layer());
  const Vector x{{0.4, -0.7}};
  const double h0 = std::tanh(0.4 + 1.4 + 0.1);
  const double h1 = std::tanh(0.2 - 0.175 - 0.3);
  EXPECT_NEAR(p.predict(x)[0], 2.0 * h0 - h1 + 0.05, 1e-12);
}

TEST(Mlp, ReluAndOutputClamp) {
  MlpSpec s;
  s.layers.push_back({Matrix{{5.0}}, Vector{{0.0}}, Activation::Relu});
  s.input_bounds = {{-1.0, 1.0}};
  s.output_bounds = {{0.0, 2.0}};
  MlpPredictor p(s);
  EXPECT_EQ(p.predict(Vector{{-0.5}})[0], 0.0);
  EXPECT_EQ(p.predict(Vector{{0.9}})[0], 2.0);
}

TEST(Mlp, NonFiniteActivationNamesLayer) {
  MlpSpec s;
  s.layers.push_back({Matrix{{1e308}}, Vector{{0.0}}, Activation::Identity});
  s.layers.push_back({Matrix{{1e308}}, Vector{{0.0}}, Activation::Identity});
  try {
    mlp_forward(s, Vector{{1.0}});
    FAIL() << "expected an evaluation error";
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Mlp, InvalidShapes) {
  auto s = two_layer();
  s.layers[1].weights = Matrix::Zero(1, 3);
  EXPECT_THROW(MlpPredictor{s}, InputError);
  MlpPredictor p(two_layer());
  EXPECT_THROW(p.predict(Vector{{0.1}}), InputError);
  EXPECT_THROW(p.predict(Vector{{0.1, std::nan("")}}), InputError);
}

TEST(Mlp, JsonRoundTrip) {
  const auto s = two_layer();
  const auto back = mlp_from_json(Json::parse(to_json(s).dump()));
  MlpPredictor a(s), b(back);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vector x{{rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    EXPECT_TRUE(fixtures::bit_equal(a.predict(x), b.predict(x)));
  }
  Json bad = to_json(s);
  bad["layers"][0]["bias"] = Json::array({1.0});
  EXPECT_THROW(mlp_from_json(bad), ParseError);
}

TEST(FunctionPredictor, ChecksOutputs) {
  FunctionPredictor wrong([](const Vector&) { return Vector::Zero(2); }, {{-1.0, 1.0}}, {{-1.0, 1.0}});
  EXPECT_THROW(wrong.predict(Vector{{0.0}}), EvaluationError);
  FunctionPredictor nan([](const Vector&) { return Vector::Constant(1, std::nan("")); }, {{-1.0, 1.0}}, {{-1.0, 1.0}});
  EXPECT_THROW(nan.predict(Vector{{0.0}}), EvaluationError);
}

TEST(TreePredictor, MatchesTree) {
  const auto t = fixtures::two_leaf_fixture();
  TreePredictor p(t);
  const Vector x{{0.7, 0.2}};
  EXPECT_TRUE(fixtures::bit_equal(p.predict(x), t.predict(x)));
}

TEST(PendulumPolicy, KnownValues) {
  EXPECT_EQ(pendulum_policy(pendulum::PendulumState{0.0, 0.0}), 0.0);
  EXPECT_NEAR(pendulum_policy(pendulum::PendulumState{0.1, 0.0}), -0.8, 1e-12);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const pendulum::PendulumState s{rng.uniform(-3.1, 3.1), rng.uniform(-8, 8)};
    const double u = pendulum_policy(s);
    EXPECT_LE(std::abs(u), pendulum::kMaxTorque);
    EXPECT_NEAR(pendulum_policy(pendulum::PendulumState{-s.theta, -s.theta_dot}), -u, 1e-12);
  }
}

TEST(PendulumPolicy, RawAndEngineeredAgree) {
  PendulumRawPolicy raw;
  PendulumEngineeredPolicy eng;
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const pendulum::PendulumState s{rng.uniform(-3.1, 3.1), rng.uniform(-8, 8)};
    EXPECT_EQ(raw.predict(pendulum::raw_features(s))[0], eng.predict(pendulum::engineered_features(s))[0]);
  }
  // Off-circle raw points are projected back onto it.
  EXPECT_NEAR(raw.predict(Vector{{0.9, 0.9, 0.0}})[0], pendulum_policy(pendulum::PendulumState{std::numbers::pi / 4, 0.0}),
              1e-12);
}

TEST(PendulumPolicy, ClosedLoopSwingUp) {
  const auto traj = pendulum::rollout([](const pendulum::RawObservation& o) { return pendulum_policy(o); },
                                      pendulum::PendulumState{std::numbers::pi, 0.01}, 500);
  std::size_t first = traj.states.size();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    if (std::abs(traj.states[i].theta) < 0.05) {
      first = i;
      break;
    }
  }
  ASSERT_LT(first, traj.states.size()) << "never reached the upright band";
  for (std::size_t i = first; i < traj.states.size(); ++i) {
    EXPECT_LT(std::abs(traj.states[i].theta), 0.05) << "left the band at step " << i;
  }
}

TEST(Docking, GoldenOutput) {
  const auto bb = synthetic_docking_predictor(42);
  const Vector x{{0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8}};
  const Vector y = bb->predict(x);
  const Vector expected{{-0x1.9768bce4d979dp-3, -0x1.5bb109a0d94f3p-1, -0x1.d6c0d1ad49f82p-2, 0x1.38f7849476a9dp-2,
                         -0x1.4fb4c5725956fp-7}};
  EXPECT_TRUE(fixtures::bit_equal(y, expected)) << y.transpose();
}

TEST(Docking, OutputsWithinBoundsAndSeedMatters) {
  const auto a = synthetic_docking_predictor(42);
  const auto b = synthetic_docking_predictor(43);
  EXPECT_EQ(a->input_dim(), 8u);
  EXPECT_EQ(a->output_dim(), 5u);
  Rng rng(11);
  bool differ = false;
  for (int i = 0; i < 10000; ++i) {
    Vector x(8);
    for (int j = 0; j < 8; ++j) x[j] = rng.uniform(-1, 1);
    const Vector y = a->predict(x);
    EXPECT_TRUE(within(y, a->output_bounds()));
    differ = differ || !fixtures::bit_equal(y, b->predict(x));
  }
  EXPECT_TRUE(differ);
}

TEST(Docking, WeightsFileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "lmtcfe_docking_weights.json").string();
  std::ofstream(path) << to_json(synthetic_docking_spec(42)).dump();
  const auto loaded = load_mlp_predictor(path);
  const auto original = synthetic_docking_predictor(42);
  const Vector x = Vector::Constant(8, 0.25);
  EXPECT_TRUE(fixtures::bit_equal(loaded->predict(x), original->predict(x)));
  std::filesystem::remove(path);
  EXPECT_THROW(load_mlp_predictor(path), InputError);
}
