// lmtcfe: sample | train | explain | bench | serve

#include "lmtcfe/app/service.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace lmtcfe;

int main(int argc, char** argv) {
  CLI::App cli{"Counterfactual explanations through linear model tree surrogates"};
  cli.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  cli.add_option("--config", config_path, "JSON run configuration");
  cli.add_option("--seed", seed, "Override the configured seed");

  auto* sample = cli.add_subcommand("sample", "Sample the black box into a dataset file");
  std::optional<std::size_t> count;
  std::string dataset_out;
  sample->add_option("--count", count, "Number of rows");
  sample->add_option("--out", dataset_out, "Dataset path (.csv or .json)");

  auto* train = cli.add_subcommand("train", "Fit a tree and check held-out fidelity");
  bool force = false;
  std::string dataset_in;
  train->add_flag("--force", force, "Write the tree even below the R2 gate");
  train->add_option("--dataset", dataset_in, "Dataset path");

  auto* explain = cli.add_subcommand("explain", "Counterfactuals for one state");
  app::ExplainArgs ex;
  explain->add_option("--x", ex.x, "State as v1,v2,...")->required();
  explain->add_option("--target", ex.target, "Requested output as v1,v2,...");
  explain->add_option("--num", ex.num, "Number of counterfactuals");
  explain->add_option("--out", ex.out_path, "Write the JSON here instead of stdout");

  auto* bench = cli.add_subcommand("bench", "Time explanations over random states");
  std::optional<std::size_t> states;
  bench->add_option("--states", states, "Number of states");

  auto* serve = cli.add_subcommand("serve", "Run the HTTP service");
  std::optional<int> port;
  serve->add_option("--port", port, "Listen port");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kUsage;
  }

  return app::run_guarded(
      [&] {
        app::RunConfig cfg = config_path.empty() ? app::config_from_json(Json::object()) : app::load_config(config_path);
        if (seed) cfg.set_seed(*seed);
        if (count) cfg.sample.count = *count;
        if (!dataset_out.empty()) cfg.paths.dataset = dataset_out;
        if (!dataset_in.empty()) cfg.paths.dataset = dataset_in;
        if (port) cfg.service.port = *port;
        if (*sample) return app::cmd_sample(cfg, std::cout);
        if (*train) return app::cmd_train(cfg, force, std::cout, std::cerr);
        if (*explain) return app::cmd_explain(cfg, ex, std::cout);
        if (*bench) return app::cmd_bench(cfg, states, std::cout);
        return app::serve(cfg, std::cout);
      },
      std::cerr);
}
