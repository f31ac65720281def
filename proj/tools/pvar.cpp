#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "panelvar/pipeline.hpp"

using namespace panelvar;

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> variant;
  std::optional<std::string> pooling;
  bool no_network = false;
};

RunConfig make_config(const CliArgs& args) {
  RunConfig cfg = load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.workers) cfg.workers = *args.workers;
  if (args.variant) cfg.variant = *args.variant;
  if (args.pooling) {
    if (*args.pooling == "partial") cfg.model.pooling = Pooling::Partial;
    else if (*args.pooling == "full") cfg.model.pooling = Pooling::Full;
    else throw ConfigError("pooling must be 'partial' or 'full'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panel Bayesian VAR: estimation, sign/zero identification, analysis"};
  app.require_subcommand(1);

  CliArgs args;
  app.add_option("--config", args.config_path, "Run configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", args.seed, "Override RNG seed");
  app.add_option("--workers", args.workers, "Override worker count");
  app.add_option("--variant", args.variant, "baseline|unemployment")
      ->check(CLI::IsMember({"baseline", "unemployment"}));
  app.add_option("--pooling", args.pooling, "partial|full")
      ->check(CLI::IsMember({"partial", "full"}));
  app.add_flag("--no-network", args.no_network, "Fail on cache misses instead of fetching");

  auto* c_fetch = app.add_subcommand("fetch", "Build the panel cache from raw series");
  auto* c_estimate = app.add_subcommand("estimate", "Run the Gibbs sampler");
  auto* c_identify = app.add_subcommand("identify", "Apply sign/zero restrictions");
  auto* c_report = app.add_subcommand("report", "Write IRF/FEVD/HD/counterfactual tables");
  auto* c_all = app.add_subcommand("all", "Run the full pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = make_config(args);
    if (c_fetch->parsed() || c_all->parsed()) cmd_fetch(cfg, !args.no_network);
    if (c_estimate->parsed() || c_all->parsed()) cmd_estimate(cfg);
    if (c_identify->parsed() || c_all->parsed()) cmd_identify(cfg);
    if (c_report->parsed() || c_all->parsed()) cmd_report(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const InfeasibleError& e) {
    std::cerr << "identification infeasible: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
