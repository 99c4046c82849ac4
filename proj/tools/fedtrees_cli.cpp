// Command-line front end for the experiment runners.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedtrees/config.hpp"
#include "fedtrees/experiments.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kRuntimeError = 4;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

fedtrees::ExperimentConfig resolve(const Globals& g) {
  fedtrees::ExperimentConfig cfg =
      g.config.empty() ? fedtrees::ExperimentConfig{} : fedtrees::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

void print_rows(const std::vector<fedtrees::exp::ReportRow>& rows) {
  fedtrees::exp::write_report(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fedtrees;

  CLI::App app{"Federated gradient-boosted trees and FedAvg load-forecasting experiments"};
  app.set_version_flag("--version", std::string(exp::version()));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Experiment config (INI)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override run.seed");
  app.add_option("--out-dir", g.out_dir, "Override run.output_dir");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  auto* prepare = app.add_subcommand("prepare-data", "Write the hourly supervised CSV");
  auto* central = app.add_subcommand("centralized", "Persistence plus centralized GBDT or MLP");
  auto* federated = app.add_subcommand("federated", "FedTrees or FedAvg with early stopping");
  auto* importance = app.add_subcommand("feature-importance", "Gain-based feature ranking");

  auto* sweep = app.add_subcommand("sweep-features", "Test MAE using the top-k features");
  std::size_t k_min = 1, k_max = canonical_features().size();
  sweep->add_option("--k-min", k_min, "Smallest k")->capture_default_str();
  sweep->add_option("--k-max", k_max, "Largest k")->capture_default_str();

  auto* grid = app.add_subcommand("sweep-stopper", "Federated runs over a delta x window grid");
  std::vector<double> deltas{1e-6, 1e-5, 1e-4, 1e-3};
  std::vector<int> windows{1, 5, 10, 20};
  grid->add_option("--deltas", deltas, "Comma-separated deltas")->delimiter(',')->capture_default_str();
  grid->add_option("--windows", windows, "Comma-separated window sizes")
      ->delimiter(',')
      ->capture_default_str();

  auto* curves = app.add_subcommand("emit-curves", "Convergence and 72-hour forecast CSVs");
  std::string checkpoint;
  curves->add_option("--checkpoint", checkpoint, "Checkpoint JSON of a completed run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(g);
    std::ostream* log = g.quiet ? nullptr : &std::cerr;

    if (prepare->parsed()) {
      exp::prepare_data(cfg, log);
    } else if (central->parsed()) {
      print_rows(exp::run_centralized(cfg, log));
    } else if (federated->parsed()) {
      print_rows(exp::run_federated(cfg, log));
    } else if (importance->parsed()) {
      exp::write_importance(std::cout, exp::run_feature_importance(cfg, log).importance);
    } else if (sweep->parsed()) {
      exp::write_sweep(std::cout, exp::run_feature_sweep(cfg, k_min, k_max, log));
    } else if (grid->parsed()) {
      exp::write_grid(std::cout, exp::run_stopper_grid(cfg, deltas, windows, log));
    } else if (curves->parsed()) {
      exp::emit_curves(cfg, checkpoint, log);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
