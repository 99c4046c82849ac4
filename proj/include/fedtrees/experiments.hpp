#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtrees/config.hpp"
#include "fedtrees/dataset.hpp"
#include "fedtrees/federation.hpp"
#include "fedtrees/gbdt.hpp"
#include "fedtrees/metrics.hpp"
#include "fedtrees/mlp.hpp"

namespace fedtrees::exp {

/// Library version, `<semver>-<git describe>` when built from a checkout.
const char* version();

struct ReportRow {
  std::string algorithm;
  double mae = 0.0;
  double mape = 0.0;
  int rounds = 0;
  double computation_seconds = 0.0;  // wall clock
  double simulated_seconds = 0.0;    // slowest client per round + server
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;

  bool operator==(const ReportRow&) const = default;
};

void write_report(std::ostream& out, std::span<const ReportRow> rows);
std::vector<ReportRow> read_report(std::istream& in);

struct ForecastRow {
  Timestamp timestamp = 0;
  double actual = 0.0;  // raw units, summed over zones for federated runs
  double predicted = 0.0;
  double persistence = 0.0;
};
void write_forecast(std::ostream& out, std::span<const ForecastRow> rows);

/// `round, post_mae, best_mae` per logged round.
void write_convergence(std::ostream& out, std::span<const fed::RoundRecord> log);

/// Ten-minute records from the configured CSV or the synthetic generator,
/// resampled to hours.
std::vector<HourlyRecord> load_hourly(const ExperimentConfig& cfg);

/// Aggregate-target data for centralized runs: the validation slice is folded
/// into training, the scaler is fit on the training slice.
struct CentralizedData {
  std::vector<std::string> features;
  ScalerParams scaler;
  SupervisedSet train;  // scaled
  SupervisedSet test;   // scaled
  double last_train_actual_scaled = 0.0;
};
CentralizedData prepare_centralized(std::span<const HourlyRecord> hourly,
                                    std::span<const std::string> features, const SplitSpec& split);

struct CentralizedResult {
  ReportRow persistence;
  ReportRow model;
  std::vector<ForecastRow> forecast;
  std::optional<gbdt::Ensemble> ensemble;
  mlp::FlatParams mlp_params;
};

/// GBDT (num_trees, base score = mean scaled train target) or MLP on the
/// aggregate target, evaluated on the test slice.
CentralizedResult centralized(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                              std::span<const std::string> features, std::ostream* log = nullptr);

struct FederatedResult {
  ReportRow persistence;
  ReportRow model;
  std::vector<fed::RoundRecord> log;
  std::size_t n_clients = 0;
  int best_round = 0;
  std::vector<ForecastRow> forecast;
  std::string checkpoint;  // versioned JSON document
  std::optional<gbdt::Ensemble> best_model;
  mlp::FlatParams best_params;
};

fed::RunOptions run_options(const ExperimentConfig& cfg);

/// Zone clients, then FedTrees or FedAvg under the stopper; metrics of the
/// best model on the pooled test slices.
FederatedResult federated(const ExperimentConfig& cfg, const fed::FederatedData& data,
                          std::ostream* log = nullptr);
FederatedResult federated(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                          std::span<const std::string> features, std::ostream* log = nullptr);

fed::FederatedData build_federated_data(const ExperimentConfig& cfg,
                                        std::span<const HourlyRecord> hourly,
                                        std::span<const std::string> features);

struct ImportanceResult {
  gbdt::FeatureImportance importance;
  std::vector<std::string> ranked;  // most important first
};

/// Centralized GBDT on all canonical features.
ImportanceResult importance_study(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                                  std::ostream* log = nullptr);
void write_importance(std::ostream& out, const gbdt::FeatureImportance& imp);

/// The k most important features, kept in canonical column order.
std::vector<std::string> top_k(std::span<const std::string> ranked, std::size_t k);

/// Expands "all", "top-K" (runs the importance study) or an explicit list.
std::vector<std::string> resolve_features(const ExperimentConfig& cfg,
                                          std::span<const HourlyRecord> hourly,
                                          std::ostream* log = nullptr);

struct SweepPoint {
  std::size_t k = 0;
  std::vector<std::string> features;
  EvalResult result;
};
std::vector<SweepPoint> feature_sweep(const ExperimentConfig& cfg,
                                      std::span<const HourlyRecord> hourly, std::size_t k_min,
                                      std::size_t k_max, std::ostream* log = nullptr);
void write_sweep(std::ostream& out, std::span<const SweepPoint> points);

struct GridCell {
  double delta = 0.0;
  int window = 0;
  ReportRow row;
};
std::vector<GridCell> stopper_grid(const ExperimentConfig& cfg,
                                   std::span<const HourlyRecord> hourly,
                                   std::span<const double> deltas, std::span<const int> windows,
                                   std::ostream* log = nullptr);
void write_grid(std::ostream& out, std::span<const GridCell> cells);

// File-producing entry points used by the CLI. Each writes its outputs plus
// `config.resolved.ini` into cfg.output_dir.

std::vector<ReportRow> run_centralized(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::vector<ReportRow> run_federated(const ExperimentConfig& cfg, std::ostream* log = nullptr);
ImportanceResult run_feature_importance(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::vector<SweepPoint> run_feature_sweep(const ExperimentConfig& cfg, std::size_t k_min,
                                          std::size_t k_max, std::ostream* log = nullptr);
std::vector<GridCell> run_stopper_grid(const ExperimentConfig& cfg, std::span<const double> deltas,
                                       std::span<const int> windows, std::ostream* log = nullptr);
/// Rebuilds convergence and 72-hour forecast CSVs from a stored checkpoint.
void emit_curves(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                 std::ostream* log = nullptr);
/// Writes the hourly supervised set (all features, aggregate target) and,
/// for synthetic configs, the generated ten-minute CSV.
void prepare_data(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace fedtrees::exp
