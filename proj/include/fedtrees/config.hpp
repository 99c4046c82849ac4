#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtrees/dataset.hpp"
#include "fedtrees/gbdt.hpp"
#include "fedtrees/mlp.hpp"

namespace fedtrees {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { gbdt, mlp };
enum class Algorithm { fedtrees, fedavg };

/// Everything one experiment needs. Loaded from a sectioned INI file; every
/// key is optional and unknown keys are rejected.
struct ExperimentConfig {
  // [data]
  std::filesystem::path data_path;
  bool synthetic = false;
  int synthetic_days = 365;
  std::uint64_t synthetic_seed = 7;
  ColumnMap columns;

  // [split]
  SplitSpec split;

  // [features] "all", "top-K", or a comma-separated list of names.
  std::string features = "all";

  // [model]
  ModelKind model = ModelKind::gbdt;

  // [gbdt]
  gbdt::GbdtParams gbdt;
  int num_trees = 800;  // centralized budget

  // [mlp]
  std::vector<std::size_t> hidden = {64};
  mlp::SgdConfig sgd{.learning_rate = 1e-3, .batch_size = 30, .epochs = 300};

  // [federation]
  Algorithm algorithm = Algorithm::fedtrees;
  double delta = 1e-5;
  std::optional<int> window;  // defaults: 10 FedTrees, 55 FedAvg
  int max_rounds = 1000;
  double client_fraction = 1.0;
  std::size_t local_epochs = 5;
  std::string lag_policy = "zone";  // zone | aggregate

  // [run]
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  bool record_timing = true;

  int effective_window() const;
  /// Throws ConfigError; checks ranges and that the data file exists.
  void validate() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config as INI text in a fixed key order; parsing it back
/// yields an identical canonical text. The output directory is left out so
/// the same experiment hashes the same wherever it writes.
std::string canonical_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

const char* to_string(ModelKind m);
const char* to_string(Algorithm a);

}  // namespace fedtrees
