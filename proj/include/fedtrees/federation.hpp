#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fedtrees/dataset.hpp"
#include "fedtrees/gbdt.hpp"
#include "fedtrees/mlp.hpp"

namespace fedtrees::fed {

// ---------------------------------------------------------------------------
// Delta-based early stopping

/// Bookkeeping of the patience window. A score improves on the best when
/// `best_score - score > delta`; `window` consecutive non-improving
/// observations stop the run.
struct StopperState {
  double delta = 1e-5;
  int window = 10;
  double best_score = std::numeric_limits<double>::infinity();
  int best_round = 0;
  int stall_counter = 0;
  bool stopped = false;

  bool operator==(const StopperState&) const = default;
};

enum class StopDecision { proceed, stop };

/// Holds the best snapshot alongside the counter state.
template <class Model>
class EarlyStopper {
 public:
  EarlyStopper(double delta, int window) {
    if (!(delta >= 0.0)) throw std::invalid_argument("stopper: delta must be >= 0");
    if (window < 1) throw std::invalid_argument("stopper: window must be >= 1");
    state_.delta = delta;
    state_.window = window;
  }
  EarlyStopper(StopperState state, std::optional<Model> best)
      : state_(state), best_(std::move(best)) {}

  StopDecision observe(int round, double score, const Model& snapshot) {
    if (!std::isfinite(score)) throw std::invalid_argument("stopper: score must be finite");
    if (state_.stopped) return StopDecision::stop;
    if (state_.best_score - score > state_.delta) {
      state_.best_score = score;
      state_.best_round = round;
      state_.stall_counter = 0;
      best_ = snapshot;
    } else {
      ++state_.stall_counter;
    }
    if (state_.stall_counter >= state_.window) state_.stopped = true;
    return state_.stopped ? StopDecision::stop : StopDecision::proceed;
  }

  const StopperState& state() const { return state_; }
  const std::optional<Model>& best_model() const { return best_; }

 private:
  StopperState state_;
  std::optional<Model> best_;
};

// ---------------------------------------------------------------------------
// Clients and telemetry

struct Client {
  int id = 0;  // selection ties go to the lowest id
  std::string name;
  SupervisedSet train;
};

struct RoundRecord {
  int round = 0;
  std::vector<std::optional<double>> client_mae;  // indexed by client id; empty when not sampled
  int selected = -1;                              // FedTrees winner, -1 for FedAvg
  double aggregate_norm = 0.0;                    // FedAvg only
  double post_mae = 0.0;
  double best_mae = 0.0;
  double elapsed_s = 0.0;  // cumulative: max client time per round + server time
  double wall_s = 0.0;     // cumulative wall clock

  bool operator==(const RoundRecord&) const = default;
};

/// `round, client_0_mae, ..., selected, post_mae, elapsed_s`
void write_round_log(std::ostream& out, std::span<const RoundRecord> log, std::size_t n_clients);

struct RunOptions {
  double delta = 1e-5;
  int window = 10;
  int max_rounds = 1000;
  /// Execution order of clients within a round; empty means ascending id.
  std::vector<int> client_order;
  /// When false every timing field is written as 0 so outputs are byte-reproducible.
  bool record_timing = true;
  /// Compare every client's local model against the server's at each round start.
  bool verify_sync = false;
};

// ---------------------------------------------------------------------------
// FedTrees

struct FedTreesCheckpoint {
  int round = 0;
  gbdt::Ensemble accepted;
  StopperState stopper;
  std::vector<RoundRecord> log;
};

struct FedTreesResult {
  gbdt::Ensemble best_model;
  gbdt::Ensemble accepted;  // every appended batch, including post-best rounds
  std::vector<RoundRecord> log;
  StopperState stopper;
  int rounds_run = 0;
  bool models_in_sync = true;

  FedTreesCheckpoint checkpoint() const;
};

/// Each round every client boosts one batch on top of the shared model; the
/// server keeps the batch with the lowest validation MAE.
FedTreesResult fedtrees_run(std::span<const Client> clients, const SupervisedSet& validation,
                            const gbdt::GbdtParams& params, const RunOptions& options,
                            const FedTreesCheckpoint* resume = nullptr);

nlohmann::json checkpoint_to_json(const FedTreesCheckpoint& c);
FedTreesCheckpoint fedtrees_checkpoint_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// FedAvg

struct FedAvgConfig {
  double client_fraction = 1.0;
  mlp::SgdConfig sgd;
  std::uint64_t seed = 0;  // drives init, client sampling and local shuffles

  void validate() const;
};

struct ClientUpdate {
  int id = 0;
  std::size_t n_samples = 0;
  mlp::FlatParams params;
};

/// sum_k (n_k / n) w_k, evaluated as w_ref + sum_k (n_k / n)(w_k - w_ref) with
/// w_ref the lowest-id update: independent of input order, and exact when all
/// updates coincide.
mlp::FlatParams aggregate(std::span<const ClientUpdate> updates);

struct FedAvgCheckpoint {
  int round = 0;
  mlp::FlatParams current;
  mlp::FlatParams best;
  StopperState stopper;
  std::vector<RoundRecord> log;
};

struct FedAvgResult {
  mlp::FlatParams best_params;
  mlp::FlatParams final_params;
  std::vector<RoundRecord> log;
  StopperState stopper;
  int rounds_run = 0;

  FedAvgCheckpoint checkpoint() const;
};

FedAvgResult fedavg_run(std::span<const Client> clients, const SupervisedSet& validation,
                        const FedAvgConfig& cfg, const mlp::MlpArch& arch,
                        const RunOptions& options, const FedAvgCheckpoint* resume = nullptr);

nlohmann::json checkpoint_to_json(const FedAvgCheckpoint& c);
FedAvgCheckpoint fedavg_checkpoint_from_json(const nlohmann::json& j);

/// Per-round derived seed (splitmix64 over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t round, std::uint64_t client);

// ---------------------------------------------------------------------------
// Zone clients

enum class LagPolicy {
  zone,       // each client's lag column is its own zone's previous hour
  aggregate,  // every client uses the all-zone previous-hour aggregate
};

struct ZoneSplit {
  int zone = 0;
  ScalerParams scaler;  // fit on this zone's train slice
  SplitSets scaled;
  double last_train_actual_raw = 0.0;  // last target before the test slice
};

struct FederatedData {
  std::vector<Client> clients;
  std::vector<ZoneSplit> zones;
  SupervisedSet validation;  // pooled, chronological per zone
  std::vector<int> validation_zone;
  SupervisedSet test;
  std::vector<int> test_zone;

  std::vector<const ScalerParams*> test_scalers() const;
};

FederatedData build_clients(std::span<const HourlyRecord> hourly, std::size_t zone_count,
                            std::span<const std::string> features, const SplitSpec& split,
                            LagPolicy lag = LagPolicy::zone);

}  // namespace fedtrees::fed
