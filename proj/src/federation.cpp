#include "fedtrees/federation.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "fedtrees/metrics.hpp"

namespace fedtrees::fed {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<int> execution_order(std::span<const Client> clients, const std::vector<int>& order) {
  std::vector<int> ids;
  for (const auto& c : clients) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("federation: duplicate client ids");
  if (ids.front() != 0 || ids.back() != static_cast<int>(ids.size()) - 1)
    throw std::invalid_argument("federation: client ids must be 0..K-1");
  if (order.empty()) return ids;
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != ids) throw std::invalid_argument("federation: client_order is not a permutation");
  return order;
}

const Client& client_by_id(std::span<const Client> clients, int id) {
  for (const auto& c : clients)
    if (c.id == id) return c;
  throw std::invalid_argument("federation: unknown client id");
}

void check_common(std::span<const Client> clients, const SupervisedSet& validation,
                  const RunOptions& options) {
  if (clients.empty()) throw std::invalid_argument("federation: at least one client required");
  if (validation.empty()) throw std::invalid_argument("federation: empty validation set");
  if (options.max_rounds < 1) throw std::invalid_argument("federation: max_rounds must be >= 1");
  for (const auto& c : clients) {
    if (c.train.empty())
      throw std::invalid_argument("federation: client " + std::to_string(c.id) + " has no data");
    if (c.train.feature_names != validation.feature_names)
      throw std::invalid_argument("federation: client features differ from validation features");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json record_to_json(const RoundRecord& r) {
  json maes = json::array();
  for (const auto& m : r.client_mae) maes.push_back(m ? json(*m) : json(nullptr));
  return {{"round", r.round},          {"client_mae", maes},       {"selected", r.selected},
          {"aggregate_norm", r.aggregate_norm}, {"post_mae", r.post_mae}, {"best_mae", r.best_mae},
          {"elapsed_s", r.elapsed_s},  {"wall_s", r.wall_s}};
}

RoundRecord record_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  for (const auto& m : j.at("client_mae"))
    r.client_mae.push_back(m.is_null() ? std::nullopt : std::optional<double>(m.get<double>()));
  r.selected = j.at("selected").get<int>();
  r.aggregate_norm = j.at("aggregate_norm").get<double>();
  r.post_mae = j.at("post_mae").get<double>();
  r.best_mae = j.at("best_mae").get<double>();
  r.elapsed_s = j.at("elapsed_s").get<double>();
  r.wall_s = j.at("wall_s").get<double>();
  return r;
}

json stopper_to_json(const StopperState& s) {
  return {{"delta", s.delta},
          {"window", s.window},
          {"best_score", std::isfinite(s.best_score) ? json(s.best_score) : json(nullptr)},
          {"best_round", s.best_round},
          {"stall_counter", s.stall_counter},
          {"stopped", s.stopped}};
}

StopperState stopper_from_json(const json& j) {
  StopperState s;
  s.delta = j.at("delta").get<double>();
  s.window = j.at("window").get<int>();
  s.best_score = j.at("best_score").is_null() ? std::numeric_limits<double>::infinity()
                                              : j.at("best_score").get<double>();
  s.best_round = j.at("best_round").get<int>();
  s.stall_counter = j.at("stall_counter").get<int>();
  s.stopped = j.at("stopped").get<bool>();
  return s;
}

json log_to_json(const std::vector<RoundRecord>& log) {
  json out = json::array();
  for (const auto& r : log) out.push_back(record_to_json(r));
  return out;
}

std::vector<RoundRecord> log_from_json(const json& j) {
  std::vector<RoundRecord> out;
  for (const auto& r : j) out.push_back(record_from_json(r));
  return out;
}

void check_checkpoint_header(const json& j, const char* algorithm) {
  if (j.at("format").get<std::string>() != "fedtrees-checkpoint")
    throw gbdt::ModelFormatError("not a fedtrees-checkpoint document");
  if (j.at("version").get<int>() != 1)
    throw gbdt::ModelFormatError("unsupported checkpoint version");
  if (j.at("algorithm").get<std::string>() != algorithm)
    throw gbdt::ModelFormatError(std::string("checkpoint is not for ") + algorithm);
}

}  // namespace

void write_round_log(std::ostream& out, std::span<const RoundRecord> log, std::size_t n_clients) {
  out << "round";
  for (std::size_t k = 0; k < n_clients; ++k) out << ",client_" << k << "_mae";
  out << ",selected,post_mae,elapsed_s\n";
  for (const auto& r : log) {
    out << r.round;
    for (std::size_t k = 0; k < n_clients; ++k) {
      out << ',';
      if (k < r.client_mae.size() && r.client_mae[k]) out << format_double(*r.client_mae[k]);
    }
    out << ',';
    if (r.selected >= 0)
      out << r.selected;
    else
      out << "avg";
    out << ',' << format_double(r.post_mae) << ',' << format_double(r.elapsed_s) << '\n';
  }
}

// ---------------------------------------------------------------------------
// FedTrees

FedTreesCheckpoint FedTreesResult::checkpoint() const {
  return {static_cast<int>(accepted.batches().size()), accepted, stopper, log};
}

namespace {

struct TreeClientState {
  const Client* client;
  gbdt::Ensemble local_model;  // copy of the server's accepted batches
  std::unique_ptr<gbdt::Booster> booster;
};

}  // namespace

FedTreesResult fedtrees_run(std::span<const Client> clients, const SupervisedSet& validation,
                            const gbdt::GbdtParams& params, const RunOptions& options,
                            const FedTreesCheckpoint* resume) {
  check_common(clients, validation, options);
  params.validate();
  const auto order = execution_order(clients, options.client_order);
  const std::size_t n_clients = clients.size();

  // Round 1 broadcast: parameters and an empty batch list.
  gbdt::Ensemble accepted(params, validation.feature_names);
  EarlyStopper<int> stopper(options.delta, options.window);
  FedTreesResult result;
  if (resume) {
    if (resume->accepted.params() != params)
      throw std::invalid_argument("fedtrees: checkpoint params differ from run params");
    accepted = resume->accepted;
    stopper = EarlyStopper<int>(resume->stopper, resume->stopper.best_round);
    result.log = resume->log;
  }

  std::vector<TreeClientState> states;
  for (const auto& c : clients) {
    TreeClientState s{&c, gbdt::Ensemble(params, validation.feature_names),
                      std::make_unique<gbdt::Booster>(c.train, params)};
    for (const auto& b : accepted.batches()) {
      s.local_model.append(b);
      s.booster->append(b);
    }
    states.push_back(std::move(s));
  }
  std::sort(states.begin(), states.end(),
            [](const auto& a, const auto& b) { return a.client->id < b.client->id; });

  std::vector<double> val_pred = gbdt::predict(accepted, validation);
  const double prior_elapsed = result.log.empty() ? 0.0 : result.log.back().elapsed_s;
  const double prior_wall = result.log.empty() ? 0.0 : result.log.back().wall_s;
  double elapsed = prior_elapsed;
  const auto run_start = Clock::now();

  int round = static_cast<int>(accepted.batches().size()) + 1;
  for (; round <= options.max_rounds && !stopper.state().stopped; ++round) {
    // Broadcast Batch^{r-1}: every client stores it locally.
    if (round > 1) {
      const auto& last = accepted.batches().back();
      for (auto& s : states) {
        if (static_cast<int>(s.local_model.batches().size()) < round - 1) {
          s.local_model.append(last);
          s.booster->append(last);
        }
      }
    }
    if (options.verify_sync) {
      const auto server_doc = gbdt::serialize(accepted);
      for (const auto& s : states)
        if (gbdt::serialize(s.local_model) != server_doc) result.models_in_sync = false;
    }

    std::vector<gbdt::TreeBatch> candidates(n_clients);
    double slowest_client = 0.0;
    for (int id : order) {
      auto& s = states[static_cast<std::size_t>(id)];
      const auto t0 = Clock::now();
      candidates[static_cast<std::size_t>(id)] = s.booster->train_batch(round, s.client->name);
      slowest_client = std::max(slowest_client, seconds_since(t0));
    }

    // Server validation over all candidates; strict '<' keeps the lowest id on ties.
    const auto t_server = Clock::now();
    RoundRecord rec;
    rec.round = round;
    rec.client_mae.resize(n_clients);
    int best = -1;
    double best_mae = 0.0;
    std::vector<double> best_pred;
    for (std::size_t k = 0; k < n_clients; ++k) {
      std::vector<double> pred = val_pred;
      gbdt::accumulate_batch(candidates[k], params.learning_rate, validation, pred);
      const double m = mae(validation.target, pred);
      rec.client_mae[k] = m;
      if (best < 0 || m < best_mae) {
        best = static_cast<int>(k);
        best_mae = m;
        best_pred = std::move(pred);
      }
    }
    accepted.append(std::move(candidates[static_cast<std::size_t>(best)]));
    val_pred = std::move(best_pred);
    stopper.observe(round, best_mae, round);

    elapsed += slowest_client + seconds_since(t_server);
    rec.selected = best;
    rec.post_mae = best_mae;
    rec.best_mae = stopper.state().best_score;
    rec.elapsed_s = options.record_timing ? elapsed : 0.0;
    rec.wall_s = options.record_timing ? prior_wall + seconds_since(run_start) : 0.0;
    result.log.push_back(std::move(rec));
  }

  result.stopper = stopper.state();
  result.rounds_run = static_cast<int>(accepted.batches().size());
  result.best_model = accepted.prefix(static_cast<std::size_t>(result.stopper.best_round));
  result.accepted = std::move(accepted);
  return result;
}

json checkpoint_to_json(const FedTreesCheckpoint& c) {
  return {{"format", "fedtrees-checkpoint"},
          {"version", 1},
          {"algorithm", "fedtrees"},
          {"round", c.round},
          {"model", gbdt::ensemble_to_json(c.accepted)},
          {"stopper", stopper_to_json(c.stopper)},
          {"log", log_to_json(c.log)}};
}

FedTreesCheckpoint fedtrees_checkpoint_from_json(const json& j) {
  try {
    check_checkpoint_header(j, "fedtrees");
    FedTreesCheckpoint c;
    c.round = j.at("round").get<int>();
    c.accepted = gbdt::ensemble_from_json(j.at("model"));
    c.stopper = stopper_from_json(j.at("stopper"));
    c.log = log_from_json(j.at("log"));
    if (c.round != static_cast<int>(c.accepted.batches().size()))
      throw gbdt::ModelFormatError("checkpoint round does not match batch count");
    return c;
  } catch (const json::exception& e) {
    throw gbdt::ModelFormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// FedAvg

void FedAvgConfig::validate() const {
  if (!(client_fraction > 0.0 && client_fraction <= 1.0))
    throw std::invalid_argument("fedavg: client_fraction must lie in (0,1]");
  sgd.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t round, std::uint64_t client) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ round) ^ (client + 0x632be59bd9b4e019ULL));
}

mlp::FlatParams aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no client updates");
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->id < b->id; });
  std::size_t n = 0;
  for (const auto* u : sorted) {
    if (u->params.size() != sorted.front()->params.size())
      throw std::invalid_argument("aggregate: parameter vectors differ in length");
    n += u->n_samples;
  }
  if (n == 0) throw std::invalid_argument("aggregate: total sample count is zero");

  const auto& ref = sorted.front()->params;
  mlp::FlatParams out(ref.size(), 0.0);
  for (const auto* u : sorted) {
    const double w = static_cast<double>(u->n_samples) / static_cast<double>(n);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (u->params[i] - ref[i]);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += ref[i];
  return out;
}

FedAvgCheckpoint FedAvgResult::checkpoint() const {
  return {rounds_run, final_params, best_params, stopper, log};
}

FedAvgResult fedavg_run(std::span<const Client> clients, const SupervisedSet& validation,
                        const FedAvgConfig& cfg, const mlp::MlpArch& arch,
                        const RunOptions& options, const FedAvgCheckpoint* resume) {
  check_common(clients, validation, options);
  cfg.validate();
  arch.validate();
  if (arch.input_dim != validation.n_features())
    throw std::invalid_argument("fedavg: architecture input_dim does not match features");
  const auto order = execution_order(clients, options.client_order);
  const std::size_t n_clients = clients.size();
  const auto n_sampled = static_cast<std::size_t>(
      std::max(1.0, std::ceil(cfg.client_fraction * static_cast<double>(n_clients) - 1e-9)));

  mlp::FlatParams global = mlp::init(arch, derive_seed(cfg.seed, 0, 0));
  EarlyStopper<mlp::FlatParams> stopper(options.delta, options.window);
  FedAvgResult result;
  int round = 1;
  if (resume) {
    if (resume->current.size() != arch.param_count())
      throw std::invalid_argument("fedavg: checkpoint does not match the architecture");
    global = resume->current;
    stopper = EarlyStopper<mlp::FlatParams>(
        resume->stopper, resume->best.empty() ? std::nullopt : std::optional(resume->best));
    result.log = resume->log;
    round = resume->round + 1;
  }
  const double prior_elapsed = result.log.empty() ? 0.0 : result.log.back().elapsed_s;
  const double prior_wall = result.log.empty() ? 0.0 : result.log.back().wall_s;
  double elapsed = prior_elapsed;
  const auto run_start = Clock::now();

  for (; round <= options.max_rounds && !stopper.state().stopped; ++round) {
    std::vector<int> sample(n_clients);
    std::iota(sample.begin(), sample.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(round), 0xC11E47ULL));
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(n_sampled);
    std::vector<bool> chosen(n_clients, false);
    for (int id : sample) chosen[static_cast<std::size_t>(id)] = true;

    std::vector<ClientUpdate> updates;
    double slowest_client = 0.0;
    for (int id : order) {
      if (!chosen[static_cast<std::size_t>(id)]) continue;
      const auto& c = client_by_id(clients, id);
      mlp::SgdConfig local = cfg.sgd;
      local.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(id) + 1);
      const auto t0 = Clock::now();
      updates.push_back({id, c.train.n_rows, mlp::client_update(global, arch, local, c.train)});
      slowest_client = std::max(slowest_client, seconds_since(t0));
    }

    const auto t_server = Clock::now();
    RoundRecord rec;
    rec.round = round;
    rec.client_mae.resize(n_clients);
    for (const auto& u : updates)
      rec.client_mae[static_cast<std::size_t>(u.id)] =
          mae(validation.target, mlp::forward(u.params, arch, validation));
    global = aggregate(updates);
    double norm = 0.0;
    for (double w : global) norm += w * w;
    rec.aggregate_norm = std::sqrt(norm);
    rec.post_mae = mae(validation.target, mlp::forward(global, arch, validation));
    stopper.observe(round, rec.post_mae, global);

    elapsed += slowest_client + seconds_since(t_server);
    rec.best_mae = stopper.state().best_score;
    rec.elapsed_s = options.record_timing ? elapsed : 0.0;
    rec.wall_s = options.record_timing ? prior_wall + seconds_since(run_start) : 0.0;
    result.log.push_back(std::move(rec));
  }

  result.stopper = stopper.state();
  result.rounds_run = round - 1;
  result.final_params = global;
  result.best_params = stopper.best_model().value_or(global);
  return result;
}

json checkpoint_to_json(const FedAvgCheckpoint& c) {
  return {{"format", "fedtrees-checkpoint"},
          {"version", 1},
          {"algorithm", "fedavg"},
          {"round", c.round},
          {"params", c.current},
          {"best_params", c.best},
          {"stopper", stopper_to_json(c.stopper)},
          {"log", log_to_json(c.log)}};
}

FedAvgCheckpoint fedavg_checkpoint_from_json(const json& j) {
  try {
    check_checkpoint_header(j, "fedavg");
    FedAvgCheckpoint c;
    c.round = j.at("round").get<int>();
    c.current = j.at("params").get<mlp::FlatParams>();
    c.best = j.at("best_params").get<mlp::FlatParams>();
    c.stopper = stopper_from_json(j.at("stopper"));
    c.log = log_from_json(j.at("log"));
    return c;
  } catch (const json::exception& e) {
    throw gbdt::ModelFormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Zone clients

std::vector<const ScalerParams*> FederatedData::test_scalers() const {
  std::vector<const ScalerParams*> out;
  for (int z : test_zone) out.push_back(&zones[static_cast<std::size_t>(z)].scaler);
  return out;
}

FederatedData build_clients(std::span<const HourlyRecord> hourly, std::size_t zone_count,
                            std::span<const std::string> features, const SplitSpec& split_spec,
                            LagPolicy lag) {
  if (zone_count == 0) throw DataError("build_clients: zone count must be >= 1");
  if (hourly.empty()) throw DataError("build_clients: no hourly data");
  if (hourly.front().zone_power.size() != zone_count)
    throw DataError("build_clients: data has " + std::to_string(hourly.front().zone_power.size()) +
                    " zones, expected " + std::to_string(zone_count));

  FederatedData fd;
  std::vector<SupervisedSet> vals, tests;
  for (std::size_t z = 0; z < zone_count; ++z) {
    const auto raw = build_supervised(
        hourly, features, TargetSpec::for_zone(static_cast<int>(z), lag == LagPolicy::aggregate));
    const auto parts = split(raw, split_spec);
    ZoneSplit zs;
    zs.zone = static_cast<int>(z);
    zs.scaler = fit_scaler(parts.train);
    zs.scaled = {apply_scaler(parts.train, zs.scaler), apply_scaler(parts.validation, zs.scaler),
                 apply_scaler(parts.test, zs.scaler)};
    zs.last_train_actual_raw = parts.validation.empty() ? parts.train.target.back()
                                                        : parts.validation.target.back();
    fd.clients.push_back({static_cast<int>(z), "zone_" + std::to_string(z + 1), zs.scaled.train});
    vals.push_back(zs.scaled.validation);
    tests.push_back(zs.scaled.test);
    fd.validation_zone.insert(fd.validation_zone.end(), zs.scaled.validation.n_rows,
                              static_cast<int>(z));
    fd.test_zone.insert(fd.test_zone.end(), zs.scaled.test.n_rows, static_cast<int>(z));
    fd.zones.push_back(std::move(zs));
  }
  fd.validation = concat(vals);
  fd.test = concat(tests);
  return fd;
}

}  // namespace fedtrees::fed
