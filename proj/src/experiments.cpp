#include "fedtrees/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedtrees/synthetic.hpp"

#ifndef FEDTREES_VERSION
#define FEDTREES_VERSION "0.0.0"
#endif

namespace fedtrees::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void note(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << '\n' << std::flush;
}

std::ofstream open_out(const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_resolved_config(const ExperimentConfig& cfg) {
  auto out = open_out(cfg.output_dir / "config.resolved.ini");
  out << canonical_config(cfg);
}

ReportRow make_row(const ExperimentConfig& cfg, std::string algorithm, const EvalResult& r,
                   int rounds, double wall, double simulated) {
  return {std::move(algorithm), r.mae, r.mape, rounds, wall, simulated,
          config_hash(cfg), cfg.seed, version()};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

gbdt::GbdtParams federated_params(const ExperimentConfig& cfg) {
  auto p = cfg.gbdt;
  p.base_score = 0.5;
  return p;
}

}  // namespace

const char* version() { return FEDTREES_VERSION; }

// ---------------------------------------------------------------------------
// CSV outputs

void write_report(std::ostream& out, std::span<const ReportRow> rows) {
  out << "algorithm,mae,mape,rounds,computation_seconds,simulated_seconds,config_hash,seed,version\n";
  for (const auto& r : rows)
    out << r.algorithm << ',' << num(r.mae) << ',' << num(r.mape) << ',' << r.rounds << ','
        << num(r.computation_seconds) << ',' << num(r.simulated_seconds) << ',' << r.config_hash
        << ',' << r.seed << ',' << r.version << '\n';
}

std::vector<ReportRow> read_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("report: empty file");
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw DataError("report line " + std::to_string(line_no) + ": expected 9 fields");
    try {
      rows.push_back({c[0], std::stod(c[1]), std::stod(c[2]), std::stoi(c[3]), std::stod(c[4]),
                      std::stod(c[5]), c[6], std::stoull(c[7]), c[8]});
    } catch (const std::logic_error&) {
      throw DataError("report line " + std::to_string(line_no) + ": unparseable number");
    }
  }
  return rows;
}

void write_forecast(std::ostream& out, std::span<const ForecastRow> rows) {
  out << "timestamp,actual,predicted,persistence\n";
  for (const auto& r : rows)
    out << format_timestamp(r.timestamp) << ',' << num(r.actual) << ',' << num(r.predicted) << ','
        << num(r.persistence) << '\n';
}

void write_convergence(std::ostream& out, std::span<const fed::RoundRecord> log) {
  out << "round,post_mae,best_mae\n";
  for (const auto& r : log) out << r.round << ',' << num(r.post_mae) << ',' << num(r.best_mae) << '\n';
}

void write_importance(std::ostream& out, const gbdt::FeatureImportance& imp) {
  out << "rank,feature,gain,raw_gain,split_count\n";
  const auto order = imp.ranking();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto f = order[i];
    out << i + 1 << ',' << imp.feature_names[f] << ',' << num(imp.gain[f]) << ','
        << num(imp.raw_gain[f]) << ',' << imp.split_count[f] << '\n';
  }
}

void write_sweep(std::ostream& out, std::span<const SweepPoint> points) {
  out << "k,mae,mape,features\n";
  for (const auto& p : points) {
    out << p.k << ',' << num(p.result.mae) << ',' << num(p.result.mape) << ',';
    for (std::size_t i = 0; i < p.features.size(); ++i) out << (i ? ";" : "") << p.features[i];
    out << '\n';
  }
}

void write_grid(std::ostream& out, std::span<const GridCell> cells) {
  out << "algorithm,delta,window,mae,mape,rounds,computation_seconds,simulated_seconds\n";
  for (const auto& c : cells)
    out << c.row.algorithm << ',' << num(c.delta) << ',' << c.window << ',' << num(c.row.mae) << ','
        << num(c.row.mape) << ',' << c.row.rounds << ',' << num(c.row.computation_seconds) << ','
        << num(c.row.simulated_seconds) << '\n';
}

// ---------------------------------------------------------------------------
// Data

std::vector<HourlyRecord> load_hourly(const ExperimentConfig& cfg) {
  if (cfg.synthetic) {
    synthetic::LoadProfileOptions o;
    o.days = cfg.synthetic_days;
    o.zones = static_cast<int>(cfg.columns.zones.size());
    o.seed = cfg.synthetic_seed;
    const auto raw = synthetic::load_profile(o);
    return resample_hourly(raw);
  }
  const auto raw = load_csv(cfg.data_path, cfg.columns);
  return resample_hourly(raw);
}

CentralizedData prepare_centralized(std::span<const HourlyRecord> hourly,
                                    std::span<const std::string> features, const SplitSpec& split_spec) {
  const auto raw = build_supervised(hourly, features, TargetSpec::aggregate());
  const auto parts = split(raw, SplitSpec{split_spec.train_fraction, 0.0});
  CentralizedData d;
  d.features.assign(features.begin(), features.end());
  d.scaler = fit_scaler(parts.train);
  d.train = apply_scaler(parts.train, d.scaler);
  d.test = apply_scaler(parts.test, d.scaler);
  d.last_train_actual_scaled = d.train.target.back();
  return d;
}

fed::FederatedData build_federated_data(const ExperimentConfig& cfg,
                                        std::span<const HourlyRecord> hourly,
                                        std::span<const std::string> features) {
  if (hourly.empty()) throw DataError("no hourly data");
  return fed::build_clients(hourly, hourly.front().zone_power.size(), features, cfg.split,
                            cfg.lag_policy == "aggregate" ? fed::LagPolicy::aggregate
                                                          : fed::LagPolicy::zone);
}

// ---------------------------------------------------------------------------
// Centralized

CentralizedResult centralized(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                              std::span<const std::string> features, std::ostream* log) {
  const auto data = prepare_centralized(hourly, features, cfg.split);
  CentralizedResult res;

  std::vector<double> series{data.last_train_actual_scaled};
  series.insert(series.end(), data.test.target.begin(), data.test.target.end());
  res.persistence = make_row(cfg, "persistence", persistence_eval(series, data.scaler), 0, 0.0, 0.0);

  std::vector<double> pred;
  const auto t0 = Clock::now();
  int rounds = 0;
  if (cfg.model == ModelKind::gbdt) {
    auto params = cfg.gbdt;
    params.base_score = std::accumulate(data.train.target.begin(), data.train.target.end(), 0.0) /
                        static_cast<double>(data.train.n_rows);
    rounds = cfg.num_trees / params.batch_size;
    note(log, "centralized gbdt: " + std::to_string(cfg.num_trees) + " trees on " +
                  std::to_string(data.train.n_rows) + " rows");
    res.ensemble = gbdt::boost(data.train, params, static_cast<std::size_t>(rounds));
    pred = gbdt::predict(*res.ensemble, data.test);
  } else {
    mlp::MlpArch arch{data.train.n_features(), cfg.hidden};
    auto sgd = cfg.sgd;
    sgd.seed = fed::derive_seed(cfg.seed, 0, 1);
    rounds = static_cast<int>(sgd.epochs);
    note(log, "centralized mlp: " + std::to_string(sgd.epochs) + " epochs on " +
                  std::to_string(data.train.n_rows) + " rows");
    res.mlp_params = mlp::client_update(mlp::init(arch, fed::derive_seed(cfg.seed, 0, 0)), arch, sgd,
                                        data.train);
    pred = mlp::forward(res.mlp_params, arch, data.test);
  }
  const double wall = cfg.record_timing ? seconds_since(t0) : 0.0;
  res.model = make_row(cfg, to_string(cfg.model), evaluate_scaled(data.test.target, pred, data.scaler),
                       rounds, wall, wall);

  const std::size_t n = std::min<std::size_t>(72, data.test.n_rows);
  const auto actual = inverse_target(data.test.target, data.scaler);
  const auto predicted = inverse_target(pred, data.scaler);
  const auto persisted = inverse_target(persistence_predictions(series), data.scaler);
  for (std::size_t i = 0; i < n; ++i)
    res.forecast.push_back({data.test.timestamps[i], actual[i], predicted[i], persisted[i]});
  return res;
}

// ---------------------------------------------------------------------------
// Federated

fed::RunOptions run_options(const ExperimentConfig& cfg) {
  fed::RunOptions o;
  o.delta = cfg.delta;
  o.window = cfg.effective_window();
  o.max_rounds = cfg.max_rounds;
  o.record_timing = cfg.record_timing;
  return o;
}

namespace {

std::vector<ForecastRow> zone_sum_forecast(const fed::FederatedData& data,
                                           std::span<const double> pred_scaled) {
  std::vector<ForecastRow> rows;
  if (data.zones.empty()) return rows;
  const std::size_t per_zone = data.zones.front().scaled.test.n_rows;
  const std::size_t n = std::min<std::size_t>(72, per_zone);
  rows.resize(n);
  std::size_t offset = 0;
  for (const auto& z : data.zones) {
    const auto& test = z.scaled.test;
    const auto actual = inverse_target(test.target, z.scaler);
    const auto predicted = inverse_target(pred_scaled.subspan(offset, test.n_rows), z.scaler);
    for (std::size_t i = 0; i < n; ++i) {
      rows[i].timestamp = test.timestamps[i];
      rows[i].actual += actual[i];
      rows[i].predicted += predicted[i];
      rows[i].persistence += i == 0 ? z.last_train_actual_raw : actual[i - 1];
    }
    offset += test.n_rows;
  }
  return rows;
}

EvalResult pooled_persistence(const fed::FederatedData& data) {
  std::vector<double> pred;
  for (const auto& z : data.zones) {
    const auto& t = z.scaled.test.target;
    pred.push_back(scale_target(z.last_train_actual_raw, z.scaler));
    pred.insert(pred.end(), t.begin(), t.end() - 1);
  }
  const auto scalers = data.test_scalers();
  return evaluate_scaled(data.test.target, pred, scalers);
}

}  // namespace

FederatedResult federated(const ExperimentConfig& cfg, const fed::FederatedData& data,
                          std::ostream* log) {
  FederatedResult res;
  res.n_clients = data.clients.size();
  res.persistence = make_row(cfg, "persistence", pooled_persistence(data), 0, 0.0, 0.0);
  const auto options = run_options(cfg);
  const auto scalers = data.test_scalers();

  std::vector<double> pred;
  if (cfg.algorithm == Algorithm::fedtrees) {
    note(log, "fedtrees: " + std::to_string(res.n_clients) + " clients, window " +
                  std::to_string(options.window));
    auto r = fed::fedtrees_run(data.clients, data.validation, federated_params(cfg), options);
    pred = gbdt::predict(r.best_model, data.test);
    res.checkpoint = fed::checkpoint_to_json(r.checkpoint()).dump(1);
    res.log = std::move(r.log);
    res.best_round = r.stopper.best_round;
    res.best_model = std::move(r.best_model);
    res.model = make_row(cfg, "fedtrees", evaluate_scaled(data.test.target, pred, scalers),
                         r.rounds_run, res.log.empty() ? 0.0 : res.log.back().wall_s,
                         res.log.empty() ? 0.0 : res.log.back().elapsed_s);
  } else {
    fed::FedAvgConfig fc;
    fc.client_fraction = cfg.client_fraction;
    fc.sgd = cfg.sgd;
    fc.sgd.epochs = cfg.local_epochs;
    fc.seed = cfg.seed;
    const mlp::MlpArch arch{data.validation.n_features(), cfg.hidden};
    note(log, "fedavg: " + std::to_string(res.n_clients) + " clients, window " +
                  std::to_string(options.window));
    auto r = fed::fedavg_run(data.clients, data.validation, fc, arch, options);
    pred = mlp::forward(r.best_params, arch, data.test);
    res.checkpoint = fed::checkpoint_to_json(r.checkpoint()).dump(1);
    res.log = std::move(r.log);
    res.best_round = r.stopper.best_round;
    res.best_params = std::move(r.best_params);
    res.model = make_row(cfg, "fedavg", evaluate_scaled(data.test.target, pred, scalers),
                         r.rounds_run, res.log.empty() ? 0.0 : res.log.back().wall_s,
                         res.log.empty() ? 0.0 : res.log.back().elapsed_s);
  }
  note(log, std::string(to_string(cfg.algorithm)) + ": stopped after " +
                std::to_string(res.model.rounds) + " rounds, best round " +
                std::to_string(res.best_round));
  res.forecast = zone_sum_forecast(data, pred);
  return res;
}

FederatedResult federated(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                          std::span<const std::string> features, std::ostream* log) {
  return federated(cfg, build_federated_data(cfg, hourly, features), log);
}

// ---------------------------------------------------------------------------
// Feature studies

ImportanceResult importance_study(const ExperimentConfig& cfg, std::span<const HourlyRecord> hourly,
                                  std::ostream* log) {
  auto c = cfg;
  c.model = ModelKind::gbdt;
  const auto all = canonical_features();
  const auto r = centralized(c, hourly, all, log);
  ImportanceResult out;
  out.importance = gbdt::feature_importance(*r.ensemble);
  for (auto idx : out.importance.ranking()) out.ranked.push_back(out.importance.feature_names[idx]);
  return out;
}

std::vector<std::string> top_k(std::span<const std::string> ranked, std::size_t k) {
  if (k == 0 || k > ranked.size())
    throw ConfigError("k = " + std::to_string(k) + " outside 1.." + std::to_string(ranked.size()));
  const std::vector<std::string> chosen(ranked.begin(), ranked.begin() + static_cast<long>(k));
  std::vector<std::string> out;
  for (const auto& f : canonical_features())
    if (std::find(chosen.begin(), chosen.end(), f) != chosen.end()) out.push_back(f);
  return out;
}

std::vector<std::string> resolve_features(const ExperimentConfig& cfg,
                                          std::span<const HourlyRecord> hourly, std::ostream* log) {
  if (cfg.features == "all") return canonical_features();
  if (cfg.features.rfind("top-", 0) == 0) {
    std::size_t k = 0;
    try {
      k = std::stoul(cfg.features.substr(4));
    } catch (const std::logic_error&) {
      throw ConfigError("features.subset: cannot parse '" + cfg.features + "'");
    }
    const auto imp = importance_study(cfg, hourly, log);
    return top_k(imp.ranked, k);
  }
  std::vector<std::string> out;
  std::stringstream ss(cfg.features);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<SweepPoint> feature_sweep(const ExperimentConfig& cfg,
                                      std::span<const HourlyRecord> hourly, std::size_t k_min,
                                      std::size_t k_max, std::ostream* log) {
  const std::size_t n = canonical_features().size();
  if (k_min < 1 || k_max > n || k_min > k_max)
    throw ConfigError("sweep range " + std::to_string(k_min) + ".." + std::to_string(k_max) +
                      " outside 1.." + std::to_string(n));
  auto c = cfg;
  c.model = ModelKind::gbdt;
  const auto imp = importance_study(c, hourly, log);
  std::vector<SweepPoint> points;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    SweepPoint p;
    p.k = k;
    p.features = top_k(imp.ranked, k);
    const auto r = centralized(c, hourly, p.features, nullptr);
    p.result = {r.model.mae, r.model.mape, 0};
    note(log, "k=" + std::to_string(k) + " mae " + num(p.result.mae));
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<GridCell> stopper_grid(const ExperimentConfig& cfg,
                                   std::span<const HourlyRecord> hourly,
                                   std::span<const double> deltas, std::span<const int> windows,
                                   std::ostream* log) {
  const auto features = resolve_features(cfg, hourly, log);
  const auto data = build_federated_data(cfg, hourly, features);
  std::vector<GridCell> cells;
  for (double d : deltas) {
    for (int w : windows) {
      auto c = cfg;
      c.delta = d;
      c.window = w;
      c.validate();
      note(log, "grid cell delta=" + num(d) + " window=" + std::to_string(w));
      const auto r = federated(c, data, nullptr);
      cells.push_back({d, w, r.model});
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// File-producing entry points

std::vector<ReportRow> run_centralized(const ExperimentConfig& cfg, std::ostream* log) {
  const auto hourly = load_hourly(cfg);
  const auto features = resolve_features(cfg, hourly, log);
  const auto r = centralized(cfg, hourly, features, log);
  const std::vector<ReportRow> rows{r.persistence, r.model};
  write_resolved_config(cfg);
  {
    auto out = open_out(cfg.output_dir / "report.csv");
    write_report(out, rows);
  }
  {
    auto out = open_out(cfg.output_dir / "forecast_72h.csv");
    write_forecast(out, r.forecast);
  }
  if (r.ensemble) {
    auto out = open_out(cfg.output_dir / "model.json");
    out << gbdt::serialize(*r.ensemble);
  }
  return rows;
}

std::vector<ReportRow> run_federated(const ExperimentConfig& cfg, std::ostream* log) {
  const auto hourly = load_hourly(cfg);
  const auto features = resolve_features(cfg, hourly, log);
  const auto r = federated(cfg, hourly, features, log);
  const std::vector<ReportRow> rows{r.persistence, r.model};
  write_resolved_config(cfg);
  {
    auto out = open_out(cfg.output_dir / "report.csv");
    write_report(out, rows);
  }
  {
    auto out = open_out(cfg.output_dir / "round_log.csv");
    fed::write_round_log(out, r.log, r.n_clients);
  }
  {
    auto out = open_out(cfg.output_dir / "convergence.csv");
    write_convergence(out, r.log);
  }
  {
    auto out = open_out(cfg.output_dir / "forecast_72h.csv");
    write_forecast(out, r.forecast);
  }
  {
    auto out = open_out(cfg.output_dir / "checkpoint.json");
    out << r.checkpoint << '\n';
  }
  if (r.best_model) {
    auto out = open_out(cfg.output_dir / "model.json");
    out << gbdt::serialize(*r.best_model);
  }
  return rows;
}

ImportanceResult run_feature_importance(const ExperimentConfig& cfg, std::ostream* log) {
  const auto hourly = load_hourly(cfg);
  auto r = importance_study(cfg, hourly, log);
  write_resolved_config(cfg);
  auto out = open_out(cfg.output_dir / "feature_importance.csv");
  write_importance(out, r.importance);
  return r;
}

std::vector<SweepPoint> run_feature_sweep(const ExperimentConfig& cfg, std::size_t k_min,
                                          std::size_t k_max, std::ostream* log) {
  const auto hourly = load_hourly(cfg);
  auto points = feature_sweep(cfg, hourly, k_min, k_max, log);
  write_resolved_config(cfg);
  auto out = open_out(cfg.output_dir / "feature_sweep.csv");
  write_sweep(out, points);
  return points;
}

std::vector<GridCell> run_stopper_grid(const ExperimentConfig& cfg, std::span<const double> deltas,
                                       std::span<const int> windows, std::ostream* log) {
  const auto hourly = load_hourly(cfg);
  auto cells = stopper_grid(cfg, hourly, deltas, windows, log);
  write_resolved_config(cfg);
  auto out = open_out(cfg.output_dir / "stopper_grid.csv");
  write_grid(out, cells);
  return cells;
}

void emit_curves(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream* log) {
  std::ifstream in(checkpoint);
  if (!in) throw DataError("cannot open checkpoint '" + checkpoint.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw gbdt::ModelFormatError(std::string("checkpoint: ") + e.what());
  }
  const auto algorithm = j.value("algorithm", std::string());

  const auto hourly = load_hourly(cfg);
  std::vector<std::string> features;
  std::vector<fed::RoundRecord> round_log;
  std::vector<double> pred;
  fed::FederatedData data;
  if (algorithm == "fedtrees") {
    const auto c = fed::fedtrees_checkpoint_from_json(j);
    features = c.accepted.feature_names();
    data = build_federated_data(cfg, hourly, features);
    pred = gbdt::predict(c.accepted.prefix(static_cast<std::size_t>(c.stopper.best_round)), data.test);
    round_log = c.log;
  } else if (algorithm == "fedavg") {
    const auto c = fed::fedavg_checkpoint_from_json(j);
    features = resolve_features(cfg, hourly, log);
    data = build_federated_data(cfg, hourly, features);
    const mlp::MlpArch arch{features.size(), cfg.hidden};
    if (c.best.size() != arch.param_count())
      throw gbdt::ModelFormatError("checkpoint parameter count does not match [mlp] hidden sizes");
    pred = mlp::forward(c.best, arch, data.test);
    round_log = c.log;
  } else {
    throw gbdt::ModelFormatError("checkpoint: unknown algorithm '" + algorithm + "'");
  }
  {
    auto out = open_out(cfg.output_dir / "convergence.csv");
    write_convergence(out, round_log);
  }
  auto out = open_out(cfg.output_dir / "forecast_72h.csv");
  write_forecast(out, zone_sum_forecast(data, pred));
  note(log, "wrote curves for " + std::to_string(round_log.size()) + " rounds");
}

void prepare_data(const ExperimentConfig& cfg, std::ostream* log) {
  if (cfg.synthetic) {
    synthetic::LoadProfileOptions o;
    o.days = cfg.synthetic_days;
    o.zones = static_cast<int>(cfg.columns.zones.size());
    o.seed = cfg.synthetic_seed;
    const auto raw = synthetic::load_profile(o);
    auto out = open_out(cfg.output_dir / "raw.csv");
    write_raw_csv(out, raw, cfg.columns);
    note(log, "wrote " + std::to_string(raw.size()) + " ten-minute rows");
  }
  const auto hourly = load_hourly(cfg);
  const auto set = build_supervised(hourly, canonical_features(), TargetSpec::aggregate());
  auto out = open_out(cfg.output_dir / "prepared.csv");
  write_supervised_csv(out, set);
  note(log, "wrote " + std::to_string(set.n_rows) + " hourly rows");
}

}  // namespace fedtrees::exp
