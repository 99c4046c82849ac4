// Property acceptance checks on synthetic data. Prints one PASS/FAIL line per
// criterion and exits non-zero when any fails.
#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "fedtrees/experiments.hpp"
#include "fedtrees/federation.hpp"
#include "fedtrees/gbdt.hpp"
#include "fedtrees/mlp.hpp"
#include "fedtrees/synthetic.hpp"
#include "acceptance_common.hpp"
#include "oracles.hpp"

using namespace fedtrees;
using namespace acceptance;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig synthetic_config() {
  ExperimentConfig c;
  c.synthetic = true;
  c.synthetic_days = 90;
  c.num_trees = 200;
  c.record_timing = false;
  return c;
}

fed::RunOptions quiet(int window, int max_rounds) {
  fed::RunOptions o;
  o.window = window;
  o.max_rounds = max_rounds;
  o.record_timing = false;
  return o;
}

std::string round_log_text(const std::vector<fed::RoundRecord>& log, std::size_t k) {
  std::ostringstream os;
  fed::write_round_log(os, log, k);
  return os.str();
}

Outcome one_client_equivalence() {
  auto cfg = synthetic_config();
  const auto hourly = exp::load_hourly(cfg);
  auto data = exp::build_federated_data(cfg, hourly, canonical_features());
  const std::vector<fed::Client> one{data.clients.front()};
  auto p = cfg.gbdt;
  p.base_score = 0.5;
  const auto r = fed::fedtrees_run(one, data.validation, p, quiet(10, 40));
  const auto full = gbdt::boost(one[0].train, p, static_cast<std::size_t>(r.rounds_run));
  const auto best = gbdt::boost(one[0].train, p, static_cast<std::size_t>(r.stopper.best_round));
  const bool same_full = gbdt::serialize(r.accepted) == gbdt::serialize(full);
  const bool same_best = gbdt::serialize(r.best_model) == gbdt::serialize(best);
  return {same_full && same_best, std::to_string(r.rounds_run) + " rounds, accepted " +
                                      (same_full ? "identical" : "differs") + ", best model " +
                                      (same_best ? "identical" : "differs")};
}

Outcome fedavg_aggregation() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  bool permutation_ok = true, fixed_point_ok = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + rng() % 6, d = 1 + rng() % 40;
    std::vector<fed::ClientUpdate> ups;
    for (std::size_t i = 0; i < k; ++i) {
      fed::ClientUpdate up{static_cast<int>(i), 1 + rng() % 5000, {}};
      for (std::size_t j = 0; j < d; ++j) up.params.push_back(u(rng));
      ups.push_back(up);
    }
    long double n = 0;
    for (const auto& up : ups) n += static_cast<long double>(up.n_samples);
    const auto agg = fed::aggregate(ups);
    for (std::size_t j = 0; j < d; ++j) {
      long double hand = 0;
      for (const auto& up : ups)
        hand += static_cast<long double>(up.n_samples) / n * static_cast<long double>(up.params[j]);
      worst = std::max(worst, static_cast<double>(std::abs(hand - static_cast<long double>(agg[j]))));
    }
    auto shuffled = ups;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    permutation_ok = permutation_ok && fed::aggregate(shuffled) == agg;

    auto same = ups;
    for (auto& up : same) up.params = ups.front().params;
    fixed_point_ok = fixed_point_ok && fed::aggregate(same) == ups.front().params;
  }
  return {worst <= 1e-12 && permutation_ok && fixed_point_ok,
          "max |agg - hand| = " + fmt(worst) + ", permutation " +
              (permutation_ok ? "exact" : "differs") + ", fixed point " +
              (fixed_point_ok ? "exact" : "differs")};
}

Outcome gradient_oracle() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t in = 1 + rng() % 5;
    std::vector<std::size_t> hidden{1 + rng() % 8};
    if (rng() % 2) hidden.push_back(1 + rng() % 6);
    const mlp::MlpArch arch{in, hidden};
    auto p = mlp::init(arch, rng());
    for (auto& w : p) w += 0.05;
    const auto batch = synthetic::random_set(2 + rng() % 10, in, rng());
    worst = std::max(worst, oracle::fd_max_rel_error(p, arch, batch));
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " over 20 instances"};
}

Outcome boosting_monotone() {
  double worst_rise = 0.0;
  for (std::uint64_t d = 0; d < 5; ++d) {
    const auto s = synthetic::regression_set(400, 2, 0.1, 100 + d);
    gbdt::GbdtParams p;
    p.num_leaves = 8;
    p.min_data_in_leaf = 5;
    p.batch_size = 1;
    gbdt::Booster b(s, p);
    double prev = b.training_mse();
    for (int i = 1; i <= 50; ++i) {
      b.append(b.train_batch(i, "c"));
      const double now = b.training_mse();
      worst_rise = std::max(worst_rise, now - prev);
      prev = now;
    }
  }
  return {worst_rise <= 1e-12, "largest MSE increase " + fmt(worst_rise) + " over 5 x 50 batches"};
}

Outcome stopper_traces() {
  std::mt19937_64 rng(5);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const double delta = std::array{0.0, 1e-5, 1e-3, 0.05}[rng() % 4];
    const int window = 1 + static_cast<int>(rng() % 12);
    std::vector<double> scores(1 + rng() % 80);
    double level = 1.0;
    for (auto& s : scores) {
      level *= 0.9 + 0.15 * std::uniform_real_distribution<double>(0, 1)(rng);
      s = (rng() % 5 == 0) ? level + 1e-6 * static_cast<double>(rng() % 3) : level;
    }
    const auto ref = oracle::reference_stopper(scores, delta, window);
    fed::EarlyStopper<int> st(delta, window);
    int stop = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const int round = static_cast<int>(i) + 1;
      if (st.observe(round, scores[i], round) == fed::StopDecision::stop) {
        stop = round;
        break;
      }
    }
    if (stop != ref.stop_round || st.state().best_round != ref.best_round) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 sequences differ"};
}

Outcome exhaustive_split() {
  std::mt19937_64 rng(2025);
  int checked = 0, wrong = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 49;
    const std::size_t nf = 1 + rng() % 4;
    auto s = synthetic::random_set(n, nf, rng());
    for (auto& v : s.features)
      if (rng() % 3 == 0) v = std::round(v * 4.0) / 4.0;
    gbdt::GbdtParams p;
    p.num_leaves = 2;
    p.min_data_in_leaf = 1 + static_cast<int>(rng() % 5);
    p.lambda_l2 = (rng() % 2) ? 0.0 : 0.5;
    std::vector<double> g(n), h(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) g[i] = -s.target[i];
    const auto tree = gbdt::grow_tree(g, h, s, p);
    const auto cands = oracle::enumerate_splits(s, g, h, p.min_data_in_leaf, p.lambda_l2);
    ++checked;
    if (cands.empty()) {
      if (tree.num_leaves() != 1) ++wrong;
      continue;
    }
    const auto& root = tree.nodes()[0];
    const auto tied = oracle::near_ties(cands);
    const bool found = std::any_of(tied.begin(), tied.end(), [&](const oracle::Split& c) {
      return c.feature == root.feature && c.threshold == root.threshold;
    });
    if (tree.num_leaves() != 2 || !found) ++wrong;
  }
  return {wrong == 0, std::to_string(wrong) + " of " + std::to_string(checked) +
                          " instances disagree with brute force"};
}

Outcome determinism() {
  const auto base = fs::temp_directory_path() / "fedtrees_acceptance";
  std::vector<std::string> differ;
  for (const auto algo : {Algorithm::fedtrees, Algorithm::fedavg}) {
    auto a = synthetic_config();
    a.algorithm = algo;
    a.max_rounds = algo == Algorithm::fedavg ? 25 : 1000;
    a.sgd.epochs = 1;
    auto b = a;
    a.output_dir = base / (std::string(to_string(algo)) + "_a");
    b.output_dir = base / (std::string(to_string(algo)) + "_b");
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
    exp::run_federated(a);
    exp::run_federated(b);
    for (const char* f : {"report.csv", "round_log.csv", "convergence.csv", "forecast_72h.csv"})
      if (slurp(a.output_dir / f) != slurp(b.output_dir / f))
        differ.push_back(std::string(to_string(algo)) + "/" + f);
  }

  // Client execution order.
  auto cfg = synthetic_config();
  const auto hourly = exp::load_hourly(cfg);
  const auto data = exp::build_federated_data(cfg, hourly, canonical_features());
  auto p = cfg.gbdt;
  p.base_score = 0.5;
  const auto k = data.clients.size();
  auto forward = quiet(10, 1000), backward = forward;
  for (std::size_t i = 0; i < k; ++i) backward.client_order.push_back(static_cast<int>(k - 1 - i));
  const auto t1 = fed::fedtrees_run(data.clients, data.validation, p, forward);
  const auto t2 = fed::fedtrees_run(data.clients, data.validation, p, backward);
  if (gbdt::serialize(t1.best_model) != gbdt::serialize(t2.best_model) ||
      round_log_text(t1.log, k) != round_log_text(t2.log, k))
    differ.push_back("fedtrees client order");

  fed::FedAvgConfig fc;
  fc.sgd.epochs = 1;
  fc.seed = cfg.seed;
  const mlp::MlpArch arch{data.validation.n_features(), cfg.hidden};
  forward.max_rounds = backward.max_rounds = 15;
  const auto a1 = fed::fedavg_run(data.clients, data.validation, fc, arch, forward);
  const auto a2 = fed::fedavg_run(data.clients, data.validation, fc, arch, backward);
  if (a1.best_params != a2.best_params || round_log_text(a1.log, k) != round_log_text(a2.log, k))
    differ.push_back("fedavg client order");

  std::string detail = differ.empty() ? "CSVs byte-identical, client order irrelevant" : "differs:";
  for (const auto& d : differ) detail += " " + d;
  return {differ.empty(), detail};
}

}  // namespace

int main() {
  report(1, "one-client equivalence", one_client_equivalence);
  report(2, "FedAvg aggregation", fedavg_aggregation);
  report(3, "gradient oracle", gradient_oracle);
  report(4, "boosting monotonicity", boosting_monotone);
  report(5, "stopper traces", stopper_traces);
  report(6, "exhaustive split check", exhaustive_split);
  report(7, "determinism", determinism);
  return failures == 0 ? 0 : 1;
}
