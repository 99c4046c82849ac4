#include "fedtrees/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace fedtrees {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.path", "data.synthetic", "data.synthetic_days", "data.synthetic_seed",
      "data.column_timestamp", "data.column_temperature", "data.column_humidity",
      "data.column_wind_speed", "data.column_general_diffuse_flows",
      "data.column_diffuse_flows", "data.column_zones",
      "split.train_fraction", "split.validation_fraction",
      "features.subset",
      "model.type",
      "gbdt.num_trees", "gbdt.num_leaves", "gbdt.max_depth", "gbdt.learning_rate",
      "gbdt.batch_size", "gbdt.min_data_in_leaf", "gbdt.max_bins", "gbdt.lambda_l2",
      "mlp.hidden", "mlp.learning_rate", "mlp.batch_size", "mlp.epochs", "mlp.optimizer",
      "federation.algorithm", "federation.delta", "federation.window", "federation.max_rounds",
      "federation.client_fraction", "federation.local_epochs", "federation.lag_policy",
      "run.seed", "run.output_dir", "run.record_timing"};
  return keys;
}

std::string fmt(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  T v{};
  const auto* end = raw.data() + raw.size();
  auto res = std::from_chars(raw.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError("config key '" + key + "': cannot parse '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace

const char* to_string(ModelKind m) { return m == ModelKind::gbdt ? "gbdt" : "mlp"; }
const char* to_string(Algorithm a) { return a == Algorithm::fedtrees ? "fedtrees" : "fedavg"; }

int ExperimentConfig::effective_window() const {
  return window.value_or(algorithm == Algorithm::fedtrees ? 10 : 55);
}

void ExperimentConfig::validate() const {
  if (!synthetic) {
    if (data_path.empty()) throw ConfigError("data.path is required unless data.synthetic = true");
    if (!std::filesystem::exists(data_path))
      throw ConfigError("data.path '" + data_path.string() + "' does not exist");
  }
  if (synthetic_days < 3) throw ConfigError("data.synthetic_days must be >= 3");
  try {
    split_sizes(1000, split);
    gbdt.validate();
    sgd.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (num_trees < 1 || num_trees % gbdt.batch_size != 0)
    throw ConfigError("gbdt.num_trees must be a positive multiple of gbdt.batch_size");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("mlp.hidden sizes must be >= 1");
  if (!(delta >= 0.0)) throw ConfigError("federation.delta must be >= 0");
  if (effective_window() < 1) throw ConfigError("federation.window must be >= 1");
  if (max_rounds < 1) throw ConfigError("federation.max_rounds must be >= 1");
  if (!(client_fraction > 0.0 && client_fraction <= 1.0))
    throw ConfigError("federation.client_fraction must lie in (0,1]");
  if (local_epochs < 1) throw ConfigError("federation.local_epochs must be >= 1");
  if (lag_policy != "zone" && lag_policy != "aggregate")
    throw ConfigError("federation.lag_policy must be 'zone' or 'aggregate'");
  if (features != "all" && features.rfind("top-", 0) != 0) {
    const auto& canon = canonical_features();
    for (const auto& f : split_list(features))
      if (std::find(canon.begin(), canon.end(), f) == canon.end())
        throw ConfigError("features.subset: unknown feature '" + f + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }

  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config key '" + section + "' must live inside a [section]");
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const std::string v = node.data();
      if (!known_keys().count(full)) throw ConfigError("unknown config key '" + full + "'");

      if (full == "data.path") c.data_path = v;
      else if (full == "data.synthetic") c.synthetic = parse_bool(full, v);
      else if (full == "data.synthetic_days") c.synthetic_days = parse_number<int>(full, v);
      else if (full == "data.synthetic_seed") c.synthetic_seed = parse_number<std::uint64_t>(full, v);
      else if (full == "data.column_timestamp") c.columns.timestamp = v;
      else if (full == "data.column_temperature") c.columns.temperature = v;
      else if (full == "data.column_humidity") c.columns.humidity = v;
      else if (full == "data.column_wind_speed") c.columns.wind_speed = v;
      else if (full == "data.column_general_diffuse_flows") c.columns.general_diffuse_flows = v;
      else if (full == "data.column_diffuse_flows") c.columns.diffuse_flows = v;
      else if (full == "data.column_zones") c.columns.zones = split_list(v);
      else if (full == "split.train_fraction") c.split.train_fraction = parse_number<double>(full, v);
      else if (full == "split.validation_fraction")
        c.split.validation_fraction_of_train = parse_number<double>(full, v);
      else if (full == "features.subset") c.features = v;
      else if (full == "model.type") {
        if (v == "gbdt") c.model = ModelKind::gbdt;
        else if (v == "mlp") c.model = ModelKind::mlp;
        else throw ConfigError("model.type must be 'gbdt' or 'mlp'");
      }
      else if (full == "gbdt.num_trees") c.num_trees = parse_number<int>(full, v);
      else if (full == "gbdt.num_leaves") c.gbdt.num_leaves = parse_number<int>(full, v);
      else if (full == "gbdt.max_depth") c.gbdt.max_depth = parse_number<int>(full, v);
      else if (full == "gbdt.learning_rate") c.gbdt.learning_rate = parse_number<double>(full, v);
      else if (full == "gbdt.batch_size") c.gbdt.batch_size = parse_number<int>(full, v);
      else if (full == "gbdt.min_data_in_leaf") c.gbdt.min_data_in_leaf = parse_number<int>(full, v);
      else if (full == "gbdt.max_bins") c.gbdt.max_bins = parse_number<int>(full, v);
      else if (full == "gbdt.lambda_l2") c.gbdt.lambda_l2 = parse_number<double>(full, v);
      else if (full == "mlp.hidden") {
        c.hidden.clear();
        for (const auto& h : split_list(v)) c.hidden.push_back(parse_number<std::size_t>(full, h));
      }
      else if (full == "mlp.learning_rate") c.sgd.learning_rate = parse_number<double>(full, v);
      else if (full == "mlp.batch_size") c.sgd.batch_size = parse_number<std::size_t>(full, v);
      else if (full == "mlp.epochs") c.sgd.epochs = parse_number<std::size_t>(full, v);
      else if (full == "mlp.optimizer") {
        if (v == "adam") c.sgd.optimizer = mlp::Optimizer::adam;
        else if (v == "sgd") c.sgd.optimizer = mlp::Optimizer::sgd;
        else throw ConfigError("mlp.optimizer must be 'adam' or 'sgd'");
      }
      else if (full == "federation.algorithm") {
        if (v == "fedtrees") c.algorithm = Algorithm::fedtrees;
        else if (v == "fedavg") c.algorithm = Algorithm::fedavg;
        else throw ConfigError("federation.algorithm must be 'fedtrees' or 'fedavg'");
      }
      else if (full == "federation.delta") c.delta = parse_number<double>(full, v);
      else if (full == "federation.window") c.window = parse_number<int>(full, v);
      else if (full == "federation.max_rounds") c.max_rounds = parse_number<int>(full, v);
      else if (full == "federation.client_fraction") c.client_fraction = parse_number<double>(full, v);
      else if (full == "federation.local_epochs") c.local_epochs = parse_number<std::size_t>(full, v);
      else if (full == "federation.lag_policy") c.lag_policy = v;
      else if (full == "run.seed") c.seed = parse_number<std::uint64_t>(full, v);
      else if (full == "run.output_dir") c.output_dir = v;
      else if (full == "run.record_timing") c.record_timing = parse_bool(full, v);
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  auto cfg = parse_config(in);
  // Relative data paths resolve against the config file's directory.
  if (!cfg.data_path.empty() && cfg.data_path.is_relative())
    cfg.data_path = std::filesystem::absolute(path.parent_path() / cfg.data_path).lexically_normal();
  return cfg;
}

std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[data]\n"
     << "path = " << c.data_path.string() << '\n'
     << "synthetic = " << (c.synthetic ? "true" : "false") << '\n'
     << "synthetic_days = " << c.synthetic_days << '\n'
     << "synthetic_seed = " << c.synthetic_seed << '\n'
     << "column_timestamp = " << c.columns.timestamp << '\n'
     << "column_temperature = " << c.columns.temperature << '\n'
     << "column_humidity = " << c.columns.humidity << '\n'
     << "column_wind_speed = " << c.columns.wind_speed << '\n'
     << "column_general_diffuse_flows = " << c.columns.general_diffuse_flows << '\n'
     << "column_diffuse_flows = " << c.columns.diffuse_flows << '\n'
     << "column_zones = " << join(c.columns.zones) << '\n'
     << "\n[split]\n"
     << "train_fraction = " << fmt(c.split.train_fraction) << '\n'
     << "validation_fraction = " << fmt(c.split.validation_fraction_of_train) << '\n'
     << "\n[features]\n"
     << "subset = " << c.features << '\n'
     << "\n[model]\n"
     << "type = " << to_string(c.model) << '\n'
     << "\n[gbdt]\n"
     << "num_trees = " << c.num_trees << '\n'
     << "num_leaves = " << c.gbdt.num_leaves << '\n'
     << "max_depth = " << c.gbdt.max_depth << '\n'
     << "learning_rate = " << fmt(c.gbdt.learning_rate) << '\n'
     << "batch_size = " << c.gbdt.batch_size << '\n'
     << "min_data_in_leaf = " << c.gbdt.min_data_in_leaf << '\n'
     << "max_bins = " << c.gbdt.max_bins << '\n'
     << "lambda_l2 = " << fmt(c.gbdt.lambda_l2) << '\n'
     << "\n[mlp]\n";
  os << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << '\n'
     << "learning_rate = " << fmt(c.sgd.learning_rate) << '\n'
     << "batch_size = " << c.sgd.batch_size << '\n'
     << "epochs = " << c.sgd.epochs << '\n'
     << "optimizer = " << (c.sgd.optimizer == mlp::Optimizer::adam ? "adam" : "sgd") << '\n'
     << "\n[federation]\n"
     << "algorithm = " << to_string(c.algorithm) << '\n'
     << "delta = " << fmt(c.delta) << '\n'
     << "window = " << c.effective_window() << '\n'
     << "max_rounds = " << c.max_rounds << '\n'
     << "client_fraction = " << fmt(c.client_fraction) << '\n'
     << "local_epochs = " << c.local_epochs << '\n'
     << "lag_policy = " << c.lag_policy << '\n'
     << "\n[run]\n"
     << "seed = " << c.seed << '\n'
     << "record_timing = " << (c.record_timing ? "true" : "false") << '\n';
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace fedtrees
