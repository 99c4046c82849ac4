#include "fedtrees/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fedtrees::gbdt {

using nlohmann::json;

void GbdtParams::validate() const {
  if (num_leaves < 2) throw std::invalid_argument("num_leaves must be >= 2");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0))
    throw std::invalid_argument("learning_rate must lie in (0,1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (min_data_in_leaf < 1) throw std::invalid_argument("min_data_in_leaf must be >= 1");
  if (max_bins < 2 || max_bins > 65535) throw std::invalid_argument("max_bins must lie in [2, 65535]");
  if (!(lambda_l2 >= 0.0)) throw std::invalid_argument("lambda_l2 must be >= 0");
  if (!std::isfinite(base_score)) throw std::invalid_argument("base_score must be finite");
}

// ---------------------------------------------------------------------------
// Binning

int BinMapper::bin(std::size_t feature, double value) const {
  const auto& b = boundaries_[feature];
  return static_cast<int>(std::lower_bound(b.begin(), b.end(), value) - b.begin());
}

BinMapper build_histograms(const SupervisedSet& train, int max_bins) {
  if (train.empty()) throw DataError("build_histograms: empty training set");
  if (max_bins < 2) throw std::invalid_argument("max_bins must be >= 2");
  const std::size_t n = train.n_rows;
  std::vector<std::vector<double>> all(train.n_features());
  std::vector<double> column(n);
  for (std::size_t f = 0; f < train.n_features(); ++f) {
    for (std::size_t r = 0; r < n; ++r) column[r] = train.at(r, f);
    std::sort(column.begin(), column.end());
    auto& bounds = all[f];

    std::vector<double> distinct;
    std::unique_copy(column.begin(), column.end(), std::back_inserter(distinct));
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
        bounds.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
      continue;
    }
    // Equal-population cuts; a cut landing inside a run of equal values
    // moves to the end of that run.
    for (int k = 1; k < max_bins; ++k) {
      std::size_t idx = static_cast<std::size_t>(k) * n / static_cast<std::size_t>(max_bins);
      while (idx < n && idx > 0 && column[idx] == column[idx - 1]) ++idx;
      if (idx == 0 || idx >= n) continue;
      const double cut = column[idx - 1] + (column[idx] - column[idx - 1]) / 2.0;
      if (bounds.empty() || cut > bounds.back()) bounds.push_back(cut);
    }
  }
  return BinMapper(std::move(all));
}

BinnedData BinnedData::build(const SupervisedSet& train, int max_bins) {
  BinnedData d;
  d.mapper = build_histograms(train, max_bins);
  d.n_rows = train.n_rows;
  d.n_features = train.n_features();
  d.bins.resize(d.n_rows * d.n_features);
  for (std::size_t f = 0; f < d.n_features; ++f)
    for (std::size_t r = 0; r < d.n_rows; ++r)
      d.bins[f * d.n_rows + r] = static_cast<std::uint16_t>(d.mapper.bin(f, train.at(r, f)));
  return d;
}

// ---------------------------------------------------------------------------
// Trees

DecisionTree::DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ModelFormatError("tree has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.is_leaf()) continue;
    const auto valid = [&](int c) {
      return c > static_cast<int>(i) && c < static_cast<int>(nodes_.size());
    };
    if (!valid(n.left) || !valid(n.right) || n.left == n.right)
      throw ModelFormatError("tree node " + std::to_string(i) + " has invalid children");
  }
}

int DecisionTree::leaf_index(std::span<const double> row) const {
  int i = 0;
  while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return i;
}

double DecisionTree::predict(std::span<const double> row) const {
  return nodes_[static_cast<std::size_t>(leaf_index(row))].value;
}

int DecisionTree::num_leaves() const {
  return static_cast<int>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.is_leaf()) {
      deepest = std::max(deepest, d[i]);
    } else {
      d[static_cast<std::size_t>(n.left)] = d[i] + 1;
      d[static_cast<std::size_t>(n.right)] = d[i] + 1;
    }
  }
  return deepest;
}

double split_gain(double g_left, double h_left, double g_total, double h_total, double lambda) {
  const double g_right = g_total - g_left;
  const double h_right = h_total - h_left;
  return g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) -
         g_total * g_total / (h_total + lambda);
}

namespace {

struct SplitCandidate {
  int feature = -1;
  int bin = -1;
  double gain = -std::numeric_limits<double>::infinity();
  bool valid() const { return feature >= 0; }
};

struct Leaf {
  int node = 0;
  int depth = 0;
  std::vector<std::uint32_t> rows;
  double sum_g = 0.0;
  double sum_h = 0.0;
  SplitCandidate best;
};

}  // namespace

class TreeGrower {
 public:
  TreeGrower(std::span<const double> g, std::span<const double> h, const BinnedData& data,
             const GbdtParams& params)
      : g_(g), h_(h), data_(data), params_(params) {}

  DecisionTree grow(GrowthTrace* trace) {
    DecisionTree tree;
    std::vector<Leaf> frontier;
    Leaf root;
    root.rows.resize(data_.n_rows);
    std::iota(root.rows.begin(), root.rows.end(), 0U);
    finish_leaf(root);
    frontier.push_back(std::move(root));

    int leaves = 1;
    while (leaves < params_.num_leaves) {
      // Frontier is kept in creation order, so strict '>' prefers the
      // earliest-created leaf on ties.
      std::size_t pick = frontier.size();
      for (std::size_t i = 0; i < frontier.size(); ++i) {
        const auto& c = frontier[i].best;
        if (!c.valid() || !accept(c.gain, frontier[i])) continue;
        if (pick == frontier.size() || c.gain > frontier[pick].best.gain) pick = i;
      }
      if (pick == frontier.size()) break;

      if (trace) {
        GrowthStep step;
        step.chosen_node = frontier[pick].node;
        step.chosen_gain = frontier[pick].best.gain;
        for (const auto& l : frontier)
          step.frontier_gains.push_back(
              l.best.valid() && accept(l.best.gain, l) ? l.best.gain
                                                       : -std::numeric_limits<double>::infinity());
        trace->push_back(std::move(step));
      }

      Leaf parent = std::move(frontier[pick]);
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));

      const auto f = static_cast<std::size_t>(parent.best.feature);
      Leaf left, right;
      for (auto r : parent.rows)
        (data_.at(r, f) <= parent.best.bin ? left : right).rows.push_back(r);

      const int left_id = static_cast<int>(tree.nodes_.size());
      auto& node = tree.nodes_[static_cast<std::size_t>(parent.node)];
      node.feature = parent.best.feature;
      node.threshold = data_.mapper.upper_boundary(f, parent.best.bin);
      node.gain = parent.best.gain;
      node.left = left_id;
      node.right = left_id + 1;
      tree.nodes_.emplace_back();
      tree.nodes_.emplace_back();

      left.node = left_id;
      right.node = left_id + 1;
      left.depth = right.depth = parent.depth + 1;
      finish_leaf(left);
      finish_leaf(right);
      frontier.push_back(std::move(left));
      frontier.push_back(std::move(right));
      ++leaves;
    }

    for (const auto& l : frontier) {
      const double denom = l.sum_h + params_.lambda_l2;
      tree.nodes_[static_cast<std::size_t>(l.node)].value = denom > 0.0 ? -l.sum_g / denom : 0.0;
    }
    return tree;
  }

 private:
  // Rejects gains that are only rounding noise on a split that changes nothing.
  bool accept(double gain, const Leaf& leaf) const {
    const double parent_score = leaf.sum_g * leaf.sum_g / (leaf.sum_h + params_.lambda_l2);
    return gain > 1e-12 * (1.0 + std::abs(parent_score));
  }

  void finish_leaf(Leaf& leaf) {
    leaf.sum_g = 0.0;
    leaf.sum_h = 0.0;
    for (auto r : leaf.rows) {
      leaf.sum_g += g_[r];
      leaf.sum_h += h_[r];
    }
    leaf.best = {};
    const auto min_data = static_cast<std::size_t>(params_.min_data_in_leaf);
    if (leaf.depth >= params_.max_depth || leaf.rows.size() < 2 * min_data) return;

    const double lambda = params_.lambda_l2;
    std::vector<double> hist_g, hist_h;
    std::vector<std::uint32_t> hist_n;
    for (std::size_t f = 0; f < data_.n_features; ++f) {
      const int nb = data_.mapper.num_bins(f);
      if (nb < 2) continue;
      hist_g.assign(static_cast<std::size_t>(nb), 0.0);
      hist_h.assign(static_cast<std::size_t>(nb), 0.0);
      hist_n.assign(static_cast<std::size_t>(nb), 0U);
      const std::uint16_t* col = data_.bins.data() + f * data_.n_rows;
      for (auto r : leaf.rows) {
        const auto b = col[r];
        hist_g[b] += g_[r];
        hist_h[b] += h_[r];
        ++hist_n[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      for (int b = 0; b + 1 < nb; ++b) {
        gl += hist_g[static_cast<std::size_t>(b)];
        hl += hist_h[static_cast<std::size_t>(b)];
        nl += hist_n[static_cast<std::size_t>(b)];
        const std::size_t nr = leaf.rows.size() - nl;
        if (nl < min_data) continue;
        if (nr < min_data) break;
        if (!(hl + lambda > 0.0) || !(leaf.sum_h - hl + lambda > 0.0)) continue;
        const double gain = split_gain(gl, hl, leaf.sum_g, leaf.sum_h, lambda);
        if (gain > leaf.best.gain) leaf.best = {static_cast<int>(f), b, gain};
      }
    }
  }

  std::span<const double> g_;
  std::span<const double> h_;
  const BinnedData& data_;
  const GbdtParams& params_;
};

DecisionTree grow_tree(std::span<const double> gradients, std::span<const double> hessians,
                       const BinnedData& data, const GbdtParams& params, GrowthTrace* trace) {
  params.validate();
  if (gradients.size() != data.n_rows || hessians.size() != data.n_rows)
    throw std::invalid_argument("grow_tree: gradient/hessian length must equal row count");
  if (data.n_rows == 0) throw DataError("grow_tree: empty training set");
  return TreeGrower(gradients, hessians, data, params).grow(trace);
}

DecisionTree grow_tree(std::span<const double> gradients, std::span<const double> hessians,
                       const SupervisedSet& train, const GbdtParams& params) {
  const auto data = BinnedData::build(train, params.max_bins);
  return grow_tree(gradients, hessians, data, params);
}

// ---------------------------------------------------------------------------
// Ensemble

Ensemble::Ensemble(GbdtParams params, std::vector<std::string> feature_names)
    : params_(params), feature_names_(std::move(feature_names)) {
  params_.validate();
}

std::size_t Ensemble::num_trees() const {
  std::size_t n = 0;
  for (const auto& b : batches_) n += b.trees.size();
  return n;
}

void Ensemble::append(TreeBatch batch) {
  if (batch.round_index != static_cast<int>(batches_.size()) + 1)
    throw std::invalid_argument("Ensemble::append: expected round " +
                                std::to_string(batches_.size() + 1) + ", got " +
                                std::to_string(batch.round_index));
  batches_.push_back(std::move(batch));
}

Ensemble Ensemble::prefix(std::size_t n) const {
  Ensemble out(params_, feature_names_);
  for (std::size_t i = 0; i < std::min(n, batches_.size()); ++i) out.batches_.push_back(batches_[i]);
  return out;
}

void accumulate_batch(const TreeBatch& batch, double learning_rate, const SupervisedSet& rows,
                      std::span<double> predictions) {
  for (const auto& tree : batch.trees)
    for (std::size_t r = 0; r < rows.n_rows; ++r)
      predictions[r] += learning_rate * tree.predict(rows.row(r));
}

namespace {
void check_width(const Ensemble& ens, std::size_t width) {
  if (width != ens.feature_names().size())
    throw std::invalid_argument("predict: model expects " +
                                std::to_string(ens.feature_names().size()) +
                                " features, got " + std::to_string(width));
}
}  // namespace

std::vector<double> predict(const Ensemble& ens, const SupervisedSet& rows) {
  check_width(ens, rows.n_features());
  std::vector<double> out(rows.n_rows, ens.params().base_score);
  for (const auto& b : ens.batches()) accumulate_batch(b, ens.params().learning_rate, rows, out);
  return out;
}

double predict_row(const Ensemble& ens, std::span<const double> row) {
  check_width(ens, row.size());
  double p = ens.params().base_score;
  for (const auto& b : ens.batches())
    for (const auto& t : b.trees) p += ens.params().learning_rate * t.predict(row);
  return p;
}

// ---------------------------------------------------------------------------
// Boosting

Booster::Booster(const SupervisedSet& train, const GbdtParams& params)
    : train_(&train), params_(params) {
  params_.validate();
  if (train.empty()) throw DataError("train_batch: empty training set");
  binned_ = BinnedData::build(train, params_.max_bins);
  predictions_.assign(train.n_rows, params_.base_score);
}

void Booster::reset(const Ensemble& ens) { predictions_ = predict(ens, *train_); }

void Booster::append(const TreeBatch& batch) {
  accumulate_batch(batch, params_.learning_rate, *train_, predictions_);
}

TreeBatch Booster::train_batch(int round_index, std::string producer_id) const {
  TreeBatch batch;
  batch.round_index = round_index;
  batch.producer_id = std::move(producer_id);
  std::vector<double> pred = predictions_;
  std::vector<double> grad(train_->n_rows);
  const std::vector<double> hess(train_->n_rows, 1.0);
  for (int t = 0; t < params_.batch_size; ++t) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = pred[i] - train_->target[i];
    auto tree = grow_tree(grad, hess, binned_, params_);
    for (std::size_t r = 0; r < train_->n_rows; ++r)
      pred[r] += params_.learning_rate * tree.predict(train_->row(r));
    batch.trees.push_back(std::move(tree));
  }
  return batch;
}

double Booster::training_mse() const {
  double s = 0.0;
  for (std::size_t i = 0; i < predictions_.size(); ++i) {
    const double e = predictions_[i] - train_->target[i];
    s += e * e;
  }
  return s / static_cast<double>(predictions_.size());
}

TreeBatch train_batch(const Ensemble& base, const SupervisedSet& train, const GbdtParams& params) {
  if (base.params() != params)
    throw std::invalid_argument("train_batch: params differ from the base ensemble's params");
  Booster booster(train, params);
  booster.reset(base);
  return booster.train_batch(static_cast<int>(base.batches().size()) + 1, "centralized");
}

Ensemble boost(const SupervisedSet& train, const GbdtParams& params, std::size_t num_batches) {
  Ensemble ens(params, train.feature_names);
  Booster booster(train, params);
  for (std::size_t r = 1; r <= num_batches; ++r) {
    auto batch = booster.train_batch(static_cast<int>(r), "centralized");
    booster.append(batch);
    ens.append(std::move(batch));
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Importance

std::vector<std::size_t> FeatureImportance::ranking() const {
  std::vector<std::size_t> idx(raw_gain.size());
  std::iota(idx.begin(), idx.end(), 0U);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return raw_gain[a] > raw_gain[b]; });
  return idx;
}

FeatureImportance feature_importance(const Ensemble& ens) {
  FeatureImportance fi;
  const std::size_t nf = ens.feature_names().size();
  fi.feature_names = ens.feature_names();
  fi.raw_gain.assign(nf, 0.0);
  fi.split_count.assign(nf, 0);
  for (const auto& b : ens.batches())
    for (const auto& t : b.trees)
      for (const auto& n : t.nodes())
        if (!n.is_leaf()) {
          fi.raw_gain[static_cast<std::size_t>(n.feature)] += n.gain;
          ++fi.split_count[static_cast<std::size_t>(n.feature)];
        }
  const double total = std::accumulate(fi.raw_gain.begin(), fi.raw_gain.end(), 0.0);
  fi.gain = fi.raw_gain;
  if (total > 0.0)
    for (auto& g : fi.gain) g /= total;
  return fi;
}

// ---------------------------------------------------------------------------
// Model document

namespace {
constexpr const char* kFormat = "fedtrees-gbdt";
constexpr int kVersion = 1;

json tree_to_json(const DecisionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array(), gain = json::array();
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    gain.push_back(n.gain);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left},
          {"right", right},     {"value", value},         {"gain", gain}};
}

DecisionTree tree_from_json(const json& j, std::size_t n_features) {
  const auto& feature = j.at("feature");
  const std::size_t n = feature.size();
  for (const char* key : {"threshold", "left", "right", "value", "gain"})
    if (j.at(key).size() != n) throw ModelFormatError(std::string("tree array '") + key + "' length mismatch");
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.feature = feature[i].get<int>();
    node.threshold = j["threshold"][i].get<double>();
    node.left = j["left"][i].get<int>();
    node.right = j["right"][i].get<int>();
    node.value = j["value"][i].get<double>();
    node.gain = j["gain"][i].get<double>();
    if (node.feature >= static_cast<int>(n_features))
      throw ModelFormatError("tree node references feature " + std::to_string(node.feature));
  }
  return DecisionTree(std::move(nodes));
}
}  // namespace

void to_json(json& j, const GbdtParams& p) {
  j = json{{"num_leaves", p.num_leaves},         {"max_depth", p.max_depth},
           {"learning_rate", p.learning_rate},   {"batch_size", p.batch_size},
           {"min_data_in_leaf", p.min_data_in_leaf}, {"max_bins", p.max_bins},
           {"lambda_l2", p.lambda_l2},           {"base_score", p.base_score}};
}

void from_json(const json& j, GbdtParams& p) {
  j.at("num_leaves").get_to(p.num_leaves);
  j.at("max_depth").get_to(p.max_depth);
  j.at("learning_rate").get_to(p.learning_rate);
  j.at("batch_size").get_to(p.batch_size);
  j.at("min_data_in_leaf").get_to(p.min_data_in_leaf);
  j.at("max_bins").get_to(p.max_bins);
  j.at("lambda_l2").get_to(p.lambda_l2);
  j.at("base_score").get_to(p.base_score);
}

json ensemble_to_json(const Ensemble& ens) {
  json batches = json::array();
  for (const auto& b : ens.batches()) {
    json trees = json::array();
    for (const auto& t : b.trees) trees.push_back(tree_to_json(t));
    batches.push_back({{"round", b.round_index}, {"trees", trees}});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"params", ens.params()},
          {"feature_names", ens.feature_names()},
          {"batches", batches}};
}

Ensemble ensemble_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat)
      throw ModelFormatError("not a " + std::string(kFormat) + " document");
    const int version = j.at("version").get<int>();
    if (version != kVersion)
      throw ModelFormatError("unsupported model version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");
    Ensemble ens(j.at("params").get<GbdtParams>(),
                 j.at("feature_names").get<std::vector<std::string>>());
    for (const auto& jb : j.at("batches")) {
      TreeBatch b;
      b.round_index = jb.at("round").get<int>();
      b.producer_id.clear();
      for (const auto& jt : jb.at("trees"))
        b.trees.push_back(tree_from_json(jt, ens.feature_names().size()));
      ens.append(std::move(b));
    }
    return ens;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(std::string("invalid model document: ") + e.what());
  }
}

std::string serialize(const Ensemble& ens) {
  // One batch per line keeps large models diffable and greppable.
  const json j = ensemble_to_json(ens);
  std::ostringstream os;
  os << "{\n";
  for (const char* key : {"format", "version", "params", "feature_names"})
    os << "  \"" << key << "\": " << j.at(key).dump() << ",\n";
  os << "  \"batches\": [";
  const auto& batches = j.at("batches");
  for (std::size_t i = 0; i < batches.size(); ++i)
    os << (i ? ",\n    " : "\n    ") << batches[i].dump();
  os << (batches.empty() ? "]\n" : "\n  ]\n") << "}\n";
  return os.str();
}

Ensemble deserialize(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ModelFormatError("model document parse error at byte " + std::to_string(e.byte) +
                           ": " + e.what());
  }
  return ensemble_from_json(j);
}

}  // namespace fedtrees::gbdt
