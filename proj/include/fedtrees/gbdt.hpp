#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fedtrees/dataset.hpp"

namespace fedtrees::gbdt {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GbdtParams {
  int num_leaves = 30;
  int max_depth = 12;
  double learning_rate = 0.078;
  int batch_size = 10;  // trees trained per train_batch call
  int min_data_in_leaf = 20;
  int max_bins = 255;
  double lambda_l2 = 0.0;
  double base_score = 0.0;

  /// Throws std::invalid_argument on any out-of-range field.
  void validate() const;
  bool operator==(const GbdtParams&) const = default;
};

/// Per-feature quantile bin boundaries. A value v falls in bin
/// `#{boundaries b : b < v}`, so bin j holds exactly the values
/// `boundary[j-1] < v <= boundary[j]`.
class BinMapper {
 public:
  BinMapper() = default;
  explicit BinMapper(std::vector<std::vector<double>> boundaries)
      : boundaries_(std::move(boundaries)) {}

  std::size_t num_features() const { return boundaries_.size(); }
  int num_bins(std::size_t feature) const {
    return static_cast<int>(boundaries_[feature].size()) + 1;
  }
  int bin(std::size_t feature, double value) const;
  /// Split threshold separating bins <= `bin` from the rest.
  double upper_boundary(std::size_t feature, int bin) const {
    return boundaries_[feature][static_cast<std::size_t>(bin)];
  }
  const std::vector<double>& boundaries(std::size_t feature) const {
    return boundaries_[feature];
  }

 private:
  std::vector<std::vector<double>> boundaries_;
};

/// Quantile boundaries per feature, each a midpoint between adjacent distinct
/// training values. At most `max_bins` bins; constant features get one bin.
BinMapper build_histograms(const SupervisedSet& train, int max_bins);

/// Training rows pre-mapped to bin indices (column-major).
struct BinnedData {
  BinMapper mapper;
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<std::uint16_t> bins;

  static BinnedData build(const SupervisedSet& train, int max_bins);
  std::uint16_t at(std::size_t row, std::size_t feature) const {
    return bins[feature * n_rows + row];
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
  double gain = 0.0;   // split gain for internal nodes

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Regression tree; rows with x[feature] <= threshold go left.
class DecisionTree {
 public:
  DecisionTree() : nodes_(1) {}
  explicit DecisionTree(std::vector<TreeNode> nodes);

  double predict(std::span<const double> row) const;
  int leaf_index(std::span<const double> row) const;
  int num_leaves() const;
  int depth() const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool operator==(const DecisionTree&) const = default;

 private:
  friend class TreeGrower;
  std::vector<TreeNode> nodes_;
};

/// Frontier snapshot taken before each split for leaf-wise priority checks.
struct GrowthStep {
  int chosen_node = -1;
  double chosen_gain = 0.0;
  std::vector<double> frontier_gains;  // best candidate gain of every frontier leaf
};
using GrowthTrace = std::vector<GrowthStep>;

/// Leaf-wise growth: split the frontier leaf with the largest gain until a
/// cap is reached or no split has positive gain.
DecisionTree grow_tree(std::span<const double> gradients, std::span<const double> hessians,
                       const BinnedData& data, const GbdtParams& params,
                       GrowthTrace* trace = nullptr);
DecisionTree grow_tree(std::span<const double> gradients, std::span<const double> hessians,
                       const SupervisedSet& train, const GbdtParams& params);

/// Split gain for partitioning (G, H) into (G_L, H_L) and the remainder.
double split_gain(double g_left, double h_left, double g_total, double h_total, double lambda);

struct TreeBatch {
  std::vector<DecisionTree> trees;
  int round_index = 1;
  /// Telemetry only; not part of the model document.
  std::string producer_id = "centralized";
};

/// Cumulative model: base_score + learning_rate * sum of all tree outputs.
class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(GbdtParams params, std::vector<std::string> feature_names);

  const GbdtParams& params() const { return params_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<TreeBatch>& batches() const { return batches_; }
  std::size_t num_trees() const;
  bool empty() const { return batches_.empty(); }

  /// Batches must arrive with round_index = size + 1.
  void append(TreeBatch batch);
  /// First `n` batches.
  Ensemble prefix(std::size_t n) const;

 private:
  GbdtParams params_;
  std::vector<std::string> feature_names_;
  std::vector<TreeBatch> batches_;
};

/// Adds learning_rate * tree(x) for every tree of `batch`, tree by tree.
void accumulate_batch(const TreeBatch& batch, double learning_rate, const SupervisedSet& rows,
                      std::span<double> predictions);

std::vector<double> predict(const Ensemble& ens, const SupervisedSet& rows);
double predict_row(const Ensemble& ens, std::span<const double> row);

/// Training state for one dataset: bins plus the running predictions of the
/// cumulative model, so successive batches avoid re-scoring old trees.
class Booster {
 public:
  Booster(const SupervisedSet& train, const GbdtParams& params);

  /// Recomputes predictions for `ens` from scratch.
  void reset(const Ensemble& ens);
  void append(const TreeBatch& batch);
  /// T new trees against the current predictions; state is not modified.
  TreeBatch train_batch(int round_index, std::string producer_id) const;

  std::span<const double> predictions() const { return predictions_; }
  double training_mse() const;
  const SupervisedSet& data() const { return *train_; }

 private:
  const SupervisedSet* train_;
  GbdtParams params_;
  BinnedData binned_;
  std::vector<double> predictions_;
};

/// One batch of `params.batch_size` trees boosted on top of `base`.
TreeBatch train_batch(const Ensemble& base, const SupervisedSet& train, const GbdtParams& params);

/// Plain boosting: `num_batches` successive batches from an empty model.
Ensemble boost(const SupervisedSet& train, const GbdtParams& params, std::size_t num_batches);

struct FeatureImportance {
  std::vector<std::string> feature_names;
  std::vector<double> gain;        // normalized to sum 1 when any split exists
  std::vector<double> raw_gain;
  std::vector<std::size_t> split_count;

  /// Feature indices by descending gain, ties by index.
  std::vector<std::size_t> ranking() const;
};

FeatureImportance feature_importance(const Ensemble& ens);

void to_json(nlohmann::json& j, const GbdtParams& p);
void from_json(const nlohmann::json& j, GbdtParams& p);
nlohmann::json ensemble_to_json(const Ensemble& ens);
Ensemble ensemble_from_json(const nlohmann::json& j);

std::string serialize(const Ensemble& ens);
Ensemble deserialize(std::string_view text);

}  // namespace fedtrees::gbdt
