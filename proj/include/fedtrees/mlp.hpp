#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedtrees/dataset.hpp"

namespace fedtrees::mlp {

/// Dense regressor: ReLU hidden layers, identity output, MSE loss.
struct MlpArch {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden = {64};

  void validate() const;
  /// Layer widths including input and the single output unit.
  std::vector<std::size_t> widths() const;
  std::size_t param_count() const;
};

/// All weights and biases; per layer a row-major [fan_out x fan_in] weight
/// block followed by fan_out biases.
using FlatParams = std::vector<double>;

enum class Optimizer { sgd, adam };

struct SgdConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 30;
  std::size_t epochs = 5;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  /// Zero learning rate is allowed (a no-op update); negative is not.
  void validate() const;
};

struct LayerView {
  std::span<const double> weights;  // [fan_out x fan_in]
  std::span<const double> biases;
  std::size_t fan_in;
  std::size_t fan_out;
};

/// Splits a flat vector into per-layer views (the inverse of flattening).
std::vector<LayerView> unflatten(std::span<const double> params, const MlpArch& arch);
FlatParams flatten(std::span<const LayerView> layers);

/// Glorot-uniform weights, zero biases.
FlatParams init(const MlpArch& arch, std::uint64_t seed);

std::vector<double> forward(std::span<const double> params, const MlpArch& arch,
                            const SupervisedSet& rows);
double forward_row(std::span<const double> params, const MlpArch& arch,
                   std::span<const double> row);

/// Mean squared error over `rows` (or the subset `indices`).
double loss(std::span<const double> params, const MlpArch& arch, const SupervisedSet& rows);

/// Gradient of the mean squared error over the rows named by `indices`.
FlatParams backward(std::span<const double> params, const MlpArch& arch,
                    const SupervisedSet& rows, std::span<const std::size_t> indices);
FlatParams backward(std::span<const double> params, const MlpArch& arch,
                    const SupervisedSet& batch);

/// E epochs of shuffled minibatch updates; Adam state starts fresh each call.
FlatParams client_update(std::span<const double> params, const MlpArch& arch,
                         const SgdConfig& cfg, const SupervisedSet& local_train);

}  // namespace fedtrees::mlp
