#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "fedtrees/dataset.hpp"

namespace fedtrees {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalResult {
  double mae = 0.0;   // scaled-target units
  double mape = 0.0;  // percent, raw-target units
  std::size_t n = 0;
};

double mae(std::span<const double> y, std::span<const double> y_hat);

/// Percent. Throws MetricError naming the index of any |y_i| <= epsilon.
double mape(std::span<const double> y, std::span<const double> y_hat, double epsilon = 1e-6);

/// MAE on the scaled values; MAPE after mapping both vectors back to raw units.
EvalResult evaluate_scaled(std::span<const double> y_scaled, std::span<const double> pred_scaled,
                           const ScalerParams& scaler);

/// Same, but each row carries its own scaler (pooled multi-zone evaluation).
EvalResult evaluate_scaled(std::span<const double> y_scaled, std::span<const double> pred_scaled,
                           std::span<const ScalerParams* const> row_scalers);

/// One-step lag of `series`: element i predicts series[i + 1].
std::vector<double> persistence_predictions(std::span<const double> series);

/// `series[0]` seeds the first prediction (the last actual before the test
/// slice); metrics cover series[1..].
EvalResult persistence_eval(std::span<const double> series_scaled, const ScalerParams& scaler);

}  // namespace fedtrees
