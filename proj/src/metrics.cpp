#include "fedtrees/metrics.hpp"

#include <cmath>
#include <string>

namespace fedtrees {

namespace {
void check_lengths(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.size() != y_hat.size())
    throw MetricError(std::string(what) + ": length mismatch (" + std::to_string(y.size()) +
                      " vs " + std::to_string(y_hat.size()) + ")");
  if (y.empty()) throw MetricError(std::string(what) + ": empty input");
}
}  // namespace

double mae(std::span<const double> y, std::span<const double> y_hat) {
  check_lengths(y, y_hat, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - y_hat[i]);
  return sum / static_cast<double>(y.size());
}

double mape(std::span<const double> y, std::span<const double> y_hat, double epsilon) {
  check_lengths(y, y_hat, "mape");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(std::abs(y[i]) > epsilon))
      throw MetricError("mape: actual value at index " + std::to_string(i) +
                        " is too close to zero");
    sum += std::abs((y[i] - y_hat[i]) / y[i]);
  }
  return 100.0 * sum / static_cast<double>(y.size());
}

EvalResult evaluate_scaled(std::span<const double> y_scaled, std::span<const double> pred_scaled,
                           const ScalerParams& scaler) {
  EvalResult r;
  r.mae = mae(y_scaled, pred_scaled);
  const auto y_raw = inverse_target(y_scaled, scaler);
  const auto p_raw = inverse_target(pred_scaled, scaler);
  r.mape = mape(y_raw, p_raw);
  r.n = y_scaled.size();
  return r;
}

EvalResult evaluate_scaled(std::span<const double> y_scaled, std::span<const double> pred_scaled,
                           std::span<const ScalerParams* const> row_scalers) {
  if (row_scalers.size() != y_scaled.size())
    throw MetricError("evaluate_scaled: one scaler per row required");
  EvalResult r;
  r.mae = mae(y_scaled, pred_scaled);
  std::vector<double> y_raw, p_raw;
  y_raw.reserve(y_scaled.size());
  p_raw.reserve(y_scaled.size());
  for (std::size_t i = 0; i < y_scaled.size(); ++i) {
    const double span = row_scalers[i]->target.max - row_scalers[i]->target.min;
    y_raw.push_back(row_scalers[i]->target.min + y_scaled[i] * span);
    p_raw.push_back(row_scalers[i]->target.min + pred_scaled[i] * span);
  }
  r.mape = mape(y_raw, p_raw);
  r.n = y_scaled.size();
  return r;
}

std::vector<double> persistence_predictions(std::span<const double> series) {
  if (series.size() < 2) throw MetricError("persistence: series needs at least 2 values");
  return {series.begin(), series.end() - 1};
}

EvalResult persistence_eval(std::span<const double> series_scaled, const ScalerParams& scaler) {
  const auto pred = persistence_predictions(series_scaled);
  return evaluate_scaled(series_scaled.subspan(1), pred, scaler);
}

}  // namespace fedtrees
