#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedtrees {

/// Raised for malformed or inconsistent input data (CSV content, column
/// mismatches, degenerate splits).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Naive local time, minutes since 1970-01-01 00:00.
using Timestamp = std::int64_t;

Timestamp make_timestamp(int year, int month, int day, int hour, int minute);

/// Accepts `M/D/YYYY H:MM` and ISO-8601 (`YYYY-MM-DD HH:MM[:SS]`, `T` separator allowed).
Timestamp parse_timestamp(const std::string& text);

/// Always ISO-8601 `YYYY-MM-DD HH:MM`.
std::string format_timestamp(Timestamp ts);

struct CalendarFields {
  int year;
  int month;
  int day;
  int hour;
  int minute;
};
CalendarFields calendar_fields(Timestamp ts);

struct RawRecord {
  Timestamp timestamp = 0;
  double temperature = 0.0;
  double humidity = 0.0;
  double wind_speed = 0.0;
  double general_diffuse_flows = 0.0;
  double diffuse_flows = 0.0;
  std::vector<double> zone_power;
};

struct HourlyRecord {
  Timestamp timestamp = 0;  // start of the hour
  double temperature = 0.0;
  double humidity = 0.0;
  double wind_speed = 0.0;
  double general_diffuse_flows = 0.0;
  double diffuse_flows = 0.0;
  std::vector<double> zone_power;       // hourly mean per zone
  std::vector<double> prev_zone_power;  // previous hour's zone_power
  double aggregate_power = 0.0;
  double prev_hour_agg = 0.0;
  int month = 1;
  int day = 1;
  int hour = 0;
  int source_rows = 0;  // ten-minute rows that contributed
};

/// Maps logical fields onto CSV header names. Defaults match the public
/// Tetouan power consumption file (note the double spaces in zones 2 and 3).
struct ColumnMap {
  std::string timestamp = "DateTime";
  std::string temperature = "Temperature";
  std::string humidity = "Humidity";
  std::string wind_speed = "Wind Speed";
  std::string general_diffuse_flows = "general diffuse flows";
  std::string diffuse_flows = "diffuse flows";
  std::vector<std::string> zones = {"Zone 1 Power Consumption",
                                    "Zone 2  Power Consumption",
                                    "Zone 3  Power Consumption"};
};

std::vector<RawRecord> load_csv(const std::filesystem::path& path,
                                const ColumnMap& columns = {});
std::vector<RawRecord> parse_csv(std::istream& in, const ColumnMap& columns = {});
void write_raw_csv(std::ostream& out, std::span<const RawRecord> records,
                   const ColumnMap& columns = {});

std::vector<HourlyRecord> resample_hourly(std::span<const RawRecord> records);

/// Canonical feature names in their reference order.
const std::vector<std::string>& canonical_features();

struct TargetSpec {
  /// Negative selects the aggregate over all zones; otherwise a zone index.
  int zone = -1;
  /// Zone targets only: lag column holds the all-zone aggregate instead of the zone's own value.
  bool aggregate_lag = false;

  static TargetSpec aggregate() { return {}; }
  static TargetSpec for_zone(int k, bool aggregate_lag = false) {
    return TargetSpec{k, aggregate_lag};
  }
  bool is_aggregate() const { return zone < 0; }
};

struct SupervisedSet {
  std::size_t n_rows = 0;
  std::vector<std::string> feature_names;
  std::vector<double> features;  // row-major [n_rows x n_features]
  std::vector<double> target;
  std::vector<Timestamp> timestamps;

  std::size_t n_features() const { return feature_names.size(); }
  double at(std::size_t row, std::size_t col) const {
    return features[row * n_features() + col];
  }
  std::span<const double> row(std::size_t r) const {
    return {features.data() + r * n_features(), n_features()};
  }
  bool empty() const { return n_rows == 0; }

  /// Rows [begin, end).
  SupervisedSet slice(std::size_t begin, std::size_t end) const;
  /// Keeps the named columns in the given order.
  SupervisedSet select(std::span<const std::string> names) const;
  std::size_t column_index(const std::string& name) const;

  /// Throws DataError when shapes disagree, a value is not finite, or names repeat.
  void validate() const;
};

SupervisedSet concat(std::span<const SupervisedSet> parts);

/// Row i predicts hour i's consumption; `PrevHourAgg` carries hour i-1.
/// For a zone target the lag column is that zone's previous-hour value.
SupervisedSet build_supervised(std::span<const HourlyRecord> hourly,
                               std::span<const std::string> feature_subset,
                               TargetSpec target = TargetSpec::aggregate());

struct ColumnRange {
  double min = 0.0;
  double max = 0.0;
};

struct ScalerParams {
  std::vector<std::string> feature_names;
  std::vector<ColumnRange> features;
  ColumnRange target;
};

ScalerParams fit_scaler(const SupervisedSet& set);
SupervisedSet apply_scaler(const SupervisedSet& set, const ScalerParams& params);
double scale_target(double value, const ScalerParams& params);
std::vector<double> inverse_target(std::span<const double> values,
                                   const ScalerParams& params);

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction_of_train = 0.2;
};

struct SplitSets {
  SupervisedSet train;
  SupervisedSet validation;
  SupervisedSet test;
};

/// Chronological contiguous slices; validation is the tail of the train slice.
SplitSets split(const SupervisedSet& set, const SplitSpec& spec);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};
SplitSizes split_sizes(std::size_t n_rows, const SplitSpec& spec);

/// Prepared-set cache: canonical feature columns, target and timestamp.
void write_supervised_csv(std::ostream& out, const SupervisedSet& set);
SupervisedSet read_supervised_csv(std::istream& in);

}  // namespace fedtrees
