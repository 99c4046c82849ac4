#include "fedtrees/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace fedtrees {

namespace {

constexpr std::int64_t kMinutesPerHour = 60;
constexpr std::int64_t kMinutesPerDay = 24 * 60;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

bool parse_int(std::string_view s, int& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

bool parse_double(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_on(std::string_view s, std::string_view delims) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || delims.find(s[i]) != std::string_view::npos) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

bool valid_civil(int y, int m, int d, int hh, int mm) {
  using namespace std::chrono;
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) return false;
  return year_month_day{year{y}, month{static_cast<unsigned>(m)},
                        day{static_cast<unsigned>(d)}}
      .ok();
}

double mean_of(double sum, int n) { return sum / static_cast<double>(n); }

}  // namespace

Timestamp make_timestamp(int year, int month, int day, int hour, int minute) {
  using namespace std::chrono;
  const sys_days days{std::chrono::year{year} / std::chrono::month{static_cast<unsigned>(month)} /
                      std::chrono::day{static_cast<unsigned>(day)}};
  return static_cast<Timestamp>(days.time_since_epoch().count()) * kMinutesPerDay +
         hour * kMinutesPerHour + minute;
}

CalendarFields calendar_fields(Timestamp ts) {
  using namespace std::chrono;
  const std::int64_t day_index = floor_div(ts, kMinutesPerDay);
  const std::int64_t minute_of_day = ts - day_index * kMinutesPerDay;
  const year_month_day ymd{sys_days{days{day_index}}};
  return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(static_cast<unsigned>(ymd.day())),
          static_cast<int>(minute_of_day / kMinutesPerHour),
          static_cast<int>(minute_of_day % kMinutesPerHour)};
}

Timestamp parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  const auto fail = [&]() -> Timestamp {
    throw DataError("unparseable timestamp '" + text + "'");
  };
  const auto space = text.find_first_of(" T");
  if (space == std::string::npos) fail();
  const std::string_view date{text.data(), space};
  const std::string_view time{text.data() + space + 1, text.size() - space - 1};

  int y = 0, m = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (date.find('/') != std::string_view::npos) {
    auto parts = split_on(date, "/");
    if (parts.size() != 3 || !parse_int(parts[0], m) || !parse_int(parts[1], d) ||
        !parse_int(parts[2], y))
      fail();
  } else {
    auto parts = split_on(date, "-");
    if (parts.size() != 3 || !parse_int(parts[0], y) || !parse_int(parts[1], m) ||
        !parse_int(parts[2], d))
      fail();
  }
  auto tparts = split_on(time, ":");
  if (tparts.size() < 2 || tparts.size() > 3 || !parse_int(tparts[0], hh) ||
      !parse_int(tparts[1], mm))
    fail();
  if (tparts.size() == 3) {
    // Fractional seconds are dropped; minute resolution is all we keep.
    auto sec = tparts[2].substr(0, tparts[2].find('.'));
    if (!parse_int(sec, ss) || ss < 0 || ss > 59) fail();
  }
  if (!valid_civil(y, m, d, hh, mm)) fail();
  return make_timestamp(y, m, d, hh, mm);
}

std::string format_timestamp(Timestamp ts) {
  const auto c = calendar_fields(ts);
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << c.year << '-' << std::setw(2) << c.month << '-'
     << std::setw(2) << c.day << ' ' << std::setw(2) << c.hour << ':' << std::setw(2)
     << c.minute;
  return os.str();
}

std::vector<RawRecord> parse_csv(std::istream& in, const ColumnMap& columns) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw DataError("empty file: no header row");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  const auto find = [&](const std::string& name) -> std::size_t {
    const auto want = trim(name);
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == want) return i;
    throw DataError("missing column '" + name + "'");
  };
  const std::size_t c_ts = find(columns.timestamp);
  const std::size_t c_temp = find(columns.temperature);
  const std::size_t c_hum = find(columns.humidity);
  const std::size_t c_wind = find(columns.wind_speed);
  const std::size_t c_gdf = find(columns.general_diffuse_flows);
  const std::size_t c_df = find(columns.diffuse_flows);
  if (columns.zones.empty()) throw DataError("column map names no zone columns");
  std::vector<std::size_t> c_zones;
  for (const auto& z : columns.zones) c_zones.push_back(find(z));

  std::vector<RawRecord> records;
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    const auto number = [&](std::size_t col) {
      double v = 0.0;
      if (!parse_double(fields[col], v))
        throw DataError("row " + std::to_string(row) + ", column '" + header[col] +
                        "': unparseable number '" + fields[col] + "'");
      return v;
    };
    RawRecord r;
    try {
      r.timestamp = parse_timestamp(fields[c_ts]);
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(row) + ", column '" + header[c_ts] +
                      "': " + e.what());
    }
    r.temperature = number(c_temp);
    r.humidity = number(c_hum);
    r.wind_speed = number(c_wind);
    r.general_diffuse_flows = number(c_gdf);
    r.diffuse_flows = number(c_df);
    for (auto c : c_zones) {
      const double p = number(c);
      if (p < 0.0)
        throw DataError("row " + std::to_string(row) + ", column '" + header[c] +
                        "': negative power");
      r.zone_power.push_back(p);
    }
    if (!records.empty() && r.timestamp <= records.back().timestamp)
      throw DataError("row " + std::to_string(row) + ": timestamps not strictly increasing");
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError("empty file: no data rows");
  return records;
}

std::vector<RawRecord> load_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_csv(in, columns);
}

void write_raw_csv(std::ostream& out, std::span<const RawRecord> records,
                   const ColumnMap& columns) {
  out << columns.timestamp << ',' << columns.temperature << ',' << columns.humidity << ','
      << columns.wind_speed << ',' << columns.general_diffuse_flows << ','
      << columns.diffuse_flows;
  for (const auto& z : columns.zones) out << ',' << z;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& r : records) {
    const auto c = calendar_fields(r.timestamp);
    out << c.month << '/' << c.day << '/' << c.year << ' ' << c.hour << ':' << std::setw(2)
        << std::setfill('0') << c.minute << std::setfill(' ');
    out << ',' << r.temperature << ',' << r.humidity << ',' << r.wind_speed << ','
        << r.general_diffuse_flows << ',' << r.diffuse_flows;
    for (double p : r.zone_power) out << ',' << p;
    out << '\n';
  }
}

std::vector<HourlyRecord> resample_hourly(std::span<const RawRecord> records) {
  if (records.empty()) throw DataError("resample_hourly: empty input");
  const std::size_t zones = records.front().zone_power.size();
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].timestamp <= records[i - 1].timestamp)
      throw DataError("resample_hourly: records not sorted by timestamp");

  std::vector<HourlyRecord> hours;
  for (std::size_t i = 0; i < records.size();) {
    const Timestamp hour_start = floor_div(records[i].timestamp, kMinutesPerHour) * kMinutesPerHour;
    if (!hours.empty() && hour_start != hours.back().timestamp + kMinutesPerHour)
      throw DataError("no readings for hour starting " +
                      format_timestamp(hours.back().timestamp + kMinutesPerHour));

    HourlyRecord h;
    h.timestamp = hour_start;
    h.zone_power.assign(zones, 0.0);
    int n = 0;
    for (; i < records.size() && records[i].timestamp < hour_start + kMinutesPerHour; ++i) {
      const auto& r = records[i];
      if (r.zone_power.size() != zones)
        throw DataError("resample_hourly: inconsistent zone count");
      h.temperature += r.temperature;
      h.humidity += r.humidity;
      h.wind_speed += r.wind_speed;
      h.general_diffuse_flows += r.general_diffuse_flows;
      h.diffuse_flows += r.diffuse_flows;
      for (std::size_t z = 0; z < zones; ++z) h.zone_power[z] += r.zone_power[z];
      ++n;
    }
    h.temperature = mean_of(h.temperature, n);
    h.humidity = mean_of(h.humidity, n);
    h.wind_speed = mean_of(h.wind_speed, n);
    h.general_diffuse_flows = mean_of(h.general_diffuse_flows, n);
    h.diffuse_flows = mean_of(h.diffuse_flows, n);
    for (auto& p : h.zone_power) p = mean_of(p, n);
    for (double p : h.zone_power) h.aggregate_power += p;
    h.source_rows = n;
    const auto c = calendar_fields(hour_start);
    h.month = c.month;
    h.day = c.day;
    h.hour = c.hour;
    hours.push_back(std::move(h));
  }

  // The first hour has no lag and is dropped.
  std::vector<HourlyRecord> out;
  out.reserve(hours.size() - 1);
  for (std::size_t i = 1; i < hours.size(); ++i) {
    HourlyRecord h = hours[i];
    h.prev_hour_agg = hours[i - 1].aggregate_power;
    h.prev_zone_power = hours[i - 1].zone_power;
    out.push_back(std::move(h));
  }
  return out;
}

const std::vector<std::string>& canonical_features() {
  static const std::vector<std::string> names = {
      "Month",    "Day",          "Hour",
      "Temperature", "Humidity",  "Wind speed",
      "Diffuse flow", "General diffuse flow", "PrevHourAgg"};
  return names;
}

SupervisedSet SupervisedSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_rows) throw DataError("slice out of range");
  SupervisedSet out;
  out.n_rows = end - begin;
  out.feature_names = feature_names;
  const std::size_t w = n_features();
  out.features.assign(features.begin() + static_cast<std::ptrdiff_t>(begin * w),
                      features.begin() + static_cast<std::ptrdiff_t>(end * w));
  out.target.assign(target.begin() + static_cast<std::ptrdiff_t>(begin),
                    target.begin() + static_cast<std::ptrdiff_t>(end));
  out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                        timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::size_t SupervisedSet::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i)
    if (feature_names[i] == name) return i;
  throw DataError("unknown feature '" + name + "'");
}

SupervisedSet SupervisedSet::select(std::span<const std::string> names) const {
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(column_index(n));
  SupervisedSet out;
  out.n_rows = n_rows;
  out.feature_names.assign(names.begin(), names.end());
  out.features.reserve(n_rows * cols.size());
  for (std::size_t r = 0; r < n_rows; ++r)
    for (auto c : cols) out.features.push_back(at(r, c));
  out.target = target;
  out.timestamps = timestamps;
  out.validate();
  return out;
}

void SupervisedSet::validate() const {
  if (features.size() != n_rows * n_features() || target.size() != n_rows ||
      timestamps.size() != n_rows)
    throw DataError("supervised set: field lengths disagree with row count");
  std::set<std::string> seen;
  for (const auto& n : feature_names)
    if (!seen.insert(n).second) throw DataError("supervised set: duplicate feature '" + n + "'");
  for (double v : features)
    if (!std::isfinite(v)) throw DataError("supervised set: non-finite feature value");
  for (double v : target)
    if (!std::isfinite(v)) throw DataError("supervised set: non-finite target value");
}

SupervisedSet concat(std::span<const SupervisedSet> parts) {
  SupervisedSet out;
  if (parts.empty()) return out;
  out.feature_names = parts.front().feature_names;
  for (const auto& p : parts) {
    if (p.feature_names != out.feature_names)
      throw DataError("concat: feature columns differ between parts");
    out.n_rows += p.n_rows;
    out.features.insert(out.features.end(), p.features.begin(), p.features.end());
    out.target.insert(out.target.end(), p.target.begin(), p.target.end());
    out.timestamps.insert(out.timestamps.end(), p.timestamps.begin(), p.timestamps.end());
  }
  return out;
}

SupervisedSet build_supervised(std::span<const HourlyRecord> hourly,
                               std::span<const std::string> feature_subset, TargetSpec target) {
  const auto& canon = canonical_features();
  std::vector<std::size_t> which;
  for (const auto& name : feature_subset) {
    auto it = std::find(canon.begin(), canon.end(), name);
    if (it == canon.end()) throw DataError("unknown feature '" + name + "'");
    which.push_back(static_cast<std::size_t>(it - canon.begin()));
  }

  SupervisedSet out;
  out.n_rows = hourly.size();
  out.feature_names.assign(feature_subset.begin(), feature_subset.end());
  out.features.reserve(hourly.size() * which.size());
  for (const auto& h : hourly) {
    if (!target.is_aggregate() &&
        (target.zone >= static_cast<int>(h.zone_power.size()) ||
         h.prev_zone_power.size() != h.zone_power.size()))
      throw DataError("target zone " + std::to_string(target.zone) + " not present");
    const double lag = target.is_aggregate() || target.aggregate_lag
                           ? h.prev_hour_agg
                           : h.prev_zone_power[static_cast<std::size_t>(target.zone)];
    const double values[] = {static_cast<double>(h.month), static_cast<double>(h.day),
                             static_cast<double>(h.hour), h.temperature, h.humidity,
                             h.wind_speed, h.diffuse_flows, h.general_diffuse_flows, lag};
    for (auto w : which) out.features.push_back(values[w]);
    out.target.push_back(target.is_aggregate()
                             ? h.aggregate_power
                             : h.zone_power[static_cast<std::size_t>(target.zone)]);
    out.timestamps.push_back(h.timestamp);
  }
  out.validate();
  return out;
}

ScalerParams fit_scaler(const SupervisedSet& set) {
  if (set.empty()) throw DataError("fit_scaler: empty set");
  ScalerParams p;
  p.feature_names = set.feature_names;
  p.features.resize(set.n_features());
  for (std::size_t c = 0; c < set.n_features(); ++c) {
    auto& range = p.features[c];
    range.min = range.max = set.at(0, c);
    for (std::size_t r = 1; r < set.n_rows; ++r) {
      range.min = std::min(range.min, set.at(r, c));
      range.max = std::max(range.max, set.at(r, c));
    }
  }
  const auto [lo, hi] = std::minmax_element(set.target.begin(), set.target.end());
  p.target = {*lo, *hi};
  return p;
}

namespace {
double scale_value(double x, const ColumnRange& r) {
  const double span = r.max - r.min;
  return span > 0.0 ? (x - r.min) / span : 0.0;
}
}  // namespace

SupervisedSet apply_scaler(const SupervisedSet& set, const ScalerParams& params) {
  if (params.feature_names != set.feature_names)
    throw DataError("apply_scaler: scaler columns do not match set columns");
  SupervisedSet out = set;
  const std::size_t w = set.n_features();
  for (std::size_t r = 0; r < set.n_rows; ++r)
    for (std::size_t c = 0; c < w; ++c)
      out.features[r * w + c] = scale_value(set.at(r, c), params.features[c]);
  for (auto& y : out.target) y = scale_value(y, params.target);
  return out;
}

double scale_target(double value, const ScalerParams& params) {
  return scale_value(value, params.target);
}

std::vector<double> inverse_target(std::span<const double> values, const ScalerParams& params) {
  const double span = params.target.max - params.target.min;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(params.target.min + v * span);
  return out;
}

SplitSizes split_sizes(std::size_t n_rows, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw DataError("split: train_fraction must lie in (0,1)");
  if (!(spec.validation_fraction_of_train >= 0.0 && spec.validation_fraction_of_train < 1.0))
    throw DataError("split: validation_fraction_of_train must lie in [0,1)");
  // The epsilon absorbs representation error such as 0.8 * 10 = 7.999...
  const auto floor_frac = [](std::size_t n, double f) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
  };
  const std::size_t trainval = floor_frac(n_rows, spec.train_fraction);
  SplitSizes s;
  s.validation = floor_frac(trainval, spec.validation_fraction_of_train);
  s.train = trainval - s.validation;
  s.test = n_rows - trainval;
  if (s.train == 0 || s.test == 0 ||
      (spec.validation_fraction_of_train > 0.0 && s.validation == 0))
    throw DataError("split: " + std::to_string(n_rows) +
                    " rows are too few for the requested fractions");
  return s;
}

SplitSets split(const SupervisedSet& set, const SplitSpec& spec) {
  const auto s = split_sizes(set.n_rows, spec);
  return {set.slice(0, s.train), set.slice(s.train, s.train + s.validation),
          set.slice(s.train + s.validation, set.n_rows)};
}

void write_supervised_csv(std::ostream& out, const SupervisedSet& set) {
  out << "timestamp";
  for (const auto& n : set.feature_names) out << ',' << n;
  out << ",target\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < set.n_rows; ++r) {
    out << format_timestamp(set.timestamps[r]);
    for (std::size_t c = 0; c < set.n_features(); ++c) out << ',' << set.at(r, c);
    out << ',' << set.target[r] << '\n';
  }
}

SupervisedSet read_supervised_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("prepared set: empty file");
  auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header.front()) != "timestamp" || trim(header.back()) != "target")
    throw DataError("prepared set: header must be 'timestamp,<features...>,target'");
  SupervisedSet set;
  for (std::size_t i = 1; i + 1 < header.size(); ++i) set.feature_names.push_back(trim(header[i]));
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw DataError("prepared set: row " + std::to_string(row) + " has wrong field count");
    set.timestamps.push_back(parse_timestamp(f[0]));
    for (std::size_t i = 1; i < f.size(); ++i) {
      double v = 0.0;
      if (!parse_double(f[i], v))
        throw DataError("prepared set: row " + std::to_string(row) + ", column '" +
                        trim(header[i]) + "': unparseable number");
      (i + 1 == f.size() ? set.target : set.features).push_back(v);
    }
    ++set.n_rows;
  }
  set.validate();
  return set;
}

}  // namespace fedtrees
