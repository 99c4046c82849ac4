#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedtrees/dataset.hpp"
#include "fedtrees/synthetic.hpp"

using namespace fedtrees;

namespace {

const char* kHeader =
    "DateTime,Temperature,Humidity,Wind Speed,general diffuse flows,diffuse flows,"
    "Zone 1 Power Consumption,Zone 2  Power Consumption,Zone 3  Power Consumption\n";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string error_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_csv(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

// Six readings per hour with zone values given per reading.
std::vector<RawRecord> hours_of(int n_hours, double zone1 = 100.0) {
  std::vector<RawRecord> out;
  for (int h = 0; h < n_hours; ++h)
    for (int m = 0; m < 60; m += 10) {
      RawRecord r;
      r.timestamp = make_timestamp(2017, 1, 1, h, m);
      r.temperature = 10.0 + h;
      r.humidity = 50.0;
      r.wind_speed = 1.0;
      r.general_diffuse_flows = 0.1 * m;
      r.diffuse_flows = 0.05 * m;
      r.zone_power = {zone1 + h, 2.0 * zone1, 3.0};
      out.push_back(r);
    }
  return out;
}

}  // namespace

TEST_CASE("timestamps parse in both accepted layouts") {
  CHECK(parse_timestamp("1/1/2017 0:00") == make_timestamp(2017, 1, 1, 0, 0));
  CHECK(parse_timestamp("12/30/2017 23:50") == make_timestamp(2017, 12, 30, 23, 50));
  CHECK(parse_timestamp("2017-03-04 05:10") == make_timestamp(2017, 3, 4, 5, 10));
  CHECK(parse_timestamp("2017-03-04T05:10:00") == make_timestamp(2017, 3, 4, 5, 10));
  CHECK(format_timestamp(make_timestamp(2017, 3, 4, 5, 10)) == "2017-03-04 05:10");
  CHECK_THROWS_AS(parse_timestamp("2017-13-01 00:00"), DataError);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), DataError);

  const auto c = calendar_fields(make_timestamp(2016, 2, 29, 13, 40));
  CHECK(c.year == 2016);
  CHECK(c.month == 2);
  CHECK(c.day == 29);
  CHECK(c.hour == 13);
  CHECK(c.minute == 40);
}

TEST_CASE("load_csv keeps rows in file order") {
  std::istringstream in(std::string(kHeader) +
                        "1/1/2017 0:00,6.559,73.8,0.083,0.051,0.119,34055.69,16128.87,20240.96\n"
                        "1/1/2017 0:10,6.414,74.5,0.083,0.07,0.085,29814.68,19375.07,20131.08\n"
                        "1/1/2017 0:20,6.313,74.5,0.08,0.062,0.1,29128.10,19006.68,19668.43\n");
  const auto recs = parse_csv(in);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].temperature == doctest::Approx(6.559));
  CHECK(recs[1].zone_power[1] == doctest::Approx(19375.07));
  CHECK(recs[2].timestamp == make_timestamp(2017, 1, 1, 0, 20));
}

TEST_CASE("load_csv errors name the offending column or row") {
  const std::string no_humidity =
      "DateTime,Temperature,Wind Speed,general diffuse flows,diffuse flows,"
      "Zone 1 Power Consumption,Zone 2  Power Consumption,Zone 3  Power Consumption\n"
      "1/1/2017 0:00,6.5,0.08,0.05,0.1,1,2,3\n";
  const auto e1 = error_of(no_humidity);
  CHECK(lower(e1).find("missing column") != std::string::npos);
  CHECK(lower(e1).find("humidity") != std::string::npos);

  const auto e2 = error_of(std::string(kHeader) + "1/1/2017 0:00,abc,73.8,0.08,0.05,0.1,1,2,3\n");
  CHECK(e2.find("row 2") != std::string::npos);
  CHECK(e2.find("Temperature") != std::string::npos);

  const auto e3 = error_of(std::string(kHeader) + "soon,6.5,73.8,0.08,0.05,0.1,1,2,3\n");
  CHECK(e3.find("DateTime") != std::string::npos);

  CHECK(lower(error_of("")).find("empty") != std::string::npos);
  CHECK(lower(error_of(kHeader)).find("empty") != std::string::npos);

  const auto e4 = error_of(std::string(kHeader) + "1/1/2017 0:10,6,7,0,0,0,1,2,3\n" +
                           "1/1/2017 0:00,6,7,0,0,0,1,2,3\n");
  CHECK(e4.find("increasing") != std::string::npos);
}

TEST_CASE("write_raw_csv round-trips through parse_csv") {
  const auto recs = synthetic::load_profile({.days = 2, .zones = 3, .seed = 3});
  std::stringstream ss;
  write_raw_csv(ss, recs);
  const auto back = parse_csv(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); i += 37) {
    CHECK(back[i].timestamp == recs[i].timestamp);
    CHECK(back[i].humidity == recs[i].humidity);
    CHECK(back[i].zone_power == recs[i].zone_power);
  }
}

TEST_CASE("resample_hourly averages each hour and drops the first") {
  SUBCASE("constant hour") {
    auto recs = hours_of(2);
    for (auto& r : recs) r.zone_power[0] = 100.0;
    const auto h = resample_hourly(recs);
    REQUIRE(h.size() == 1);
    CHECK(h[0].zone_power[0] == 100.0);
  }
  SUBCASE("hand mean 10..60") {
    auto recs = hours_of(2);
    for (int i = 0; i < 6; ++i) recs[6 + static_cast<std::size_t>(i)].zone_power[0] = 10.0 * (i + 1);
    const auto h = resample_hourly(recs);
    REQUIRE(h.size() == 1);
    CHECK(h[0].zone_power[0] == doctest::Approx(35.0));
    CHECK(h[0].hour == 1);
    CHECK(h[0].source_rows == 6);
  }
  SUBCASE("lag, aggregate and calendar fields") {
    const auto h = resample_hourly(hours_of(5));
    REQUIRE(h.size() == 4);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double sum = std::accumulate(h[i].zone_power.begin(), h[i].zone_power.end(), 0.0);
      CHECK(h[i].aggregate_power == doctest::Approx(sum).epsilon(1e-9));
      if (i > 0) {
        CHECK(h[i].prev_hour_agg == h[i - 1].aggregate_power);
        CHECK(h[i].prev_zone_power == h[i - 1].zone_power);
      }
      CHECK(h[i].month == 1);
      CHECK(h[i].day == 1);
      CHECK(h[i].hour == static_cast<int>(i) + 1);
    }
    // Hour 0 is dropped but still feeds the lag of hour 1.
    CHECK(h[0].prev_zone_power[0] == doctest::Approx(100.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(resample_hourly(std::vector<RawRecord>{}), DataError);
    auto recs = hours_of(3);
    recs.erase(recs.begin() + 6, recs.begin() + 12);  // hour 1 missing entirely
    CHECK_THROWS_WITH_AS(resample_hourly(recs), doctest::Contains("no readings"), DataError);
  }
}

TEST_CASE("resampling conserves the row count") {
  auto recs = synthetic::load_profile({.days = 3, .zones = 3, .seed = 11});
  // Knock out a few readings; partial hours still aggregate.
  recs.erase(recs.begin() + 100);
  recs.erase(recs.begin() + 200);
  const auto h = resample_hourly(recs);
  int counted = 0;
  for (const auto& r : h) counted += r.source_rows;
  CHECK(counted == static_cast<int>(recs.size()) - 6);
}

TEST_CASE("build_supervised column layout") {
  const auto h = resample_hourly(hours_of(6));
  const auto& all = canonical_features();
  const auto s = build_supervised(h, all);
  CHECK(s.n_features() == 9);
  CHECK(s.feature_names == all);
  CHECK(all == std::vector<std::string>{"Month", "Day", "Hour", "Temperature", "Humidity",
                                        "Wind speed", "Diffuse flow", "General diffuse flow",
                                        "PrevHourAgg"});
  CHECK(s.n_rows == h.size());
  for (std::size_t i = 0; i < s.n_rows; ++i) {
    CHECK(s.target[i] == h[i].aggregate_power);
    CHECK(s.at(i, 8) == h[i].prev_hour_agg);
    CHECK(s.at(i, 2) == h[i].hour);
  }

  const std::vector<std::string> four{"Hour", "PrevHourAgg", "General diffuse flow", "Month"};
  const auto s4 = build_supervised(h, four);
  CHECK(s4.feature_names == four);
  CHECK(s4.at(1, 3) == h[1].month);

  const std::vector<std::string> one{"Hour"};
  CHECK(build_supervised(h, one).n_features() == 1);

  const std::vector<std::string> bad{"Hour", "Pressure"};
  CHECK_THROWS_AS(build_supervised(h, bad), DataError);
}

TEST_CASE("zone targets use the zone's own lag unless asked otherwise") {
  const auto h = resample_hourly(hours_of(6));
  const std::vector<std::string> f{"Hour", "PrevHourAgg"};
  const auto z = build_supervised(h, f, TargetSpec::for_zone(1));
  const auto za = build_supervised(h, f, TargetSpec::for_zone(1, true));
  for (std::size_t i = 0; i < z.n_rows; ++i) {
    CHECK(z.target[i] == h[i].zone_power[1]);
    CHECK(z.at(i, 1) == h[i].prev_zone_power[1]);
    CHECK(za.at(i, 1) == h[i].prev_hour_agg);
  }
  CHECK_THROWS_AS(build_supervised(h, f, TargetSpec::for_zone(7)), DataError);
}

TEST_CASE("build_supervised is deterministic") {
  const auto h = resample_hourly(synthetic::load_profile({.days = 4, .seed = 5}));
  const auto a = build_supervised(h, canonical_features());
  const auto b = build_supervised(h, canonical_features());
  CHECK(a.features == b.features);
  CHECK(a.target == b.target);
}

TEST_CASE("min-max scaler") {
  SupervisedSet s;
  s.n_rows = 3;
  s.feature_names = {"a", "b"};
  s.features = {0, 7, 5, 7, 10, 7};
  s.target = {0, 5, 10};
  s.timestamps = {0, 60, 120};
  const auto p = fit_scaler(s);
  CHECK(p.features[0].min == 0.0);
  CHECK(p.features[0].max == 10.0);
  CHECK(p.features[1].min == 7.0);
  CHECK(p.features[1].max == 7.0);

  const auto scaled = apply_scaler(s, p);
  CHECK(scaled.features == std::vector<double>{0, 0, 0.5, 0, 1, 0});
  CHECK(scaled.target == std::vector<double>{0, 0.5, 1});

  CHECK(scale_target(12.0, p) == doctest::Approx(1.2));
  const std::vector<double> half{0.5};
  CHECK(inverse_target(half, p)[0] == 5.0);

  SupervisedSet other = s;
  other.feature_names = {"a", "c"};
  CHECK_THROWS_AS(apply_scaler(other, p), DataError);
  CHECK_THROWS_AS(fit_scaler(SupervisedSet{}), DataError);
}

TEST_CASE("scaling round trip on random data") {
  const auto s = synthetic::random_set(200, 4, 9);
  const auto p = fit_scaler(s);
  const auto scaled = apply_scaler(s, p);
  const auto back = inverse_target(scaled.target, p);
  for (std::size_t i = 0; i < s.n_rows; ++i)
    CHECK(back[i] == doctest::Approx(s.target[i]).epsilon(1e-9));
  for (double v : scaled.features) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("chronological split sizes") {
  auto sz = split_sizes(100, {0.8, 0.2});
  CHECK(sz.train == 64);
  CHECK(sz.validation == 16);
  CHECK(sz.test == 20);

  sz = split_sizes(100, {0.8, 0.0});
  CHECK(sz.train == 80);
  CHECK(sz.validation == 0);
  CHECK(sz.test == 20);

  sz = split_sizes(10, {0.8, 0.0});
  CHECK(sz.train == 8);
  CHECK(sz.test == 2);

  CHECK_THROWS_AS(split_sizes(100, {1.0, 0.2}), DataError);
  CHECK_THROWS_AS(split_sizes(100, {0.8, 1.0}), DataError);
  CHECK_THROWS_AS(split_sizes(2, {0.8, 0.2}), DataError);
}

TEST_CASE("split slices are ordered and disjoint") {
  const auto h = resample_hourly(synthetic::load_profile({.days = 10, .seed = 2}));
  const auto s = build_supervised(h, canonical_features());
  const auto parts = split(s, {0.8, 0.2});
  CHECK(parts.train.n_rows + parts.validation.n_rows + parts.test.n_rows == s.n_rows);
  CHECK(parts.train.timestamps.back() < parts.validation.timestamps.front());
  CHECK(parts.validation.timestamps.back() < parts.test.timestamps.front());
  CHECK(parts.test.timestamps.back() == s.timestamps.back());
  CHECK(parts.train.target.front() == s.target.front());
}

TEST_CASE("SupervisedSet helpers") {
  const auto s = synthetic::regression_set(10, 2, 0.0, 1);
  CHECK_NOTHROW(s.validate());
  const std::vector<std::string> cols{"noise1", "x0"};
  const auto sel = s.select(cols);
  CHECK(sel.at(3, 1) == s.at(3, 0));
  CHECK(sel.at(3, 0) == s.at(3, 3));
  CHECK(s.slice(2, 5).n_rows == 3);
  CHECK_THROWS_AS(s.slice(5, 11), DataError);

  const std::vector<SupervisedSet> parts{s.slice(0, 4), s.slice(4, 10)};
  const auto joined = concat(parts);
  CHECK(joined.features == s.features);

  auto broken = s;
  broken.features[4] = std::nan("");
  CHECK_THROWS_AS(broken.validate(), DataError);
  broken = s;
  broken.feature_names[1] = "x0";
  CHECK_THROWS_AS(broken.validate(), DataError);
}

TEST_CASE("prepared-set cache round trip") {
  const auto h = resample_hourly(synthetic::load_profile({.days = 2, .seed = 4}));
  const auto s = build_supervised(h, canonical_features());
  std::stringstream ss;
  write_supervised_csv(ss, s);
  const auto back = read_supervised_csv(ss);
  CHECK(back.feature_names == s.feature_names);
  CHECK(back.features == s.features);
  CHECK(back.target == s.target);
  CHECK(back.timestamps == s.timestamps);
}
