#include "fedtrees/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace fedtrees::synthetic {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double daily_shape(double hour) {
  // Low at night, morning shoulder, evening peak around 20:00.
  const double morning = std::exp(-0.5 * std::pow((hour - 11.0) / 3.0, 2.0));
  const double evening = std::exp(-0.5 * std::pow((hour - 20.5) / 2.2, 2.0));
  return 0.55 + 0.25 * morning + 0.45 * evening;
}
}  // namespace

std::vector<RawRecord> load_profile(const LoadProfileOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Timestamp start = make_timestamp(o.start_year, 1, 1, 0, 0);
  const int steps = o.days * 24 * 6;

  std::vector<double> zone_scale, zone_phase;
  for (int z = 0; z < o.zones; ++z) {
    zone_scale.push_back(32000.0 - 7000.0 * z);
    zone_phase.push_back(0.35 * z);
  }

  std::vector<RawRecord> out;
  out.reserve(static_cast<std::size_t>(steps));
  double temp_anomaly = 0.0, wind = 1.0;
  std::vector<double> load_ar(static_cast<std::size_t>(o.zones), 0.0);
  for (int s = 0; s < steps; ++s) {
    const double day = s / 144.0;
    const double hour = std::fmod(s / 6.0, 24.0);
    const double season = std::sin(kTwoPi * (day - 110.0) / 365.0);  // peaks late July
    const int weekday = (static_cast<int>(day) + 6) % 7;             // 2017-01-01 was a Sunday

    temp_anomaly = 0.995 * temp_anomaly + 0.08 * gauss(rng);
    const double temperature =
        18.0 + 7.5 * season + 4.0 * std::sin(kTwoPi * (hour - 9.0) / 24.0) + temp_anomaly;
    const double humidity = std::clamp(
        70.0 - 1.8 * (temperature - 18.0) + 4.0 * gauss(rng), 10.0, 100.0);
    wind = std::clamp(0.98 * wind + 0.02 * (1.0 + 3.5 * (season > 0.4)) + 0.05 * gauss(rng),
                      0.05, 6.0);

    const double sun = std::max(0.0, std::sin(kTwoPi * (hour - 6.0) / 24.0));
    const double clear = 0.75 + 0.25 * season;
    const double general_diffuse =
        std::max(0.0, 900.0 * clear * sun * sun + 15.0 * std::abs(gauss(rng)) * sun);
    const double diffuse = std::max(0.0, 0.25 * general_diffuse + 30.0 * sun + 5.0 * gauss(rng) * sun);

    RawRecord r;
    r.timestamp = start + static_cast<Timestamp>(s) * 10;
    r.temperature = temperature;
    r.humidity = humidity;
    r.wind_speed = wind;
    r.general_diffuse_flows = general_diffuse;
    r.diffuse_flows = diffuse;
    for (int z = 0; z < o.zones; ++z) {
      const double h = std::fmod(hour + zone_phase[static_cast<std::size_t>(z)] + 24.0, 24.0);
      const double weekly = weekday >= 5 ? 0.93 : 1.0;
      const double cooling = 0.012 * std::max(0.0, temperature - 20.0);
      const double annual = 1.0 + 0.08 * season;
      auto& ar = load_ar[static_cast<std::size_t>(z)];
      ar = 0.97 * ar + o.noise * 0.25 * gauss(rng);
      const double level = daily_shape(h) * weekly * annual * (1.0 + cooling) * (1.0 + ar);
      r.zone_power.push_back(
          std::max(1.0, zone_scale[static_cast<std::size_t>(z)] * level *
                            (1.0 + 0.5 * o.noise * gauss(rng))));
    }
    out.push_back(std::move(r));
  }
  return out;
}

SupervisedSet regression_set(std::size_t n_rows, std::size_t extra_noise_features,
                             double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  SupervisedSet s;
  s.n_rows = n_rows;
  s.feature_names = {"x0", "x1"};
  for (std::size_t k = 0; k < extra_noise_features; ++k)
    s.feature_names.push_back("noise" + std::to_string(k));
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double x0 = unif(rng), x1 = unif(rng);
    s.features.push_back(x0);
    s.features.push_back(x1);
    for (std::size_t k = 0; k < extra_noise_features; ++k) s.features.push_back(unif(rng));
    const double eps = noise_sd > 0.0 ? gauss(rng) : 0.0;
    s.target.push_back(std::sin(2.0 * x0) + x1 * x1 - 0.5 * x1 + eps);
    s.timestamps.push_back(static_cast<Timestamp>(r) * 60);
  }
  return s;
}

SupervisedSet random_set(std::size_t n_rows, std::size_t n_features, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> coef(n_features);
  for (auto& c : coef) c = 2.0 * unif(rng) - 1.0;
  SupervisedSet s;
  s.n_rows = n_rows;
  for (std::size_t f = 0; f < n_features; ++f) s.feature_names.push_back("f" + std::to_string(f));
  for (std::size_t r = 0; r < n_rows; ++r) {
    double y = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) {
      const double x = unif(rng);
      s.features.push_back(x);
      y += coef[f] * std::sin(3.0 * x + static_cast<double>(f));
    }
    s.target.push_back(y + 0.1 * unif(rng));
    s.timestamps.push_back(static_cast<Timestamp>(r) * 60);
  }
  return s;
}

}  // namespace fedtrees::synthetic
