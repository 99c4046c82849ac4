#pragma once

#include <cstdint>
#include <vector>

#include "fedtrees/dataset.hpp"

namespace fedtrees::synthetic {

struct LoadProfileOptions {
  int days = 365;
  int zones = 3;
  int start_year = 2017;
  double noise = 0.02;  // relative std-dev of the per-reading load noise
  std::uint64_t seed = 7;
};

/// Ten-minute readings shaped like a city substation feed: daily and weekly
/// load cycles, an annual temperature swing that drives cooling load, solar
/// diffuse flows, and per-zone scales and phase offsets.
std::vector<RawRecord> load_profile(const LoadProfileOptions& options);

/// y = sin(2 x0) + x1^2 - 0.5 x1 + noise, with `extra_noise_features`
/// uniform columns that carry no signal. Column names: x0, x1, noise0, ...
SupervisedSet regression_set(std::size_t n_rows, std::size_t extra_noise_features,
                             double noise_sd, std::uint64_t seed);

/// Uniform random features in [0,1) and a random smooth target; used by
/// property tests that need many small unstructured instances.
SupervisedSet random_set(std::size_t n_rows, std::size_t n_features, std::uint64_t seed);

}  // namespace fedtrees::synthetic
