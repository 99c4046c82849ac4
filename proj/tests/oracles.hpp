// Slow, direct reference implementations used to check the optimized code.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "fedtrees/dataset.hpp"
#include "fedtrees/mlp.hpp"

namespace oracle {

/// Equal-population cut points: the k-th cut sits after the run of equal
/// values that contains the floor(k n / B)-th smallest value.
inline std::vector<double> quantile_boundaries(const std::vector<double>& values, int max_bins) {
  std::map<double, std::size_t> counts;
  for (double v : values) ++counts[v];
  std::vector<double> out;
  if (counts.size() <= static_cast<std::size_t>(max_bins)) {
    for (auto it = counts.begin(); std::next(it) != counts.end(); ++it) {
      const double a = it->first, b = std::next(it)->first;
      out.push_back(a + (b - a) / 2.0);
    }
    return out;
  }
  const std::size_t n = values.size();
  for (int k = 1; k < max_bins; ++k) {
    const std::size_t c = static_cast<std::size_t>(k) * n / static_cast<std::size_t>(max_bins);
    if (c == 0) continue;
    std::size_t cum = 0;
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      cum += it->second;
      if (cum >= c) {
        if (std::next(it) != counts.end()) {
          const double a = it->first, b = std::next(it)->first;
          const double cut = a + (b - a) / 2.0;
          if (out.empty() || cut > out.back()) out.push_back(cut);
        }
        break;
      }
    }
  }
  return out;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Every admissible (feature, threshold) root split with its gain, best
/// first; ties keep (feature, threshold) order. Empty when nothing beats the
/// acceptance threshold.
inline std::vector<Split> enumerate_splits(const fedtrees::SupervisedSet& s,
                                           const std::vector<double>& g,
                                           const std::vector<double>& h, int min_data,
                                           double lambda) {
  double G = 0.0, H = 0.0;
  for (std::size_t i = 0; i < s.n_rows; ++i) {
    G += g[i];
    H += h[i];
  }
  const double parent = G * G / (H + lambda);
  std::vector<Split> out;
  for (std::size_t f = 0; f < s.n_features(); ++f) {
    std::vector<double> col;
    for (std::size_t i = 0; i < s.n_rows; ++i) col.push_back(s.at(i, f));
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    for (std::size_t j = 0; j + 1 < col.size(); ++j) {
      const double thr = col[j] + (col[j + 1] - col[j]) / 2.0;
      double gl = 0.0, hl = 0.0;
      int nl = 0;
      for (std::size_t i = 0; i < s.n_rows; ++i)
        if (s.at(i, f) <= thr) {
          gl += g[i];
          hl += h[i];
          ++nl;
        }
      const int nr = static_cast<int>(s.n_rows) - nl;
      if (nl < min_data || nr < min_data) continue;
      const double gr = G - gl, hr = H - hl;
      const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
      out.push_back({static_cast<int>(f), thr, gain});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Split& a, const Split& b) { return a.gain > b.gain; });
  if (out.empty() || !(out.front().gain > 1e-12 * (1.0 + std::abs(parent)))) return {};
  return out;
}

/// Leading candidates whose gains agree with the best up to rounding.
inline std::vector<Split> near_ties(const std::vector<Split>& sorted) {
  std::vector<Split> out;
  for (const auto& c : sorted)
    if (std::abs(c.gain - sorted.front().gain) <= 1e-9 * (1.0 + std::abs(sorted.front().gain)))
      out.push_back(c);
  return out;
}

struct StopOutcome {
  int stop_round = 0;  // 0 when the sequence ends first
  int best_round = 0;
};

/// Patience rule: improvement means best - score > delta; `window`
/// consecutive misses stop the run.
inline StopOutcome reference_stopper(const std::vector<double>& scores, double delta, int window) {
  double best = std::numeric_limits<double>::infinity();
  int best_round = 0, stall = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int round = static_cast<int>(i) + 1;
    if (best - scores[i] > delta) best = scores[i], best_round = round, stall = 0;
    else ++stall;
    if (stall == window) return {round, best_round};
  }
  return {0, best_round};
}

/// Largest relative gap between backward() and central differences of the
/// loss, with gaps below `floor` in magnitude measured absolutely.
inline double fd_max_rel_error(const fedtrees::mlp::FlatParams& params,
                               const fedtrees::mlp::MlpArch& arch,
                               const fedtrees::SupervisedSet& batch, double step = 1e-5,
                               double floor = 1e-6) {
  const auto grad = fedtrees::mlp::backward(params, arch, batch);
  double worst = 0.0;
  auto p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = fedtrees::mlp::loss(p, arch, batch);
    p[i] = orig - step;
    const double down = fedtrees::mlp::loss(p, arch, batch);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(numeric), std::abs(grad[i]), floor});
    worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
