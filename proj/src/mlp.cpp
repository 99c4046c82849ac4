#include "fedtrees/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fedtrees::mlp {

void MlpArch::validate() const {
  if (input_dim < 1) throw std::invalid_argument("mlp: input_dim must be >= 1");
  for (auto h : hidden)
    if (h < 1) throw std::invalid_argument("mlp: hidden layer sizes must be >= 1");
}

std::vector<std::size_t> MlpArch::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

std::size_t MlpArch::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l] * w[l + 1] + w[l + 1];
  return n;
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("sgd: learning_rate must be finite and >= 0");
  if (batch_size < 1) throw std::invalid_argument("sgd: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("sgd: epochs must be >= 1");
}

std::vector<LayerView> unflatten(std::span<const double> params, const MlpArch& arch) {
  arch.validate();
  if (params.size() != arch.param_count())
    throw std::invalid_argument("mlp: parameter vector has " + std::to_string(params.size()) +
                                " entries, architecture needs " +
                                std::to_string(arch.param_count()));
  const auto w = arch.widths();
  std::vector<LayerView> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::size_t fi = w[l], fo = w[l + 1];
    layers.push_back({params.subspan(off, fi * fo), params.subspan(off + fi * fo, fo), fi, fo});
    off += fi * fo + fo;
  }
  return layers;
}

FlatParams flatten(std::span<const LayerView> layers) {
  FlatParams out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.biases.begin(), l.biases.end());
  }
  return out;
}

FlatParams init(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  const auto w = arch.widths();
  FlatParams p;
  p.reserve(arch.param_count());
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < w[l] * w[l + 1]; ++i) p.push_back(dist(rng));
    p.insert(p.end(), w[l + 1], 0.0);
  }
  return p;
}

namespace {

/// Activations of every layer for one row; acts[0] is the input.
void forward_pass(const std::vector<LayerView>& layers, std::span<const double> x,
                  std::vector<std::vector<double>>& acts) {
  acts.resize(layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    auto& out = acts[l + 1];
    out.assign(L.fan_out, 0.0);
    const auto& in = acts[l];
    const bool hidden = l + 1 < layers.size();
    for (std::size_t o = 0; o < L.fan_out; ++o) {
      double s = L.biases[o];
      const double* wrow = L.weights.data() + o * L.fan_in;
      for (std::size_t i = 0; i < L.fan_in; ++i) s += wrow[i] * in[i];
      out[o] = hidden ? std::max(0.0, s) : s;
    }
  }
}

void check_width(const MlpArch& arch, std::size_t width) {
  if (width != arch.input_dim)
    throw std::invalid_argument("mlp: row width " + std::to_string(width) +
                                " does not match input_dim " + std::to_string(arch.input_dim));
}

}  // namespace

double forward_row(std::span<const double> params, const MlpArch& arch,
                   std::span<const double> row) {
  check_width(arch, row.size());
  const auto layers = unflatten(params, arch);
  std::vector<std::vector<double>> acts;
  forward_pass(layers, row, acts);
  return acts.back()[0];
}

std::vector<double> forward(std::span<const double> params, const MlpArch& arch,
                            const SupervisedSet& rows) {
  check_width(arch, rows.n_features());
  const auto layers = unflatten(params, arch);
  std::vector<std::vector<double>> acts;
  std::vector<double> out(rows.n_rows);
  for (std::size_t r = 0; r < rows.n_rows; ++r) {
    forward_pass(layers, rows.row(r), acts);
    out[r] = acts.back()[0];
  }
  return out;
}

double loss(std::span<const double> params, const MlpArch& arch, const SupervisedSet& rows) {
  if (rows.empty()) throw std::invalid_argument("mlp: loss over empty set");
  const auto pred = forward(params, arch, rows);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - rows.target[i];
    s += e * e;
  }
  return s / static_cast<double>(pred.size());
}

FlatParams backward(std::span<const double> params, const MlpArch& arch,
                    const SupervisedSet& rows, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("mlp: backward on empty batch");
  check_width(arch, rows.n_features());
  const auto layers = unflatten(params, arch);

  FlatParams grad(params.size(), 0.0);
  std::vector<std::size_t> offsets;
  {
    std::size_t off = 0;
    for (const auto& L : layers) {
      offsets.push_back(off);
      off += L.fan_in * L.fan_out + L.fan_out;
    }
  }

  const double scale = 2.0 / static_cast<double>(indices.size());
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, prev_delta;
  for (auto r : indices) {
    forward_pass(layers, rows.row(r), acts);
    delta.assign(1, scale * (acts.back()[0] - rows.target[r]));
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& L = layers[l];
      const auto& in = acts[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + L.fan_in * L.fan_out;
      for (std::size_t o = 0; o < L.fan_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* gwrow = gw + o * L.fan_in;
        for (std::size_t i = 0; i < L.fan_in; ++i) gwrow[i] += d * in[i];
      }
      if (l == 0) break;
      prev_delta.assign(L.fan_in, 0.0);
      for (std::size_t o = 0; o < L.fan_out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* wrow = L.weights.data() + o * L.fan_in;
        for (std::size_t i = 0; i < L.fan_in; ++i) prev_delta[i] += d * wrow[i];
      }
      // ReLU derivative, taken as 0 at the kink.
      for (std::size_t i = 0; i < L.fan_in; ++i)
        if (!(in[i] > 0.0)) prev_delta[i] = 0.0;
      std::swap(delta, prev_delta);
    }
  }
  return grad;
}

FlatParams backward(std::span<const double> params, const MlpArch& arch,
                    const SupervisedSet& batch) {
  std::vector<std::size_t> idx(batch.n_rows);
  std::iota(idx.begin(), idx.end(), 0U);
  return backward(params, arch, batch, idx);
}

FlatParams client_update(std::span<const double> params, const MlpArch& arch,
                         const SgdConfig& cfg, const SupervisedSet& local_train) {
  cfg.validate();
  if (local_train.empty()) throw std::invalid_argument("client_update: empty local data");
  FlatParams w(params.begin(), params.end());
  std::vector<double> m(w.size(), 0.0), v(w.size(), 0.0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(local_train.n_rows);
  std::iota(order.begin(), order.end(), 0U);
  std::uint64_t step = 0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto g = backward(w, arch, local_train,
                              std::span<const std::size_t>(order).subspan(start, end - start));
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
        continue;
      }
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
  }
  return w;
}

}  // namespace fedtrees::mlp
