#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace aoifog {

/// Fully connected network: rectifier on hidden layers, identity output.
/// Weights are row-major (out x in) per layer.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw Error("network needs at least input and output layers", ErrorKind::usage);
    for (auto s : sizes_)
      if (s == 0) throw Error("layer sizes must be positive", ErrorKind::usage);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l]));  // He uniform
      std::vector<double> w(sizes_[l] * sizes_[l + 1]);
      for (double& x : w) x = uniform_real(rng, -limit, limit);
      weights_.push_back(std::move(w));
      biases_.emplace_back(sizes_[l + 1], 0.0);
    }
  }

  Mlp(std::vector<std::size_t> sizes, std::vector<std::vector<double>> weights,
      std::vector<std::vector<double>> biases)
      : sizes_(std::move(sizes)), weights_(std::move(weights)), biases_(std::move(biases)) {
    if (sizes_.size() < 2 || weights_.size() + 1 != sizes_.size() || biases_.size() != weights_.size())
      throw Error("shape error");
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (weights_[l].size() != sizes_[l] * sizes_[l + 1] || biases_[l].size() != sizes_[l + 1])
        throw Error("shape error");
  }

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t layers() const { return weights_.size(); }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::vector<double>& weights(std::size_t l) { return weights_[l]; }
  const std::vector<double>& weights(std::size_t l) const { return weights_[l]; }
  std::vector<double>& biases(std::size_t l) { return biases_[l]; }
  const std::vector<double>& biases(std::size_t l) const { return biases_[l]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Flat view order: layer by layer, weights then biases.
  double& parameter(std::size_t k) {
    for (std::size_t l = 0; l < layers(); ++l) {
      if (k < weights_[l].size()) return weights_[l][k];
      k -= weights_[l].size();
      if (k < biases_[l].size()) return biases_[l][k];
      k -= biases_[l].size();
    }
    throw Error("parameter index out of range");
  }

  bool finite() const {
    for (std::size_t l = 0; l < layers(); ++l) {
      for (double w : weights_[l])
        if (!std::isfinite(w)) return false;
      for (double b : biases_[l])
        if (!std::isfinite(b)) return false;
    }
    return true;
  }

  /// Activations of every layer, input first; hidden layers post-rectifier.
  std::vector<std::vector<double>> trace(std::span<const double> x) const {
    if (x.size() != input_size()) throw Error("shape error");
    std::vector<std::vector<double>> acts;
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < layers(); ++l) {
      const auto& in = acts.back();
      const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
      std::vector<double> out(biases_[l]);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double* row = &weights_[l][o * n_in];
        double z = out[o];
        for (std::size_t i = 0; i < n_in; ++i) z += row[i] * in[i];
        out[o] = (l + 1 < layers()) ? std::max(0.0, z) : z;
      }
      acts.push_back(std::move(out));
    }
    return acts;
  }

  std::vector<double> forward(std::span<const double> x) const { return std::move(trace(x).back()); }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  explicit Gradients(const Mlp& net) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      weights.emplace_back(net.weights(l).size(), 0.0);
      biases.emplace_back(net.biases(l).size(), 0.0);
    }
  }

  /// Same flat order as Mlp::parameter.
  std::vector<double> flat() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.insert(out.end(), weights[l].begin(), weights[l].end());
      out.insert(out.end(), biases[l].begin(), biases[l].end());
    }
    return out;
  }
};

/// A regression sample on one output head.
struct HeadTarget {
  std::vector<double> input;
  std::size_t head = 0;
  double target = 0.0;
};

struct BackwardResult {
  Gradients grads;
  double loss;
};

/// Mean squared error on the selected heads and its exact gradient;
/// other heads receive no gradient.
inline BackwardResult backward(const Mlp& net, std::span<const HeadTarget> batch) {
  if (batch.empty()) throw Error("empty minibatch", ErrorKind::usage);
  BackwardResult res{Gradients(net), 0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto& sizes = net.layer_sizes();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& sample = batch[b];
    if (!std::isfinite(sample.target)) throw Error("non-finite target in minibatch");
    if (sample.head >= net.output_size()) throw Error("shape error");
    const auto acts = net.trace(sample.input);
    const double err = acts.back()[sample.head] - sample.target;
    res.loss += err * err * scale;
    if (!std::isfinite(res.loss))
      throw Error("NaN loss at minibatch entry " + std::to_string(b) + " (head " + std::to_string(sample.head) +
                  ", target " + std::to_string(sample.target) + ")");

    std::vector<double> delta(net.output_size(), 0.0);
    delta[sample.head] = 2.0 * err * scale;
    for (std::size_t l = net.layers(); l-- > 0;) {
      const std::size_t n_in = sizes[l], n_out = sizes[l + 1];
      const auto& in = acts[l];
      auto& gw = res.grads.weights[l];
      auto& gb = res.grads.biases[l];
      for (std::size_t o = 0; o < n_out; ++o) {
        if (delta[o] == 0.0) continue;
        gb[o] += delta[o];
        double* row = &gw[o * n_in];
        for (std::size_t i = 0; i < n_in; ++i) row[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(n_in, 0.0);
      const auto& w = net.weights(l);
      for (std::size_t o = 0; o < n_out; ++o) {
        if (delta[o] == 0.0) continue;
        const double* row = &w[o * n_in];
        for (std::size_t i = 0; i < n_in; ++i) prev[i] += delta[o] * row[i];
      }
      for (std::size_t i = 0; i < n_in; ++i)
        if (in[i] <= 0.0) prev[i] = 0.0;  // rectifier derivative
      delta = std::move(prev);
    }
  }
  return res;
}

inline double batch_loss(const Mlp& net, std::span<const HeadTarget> batch) {
  double loss = 0.0;
  for (const auto& s : batch) {
    const double err = net.forward(s.input)[s.head] - s.target;
    loss += err * err;
  }
  return loss / static_cast<double>(batch.size());
}

/// Plain gradient descent step.
inline void sgd_step(Mlp& net, const Gradients& g, double learning_rate) {
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto& w = net.weights(l);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * g.weights[l][k];
    auto& b = net.biases(l);
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= learning_rate * g.biases[l][k];
  }
}

/// Which hidden units are active, for every sample of the batch.
inline std::vector<bool> activation_pattern(const Mlp& net, std::span<const HeadTarget> batch) {
  std::vector<bool> out;
  for (const auto& s : batch) {
    const auto acts = net.trace(s.input);
    for (std::size_t l = 1; l + 1 < acts.size(); ++l)
      for (double a : acts[l]) out.push_back(a > 0.0);
  }
  return out;
}

struct GradientCheck {
  double relative_error = 0.0;    // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_difference = 0.0;
  std::size_t kinks_skipped = 0;  // parameters whose every probe crossed a rectifier kink
};

/// Compares backward() against central finite differences of the loss. A
/// probe that flips any rectifier is retried with a 10x smaller step; a
/// parameter that still straddles a kink at h / 1000 is left out.
inline GradientCheck gradient_check(const Mlp& net, std::span<const HeadTarget> batch, double h = 1e-5) {
  const auto analytic = backward(net, batch).grads.flat();
  const auto base = activation_pattern(net, batch);
  Mlp probe = net;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradientCheck out;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    double& p = probe.parameter(k);
    const double orig = p;
    std::optional<double> numeric;
    for (double step = h; step >= h * 1e-3 && !numeric; step /= 10.0) {
      p = orig + step;
      const double up = batch_loss(probe, batch);
      const bool up_ok = activation_pattern(probe, batch) == base;
      p = orig - step;
      const double down = batch_loss(probe, batch);
      const bool down_ok = activation_pattern(probe, batch) == base;
      if (up_ok && down_ok) numeric = (up - down) / (2.0 * step);
    }
    p = orig;
    if (!numeric) {
      ++out.kinks_skipped;
      continue;
    }
    const double d = analytic[k] - *numeric;
    diff2 += d * d;
    a2 += analytic[k] * analytic[k];
    n2 += *numeric * *numeric;
    out.max_abs_difference = std::max(out.max_abs_difference, std::abs(d));
  }
  const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  out.relative_error = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
  return out;
}

inline nlohmann::json to_json(const Mlp& net) {
  nlohmann::json w = nlohmann::json::array(), b = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    w.push_back(net.weights(l));
    b.push_back(net.biases(l));
  }
  return {{"layer_sizes", net.layer_sizes()}, {"weights", w}, {"biases", b}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    return Mlp(j.at("layer_sizes").get<std::vector<std::size_t>>(),
               j.at("weights").get<std::vector<std::vector<double>>>(),
               j.at("biases").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed network: ") + e.what());
  }
}

}  // namespace aoifog
