#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace aoifog {

/// Uniform evaluation grid for latency CDFs, in milliseconds.
struct Grid {
  double min = 0.0;
  double max = 1000.0;
  double step = 1.0;

  std::size_t size() const {
    return static_cast<std::size_t>(std::llround((max - min) / step)) + 1;
  }
  double at(std::size_t k) const { return min + static_cast<double>(k) * step; }

  void validate() const {
    if (!(step > 0.0) || !(max > min) || !std::isfinite(min) || !std::isfinite(max))
      throw Error("invalid grid", ErrorKind::usage);
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Right-continuous step CDF of latency values on a shared grid.
///
/// Two flavours share one representation. A sample-backed distribution keeps
/// the raw (clipped) samples and has jumps at the sample values. A
/// grid-backed distribution (cluster centres, parsed documents) only knows
/// the CDF at grid points and jumps at grid points. In both cases the
/// function is stored as strictly increasing support points with the CDF
/// value reached at each, so distances are exact integrals of step functions.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;

  static EmpiricalDistribution from_samples(std::vector<double> samples, const Grid& grid = {}) {
    grid.validate();
    if (samples.empty()) throw Error("no samples");
    EmpiricalDistribution d;
    d.grid_ = grid;
    for (double& s : samples) {
      if (!std::isfinite(s) || s < 0.0) throw Error("invalid latency");
      if (s > grid.max) {
        s = grid.max;
        ++d.clip_count_;
      } else if (s < grid.min) {
        s = grid.min;
        ++d.clip_count_;
      }
    }
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
      d.support_.push_back(samples[i]);
      d.cumulative_.push_back(static_cast<double>(i + 1) / n);
    }
    d.sample_count_ = samples.size();
    d.samples_ = std::move(samples);
    d.fill_grid_cdf();
    return d;
  }

  static EmpiricalDistribution point_mass(double value, const Grid& grid = {}) {
    return from_samples({value}, grid);
  }

  static EmpiricalDistribution from_grid_cdf(const Grid& grid, std::vector<double> cdf,
                                             std::size_t sample_count, std::size_t clip_count = 0) {
    grid.validate();
    if (cdf.size() != grid.size()) throw Error("cdf length does not match grid");
    double prev = 0.0;
    for (double v : cdf) {
      if (!std::isfinite(v) || v < prev || v > 1.0 + 1e-12) throw Error("invalid cdf");
      prev = v;
    }
    if (std::abs(cdf.back() - 1.0) > 1e-12) throw Error("invalid cdf");
    cdf.back() = 1.0;
    EmpiricalDistribution d;
    d.grid_ = grid;
    d.sample_count_ = sample_count;
    d.clip_count_ = clip_count;
    prev = 0.0;
    for (std::size_t k = 0; k < cdf.size(); ++k) {
      if (cdf[k] > prev) {
        d.support_.push_back(grid.at(k));
        d.cumulative_.push_back(cdf[k]);
        prev = cdf[k];
      }
    }
    d.cdf_ = std::move(cdf);
    return d;
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& cdf() const { return cdf_; }
  const std::vector<double>& samples() const { return samples_; }
  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  bool has_samples() const { return !samples_.empty(); }
  std::size_t sample_count() const { return sample_count_; }
  std::size_t clip_count() const { return clip_count_; }
  bool empty() const { return support_.empty(); }

  /// F(t): fraction of mass at or below t.
  double evaluate(double t) const {
    auto it = std::upper_bound(support_.begin(), support_.end(), t);
    if (it == support_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - support_.begin()) - 1];
  }

  double mean() const {
    double m = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
      m += support_[i] * (cumulative_[i] - prev);
      prev = cumulative_[i];
    }
    return m;
  }

 private:
  void fill_grid_cdf() {
    cdf_.resize(grid_.size());
    for (std::size_t k = 0; k < cdf_.size(); ++k) cdf_[k] = evaluate(grid_.at(k));
  }

  Grid grid_;
  std::vector<double> samples_;
  std::vector<double> support_;
  std::vector<double> cumulative_;
  std::vector<double> cdf_;
  std::size_t sample_count_ = 0;
  std::size_t clip_count_ = 0;
};

/// Kantorovich-Rubinstein (Wasserstein-1) distance: the integral of
/// |F(t) - G(t)|, evaluated exactly over the merged jump points.
inline double kr_distance(const EmpiricalDistribution& f, const EmpiricalDistribution& g) {
  if (!(f.grid() == g.grid())) throw Error("grid mismatch");
  const auto& xf = f.support();
  const auto& xg = g.support();
  const auto& cf = f.cumulative();
  const auto& cg = g.cumulative();
  std::size_t i = 0, j = 0;
  double fv = 0.0, gv = 0.0, total = 0.0;
  double last = 0.0;
  bool started = false;
  while (i < xf.size() || j < xg.size()) {
    const double x = (j >= xg.size() || (i < xf.size() && xf[i] <= xg[j])) ? xf[i] : xg[j];
    if (started) total += std::abs(fv - gv) * (x - last);
    while (i < xf.size() && xf[i] == x) fv = cf[i++];
    while (j < xg.size() && xg[j] == x) gv = cg[j++];
    last = x;
    started = true;
  }
  return total;
}

/// Bootstrap draw: a uniformly chosen raw sample, or an inverse-CDF draw over
/// the jump points for grid-backed distributions.
inline double sample(const EmpiricalDistribution& dist, Rng& rng) {
  if (dist.empty()) throw Error("no samples");
  if (dist.has_samples()) return dist.samples()[uniform_index(rng, dist.samples().size())];
  const double u = uniform01(rng);
  const auto& cum = dist.cumulative();
  auto it = std::upper_bound(cum.begin(), cum.end(), u);
  if (it == cum.end()) --it;
  return dist.support()[static_cast<std::size_t>(it - cum.begin())];
}

/// Pointwise mean of member CDFs on the shared grid (cluster-centre update).
inline EmpiricalDistribution mean_cdf(std::span<const EmpiricalDistribution* const> members) {
  if (members.empty()) throw Error("empty cluster");
  const Grid& grid = members.front()->grid();
  std::vector<double> acc(grid.size(), 0.0);
  std::size_t count = 0, clipped = 0;
  for (const auto* m : members) {
    if (!(m->grid() == grid)) throw Error("grid mismatch");
    const auto& c = m->cdf();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += c[k];
    count += m->sample_count();
    clipped += m->clip_count();
  }
  const double n = static_cast<double>(members.size());
  for (double& v : acc) v /= n;
  return EmpiricalDistribution::from_grid_cdf(grid, std::move(acc), count, clipped);
}

inline EmpiricalDistribution mean_cdf(std::span<const EmpiricalDistribution> members) {
  std::vector<const EmpiricalDistribution*> ptrs;
  ptrs.reserve(members.size());
  for (const auto& m : members) ptrs.push_back(&m);
  return mean_cdf(std::span<const EmpiricalDistribution* const>(ptrs));
}

/// Symmetric matrix of pairwise K-R distances.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::span<const EmpiricalDistribution> dists)
      : n_(dists.size()), d_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        d_[i * n_ + j] = d_[j * n_ + i] = kr_distance(dists[i], dists[j]);
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

inline nlohmann::json to_json(const EmpiricalDistribution& d) {
  return nlohmann::json{{"grid_min", d.grid().min},         {"grid_max", d.grid().max},
                        {"grid_step", d.grid().step},       {"sample_count", d.sample_count()},
                        {"clip_count", d.clip_count()},     {"cdf", d.cdf()}};
}

inline EmpiricalDistribution distribution_from_json(const nlohmann::json& j) {
  try {
    Grid grid{j.at("grid_min").get<double>(), j.at("grid_max").get<double>(),
              j.at("grid_step").get<double>()};
    return EmpiricalDistribution::from_grid_cdf(grid, j.at("cdf").get<std::vector<double>>(),
                                                j.at("sample_count").get<std::size_t>(),
                                                j.at("clip_count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed distribution document: ") + e.what());
  }
}

}  // namespace aoifog
