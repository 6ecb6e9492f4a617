#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "distribution.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "trace.hpp"

namespace aoifog {

/// Farthest-point seeding: a uniformly random first centre, then repeatedly
/// the item whose minimum distance to the chosen centres is largest. Ties go
/// to the lowest index; an item is never chosen twice.
template <typename Item, typename Distance>
std::vector<std::size_t> init_centers(std::span<const Item> items, std::size_t clusters,
                                      std::uint64_t seed, Distance&& distance) {
  if (clusters <= 1) throw Error("need at least 2 clusters", ErrorKind::usage);
  if (clusters > items.size()) throw Error("too many clusters");

  Rng rng(splitmix64(seed));
  std::vector<std::size_t> centers{uniform_index(rng, items.size())};
  std::vector<double> nearest(items.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(items.size(), false);
  chosen[centers[0]] = true;
  while (centers.size() < clusters) {
    const auto& last = items[centers.back()];
    for (std::size_t i = 0; i < items.size(); ++i) nearest[i] = std::min(nearest[i], distance(items[i], last));
    std::size_t best = items.size();
    for (std::size_t i = 0; i < items.size(); ++i)
      if (!chosen[i] && (best == items.size() || nearest[i] > nearest[best])) best = i;
    chosen[best] = true;
    centers.push_back(best);
  }
  return centers;
}

struct ClusterIteration {
  std::size_t iteration = 0;
  double cost_before = 0.0;   // with previous labels, current centres (+inf on the first pass)
  double cost_after = 0.0;    // after the assignment step (and any repair)
  std::size_t reassigned = 0;
  std::size_t repaired = 0;   // empty clusters re-seeded in this pass
};

template <typename Center>
struct ClusterResult {
  std::vector<std::size_t> labels;
  std::vector<Center> centers;
  std::vector<std::size_t> initial_centers;
  std::vector<ClusterIteration> iterations;
  bool stopped_early = false;
};

struct ClusterOptions {
  bool strict_iterations = false;  // run exactly max_iters passes
  unsigned threads = 1;
};

/// K-means with a pluggable distance and centre update. Each pass assigns
/// every item to its nearest centre (ties to the lowest cluster index),
/// re-seeds empty clusters with the globally worst-fitting item, then
/// replaces every centre with the mean of its members.
template <typename Item, typename Distance, typename Mean>
ClusterResult<Item> cluster(std::span<const Item> items, std::size_t clusters, std::size_t max_iters,
                            std::uint64_t seed, Distance&& distance, Mean&& mean,
                            const ClusterOptions& opts = {}) {
  if (max_iters == 0) throw Error("need at least one iteration", ErrorKind::usage);
  ClusterResult<Item> res;
  res.initial_centers = init_centers(items, clusters, seed, distance);
  for (std::size_t c : res.initial_centers) res.centers.push_back(items[c]);

  const std::size_t n = items.size();
  std::vector<std::size_t> labels(n, 0);
  std::vector<double> dist(n, 0.0);
  auto cost_of = [&](const std::vector<std::size_t>& lab) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += distance(items[i], res.centers[lab[i]]);
    return total;
  };

  for (std::size_t m = 1; m <= max_iters; ++m) {
    ClusterIteration it;
    it.iteration = m;
    it.cost_before = m == 1 ? std::numeric_limits<double>::infinity() : cost_of(res.labels);

    parallel_for(n, opts.threads, [&](std::size_t i) {
      std::size_t best = 0;
      double best_d = distance(items[i], res.centers[0]);
      for (std::size_t c = 1; c < clusters; ++c) {
        const double d = distance(items[i], res.centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      labels[i] = best;
      dist[i] = best_d;
    });

    std::vector<std::size_t> sizes(clusters, 0);
    for (std::size_t l : labels) ++sizes[l];
    for (std::size_t c = 0; c < clusters; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i)
        if (sizes[labels[i]] > 1 && (worst == n || dist[i] > dist[worst])) worst = i;
      if (worst == n) throw Error("cannot repair empty cluster");
      --sizes[labels[worst]];
      labels[worst] = c;
      dist[worst] = 0.0;
      sizes[c] = 1;
      res.centers[c] = items[worst];
      ++it.repaired;
    }

    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) cost += dist[i];
    it.cost_after = cost;
    if (m == 1) {
      it.reassigned = n;
    } else {
      for (std::size_t i = 0; i < n; ++i) it.reassigned += labels[i] != res.labels[i];
    }
    const bool unchanged = m > 1 && it.reassigned == 0 && it.repaired == 0;
    res.labels = labels;

    std::vector<std::vector<const Item*>> members(clusters);
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(&items[i]);
    for (std::size_t c = 0; c < clusters; ++c)
      res.centers[c] = mean(std::span<const Item* const>(members[c]));

    res.iterations.push_back(it);
    if (unchanged && !opts.strict_iterations) {
      res.stopped_early = m < max_iters;
      break;
    }
  }
  return res;
}

inline ClusterResult<EmpiricalDistribution> cluster_distributions(
    std::span<const EmpiricalDistribution> items, std::size_t clusters, std::size_t max_iters,
    std::uint64_t seed, const ClusterOptions& opts = {}) {
  return cluster(
      items, clusters, max_iters, seed,
      [](const EmpiricalDistribution& a, const EmpiricalDistribution& b) { return kr_distance(a, b); },
      [](std::span<const EmpiricalDistribution* const> m) { return mean_cdf(m); }, opts);
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw Error("label length mismatch", ErrorKind::usage);
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++ra[a[i]];
    ++rb[b[i]];
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, c] : joint) index += pairs(c);
  for (const auto& [_, c] : ra) sa += pairs(c);
  for (const auto& [_, c] : rb) sb += pairs(c);
  const double expected = sa * sb / pairs(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Region maps

enum class ServerSelection { fog, cloud, joint };

inline ServerSelection parse_server_selection(std::string_view s) {
  if (s == "fog") return ServerSelection::fog;
  if (s == "cloud") return ServerSelection::cloud;
  if (s == "joint") return ServerSelection::joint;
  throw Error("invalid server selection (fog|cloud|joint)", ErrorKind::usage);
}

struct RegionCluster {
  std::size_t label = 0;
  std::string fog_node_id;
  std::size_t capacity = 1;
  EmpiricalDistribution fog;
  EmpiricalDistribution cloud;
};

struct RegionMap {
  std::map<CellIndex, std::size_t> cells;
  std::vector<RegionCluster> clusters;  // indexed by label

  std::size_t size() const { return clusters.size(); }

  std::optional<std::size_t> label_of(CellIndex c) const {
    auto it = cells.find(c);
    if (it == cells.end()) return std::nullopt;
    return it->second;
  }

  const RegionCluster& cluster(std::size_t label) const {
    if (label >= clusters.size()) throw Error("uncovered region");
    return clusters[label];
  }
};

struct SegmentOptions {
  ServerSelection server = ServerSelection::fog;
  std::size_t default_capacity = 4;
  std::vector<std::size_t> capacities;  // per label; overrides the default
  bool strict_iterations = false;
  unsigned threads = 1;
};

struct SegmentationResult {
  RegionMap map;
  std::vector<ClusterIteration> iterations;
  bool stopped_early = false;
};

/// Clusters covered cells by latency distribution and attaches one fog node
/// per cluster. The joint reading sums fog and cloud distances with equal
/// weight.
inline SegmentationResult segment_cells(const CellDistributions& cells, std::size_t clusters,
                                        std::size_t max_iters, std::uint64_t seed,
                                        const SegmentOptions& opts = {}) {
  std::vector<CellIndex> index;
  std::vector<CellPair> items;
  for (const auto& [c, p] : cells.cells) {
    index.push_back(c);
    items.push_back(p);
  }
  ClusterOptions copts{opts.strict_iterations, opts.threads};
  auto pick = [&](const CellPair& p) -> const EmpiricalDistribution& {
    return opts.server == ServerSelection::cloud ? p.cloud : p.fog;
  };
  auto distance = [&](const CellPair& a, const CellPair& b) {
    if (opts.server == ServerSelection::joint) return kr_distance(a.fog, b.fog) + kr_distance(a.cloud, b.cloud);
    return kr_distance(pick(a), pick(b));
  };
  auto mean = [&](std::span<const CellPair* const> m) {
    std::vector<const EmpiricalDistribution*> f, c;
    for (const auto* p : m) {
      f.push_back(&p->fog);
      c.push_back(&p->cloud);
    }
    return CellPair{mean_cdf(std::span<const EmpiricalDistribution* const>(f)),
                    mean_cdf(std::span<const EmpiricalDistribution* const>(c))};
  };
  auto res = cluster(std::span<const CellPair>(items), clusters, max_iters, seed, distance, mean, copts);

  SegmentationResult out;
  out.iterations = res.iterations;
  out.stopped_early = res.stopped_early;
  for (std::size_t i = 0; i < index.size(); ++i) out.map.cells[index[i]] = res.labels[i];
  for (std::size_t c = 0; c < clusters; ++c) {
    const std::size_t cap = c < opts.capacities.size() ? opts.capacities[c] : opts.default_capacity;
    if (cap < 1) throw Error("fog capacity must be at least 1", ErrorKind::usage);
    out.map.clusters.push_back({c, "fog-" + std::to_string(c), cap, res.centers[c].fog, res.centers[c].cloud});
  }
  return out;
}

inline nlohmann::json to_json(const RegionMap& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [c, l] : m.cells) cells.push_back({{"ix", c.ix}, {"iy", c.iy}, {"label", l}});
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : m.clusters)
    clusters.push_back({{"label", c.label},
                        {"fog_node_id", c.fog_node_id},
                        {"capacity", c.capacity},
                        {"fog_cdf", to_json(c.fog)},
                        {"cloud_cdf", to_json(c.cloud)}});
  return {{"R", m.clusters.size()}, {"cells", cells}, {"clusters", clusters}};
}

inline RegionMap region_map_from_json(const nlohmann::json& j) {
  try {
    RegionMap m;
    const auto r = j.at("R").get<std::size_t>();
    m.clusters.resize(r);
    std::vector<bool> seen(r, false);
    for (const auto& c : j.at("clusters")) {
      const auto label = c.at("label").get<std::size_t>();
      if (label >= r || seen[label]) throw Error("malformed region map: bad cluster label");
      seen[label] = true;
      const auto cap = c.at("capacity").get<std::size_t>();
      if (cap < 1) throw Error("malformed region map: capacity must be at least 1");
      m.clusters[label] = {label, c.at("fog_node_id").get<std::string>(), cap,
                           distribution_from_json(c.at("fog_cdf")), distribution_from_json(c.at("cloud_cdf"))};
    }
    for (bool s : seen)
      if (!s) throw Error("malformed region map: missing cluster");
    for (const auto& c : j.at("cells")) {
      const auto label = c.at("label").get<std::size_t>();
      if (label >= r) throw Error("malformed region map: bad cell label");
      m.cells[{c.at("ix").get<std::int64_t>(), c.at("iy").get<std::int64_t>()}] = label;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed region map: ") + e.what());
  }
}

}  // namespace aoifog
