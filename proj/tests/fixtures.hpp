#pragma once

#include <cstdint>
#include <vector>

#include <aoifog/aoifog.hpp>

namespace fixtures {

using namespace aoifog;

inline RoadEdge edge(std::size_t from, std::size_t to, std::optional<std::size_t> region = std::nullopt) {
  return {from, to, 100.0, 10.0, region, std::nullopt};
}

inline std::vector<RoadNode> nodes(std::size_t n) {
  std::vector<RoadNode> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({static_cast<std::int64_t>(i), std::nullopt});
  return out;
}

/// 0 -> {1 upper, 2 lower} -> 3. Edge order: 0->1, 0->2, 1->3, 2->3.
inline RoadGraph diamond() {
  return RoadGraph(nodes(4), {edge(0, 1, 0), edge(0, 2, 1), edge(1, 3, 0), edge(2, 3, 2)}, 0, 3);
}

/// Upper path 0.9 * 0.9 = 0.81, lower path 0.95 * 0.8 = 0.76.
inline std::vector<double> diamond_rewards() { return {0.9, 0.95, 0.9, 0.8}; }

/// 3 x 4 directed lattice (right, down, diagonal) with two back edges that
/// create cycles; 12 nodes and 25 edges, node id = 4 * row + column.
inline RoadGraph lattice12() {
  std::vector<RoadEdge> edges;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t n = r * 4 + c;
      if (c < 3) edges.push_back(edge(n, n + 1));
      if (r < 2) edges.push_back(edge(n, n + 4));
      if (r < 2 && c < 3) edges.push_back(edge(n, n + 5));
    }
  edges.push_back(edge(5, 1));
  edges.push_back(edge(10, 6));
  return RoadGraph(nodes(12), std::move(edges), 0, 11);
}

/// Frozen rewards for lattice12. Brute-force enumeration of its 57 simple
/// paths gives the unique optimum 0-1-5-10-11 with U* = 0.662607 against a
/// runner-up of 0.632925.
inline std::vector<double> lattice12_rewards() {
  return {0.97, 0.97, 0.57, 0.59, 0.92, 0.87, 0.84, 0.69, 0.82, 0.82, 0.81, 0.62, 0.74,
          0.72, 0.87, 0.99, 0.97, 0.79, 0.75, 0.67, 0.57, 0.56, 0.75, 0.69, 0.72};
}

inline const std::vector<std::int64_t> kLattice12Optimum{0, 1, 5, 10, 11};
inline constexpr double kLattice12Utility = 0.662607;

/// Three planted regions along a 600 m strip of 12 cells: columns 0-3,
/// 4-7 and 8-11. Each cell collects about 400 rows.
inline ScenarioConfig three_region_scenario() {
  ScenarioConfig sc;
  sc.cell_size_m = 50.0;
  sc.sample_rate_hz = 10.0;
  sc.speed_mps = 5.0;
  sc.laps = 2;
  sc.waypoints_m = {{5.0, 25.0}, {595.0, 25.0}, {5.0, 25.0}};
  const double mu = std::log(4.0);
  sc.regions = {
      {{10.0, mu, 0.3}, {40.0, mu, 0.3}, {{0, 0, 3, 0}}},
      {{30.0, mu, 0.3}, {70.0, mu, 0.3}, {{4, 0, 7, 0}}},
      {{60.0, mu, 0.3}, {110.0, mu, 0.3}, {{8, 0, 11, 0}}},
  };
  sc.default_region = 0;
  return sc;
}

}  // namespace fixtures
