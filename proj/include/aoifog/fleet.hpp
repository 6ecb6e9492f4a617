#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqn.hpp"
#include "error.hpp"
#include "route_mdp.hpp"
#include "segmentation.hpp"

namespace aoifog {

struct Vehicle {
  std::size_t id = 0;
  std::size_t source = 0;  // node index
  std::size_t destination = 0;
};

/// Which fog node (if any) serves each edge, and node capacities.
struct FogLayout {
  std::vector<std::optional<std::size_t>> edge_node;  // nullopt: edge does not use fog
  std::vector<std::size_t> capacity;
  std::vector<std::string> names;
};

/// One fog node per distinct fog_node_id of the region map; edges whose
/// preferred server is cloud do not occupy fog.
inline FogLayout fog_layout(const RoadGraph& g, const RegionMap& map, const RewardTable& rewards) {
  FogLayout layout;
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> of_label(map.size());
  for (const auto& c : map.clusters) {
    auto [it, added] = ids.emplace(c.fog_node_id, layout.names.size());
    if (added) {
      layout.names.push_back(c.fog_node_id);
      layout.capacity.push_back(c.capacity);
    }
    of_label[c.label] = it->second;
  }
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    const auto& edge = g.edge(e);
    if (!edge.region || *edge.region >= map.size()) throw Error("uncovered region");
    if (rewards.preferred(e) == Server::fog)
      layout.edge_node.push_back(of_label[*edge.region]);
    else
      layout.edge_node.push_back(std::nullopt);
  }
  return layout;
}

using EdgeRoute = std::vector<std::size_t>;  // one edge per slot

/// fallback[k][j]: vehicle k loses fog on its j-th edge. Per slot and fog
/// node, the `capacity` lowest-id vehicles keep fog.
inline std::vector<std::vector<bool>> apply_capacity(std::span<const EdgeRoute> routes,
                                                     std::span<const std::size_t> vehicle_ids,
                                                     const FogLayout& layout) {
  if (routes.size() != vehicle_ids.size()) throw Error("route/vehicle count mismatch", ErrorKind::usage);
  std::vector<std::size_t> order(routes.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vehicle_ids[a] < vehicle_ids[b]; });

  std::vector<std::vector<bool>> fallback(routes.size());
  std::size_t slots = 0;
  for (std::size_t k = 0; k < routes.size(); ++k) {
    fallback[k].assign(routes[k].size(), false);
    slots = std::max(slots, routes[k].size());
  }
  for (std::size_t j = 0; j < slots; ++j) {
    std::vector<std::size_t> load(layout.capacity.size(), 0);
    for (std::size_t k : order) {
      if (j >= routes[k].size()) continue;
      const auto node = layout.edge_node.at(routes[k][j]);
      if (!node) continue;
      if (load[*node] < layout.capacity[*node])
        ++load[*node];
      else
        fallback[k][j] = true;
    }
  }
  return fallback;
}

enum class FleetPlanner { tabular, dqn };

inline FleetPlanner parse_fleet_planner(std::string_view s) {
  if (s == "tabular") return FleetPlanner::tabular;
  if (s == "dqn") return FleetPlanner::dqn;
  throw Error("invalid planner (tabular|dqn)", ErrorKind::usage);
}

struct FleetOptions {
  FleetPlanner planner = FleetPlanner::tabular;
  std::size_t max_rounds = 10;
  std::size_t max_steps = 64;
  TrainerConfig trainer;  // dqn planner only
};

struct VehiclePlan {
  std::size_t id = 0;
  std::vector<std::size_t> nodes;
  EdgeRoute edges;
  double utility = 1.0;
  std::vector<std::pair<std::size_t, std::size_t>> fallbacks;  // (edge, slot)
};

struct FleetPlan {
  std::vector<VehiclePlan> vehicles;
  std::size_t rounds = 0;
  bool converged = false;
  std::vector<double> round_totals;  // sum of log U_k after each round
  std::vector<std::size_t> peak_load;  // per fog node
};

namespace detail {

struct RoutePick {
  std::vector<std::size_t> nodes;
  EdgeRoute edges;
};

/// Exact finite-horizon best route over the (node, slot) expansion with
/// slot-dependent rewards; ties to the lowest action index.
inline RoutePick time_expanded_best(const RouteEnv& env, std::size_t source, std::size_t destination,
                                    std::size_t horizon) {
  const auto& g = env.graph();
  std::vector<std::vector<double>> value(horizon + 1, std::vector<double>(g.num_nodes(), 0.0));
  for (std::size_t j = 0; j <= horizon; ++j) value[j][destination] = 1.0;
  for (std::size_t j = horizon; j-- > 0;)
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      if (n == destination) continue;
      double best = 0.0;
      for (std::size_t e : g.out_edges(n)) best = std::max(best, env.reward(e, j) * value[j + 1][g.edge(e).to]);
      value[j][n] = best;
    }
  if (source != destination && value[0][source] <= 0.0) throw Error("destination unreachable within max_steps");
  RoutePick pick{{source}, {}};
  std::size_t n = source;
  for (std::size_t j = 0; n != destination; ++j) {
    std::size_t best_e = g.out_edges(n).front();
    double best = -1.0;
    for (std::size_t e : g.out_edges(n)) {
      const double q = env.reward(e, j) * value[j + 1][g.edge(e).to];
      if (q > best) {
        best = q;
        best_e = e;
      }
    }
    pick.edges.push_back(best_e);
    n = g.edge(best_e).to;
    pick.nodes.push_back(n);
  }
  return pick;
}

}  // namespace detail

/// Evaluates a joint plan: capacity fallbacks, per-vehicle utility, and peak
/// fog load. Throws if any fog node would exceed its capacity.
inline void score_plan(FleetPlan& plan, const RewardTable& rewards, const FogLayout& layout) {
  std::vector<EdgeRoute> routes;
  std::vector<std::size_t> ids;
  for (const auto& v : plan.vehicles) {
    routes.push_back(v.edges);
    ids.push_back(v.id);
  }
  const auto fallback = apply_capacity(routes, ids, layout);
  std::size_t slots = 0;
  for (const auto& r : routes) slots = std::max(slots, r.size());
  plan.peak_load.assign(layout.capacity.size(), 0);
  for (std::size_t j = 0; j < slots; ++j) {
    std::vector<std::size_t> load(layout.capacity.size(), 0);
    for (std::size_t k = 0; k < routes.size(); ++k)
      if (j < routes[k].size() && !fallback[k][j])
        if (auto node = layout.edge_node[routes[k][j]]) ++load[*node];
    for (std::size_t n = 0; n < load.size(); ++n) {
      if (load[n] > layout.capacity[n]) throw Error("fog capacity violated");
      plan.peak_load[n] = std::max(plan.peak_load[n], load[n]);
    }
  }
  for (std::size_t k = 0; k < plan.vehicles.size(); ++k) {
    auto& v = plan.vehicles[k];
    v.utility = 1.0;
    v.fallbacks.clear();
    for (std::size_t j = 0; j < v.edges.size(); ++j) {
      v.utility *= rewards.reward(v.edges[j], fallback[k][j]);
      if (fallback[k][j]) v.fallbacks.emplace_back(v.edges[j], j);
    }
  }
}

inline double total_log_utility(const FleetPlan& plan) {
  double t = 0.0;
  for (const auto& v : plan.vehicles) t += std::log(v.utility);
  return t;
}

/// Round-robin best response: each vehicle in ascending id order re-plans
/// against the frozen routes of the others until a full round changes
/// nothing or max_rounds is hit (then the best plan seen is returned).
inline FleetPlan best_response_plan(const RoadGraph& graph, std::vector<Vehicle> vehicles,
                                    const RewardTable& rewards, const FogLayout& layout,
                                    const FleetOptions& opts = {}) {
  if (vehicles.empty()) throw Error("fleet has no vehicles", ErrorKind::usage);
  if (opts.max_rounds == 0) throw Error("need at least one round", ErrorKind::usage);
  std::sort(vehicles.begin(), vehicles.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t k = 1; k < vehicles.size(); ++k)
    if (vehicles[k].id == vehicles[k - 1].id) throw Error("duplicate vehicle id", ErrorKind::usage);

  FleetPlan plan;
  std::vector<bool> planned(vehicles.size(), false);
  for (const auto& v : vehicles) plan.vehicles.push_back({v.id, {v.source}, {}, 1.0, {}});

  std::optional<FleetPlan> best;
  double best_total = 0.0;
  const auto base_rewards = rewards.preferred_rewards();

  for (std::size_t round = 1; round <= opts.max_rounds; ++round) {
    bool changed = false;
    for (std::size_t k = 0; k < vehicles.size(); ++k) {
      // fog load from lower-id vehicles: (slot, fog node) -> count
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> ahead;
      for (std::size_t o = 0; o < k; ++o) {
        if (!planned[o]) continue;
        const auto& r = plan.vehicles[o].edges;
        for (std::size_t j = 0; j < r.size(); ++j)
          if (auto node = layout.edge_node[r[j]]) ++ahead[{j, *node}];
      }
      const RoadGraph g = graph.with_endpoints(vehicles[k].source, vehicles[k].destination);
      RouteEnv env(g, base_rewards, opts.max_steps);
      env.set_slot_reward([&rewards, &layout, ahead](std::size_t e, std::size_t slot) {
        const auto node = layout.edge_node[e];
        if (!node) return rewards.reward(e);
        auto it = ahead.find({slot, *node});
        const std::size_t load = it == ahead.end() ? 0 : it->second;
        return rewards.reward(e, load >= layout.capacity[*node]);
      });

      detail::RoutePick pick;
      if (opts.planner == FleetPlanner::tabular) {
        pick = detail::time_expanded_best(env, g.source(), g.destination(), opts.max_steps);
      } else {
        TrainerConfig tc = opts.trainer;
        tc.seed = splitmix64(opts.trainer.seed ^ splitmix64(round * 1000003ULL + vehicles[k].id));
        const auto tr = train(env, tc);
        if (!tr.greedy_route.reached) throw Error("dqn planner failed to reach the destination");
        pick = {tr.greedy_route.nodes, tr.greedy_route.edges};
      }
      if (!planned[k] || pick.edges != plan.vehicles[k].edges) changed = true;
      plan.vehicles[k].nodes = pick.nodes;
      plan.vehicles[k].edges = pick.edges;
      planned[k] = true;
    }
    score_plan(plan, rewards, layout);
    const double total = total_log_utility(plan);
    plan.round_totals.push_back(total);
    plan.rounds = round;
    if (!best || total > best_total) {
      best = plan;
      best_total = total;
    }
    if (!changed) {
      plan.converged = true;
      return plan;
    }
  }
  FleetPlan out = *best;
  out.rounds = plan.rounds;
  out.round_totals = plan.round_totals;
  out.converged = false;
  return out;
}

inline nlohmann::json to_json(const FleetPlan& p, const RoadGraph& g) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : p.vehicles) {
    nlohmann::json fb = nlohmann::json::array();
    for (const auto& [e, s] : v.fallbacks) fb.push_back({{"edge", e}, {"slot", s}});
    vehicles.push_back({{"id", v.id}, {"route", node_ids(g, v.nodes)}, {"utility", v.utility}, {"fallbacks", fb}});
  }
  return {{"vehicles", vehicles},
          {"rounds", p.rounds},
          {"converged", p.converged},
          {"round_totals", p.round_totals},
          {"peak_load", p.peak_load}};
}

}  // namespace aoifog
