#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "aoi.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "segmentation.hpp"
#include "trace.hpp"

namespace aoifog {

inline constexpr double kRewardFloor = 1e-6;

struct RoadNode {
  std::int64_t id = 0;
  std::optional<CellIndex> cell;
};

struct RoadEdge {
  std::size_t from = 0;  // node index
  std::size_t to = 0;
  double length_m = 0.0;
  double speed_mps = 0.0;
  std::optional<std::size_t> region;
  std::optional<Server> server;  // per-edge override

  double traversal_ms() const { return length_m / speed_mps * 1000.0; }
};

/// Directed road network. Actions at a node index its outgoing edges in
/// input order.
class RoadGraph {
 public:
  RoadGraph() = default;

  RoadGraph(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges, std::size_t source,
            std::size_t destination)
      : nodes_(std::move(nodes)), edges_(std::move(edges)), source_(source), destination_(destination) {
    if (nodes_.empty()) throw Error("graph has no nodes");
    if (source_ >= nodes_.size() || destination_ >= nodes_.size()) throw Error("unknown source or destination");
    out_.resize(nodes_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto& ed = edges_[e];
      if (ed.from >= nodes_.size() || ed.to >= nodes_.size()) throw Error("edge references unknown node");
      if (!(ed.length_m > 0.0) || !(ed.speed_mps > 0.0)) throw Error("edge length and speed must be positive");
      out_[ed.from].push_back(e);
    }
    if (!reachable(source_, destination_)) throw Error("destination unreachable");
  }

  const std::vector<RoadNode>& nodes() const { return nodes_; }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  const RoadEdge& edge(std::size_t e) const { return edges_.at(e); }
  const std::vector<std::size_t>& out_edges(std::size_t node) const { return out_[node]; }
  std::size_t out_degree(std::size_t node) const { return out_[node].size(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t source() const { return source_; }
  std::size_t destination() const { return destination_; }

  std::size_t max_out_degree() const {
    std::size_t m = 0;
    for (const auto& o : out_) m = std::max(m, o.size());
    return m;
  }

  std::size_t node_index(std::int64_t id) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].id == id) return i;
    throw Error("unknown node id " + std::to_string(id));
  }

  /// Same topology with a different source/destination pair.
  RoadGraph with_endpoints(std::size_t source, std::size_t destination) const {
    return RoadGraph(nodes_, edges_, source, destination);
  }

  bool reachable(std::size_t from, std::size_t to) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::queue<std::size_t> q;
    q.push(from);
    seen[from] = true;
    while (!q.empty()) {
      const auto n = q.front();
      q.pop();
      if (n == to) return true;
      for (auto e : out_[n])
        if (!seen[edges_[e].to]) {
          seen[edges_[e].to] = true;
          q.push(edges_[e].to);
        }
    }
    return false;
  }

  /// Fills in missing edge regions from the tail (else head) node's cell and
  /// checks every label against the map.
  void resolve_regions(const RegionMap& map) {
    for (auto& e : edges_) {
      if (!e.region) {
        for (std::size_t n : {e.from, e.to}) {
          if (nodes_[n].cell) {
            if (auto l = map.label_of(*nodes_[n].cell)) {
              e.region = *l;
              break;
            }
          }
        }
      }
      if (!e.region || *e.region >= map.size()) throw Error("uncovered region");
    }
  }

 private:
  std::vector<RoadNode> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<std::size_t>> out_;
  std::size_t source_ = 0;
  std::size_t destination_ = 0;
};

inline RoadGraph graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<RoadNode> nodes;
    std::map<std::int64_t, std::size_t> index;
    for (const auto& n : j.at("nodes")) {
      RoadNode node{n.at("id").get<std::int64_t>(), std::nullopt};
      if (n.contains("cell") && !n["cell"].is_null())
        node.cell = CellIndex{n["cell"].at(0).get<std::int64_t>(), n["cell"].at(1).get<std::int64_t>()};
      if (!index.emplace(node.id, nodes.size()).second) throw Error("duplicate node id");
      nodes.push_back(node);
    }
    auto lookup = [&](const nlohmann::json& v) {
      auto it = index.find(v.get<std::int64_t>());
      if (it == index.end()) throw Error("edge references unknown node");
      return it->second;
    };
    std::vector<RoadEdge> edges;
    for (const auto& e : j.at("edges")) {
      RoadEdge edge{lookup(e.at("from")), lookup(e.at("to")), e.at("length_m").get<double>(),
                    e.at("speed_mps").get<double>(), std::nullopt, std::nullopt};
      if (e.contains("region") && !e["region"].is_null()) {
        const auto r = e["region"].get<std::int64_t>();
        if (r >= 0) edge.region = static_cast<std::size_t>(r);
      }
      if (e.contains("server")) edge.server = e["server"].get<std::string>() == "cloud" ? Server::cloud : Server::fog;
      edges.push_back(edge);
    }
    return RoadGraph(std::move(nodes), std::move(edges), lookup(j.at("source")), lookup(j.at("destination")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed graph: ") + e.what());
  }
}

inline nlohmann::json to_json(const RoadGraph& g) {
  nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
  for (const auto& n : g.nodes()) {
    nlohmann::json cell = nullptr;
    if (n.cell) cell = {n.cell->ix, n.cell->iy};
    nodes.push_back({{"id", n.id}, {"cell", cell}});
  }
  for (const auto& e : g.edges()) {
    nlohmann::json region = nullptr;
    if (e.region) region = *e.region;
    nlohmann::json edge = {{"from", g.nodes()[e.from].id}, {"to", g.nodes()[e.to].id},
                           {"length_m", e.length_m}, {"speed_mps", e.speed_mps}, {"region", region}};
    if (e.server) edge["server"] = std::string(to_string(*e.server));
    edges.push_back(edge);
  }
  return {{"nodes", nodes}, {"edges", edges}, {"source", g.nodes()[g.source()].id},
          {"destination", g.nodes()[g.destination()].id}};
}

// ---------------------------------------------------------------------------
// Per-segment rewards

enum class ServerMode { fog, cloud, best };

inline ServerMode parse_server_mode(std::string_view s) {
  if (s == "fog") return ServerMode::fog;
  if (s == "cloud") return ServerMode::cloud;
  if (s == "best") return ServerMode::best;
  throw Error("invalid server mode (fog|cloud|best)", ErrorKind::usage);
}

struct RewardParams {
  AoiParams aoi;  // horizon is replaced by each edge's traversal time
  ServerMode mode = ServerMode::fog;
  double floor = kRewardFloor;
};

/// AoI confidence of one edge traversal, clamped below at the floor.
inline double segment_reward(const RoadGraph& graph, std::size_t edge, const RegionMap& map,
                             const RewardParams& params, Server server, std::uint64_t seed) {
  const auto& e = graph.edge(edge);
  if (!e.region) throw Error("uncovered region");
  const auto& region = map.cluster(*e.region);
  AoiParams p = params.aoi;
  p.horizon = e.traversal_ms();
  p.seed = seed;
  const auto res = simulate_confidence(region.fog, region.cloud, always(server), p);
  return std::clamp(res.confidence, params.floor, 1.0);
}

/// Frozen per-edge rewards for both servers, populated upfront. Rewards are
/// keyed deterministically by (seed, edge, server).
class RewardTable {
 public:
  RewardTable(const RoadGraph& graph, const RegionMap& map, const RewardParams& params, std::uint64_t seed)
      : params_(params), fog_(graph.edges().size()), cloud_(graph.edges().size()) {
    for (const auto& e : graph.edges()) {
      if (!e.region) throw Error("uncovered region");
      map.cluster(*e.region);
    }
    const std::size_t n = graph.edges().size();
    parallel_for(2 * n, params.aoi.threads, [&](std::size_t k) {
      const std::size_t e = k / 2;
      const Server s = k % 2 == 0 ? Server::fog : Server::cloud;
      AoiParams single = params_.aoi;
      single.threads = 1;
      RewardParams rp{single, params_.mode, params_.floor};
      const double r = segment_reward(graph, e, map, rp, s, splitmix64(seed ^ splitmix64(k)));
      (s == Server::fog ? fog_ : cloud_)[e] = r;
    });
    for (std::size_t e = 0; e < n; ++e) server_.push_back(choose(graph.edge(e), e));
  }

  /// Builds a table directly from known rewards (tests, fixtures).
  RewardTable(std::vector<double> fog, std::vector<double> cloud, ServerMode mode = ServerMode::fog)
      : fog_(std::move(fog)), cloud_(std::move(cloud)) {
    params_.mode = mode;
    if (fog_.size() != cloud_.size()) throw Error("reward table size mismatch", ErrorKind::usage);
    for (std::size_t e = 0; e < fog_.size(); ++e) server_.push_back(choose(RoadEdge{}, e));
  }

  double fog(std::size_t e) const { return fog_.at(e); }
  double cloud(std::size_t e) const { return cloud_.at(e); }
  Server preferred(std::size_t e) const { return server_.at(e); }
  std::size_t size() const { return fog_.size(); }

  /// Reward actually obtained on an edge; a capacity fallback forces cloud.
  double reward(std::size_t e, bool fallback = false) const {
    if (fallback) return cloud(e);
    return preferred(e) == Server::fog ? fog(e) : cloud(e);
  }

  std::vector<double> preferred_rewards() const {
    std::vector<double> r(size());
    for (std::size_t e = 0; e < size(); ++e) r[e] = reward(e);
    return r;
  }

 private:
  Server choose(const RoadEdge& edge, std::size_t e) const {
    if (edge.server) return *edge.server;
    switch (params_.mode) {
      case ServerMode::fog: return Server::fog;
      case ServerMode::cloud: return Server::cloud;
      case ServerMode::best: return fog_[e] >= cloud_[e] ? Server::fog : Server::cloud;
    }
    return Server::fog;
  }

  RewardParams params_;
  std::vector<double> fog_;
  std::vector<double> cloud_;
  std::vector<Server> server_;
};

// ---------------------------------------------------------------------------
// Environment

struct RouteState {
  std::size_t node = 0;
  std::size_t step = 0;
  friend bool operator==(const RouteState&, const RouteState&) = default;
};

inline RouteState transition(const RoadGraph& g, RouteState s, std::size_t action) {
  if (s.node >= g.num_nodes() || action >= g.out_degree(s.node)) throw Error("illegal action");
  return {g.edge(g.out_edges(s.node)[action]).to, s.step + 1};
}

struct StepResult {
  RouteState next;
  std::size_t edge;
  double reward;
  bool terminal;
};

/// Deterministic MDP over a road graph with one reward per edge, optionally
/// varying with the time slot (fleet re-planning) or per episode.
class RouteEnv {
 public:
  using SlotReward = std::function<double(std::size_t edge, std::size_t slot)>;
  using EpisodeRewards = std::function<std::vector<double>(std::size_t episode)>;

  RouteEnv(const RoadGraph& graph, std::vector<double> rewards, std::size_t max_steps = 64)
      : graph_(std::make_shared<const RoadGraph>(graph)), rewards_(std::move(rewards)), max_steps_(max_steps) {
    if (rewards_.size() != graph_->edges().size()) throw Error("reward vector does not match edges", ErrorKind::usage);
    for (double r : rewards_)
      if (!(r > 0.0 && r <= 1.0)) throw Error("rewards must lie in (0, 1]", ErrorKind::usage);
  }

  const RoadGraph& graph() const { return *graph_; }
  std::size_t max_steps() const { return max_steps_; }
  const std::vector<double>& rewards() const { return rewards_; }
  bool slot_dependent() const { return static_cast<bool>(slot_reward_); }
  bool stochastic() const { return static_cast<bool>(episode_rewards_); }
  RouteState initial() const { return {graph_->source(), 0}; }
  bool terminal(std::size_t node) const { return node == graph_->destination(); }

  void set_slot_reward(SlotReward f) { slot_reward_ = std::move(f); }
  void set_episode_rewards(EpisodeRewards f) { episode_rewards_ = std::move(f); }

  /// Environment with the rewards drawn for one episode (stochastic mode).
  RouteEnv for_episode(std::size_t episode) const {
    if (!episode_rewards_) return *this;
    RouteEnv env(*this);
    env.rewards_ = episode_rewards_(episode);
    env.episode_rewards_ = nullptr;
    return env;
  }

  double reward(std::size_t edge, std::size_t slot) const {
    return slot_reward_ ? slot_reward_(edge, slot) : rewards_[edge];
  }

  StepResult step(RouteState s, std::size_t action) const {
    const RouteState next = transition(*graph_, s, action);
    const std::size_t e = graph_->out_edges(s.node)[action];
    return {next, e, reward(e, s.step), terminal(next.node)};
  }

 private:
  std::shared_ptr<const RoadGraph> graph_;
  std::vector<double> rewards_;
  std::size_t max_steps_;
  SlotReward slot_reward_;
  EpisodeRewards episode_rewards_;
};

struct EpisodeResult {
  std::vector<std::size_t> nodes;  // node indices, starting at the source
  std::vector<std::size_t> edges;
  std::vector<double> rewards;
  double utility = 1.0;
  bool reached = false;
  bool truncated = false;
};

using Policy = std::function<std::size_t(const RouteState&)>;

/// Runs one episode; stops at the destination, a dead end, or max_steps.
inline EpisodeResult rollout(const RouteEnv& env, const Policy& policy, std::size_t max_steps) {
  EpisodeResult res;
  RouteState s = env.initial();
  res.nodes.push_back(s.node);
  while (!env.terminal(s.node)) {
    if (s.step >= max_steps || env.graph().out_degree(s.node) == 0) {
      res.truncated = true;
      return res;
    }
    const auto st = env.step(s, policy(s));
    res.edges.push_back(st.edge);
    res.rewards.push_back(st.reward);
    res.utility *= st.reward;
    s = st.next;
    res.nodes.push_back(s.node);
  }
  res.reached = true;
  return res;
}

inline std::vector<std::int64_t> node_ids(const RoadGraph& g, std::span<const std::size_t> nodes) {
  std::vector<std::int64_t> ids;
  for (auto n : nodes) ids.push_back(g.nodes()[n].id);
  return ids;
}

struct OracleResult {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;
  double utility = 0.0;
  std::size_t paths = 0;
};

/// Exhaustive search over simple source-to-destination paths. With rewards
/// in (0, 1] a cycle can never raise the product, so simple paths suffice.
/// Ties go to the lexicographically smallest node-id sequence.
inline OracleResult brute_force_optimal(const RouteEnv& env, std::size_t max_paths = 1'000'000) {
  const auto& g = env.graph();
  OracleResult best;
  bool found = false;
  std::vector<std::size_t> nodes{g.source()}, edges;
  std::vector<bool> on_path(g.num_nodes(), false);
  on_path[g.source()] = true;
  std::size_t expansions = 0;

  auto ids_less = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return node_ids(g, a) < node_ids(g, b) || (node_ids(g, a) == node_ids(g, b) && edges < best.edges);
  };

  std::function<void(double)> dfs = [&](double utility) {
    if (++expansions > 50 * max_paths) throw Error("graph too large for oracle");
    const std::size_t here = nodes.back();
    if (env.terminal(here)) {
      if (++best.paths > max_paths) throw Error("graph too large for oracle");
      if (!found || utility > best.utility || (utility == best.utility && ids_less(nodes, best.nodes))) {
        found = true;
        best.utility = utility;
        best.nodes = nodes;
        best.edges = edges;
      }
      return;
    }
    for (std::size_t e : g.out_edges(here)) {
      const std::size_t next = g.edge(e).to;
      if (on_path[next]) continue;
      const double r = env.reward(e, edges.size());
      on_path[next] = true;
      nodes.push_back(next);
      edges.push_back(e);
      dfs(utility * r);
      edges.pop_back();
      nodes.pop_back();
      on_path[next] = false;
    }
  };
  dfs(1.0);
  if (!found) throw Error("destination unreachable");
  return best;
}

}  // namespace aoifog
