#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "rng.hpp"
#include "route_mdp.hpp"

namespace aoifog {

/// Q(node, action) for the multiplicative recursion; values stay in [0, 1].
struct QTable {
  double gamma = 1.0;
  std::vector<std::vector<double>> q;
  std::vector<std::vector<std::size_t>> visits;

  QTable() = default;
  QTable(const RoadGraph& g, double gamma_, double initial = 0.0) : gamma(gamma_) {
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      q.emplace_back(g.out_degree(n), initial);
      visits.emplace_back(g.out_degree(n), 0);
    }
  }

  /// max_a Q(node, a); 0 for nodes without actions.
  double value(std::size_t node) const {
    double v = 0.0;
    for (double x : q[node]) v = std::max(v, x);
    return v;
  }

  /// Greedy action, ties to the lowest index.
  std::size_t greedy(std::size_t node) const {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q[node].size(); ++a)
      if (q[node][a] > q[node][best]) best = a;
    return best;
  }

  Policy policy() const {
    return [table = *this](const RouteState& s) { return table.greedy(s.node); };
  }
};

inline void validate_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("gamma must lie in (0, 1]", ErrorKind::usage);
}

/// Bellman target r * (max_a' Q(s', a'))^gamma, or r when s' terminates.
inline double bellman_target(const QTable& table, const StepResult& st) {
  if (st.terminal) return st.reward;
  return st.reward * std::pow(table.value(st.next.node), table.gamma);
}

/// One tabular update Q <- (1 - alpha) Q + alpha * target.
inline StepResult q_update(QTable& table, const RouteEnv& env, RouteState s, std::size_t action, double alpha) {
  const auto st = env.step(s, action);
  const double target = bellman_target(table, st);
  double& q = table.q[s.node][action];
  q = (1.0 - alpha) * q + alpha * target;
  ++table.visits[s.node][action];
  return st;
}

struct ValueIterationResult {
  QTable table;
  std::vector<double> residuals;      // sup |Q_k+1 - Q_k|
  std::vector<double> log_residuals;  // sup |log Q_k+1 - log Q_k|
  std::size_t iterations = 0;
};

/// Iterates the multiplicative Bellman operator (Jacobi sweeps from a
/// constant table) until the sup-norm change drops below tol.
inline ValueIterationResult value_iteration(const RouteEnv& env, double gamma, double tol = 1e-12,
                                            std::size_t max_iters = 100000, double initial = 0.0) {
  validate_gamma(gamma);
  if (env.slot_dependent()) throw Error("value iteration needs slot-independent rewards", ErrorKind::usage);
  const auto& g = env.graph();
  ValueIterationResult res{QTable(g, gamma, initial), {}, {}, 0};
  auto& table = res.table;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    QTable next = table;
    double sup = 0.0, log_sup = 0.0;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      if (env.terminal(n)) continue;
      for (std::size_t a = 0; a < g.out_degree(n); ++a) {
        const auto st = env.step({n, 0}, a);
        const double v = bellman_target(table, st);
        const double old = table.q[n][a];
        next.q[n][a] = v;
        sup = std::max(sup, std::abs(v - old));
        if (v > 0.0 && old > 0.0)
          log_sup = std::max(log_sup, std::abs(std::log(v) - std::log(old)));
        else if (v != old)
          log_sup = std::numeric_limits<double>::infinity();
      }
    }
    table.q = std::move(next.q);
    res.residuals.push_back(sup);
    res.log_residuals.push_back(log_sup);
    res.iterations = it;
    if (sup < tol) return res;
  }
  throw Error("divergence");
}

struct LogDomainCheck {
  double max_discrepancy = 0.0;
  bool same_greedy_route = true;
};

/// Runs additive value iteration on log rewards and compares exp(fixed
/// point) with the multiplicative fixed point, entry by entry.
inline LogDomainCheck log_domain_check(const RouteEnv& env, double gamma, double tol = 1e-13) {
  validate_gamma(gamma);
  const auto& g = env.graph();
  const auto mult = value_iteration(env, gamma);
  const double ninf = -std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> l;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) l.emplace_back(g.out_degree(n), ninf);
  auto lvalue = [&](std::size_t n) {
    double v = ninf;
    for (double x : l[n]) v = std::max(v, x);
    return v;
  };
  for (std::size_t it = 0; it < 100000; ++it) {
    auto next = l;
    double sup = 0.0;
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      if (env.terminal(n)) continue;
      for (std::size_t a = 0; a < g.out_degree(n); ++a) {
        const auto st = env.step({n, 0}, a);
        const double tail = st.terminal ? 0.0 : gamma * lvalue(st.next.node);
        const double v = std::log(st.reward) + tail;
        next[n][a] = v;
        if (v != l[n][a]) sup = std::max(sup, std::isinf(l[n][a]) ? std::numeric_limits<double>::infinity()
                                                                    : std::abs(v - l[n][a]));
      }
    }
    l = std::move(next);
    if (sup < tol) break;
  }

  LogDomainCheck out;
  QTable exp_table = mult.table;
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    for (std::size_t a = 0; a < g.out_degree(n); ++a) {
      if (env.terminal(n)) continue;
      const double e = std::exp(l[n][a]);
      exp_table.q[n][a] = e;
      out.max_discrepancy = std::max(out.max_discrepancy, std::abs(e - mult.table.q[n][a]));
    }
  const auto r1 = rollout(env, mult.table.policy(), env.max_steps());
  const auto r2 = rollout(env, exp_table.policy(), env.max_steps());
  out.same_greedy_route = r1.nodes == r2.nodes;
  return out;
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of
/// the episodes, constant afterwards.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double decay_fraction = 0.8;

  static EpsilonSchedule constant(double eps) { return {eps, eps, 1.0}; }

  double at(std::size_t episode, std::size_t episodes) const {
    const double span = decay_fraction * static_cast<double>(episodes);
    if (span <= 0.0) return end;
    const double frac = std::min(1.0, static_cast<double>(episode) / span);
    return start + (end - start) * frac;
  }

  void validate() const {
    if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0 && decay_fraction >= 0.0 && decay_fraction <= 1.0))
      throw Error("invalid epsilon schedule", ErrorKind::usage);
  }
};

struct QLearnConfig {
  double gamma = 0.9;
  double alpha = 0.1;
  EpsilonSchedule epsilon;
  std::size_t episodes = 5000;
  std::uint64_t seed = 0;
  double initial_q = 1.0;  // optimistic: the largest attainable utility
};

struct QLearnResult {
  QTable table;
  std::vector<double> curve;  // per-episode utility
};

/// epsilon-greedy tabular Q-learning. Per step the RNG is drawn in a fixed
/// order: exploration test, then the random action when exploring.
inline QLearnResult q_learn(const RouteEnv& env, const QLearnConfig& cfg) {
  validate_gamma(cfg.gamma);
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw Error("alpha must lie in (0, 1]", ErrorKind::usage);
  cfg.epsilon.validate();
  if (!(cfg.initial_q >= 0.0 && cfg.initial_q <= 1.0)) throw Error("initial Q must lie in [0, 1]", ErrorKind::usage);
  const auto& g = env.graph();
  QLearnResult res{QTable(g, cfg.gamma, cfg.initial_q), {}};
  res.curve.reserve(cfg.episodes);
  Rng rng(splitmix64(cfg.seed));
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const RouteEnv episode_env = env.for_episode(ep);
    const double eps = cfg.epsilon.at(ep, cfg.episodes);
    RouteState s = episode_env.initial();
    double utility = 1.0;
    while (!episode_env.terminal(s.node) && s.step < episode_env.max_steps() && g.out_degree(s.node) > 0) {
      std::size_t a;
      if (uniform01(rng) < eps)
        a = uniform_index(rng, g.out_degree(s.node));
      else
        a = res.table.greedy(s.node);
      const auto st = q_update(res.table, episode_env, s, a, cfg.alpha);
      utility *= st.reward;
      s = st.next;
    }
    res.curve.push_back(utility);
  }
  return res;
}

inline nlohmann::json to_json(const QTable& t, const RoadGraph& g) {
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t n = 0; n < t.q.size(); ++n)
    states.push_back({{"id", g.nodes()[n].id}, {"q", t.q[n]}, {"visits", t.visits[n]}});
  return {{"kind", "qtable"}, {"gamma", t.gamma}, {"states", states}};
}

inline QTable qtable_from_json(const nlohmann::json& j, const RoadGraph& g) {
  try {
    QTable t(g, j.at("gamma").get<double>());
    for (const auto& s : j.at("states")) {
      const auto n = g.node_index(s.at("id").get<std::int64_t>());
      auto q = s.at("q").get<std::vector<double>>();
      if (q.size() != g.out_degree(n)) throw Error("q table does not match graph");
      t.q[n] = std::move(q);
      if (s.contains("visits")) t.visits[n] = s["visits"].get<std::vector<std::size_t>>();
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed q table: ") + e.what());
  }
}

inline std::string utility_curve_csv(std::span<const double> curve) {
  std::string out = "episode,utility\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out += std::to_string(i) + "," + format_number(curve[i]) + "\n";
  return out;
}

}  // namespace aoifog
