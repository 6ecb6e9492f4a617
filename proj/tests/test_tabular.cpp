#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace aoifog;

namespace {

RoadGraph chain() { return RoadGraph(fixtures::nodes(3), {fixtures::edge(0, 1), fixtures::edge(1, 2)}, 0, 2); }

}  // namespace

TEST(Tabular, ChainUndiscounted) {
  auto vi = value_iteration(RouteEnv(chain(), {0.9, 0.8}), 1.0);
  EXPECT_NEAR(vi.table.q[0][0], 0.72, 1e-15);
  EXPECT_EQ(vi.table.q[1][0], 0.8);
}

TEST(Tabular, ChainDiscounted) {
  auto vi = value_iteration(RouteEnv(chain(), {0.9, 0.8}), 0.5);
  EXPECT_NEAR(vi.table.q[0][0], 0.9 * std::sqrt(0.8), 1e-15);
  EXPECT_NEAR(vi.table.q[0][0], 0.80499, 1e-5);
}

TEST(Tabular, TerminalEdgeIsReward) {
  RoadGraph g(fixtures::nodes(2), {fixtures::edge(0, 1)}, 0, 1);
  RouteEnv env(g, {0.37});
  EXPECT_EQ(value_iteration(env, 0.9).table.q[0][0], 0.37);
  EXPECT_EQ(log_domain_check(env, 0.9).max_discrepancy, 0.0);
}

TEST(Tabular, ReverseTopologicalSweepEqualsValueIteration) {
  RouteEnv env(fixtures::diamond(), fixtures::diamond_rewards());
  for (double gamma : {1.0, 0.9, 0.3}) {
    QTable t(env.graph(), gamma);
    for (std::size_t n : {2u, 1u, 0u})
      for (std::size_t a = 0; a < env.graph().out_degree(n); ++a) q_update(t, env, {n, 0}, a, 1.0);
    EXPECT_EQ(t.q, value_iteration(env, gamma).table.q);
  }
}

TEST(Tabular, ConvergedGreedyFollowsOracle) {
  RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
  auto vi = value_iteration(env, 1.0);
  auto r = rollout(env, vi.table.policy(), 64);
  EXPECT_EQ(r.nodes, brute_force_optimal(env).nodes);
  EXPECT_EQ(r.utility, brute_force_optimal(env).utility);
}

TEST(Tabular, AllOnesStayOne) {
  RouteEnv env(fixtures::lattice12(), std::vector<double>(25, 1.0));
  QLearnConfig cfg;
  cfg.gamma = 1.0;
  cfg.episodes = 50;
  cfg.seed = 3;
  auto r = q_learn(env, cfg);
  for (std::size_t n = 0; n < r.table.q.size(); ++n)
    for (std::size_t a = 0; a < r.table.q[n].size(); ++a) {
      if (r.table.visits[n][a] > 0) {
        EXPECT_EQ(r.table.q[n][a], 1.0);
      }
    }
}

TEST(Tabular, LogDomainAgrees) {
  for (double gamma : {1.0, 0.9, 0.5}) {
    RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
    auto c = log_domain_check(env, gamma);
    EXPECT_LT(c.max_discrepancy, 1e-9);
    EXPECT_TRUE(c.same_greedy_route);
  }
  auto c = log_domain_check(RouteEnv(fixtures::diamond(), fixtures::diamond_rewards()), 1.0);
  EXPECT_TRUE(c.same_greedy_route);
}

TEST(Tabular, LogSupNormContraction) {
  const double gamma = 0.7;
  RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
  auto vi = value_iteration(env, gamma, 1e-12, 100000, 1.0);
  const auto from_zero = value_iteration(env, gamma).table;
  for (std::size_t n = 0; n < from_zero.q.size(); ++n)
    for (std::size_t a = 0; a < from_zero.q[n].size(); ++a) EXPECT_NEAR(vi.table.q[n][a], from_zero.q[n][a], 1e-10);
  std::size_t checked = 0;
  for (std::size_t k = 1; k < vi.log_residuals.size(); ++k) {
    const double prev = vi.log_residuals[k - 1], cur = vi.log_residuals[k];
    if (!std::isfinite(prev)) continue;
    EXPECT_LE(cur, gamma * prev + 1e-12) << k;
    ++checked;
  }
  EXPECT_GT(checked, 3u);
}

TEST(Tabular, GammaValidation) {
  RouteEnv env(chain(), {0.9, 0.8});
  EXPECT_THROW(value_iteration(env, 0.0), Error);
  EXPECT_THROW(value_iteration(env, 1.5), Error);
}

TEST(Tabular, EpsilonSchedule) {
  EpsilonSchedule e;
  EXPECT_EQ(e.at(0, 100), 1.0);
  EXPECT_NEAR(e.at(40, 100), 0.525, 1e-12);
  EXPECT_NEAR(e.at(80, 100), 0.05, 1e-12);
  EXPECT_NEAR(e.at(99, 100), 0.05, 1e-12);
  EXPECT_EQ(EpsilonSchedule::constant(0.3).at(50, 100), 0.3);
}

TEST(Tabular, QLearningFindsDiamondOptimum) {
  RouteEnv env(fixtures::diamond(), fixtures::diamond_rewards());
  QLearnConfig cfg;
  cfg.gamma = 1.0;
  cfg.seed = 12;
  auto r = q_learn(env, cfg);
  EXPECT_EQ(r.curve.size(), 5000u);
  EXPECT_EQ(node_ids(env.graph(), rollout(env, r.table.policy(), 64).nodes), (std::vector<std::int64_t>{0, 1, 3}));
}

TEST(Tabular, QLearningIsDeterministic) {
  RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
  QLearnConfig cfg;
  cfg.seed = 99;
  cfg.episodes = 300;
  auto a = q_learn(env, cfg), b = q_learn(env, cfg);
  EXPECT_EQ(a.table.q, b.table.q);
  EXPECT_EQ(a.curve, b.curve);
}

TEST(Tabular, QTableJsonRoundTrip) {
  RouteEnv env(fixtures::diamond(), fixtures::diamond_rewards());
  auto vi = value_iteration(env, 0.9);
  const auto j = to_json(vi.table, env.graph());
  EXPECT_EQ(j.at("kind"), "qtable");
  auto back = qtable_from_json(nlohmann::json::parse(j.dump()), env.graph());
  EXPECT_EQ(back.q, vi.table.q);
  EXPECT_EQ(back.gamma, 0.9);
}

TEST(Tabular, CurveCsvHeader) {
  std::vector<double> curve{0.5, 0.25};
  EXPECT_EQ(utility_curve_csv(curve), "episode,utility\n0,0.5\n1,0.25\n");
}
