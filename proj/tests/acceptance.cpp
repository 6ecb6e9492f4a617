// Acceptance suite: one PASS/FAIL line per criterion, each against its own
// tolerance and wall-clock budget. Exit status is nonzero if any fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace aoifog;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1 ------------------------------------------------------------------------

Outcome closed_form_aoi() {
  Outcome out;
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double interval = std::round(uniform_real(rng, 5.0, 60.0));
    const double service = uniform_real(rng, 1.0, 120.0);
    const double a_max = uniform_real(rng, 0.5 * service, service + 1.5 * interval);
    AoiParams p;
    p.interval = interval;
    p.a_max = a_max;
    p.horizon = interval * std::round(uniform_real(rng, 20.0, 200.0));
    const auto d = EmpiricalDistribution::point_mass(service);
    const auto r = simulate_confidence(d, d, always(Server::fog), p);
    // age sweeps [T, T + dG] once per period
    const double conf = std::clamp((a_max - service) / interval, 0.0, 1.0);
    const double mean = service + 0.5 * interval;
    worst = std::max({worst, std::abs(r.confidence - conf), std::abs(r.mean_age - mean) / mean});
  }
  out.require(worst <= 1e-9, fmt("max deviation %.3g", worst));
  if (out.ok) out.detail = fmt("200 cases, max deviation %.3g", worst);
  return out;
}

// 2 ------------------------------------------------------------------------

Outcome riemann_confidence() {
  Outcome out;
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(20), c(20);
    for (auto& x : f) x = uniform_real(rng, 2.0, 60.0);
    for (auto& x : c) x = uniform_real(rng, 20.0, 150.0);
    const auto fog = EmpiricalDistribution::from_samples(f);
    const auto cloud = EmpiricalDistribution::from_samples(c);
    AoiParams p;
    p.interval = uniform_real(rng, 5.0, 40.0);
    p.processing_fog = uniform_real(rng, 0.0, 10.0);
    p.processing_cloud = uniform_real(rng, 0.0, 10.0);
    p.a_max = uniform_real(rng, 10.0, 200.0);
    p.horizon = 1000.0;
    std::vector<Server> choice(4096);
    for (auto& s : choice) s = uniform_real(rng, 0.0, 1.0) < 0.5 ? Server::fog : Server::cloud;
    const ServerPolicy policy = [&](std::size_t i) { return choice[i % choice.size()]; };
    const double warmup = default_warmup(p, fog, cloud);
    const double end = warmup + p.horizon;
    Rng draw = substream(trial, 0);
    const auto traj = compute_trajectory(detail::sample_periodic_log(fog, cloud, policy, p, end, draw), end);
    const double exact = confidence(traj, p.a_max, warmup).value;
    const double dt = 0.01;
    std::size_t inside = 0, steps = 0;
    for (double t = warmup + 0.5 * dt; t < end; t += dt, ++steps) inside += traj.age_at(t) <= p.a_max;
    const double riemann = static_cast<double>(inside) / static_cast<double>(steps);
    worst = std::max(worst, std::abs(exact - riemann));
  }
  out.require(worst <= 1e-3, fmt("max |delta| %.3g", worst));
  if (out.ok) out.detail = fmt("100 logs, max |delta| %.3g", worst);
  return out;
}

// 3 ------------------------------------------------------------------------

// Independent integral of |F - G| over the merged support.
double kr_oracle(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pts(a);
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), x) - s.begin()) / static_cast<double>(s.size());
  };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) total += std::abs(cdf(a, pts[k]) - cdf(b, pts[k])) * (pts[k + 1] - pts[k]);
  return total;
}

std::vector<double> random_samples(Rng& rng, std::size_t n) {
  std::vector<double> s(n);
  const bool integral = uniform_real(rng, 0.0, 1.0) < 0.3;
  for (auto& x : s) x = integral ? std::round(uniform_real(rng, 0.0, 40.0)) : uniform_real(rng, 0.0, 500.0);
  return s;
}

Outcome kr_suite() {
  Outcome out;
  Rng rng(303);
  double worst = 0.0, worst_sorted = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto sa = random_samples(rng, 1 + uniform_index(rng, 50));
    const auto sb = random_samples(rng, 1 + uniform_index(rng, 50));
    const auto sc = random_samples(rng, 1 + uniform_index(rng, 50));
    const auto a = EmpiricalDistribution::from_samples(sa);
    const auto b = EmpiricalDistribution::from_samples(sb);
    const auto c = EmpiricalDistribution::from_samples(sc);
    const double ab = kr_distance(a, b);
    worst = std::max(worst, std::abs(ab - kr_oracle(sa, sb)));
    out.require(kr_distance(a, a) == 0.0, "d(F, F) != 0");
    out.require(std::abs(ab - kr_distance(b, a)) <= 1e-9, "asymmetric");
    out.require(ab >= 0.0, "negative distance");
    out.require(kr_distance(a, c) <= ab + kr_distance(b, c) + 1e-9, "triangle inequality violated");

    const std::size_t n = 1 + uniform_index(rng, 60);
    auto x = random_samples(rng, n), y = random_samples(rng, n);
    const double d = kr_distance(EmpiricalDistribution::from_samples(x), EmpiricalDistribution::from_samples(y));
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double identity = 0.0;
    for (std::size_t i = 0; i < n; ++i) identity += std::abs(x[i] - y[i]);
    worst_sorted = std::max(worst_sorted, std::abs(d - identity / static_cast<double>(n)));
  }
  out.require(worst <= 1e-9, fmt("oracle deviation %.3g", worst));
  out.require(worst_sorted <= 1e-9, fmt("sorted-sample deviation %.3g", worst_sorted));
  if (out.ok) out.detail = fmt("1000 pairs, oracle %.2g, sorted identity %.2g", worst, worst_sorted);
  return out;
}

// 4 ------------------------------------------------------------------------

Outcome planted_clusters() {
  Outcome out;
  const std::vector<double> centres{100.0, 300.0, 500.0};
  double min_ratio = 1e300;
  for (std::uint64_t seed = 0; seed < 20 && out.ok; ++seed) {
    Rng rng = substream(404, seed);
    std::vector<EmpiricalDistribution> items;
    std::vector<std::size_t> truth;
    for (std::size_t k = 0; k < centres.size(); ++k)
      for (int i = 0; i < 10; ++i) {
        const double offset = centres[k] + uniform_real(rng, -5.0, 5.0);
        std::vector<double> s(40);
        for (auto& x : s) x = offset + uniform_real(rng, 0.0, 20.0);
        items.push_back(EmpiricalDistribution::from_samples(s));
        truth.push_back(k);
      }
    // spread: farthest member from its planted mean; separation: closest pair of means
    std::vector<EmpiricalDistribution> means;
    double spread = 0.0;
    for (std::size_t k = 0; k < centres.size(); ++k) {
      std::vector<EmpiricalDistribution> members;
      for (std::size_t i = 0; i < items.size(); ++i)
        if (truth[i] == k) members.push_back(items[i]);
      means.push_back(mean_cdf(std::span<const EmpiricalDistribution>(members)));
      for (const auto& m : members) spread = std::max(spread, kr_distance(m, means.back()));
    }
    double separation = 1e300;
    for (std::size_t i = 0; i < means.size(); ++i)
      for (std::size_t j = i + 1; j < means.size(); ++j) separation = std::min(separation, kr_distance(means[i], means[j]));
    min_ratio = std::min(min_ratio, separation / spread);
    out.require(separation >= 5.0 * spread, fmt("fixture too tight on seed %llu", (unsigned long long)seed));

    const auto r = cluster_distributions(items, 3, 10, seed, {.strict_iterations = true});
    const double ari = adjusted_rand_index(r.labels, truth);
    out.require(ari == 1.0, fmt("seed %llu: ARI %.6f", (unsigned long long)seed, ari));
    for (const auto& it : r.iterations)
      out.require(it.cost_after <= it.cost_before + 1e-9,
                  fmt("seed %llu: cost rose at pass %zu", (unsigned long long)seed, it.iteration));
  }
  if (out.ok) out.detail = fmt("20 seeds, ARI 1, separation/spread >= %.1f", min_ratio);
  return out;
}

// 5 ------------------------------------------------------------------------

Outcome bellman_fixed_point() {
  Outcome out;
  const auto g = fixtures::lattice12();
  out.require(g.num_nodes() == 12 && g.edges().size() <= 30, "fixture shape");
  std::vector<std::vector<double>> reward_sets{fixtures::lattice12_rewards()};
  Rng rng(505);
  for (int k = 0; k < 30; ++k) {
    std::vector<double> r(g.edges().size());
    for (auto& x : r) x = uniform_real(rng, 0.05, 1.0);
    reward_sets.push_back(r);
  }
  double worst_value = 0.0, worst_log = 0.0;
  for (const auto& rewards : reward_sets) {
    RouteEnv env(g, rewards);
    const auto oracle = brute_force_optimal(env);
    const auto vi = value_iteration(env, 1.0);
    const auto route = rollout(env, vi.table.policy(), env.max_steps());
    out.require(route.nodes == oracle.nodes, "greedy route differs from exhaustive search");
    out.require(route.utility == oracle.utility, "route utility differs from exhaustive search");
    worst_value = std::max(worst_value, std::abs(vi.table.value(g.source()) - oracle.utility));
    const auto lc = log_domain_check(env, 1.0);
    out.require(lc.same_greedy_route, "log-domain greedy route differs");
    worst_log = std::max(worst_log, lc.max_discrepancy);
  }
  out.require(worst_value <= 1e-15, fmt("V(source) off by %.3g", worst_value));
  out.require(worst_log <= 1e-9, fmt("log-domain discrepancy %.3g", worst_log));
  if (out.ok)
    out.detail = fmt("31 reward sets, routes identical, |V-U*| %.2g, log %.2g", worst_value, worst_log);
  return out;
}

// 6 ------------------------------------------------------------------------

Outcome q_learning_matches() {
  Outcome out;
  RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
  const auto oracle = brute_force_optimal(env);
  std::vector<int> hit(20, 0);
  parallel_for(20, workers(), [&](std::size_t seed) {
    QLearnConfig cfg;
    cfg.gamma = 1.0;
    cfg.seed = seed;
    const auto r = q_learn(env, cfg);
    hit[seed] = rollout(env, r.table.policy(), env.max_steps()).nodes == oracle.nodes;
  });
  const int matched = std::count(hit.begin(), hit.end(), 1);
  out.require(matched >= 19, fmt("%d/20 seeds match", matched));
  if (out.ok) out.detail = fmt("%d/20 seeds match the oracle", matched);
  return out;
}

// 7 ------------------------------------------------------------------------

Outcome dqn_suite() {
  Outcome out;
  RouteEnv env(fixtures::lattice12(), fixtures::lattice12_rewards());
  const auto& g = env.graph();
  const auto oracle = brute_force_optimal(env);

  double worst_grad = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    Rng rng = substream(707, k);
    Mlp net({g.num_nodes(), 64, 64, g.max_out_degree()}, rng);
    std::vector<HeadTarget> batch(32);
    for (auto& s : batch)
      s = {one_hot(uniform_index(rng, g.num_nodes()), g.num_nodes()), uniform_index(rng, g.max_out_degree()),
           uniform_real(rng, 0.0, 1.0)};
    const auto gc = gradient_check(net, batch);
    worst_grad = std::max(worst_grad, gc.relative_error);
  }
  out.require(worst_grad <= 1e-4, fmt("gradient check %.3g", worst_grad));

  std::vector<int> match(20, 0), beats(20, 0);
  parallel_for(20, workers(), [&](std::size_t seed) {
    TrainerConfig cfg;
    cfg.gamma = 1.0;
    cfg.seed = seed;
    const auto r = train(env, cfg);
    match[seed] = r.greedy_route.nodes == oracle.nodes;
    const auto ev = evaluate(r.net, env, 200, 9000 + seed);
    beats[seed] = ev.mean_utility > ev.random_mean_utility;
  });
  const int matched = std::count(match.begin(), match.end(), 1);
  const int better = std::count(beats.begin(), beats.end(), 1);
  out.require(matched >= 18, fmt("%d/20 seeds match the oracle", matched));
  out.require(better == 20, fmt("%d/20 seeds beat the random baseline", better));
  if (out.ok) out.detail = fmt("grad %.2g, %d/20 match, %d/20 beat random", worst_grad, matched, better);
  return out;
}

// 8 ------------------------------------------------------------------------

Outcome sweep_trends() {
  Outcome out;
  Rng rng(808);
  const LatencyModel fog_model{10.0, std::log(8.0), 0.5}, cloud_model{40.0, std::log(8.0), 0.5};
  std::vector<double> fs_(2000), cs_(2000);
  for (auto& x : fs_) x = fog_model.draw(rng);
  for (auto& x : cs_) x = cloud_model.draw(rng);
  const auto fog = EmpiricalDistribution::from_samples(fs_);
  const auto cloud = EmpiricalDistribution::from_samples(cs_);
  AoiParams p;
  p.horizon = 5000.0;
  p.replications = 32;
  p.seed = 88;
  p.threads = workers();
  p.a_max = 60.0;

  auto se = [](double a, double b) { return 3.0 * std::sqrt(a * a + b * b); };
  const std::vector<double> tau{0, 5, 10, 15, 20, 25, 30};
  const auto delay = sweep(SweepAxis::processing_delay, tau, p, fog, cloud, always(Server::fog));
  for (std::size_t i = 1; i < delay.size(); ++i)
    out.require(delay[i].confidence <= delay[i - 1].confidence + se(delay[i].std_err, delay[i - 1].std_err),
                fmt("confidence rose at tau=%g", delay[i].axis_value));
  const std::vector<double> amax{20, 30, 40, 50, 60, 70, 80};
  const auto tol = sweep(SweepAxis::a_max, amax, p, fog, cloud, always(Server::fog));
  for (std::size_t i = 1; i < tol.size(); ++i)
    out.require(tol[i].confidence + se(tol[i].std_err, tol[i - 1].std_err) >= tol[i - 1].confidence,
                fmt("confidence fell at a_max=%g", tol[i].axis_value));
  const std::vector<double> intervals{80, 40, 20, 10, 5};
  const auto coupled = coupled_interval_sweep(fog, 0.0, intervals, 5000.0, 1000.0, 32, 89);
  for (std::size_t i = 1; i < coupled.size(); ++i)
    out.require(coupled[i].mean_age <= coupled[i - 1].mean_age + se(coupled[i].std_err, coupled[i - 1].std_err),
                fmt("mean age rose at interval %g", coupled[i].interval));
  if (out.ok)
    out.detail = fmt("conf %.3f->%.3f over tau, %.3f->%.3f over a_max, age %.1f->%.1f over interval",
                     delay.front().confidence, delay.back().confidence, tol.front().confidence,
                     tol.back().confidence, coupled.front().mean_age, coupled.back().mean_age);
  return out;
}

// 9 ------------------------------------------------------------------------

Outcome switching() {
  Outcome out;
  Rng rng(909);
  int low = 0, over = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const double interval = std::round(uniform_real(rng, 5.0, 80.0));
    const double t_fog = std::round(uniform_real(rng, 1.0, 60.0));
    const double t_cloud = t_fog + std::round(uniform_real(rng, 1.0, 150.0));
    const auto r = switching_delta(t_fog, t_cloud, interval);
    const double parallelogram = interval * (t_cloud - t_fog);
    if (t_cloud - t_fog <= interval) {
      ++low;
      out.require(!r.overtaking, "unexpected overtaking");
      out.require(r.area_delta == parallelogram,
                  fmt("low frequency: %.17g vs %.17g", r.area_delta, parallelogram));
    } else {
      ++over;
      out.require(r.overtaking, "overtaking not detected");
      out.require(r.area_delta > r.single_parallelogram,
                  fmt("overtaking: %.17g not above %.17g", r.area_delta, r.single_parallelogram));
    }
  }
  out.require(low > 0 && over > 0, "both regimes must be exercised");
  if (out.ok) out.detail = fmt("%d low-frequency exact, %d overtaking strictly larger", low, over);
  return out;
}

// 10 -----------------------------------------------------------------------

Outcome fleet_suite() {
  Outcome out;
  const auto g = fixtures::lattice12();
  const std::size_t n_edges = g.edges().size();
  Rng rng(1010);
  std::size_t fallbacks = 0;
  for (int trial = 0; trial < 500 && out.ok; ++trial) {
    std::vector<double> fog(n_edges), cloud(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) {
      fog[e] = uniform_real(rng, 0.3, 1.0);
      cloud[e] = fog[e] * uniform_real(rng, 0.2, 0.9);
    }
    RewardTable rewards(fog, cloud);
    FogLayout layout;
    for (std::size_t e = 0; e < n_edges; ++e) {
      const auto n = uniform_index(rng, 4);
      layout.edge_node.push_back(n == 3 ? std::nullopt : std::optional<std::size_t>(n));
    }
    layout.capacity = {1 + uniform_index(rng, 2), 1 + uniform_index(rng, 2), 1 + uniform_index(rng, 2)};
    layout.names = {"a", "b", "c"};
    std::vector<Vehicle> vehicles;
    while (vehicles.size() < 4) {
      const auto s = uniform_index(rng, g.num_nodes()), d = uniform_index(rng, g.num_nodes());
      if (s != d && g.reachable(s, d)) vehicles.push_back({vehicles.size() + 1, s, d});
    }
    const auto plan = best_response_plan(g, vehicles, rewards, layout);

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> load;  // (slot, node) -> fog users
    for (const auto& v : plan.vehicles) {
      double u = 1.0;
      for (std::size_t j = 0; j < v.edges.size(); ++j) {
        const auto e = v.edges[j];
        const bool fb = std::find(v.fallbacks.begin(), v.fallbacks.end(), std::pair{e, j}) != v.fallbacks.end();
        fallbacks += fb;
        u *= rewards.reward(e, fb);
        if (layout.edge_node[e] && !fb) ++load[{j, *layout.edge_node[e]}];
      }
      out.require(std::abs(u - v.utility) <= 1e-12 * u, "utility disagrees with fallbacks");
    }
    for (const auto& [key, count] : load)
      out.require(count <= layout.capacity[key.second], fmt("trial %d: capacity violated", trial));

    // a lone vehicle plans exactly like the single-agent oracle
    const auto& v0 = vehicles[0];
    const auto solo = best_response_plan(g, {v0}, rewards, layout);
    RouteEnv env(g.with_endpoints(v0.source, v0.destination), rewards.preferred_rewards());
    const auto oracle = brute_force_optimal(env);
    out.require(solo.vehicles[0].nodes == oracle.nodes, fmt("trial %d: K=1 route differs", trial));
    out.require(std::abs(solo.vehicles[0].utility - oracle.utility) <= 1e-12, "K=1 utility differs");
    out.require(solo.converged, "K=1 did not converge");
  }

  // two vehicles, one fog slot per node: the upper path is better alone
  const auto diamond = fixtures::diamond();
  RewardTable rewards({0.9, 0.95, 0.9, 0.8}, {0.5, 0.5, 0.5, 0.5});
  FogLayout layout{{0, 1, 0, 2}, {1, 1, 1}, {"fog-0", "fog-1", "fog-2"}};
  const auto plan = best_response_plan(diamond, {{1, 0, 3}, {2, 0, 3}}, rewards, layout);
  const std::vector<EdgeRoute> options{{0, 2}, {1, 3}};
  double best = -1e300;
  for (const auto& a : options)
    for (const auto& b : options) {
      FleetPlan p;
      p.vehicles = {{1, {}, a, 1.0, {}}, {2, {}, b, 1.0, {}}};
      score_plan(p, rewards, layout);
      best = std::max(best, total_log_utility(p));
    }
  out.require(plan.converged, "collision fixture did not converge");
  out.require(plan.vehicles[0].edges != plan.vehicles[1].edges, "collision fixture routes overlap");
  out.require(std::abs(total_log_utility(plan) - best) <= 1e-12, "collision fixture misses the joint optimum");
  if (out.ok) out.detail = fmt("500 trials, %zu fallbacks, no overload; K=1 and collision fixture agree", fallbacks);
  return out;
}

// 11 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome pipeline_reproducible(const std::string& cli, const fs::path& work, const fs::path& fixtures) {
  Outcome out;
  const fs::path config = fixtures / "pipeline" / "config.json";
  std::vector<fs::path> runs{work / "run1", work / "run2"};
  for (const auto& dir : runs) {
    fs::remove_all(dir);
    for (const char* cmd : {"synth", "ingest", "cluster", "train", "plan"}) {
      const std::string line = "\"" + cli + "\" " + cmd + " --config \"" + config.string() + "\" --seed 2024 --out \"" +
                               dir.string() + "\" > \"" + (dir.string() + "." + cmd + ".log") + "\" 2>&1";
      const int rc = std::system(line.c_str());
      out.require(rc == 0, std::string(cmd) + " failed");
      if (!out.ok) return out;
    }
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(runs[0])) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::size_t other = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(runs[1])) ++other;
  out.require(other == names.size(), "runs produced different file sets");
  std::size_t bytes = 0;
  for (const auto& n : names) {
    const auto a = slurp(runs[0] / n), b = slurp(runs[1] / n);
    out.require(a == b, n + " differs between runs");
    bytes += a.size();
  }
  out.require(std::find(names.begin(), names.end(), "route.json") != names.end(), "no route produced");
  if (out.ok) out.detail = fmt("%zu files, %zu bytes identical", names.size(), bytes);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string cli, work = "acceptance_work", fixtures_dir;
  std::vector<int> only;
  app.add_option("--cli", cli, "aoifog binary")->required();
  app.add_option("--work", work, "scratch directory");
  app.add_option("--fixtures", fixtures_dir, "fixture directory")->required();
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "closed-form AoI", 1.0, closed_form_aoi},
      {2, "event-driven vs Riemann confidence", 10.0, riemann_confidence},
      {3, "KR metric suite", 10.0, kr_suite},
      {4, "planted 3-cluster recovery", 30.0, planted_clusters},
      {5, "Bellman fixed point", 5.0, bellman_fixed_point},
      {6, "Q-learning vs oracle", 60.0, q_learning_matches},
      {7, "DQN gradients, oracle, baseline", 600.0, dqn_suite},
      {8, "sweep trends", 60.0, sweep_trends},
      {9, "switching delta", 1.0, switching},
      {10, "fleet capacity and reductions", 120.0, fleet_suite},
      {11, "end-to-end reproducibility", 900.0, [&] { return pipeline_reproducible(cli, work, fixtures_dir); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > c.limit_s) o = {false, fmt("took %.2fs, limit %.0fs", secs, c.limit_s)};
    failed += !o.ok;
    std::printf("%s [%2d] %-36s %8.2fs  %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
