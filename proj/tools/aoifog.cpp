// aoifog: command-line front end. Each subcommand reads flat JSON/CSV files
// and writes its artifacts into --out; nothing is written unless the whole
// subcommand succeeds.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <aoifog/aoifog.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace aoifog;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::string read_file(const fs::path& path, ErrorKind kind = ErrorKind::data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string(), kind);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const fs::path& path, ErrorKind kind = ErrorKind::data) {
  try {
    return json::parse(read_file(path, kind));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what(), kind);
  }
}

const std::vector<std::string> kSections{"paths",  "aoi",    "simulate", "sweep",   "scenario", "ingest", "cluster",
                                         "reward", "rewards", "planner", "eval",    "fleet"};

class Context {
 public:
  Context(std::string command, const fs::path& config_path, std::uint64_t seed, unsigned threads, fs::path out)
      : command_(std::move(command)), seed_(seed), threads_(std::max(1u, threads)), out_(std::move(out)) {
    if (!fs::is_regular_file(config_path)) throw Error("config not found: " + config_path.string(), ErrorKind::usage);
    config_ = parse_json(config_path, ErrorKind::usage);
    if (!config_.is_object()) throw Error("config must be a JSON object", ErrorKind::usage);
    for (const auto& [key, _] : config_.items())
      if (std::find(kSections.begin(), kSections.end(), key) == kSections.end())
        throw Error("unknown config section: " + key, ErrorKind::usage);
    config_dir_ = config_path.parent_path();
    digest_ = hex64(fnv1a64(config_.dump()));
  }

  std::uint64_t seed() const { return seed_; }
  unsigned threads() const { return threads_; }

  json section(const std::string& name) const {
    auto it = config_.find(name);
    if (it == config_.end()) return json::object();
    if (!it->is_object()) throw Error("config section " + name + " must be an object", ErrorKind::usage);
    return *it;
  }
  bool has(const std::string& name) const { return config_.contains(name); }
  const json& raw(const std::string& name) const { return config_.at(name); }

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : config_dir_ / p; }

  /// Input file: paths.<key> relative to the config file, else <out>/<fallback>.
  fs::path input(const std::string& key, const std::string& fallback) const {
    const auto paths = section("paths");
    if (paths.contains(key)) return resolve(paths[key].get<std::string>());
    return out_ / fallback;
  }

  json provenance() const { return {{"command", command_}, {"config_digest", digest_}, {"seed", seed_}}; }

  void emit(const std::string& name, json doc) {
    doc["provenance"] = provenance();
    files_[name] = doc.dump(2) + "\n";
  }
  void emit_text(const std::string& name, std::string body) { files_[name] = std::move(body); }

  /// CSV outputs cannot carry provenance inline, so every run also writes
  /// <command>.manifest.json naming its files.
  void commit() {
    json names = json::array();
    for (const auto& [name, _] : files_) names.push_back(name);
    json manifest{{"files", names}};
    emit(command_ + ".manifest.json", manifest);
    fs::create_directories(out_);
    for (const auto& [name, body] : files_) {
      const fs::path tmp = out_ / (name + ".tmp");
      {
        std::ofstream f(tmp, std::ios::binary);
        f << body;
        if (!f) throw Error("cannot write " + tmp.string());
      }
      fs::rename(tmp, out_ / name);
    }
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  unsigned threads_;
  fs::path out_;
  fs::path config_dir_;
  json config_;
  std::string digest_;
  std::map<std::string, std::string> files_;
};

// ---------------------------------------------------------------------------
// Config readers

AoiParams aoi_params(const Context& ctx) {
  const auto a = ctx.section("aoi");
  AoiParams p;
  p.interval = a.value("interval_ms", p.interval);
  p.processing_fog = a.value("processing_fog_ms", p.processing_fog);
  p.processing_cloud = a.value("processing_cloud_ms", p.processing_cloud);
  p.a_max = a.value("a_max_ms", p.a_max);
  p.horizon = a.value("horizon_ms", p.horizon);
  if (a.contains("warmup_ms")) p.warmup = a["warmup_ms"].get<double>();
  p.replications = a.value("replications", p.replications);
  p.seed = ctx.seed();
  p.threads = ctx.threads();
  return p;
}

Grid grid_of(const json& j) {
  Grid g;
  g.min = j.value("min", g.min);
  g.max = j.value("max", g.max);
  g.step = j.value("step", g.step);
  g.validate();
  return g;
}

/// {"point_mass_ms": x} | {"samples": [...]} | {"file": path} | a distribution document.
EmpiricalDistribution distribution_spec(const Context& ctx, const json& spec) {
  if (spec.contains("point_mass_ms")) return EmpiricalDistribution::point_mass(spec["point_mass_ms"].get<double>());
  if (spec.contains("samples")) return EmpiricalDistribution::from_samples(spec["samples"].get<std::vector<double>>());
  if (spec.contains("file")) return distribution_from_json(parse_json(ctx.resolve(spec["file"].get<std::string>())));
  if (spec.contains("cdf")) return distribution_from_json(spec);
  throw Error("distribution needs point_mass_ms, samples, file or cdf", ErrorKind::usage);
}

Server server_of(const std::string& s) {
  if (s == "fog") return Server::fog;
  if (s == "cloud") return Server::cloud;
  throw Error("server must be fog or cloud", ErrorKind::usage);
}

std::pair<EmpiricalDistribution, EmpiricalDistribution> service_distributions(const Context& ctx) {
  const auto s = ctx.section("simulate");
  if (s.contains("region")) {
    const auto map = region_map_from_json(parse_json(ctx.input("region_map", "region_map.json")));
    const auto& c = map.cluster(s["region"].get<std::size_t>());
    return {c.fog, c.cloud};
  }
  if (!s.contains("fog")) throw Error("simulate needs fog (and optionally cloud) or region", ErrorKind::usage);
  auto fog = distribution_spec(ctx, s["fog"]);
  auto cloud = s.contains("cloud") ? distribution_spec(ctx, s["cloud"]) : fog;
  return {std::move(fog), std::move(cloud)};
}

ScenarioConfig scenario(const Context& ctx) {
  if (ctx.has("scenario")) return scenario_from_json(ctx.raw("scenario"));
  return scenario_from_json(parse_json(ctx.input("scenario", "scenario.json")));
}

RegionMap region_map(const Context& ctx) {
  return region_map_from_json(parse_json(ctx.input("region_map", "region_map.json")));
}

RoadGraph road_graph(const Context& ctx) { return graph_from_json(parse_json(ctx.input("graph", "graph.json"))); }

struct Environment {
  RoadGraph graph;
  std::optional<RegionMap> map;
  RewardTable rewards;
  RouteEnv env;
};

/// Graph plus frozen per-edge rewards: explicit "rewards" in the config, else
/// AoI confidence simulated from the region map.
Environment environment(const Context& ctx) {
  auto graph = road_graph(ctx);
  const auto r = ctx.section("reward");
  RewardParams rp;
  rp.aoi = aoi_params(ctx);
  rp.mode = parse_server_mode(r.value("mode", std::string("fog")));
  rp.floor = r.value("floor", rp.floor);
  const auto max_steps = ctx.section("planner").value("max_steps", std::size_t{64});
  if (ctx.has("rewards")) {
    const auto& j = ctx.raw("rewards");
    const auto fog = j.at("fog").get<std::vector<double>>();
    const auto cloud = j.contains("cloud") ? j["cloud"].get<std::vector<double>>() : fog;
    RewardTable table(fog, cloud, rp.mode);
    RouteEnv env(graph, table.preferred_rewards(), max_steps);
    return {graph, std::nullopt, table, env};
  }
  auto map = region_map(ctx);
  graph.resolve_regions(map);
  RewardTable table(graph, map, rp, ctx.seed());
  RouteEnv env(graph, table.preferred_rewards(), max_steps);
  return {graph, map, table, env};
}

std::string planner_kind(const Context& ctx) {
  const auto kind = ctx.section("planner").value("kind", std::string("dqn"));
  if (kind != "dqn" && kind != "q_learning" && kind != "value_iteration")
    throw Error("planner kind must be dqn, q_learning or value_iteration", ErrorKind::usage);
  return kind;
}

TrainerConfig trainer_config(const Context& ctx) {
  auto tc = trainer_config_from_json(ctx.section("planner"));
  tc.seed = ctx.seed();
  tc.validate();
  return tc;
}

QLearnConfig q_config(const Context& ctx) {
  const auto p = ctx.section("planner");
  QLearnConfig q;
  q.gamma = p.value("gamma", q.gamma);
  q.alpha = p.value("alpha", q.alpha);
  q.epsilon.start = p.value("epsilon_start", q.epsilon.start);
  q.epsilon.end = p.value("epsilon_end", q.epsilon.end);
  q.epsilon.decay_fraction = p.value("epsilon_decay_fraction", q.epsilon.decay_fraction);
  q.episodes = p.value("episodes", q.episodes);
  q.initial_q = p.value("initial_q", q.initial_q);
  q.seed = ctx.seed();
  return q;
}

json route_json(const RoadGraph& g, const EpisodeResult& r, const RewardTable& rewards) {
  json servers = json::array();
  for (auto e : r.edges) servers.push_back(to_string(rewards.preferred(e)));
  return {{"route", node_ids(g, r.nodes)}, {"edges", r.edges},         {"servers", servers},
          {"utility", r.utility},          {"reached", r.reached},      {"truncated", r.truncated}};
}

json rewards_json(const RoadGraph& g, const RewardTable& t) {
  json edges = json::array();
  for (std::size_t e = 0; e < t.size(); ++e)
    edges.push_back({{"from", g.nodes()[g.edge(e).from].id}, {"to", g.nodes()[g.edge(e).to].id},
                     {"fog", t.fog(e)}, {"cloud", t.cloud(e)}, {"server", to_string(t.preferred(e))}});
  return {{"edges", edges}};
}

/// Greedy policy from the trained artifact matching the planner kind.
Policy load_policy(const Context& ctx, const RoadGraph& g) {
  if (planner_kind(ctx) == "dqn") {
    auto net = mlp_from_json(parse_json(ctx.input("checkpoint", "checkpoint.json")));
    if (net.layer_sizes().front() != g.num_nodes() || net.layer_sizes().back() < g.max_out_degree())
      throw Error("checkpoint does not match the graph");
    return greedy_policy(net, g);
  }
  return qtable_from_json(parse_json(ctx.input("qtable", "qtable.json")), g).policy();
}

// ---------------------------------------------------------------------------
// Subcommands

void run_synth(Context& ctx) {
  const auto sc = scenario(ctx);
  ctx.emit_text("traces.csv", generate_synthetic_traces(sc, ctx.seed()));
  std::cout << "wrote traces.csv\n";
}

void run_ingest(Context& ctx) {
  const auto in = ctx.section("ingest");
  IngestOptions opts;
  opts.cell_size_m = in.value("cell_size_m", opts.cell_size_m);
  if (in.contains("grid")) opts.grid = grid_of(in["grid"]);
  if (in.contains("origin")) {
    opts.origin = GeoPoint{in["origin"].at("lat").get<double>(), in["origin"].at("lon").get<double>()};
  } else if (ctx.has("scenario") || ctx.section("paths").contains("scenario")) {
    const auto sc = scenario(ctx);
    opts.origin = sc.origin;
    opts.cell_size_m = in.value("cell_size_m", sc.cell_size_m);
  }
  auto res = ingest_csv(ctx.input("traces", "traces.csv").string(), opts);
  auto cells = build_cell_distributions(res.table, in.value("min_samples", std::size_t{100}), opts.grid);
  ctx.emit("ingest_report.json", to_json(res.report));
  ctx.emit("cells.json", to_json(cells));
  std::cout << "accepted " << res.report.accepted << ", rejected " << res.report.rejected_total() << ", cells "
            << cells.cells.size() << " (" << cells.excluded.size() << " excluded)\n";
}

void run_cluster(Context& ctx) {
  const auto c = ctx.section("cluster");
  const auto cells = cell_distributions_from_json(parse_json(ctx.input("cells", "cells.json")));
  SegmentOptions opts;
  opts.server = parse_server_selection(c.value("server", std::string("fog")));
  opts.default_capacity = c.value("default_capacity", opts.default_capacity);
  if (c.contains("capacities")) opts.capacities = c["capacities"].get<std::vector<std::size_t>>();
  opts.threads = ctx.threads();
  const auto res = segment_cells(cells, c.value("R", std::size_t{3}), c.value("M", std::size_t{20}), ctx.seed(), opts);
  ctx.emit("region_map.json", to_json(res.map));
  std::string log = "iteration,cost_before,cost_after,reassigned,repaired\n";
  for (const auto& it : res.iterations)
    log += std::to_string(it.iteration) + "," + format_number(it.cost_before) + "," + format_number(it.cost_after) +
           "," + std::to_string(it.reassigned) + "," + std::to_string(it.repaired) + "\n";
  ctx.emit_text("cluster_log.csv", log);
  std::cout << "R=" << res.map.size() << " over " << res.map.cells.size() << " cells, " << res.iterations.size()
            << " iterations\n";
}

void run_simulate(Context& ctx) {
  const auto s = ctx.section("simulate");
  const auto [fog, cloud] = service_distributions(ctx);
  const auto p = aoi_params(ctx);
  const auto policy = always(server_of(s.value("server", std::string("fog"))));
  const auto r = simulate_confidence(fog, cloud, policy, p);
  ctx.emit("simulation.json", {{"confidence", r.confidence},
                               {"std_err", r.std_err},
                               {"replications", r.replications},
                               {"mean_age", r.mean_age},
                               {"age_variance", r.age_variance},
                               {"warmup", r.warmup},
                               {"nonpositive_tolerance", r.nonpositive_tolerance}});
  if (s.value("trajectory", false)) {
    Rng rng = substream(p.seed, 0);
    const double end = r.warmup + p.horizon;
    const auto log = detail::sample_periodic_log(fog, cloud, policy, p, end, rng);
    ctx.emit_text("trajectory.csv", trajectory_csv(compute_trajectory(log, end)));
  }
  std::cout << "confidence " << format_number(r.confidence) << " +- " << format_number(r.std_err) << "\n";
}

void run_sweep(Context& ctx) {
  const auto s = ctx.section("sweep");
  const auto [fog, cloud] = service_distributions(ctx);
  const auto axis = parse_sweep_axis(s.value("axis", std::string("")));
  std::vector<double> values;
  if (s.contains("values")) {
    values = s["values"].get<std::vector<double>>();
  } else {
    const double from = s.at("from").get<double>(), to = s.at("to").get<double>(), step = s.at("step").get<double>();
    if (!(step > 0.0) || to < from) throw Error("invalid sweep range", ErrorKind::usage);
    for (std::size_t k = 0;; ++k) {
      const double v = from + static_cast<double>(k) * step;
      if (v > to + 1e-9 * step) break;
      values.push_back(v);
    }
  }
  const auto policy = always(server_of(ctx.section("simulate").value("server", std::string("fog"))));
  const auto rows = sweep(axis, values, aoi_params(ctx), fog, cloud, policy);
  ctx.emit_text("sweep.csv", sweep_csv(rows));
  std::cout << rows.size() << " sweep points\n";
}

void run_train(Context& ctx) {
  const auto env = environment(ctx);
  const auto kind = planner_kind(ctx);
  ctx.emit("rewards.json", rewards_json(env.graph, env.rewards));
  EpisodeResult route;
  if (kind == "dqn") {
    const auto tc = trainer_config(ctx);
    const auto r = train(env.env, tc);
    ctx.emit("checkpoint.json", checkpoint_json(r, tc));
    ctx.emit_text("loss.csv", loss_csv(r.losses));
    ctx.emit_text("curve.csv", utility_curve_csv(r.curve));
    route = r.greedy_route;
  } else if (kind == "q_learning") {
    const auto q = q_learn(env.env, q_config(ctx));
    ctx.emit("qtable.json", to_json(q.table, env.graph));
    ctx.emit_text("curve.csv", utility_curve_csv(q.curve));
    route = rollout(env.env, q.table.policy(), env.env.max_steps());
  } else {
    const auto vi = value_iteration(env.env, q_config(ctx).gamma);
    ctx.emit("qtable.json", to_json(vi.table, env.graph));
    route = rollout(env.env, vi.table.policy(), env.env.max_steps());
  }
  std::cout << "greedy route";
  for (auto id : node_ids(env.graph, route.nodes)) std::cout << " " << id;
  std::cout << ", utility " << format_number(route.utility) << "\n";
}

void run_plan(Context& ctx) {
  const auto env = environment(ctx);
  const auto r = rollout(env.env, load_policy(ctx, env.graph), env.env.max_steps());
  ctx.emit("route.json", route_json(env.graph, r, env.rewards));
  if (!r.reached) throw Error("policy does not reach the destination");
  std::cout << "route";
  for (auto id : node_ids(env.graph, r.nodes)) std::cout << " " << id;
  std::cout << ", utility " << format_number(r.utility) << "\n";
}

void run_eval(Context& ctx) {
  const auto env = environment(ctx);
  const auto episodes = ctx.section("eval").value("episodes", std::size_t{100});
  const auto r = evaluate_policy(env.env, load_policy(ctx, env.graph), episodes, ctx.seed());
  ctx.emit("evaluation.json", to_json(r, env.graph));
  std::cout << "mean utility " << format_number(r.mean_utility) << ", random baseline "
            << format_number(r.random_mean_utility) << "\n";
}

void run_fleet(Context& ctx) {
  const auto env = environment(ctx);
  if (!env.map) throw Error("fleet planning needs a region map", ErrorKind::usage);
  const auto f = ctx.section("fleet");
  if (!f.contains("vehicles")) throw Error("fleet needs vehicles", ErrorKind::usage);
  std::vector<Vehicle> vehicles;
  for (const auto& v : f["vehicles"])
    vehicles.push_back({v.at("id").get<std::size_t>(), env.graph.node_index(v.at("source").get<std::int64_t>()),
                       env.graph.node_index(v.at("destination").get<std::int64_t>())});
  FleetOptions opts;
  opts.planner = parse_fleet_planner(f.value("planner", std::string("tabular")));
  opts.max_rounds = f.value("max_rounds", opts.max_rounds);
  opts.max_steps = env.env.max_steps();
  if (opts.planner == FleetPlanner::dqn) opts.trainer = trainer_config(ctx);
  const auto layout = fog_layout(env.graph, *env.map, env.rewards);
  const auto plan = best_response_plan(env.graph, vehicles, env.rewards, layout, opts);
  ctx.emit("fleet_plan.json", to_json(plan, env.graph));
  std::cout << plan.vehicles.size() << " vehicles, " << plan.rounds << " rounds, "
            << (plan.converged ? "converged" : "not converged") << "\n";
}

void run_oracle(Context& ctx) {
  const auto env = environment(ctx);
  const auto o = brute_force_optimal(env.env);
  ctx.emit("oracle.json", {{"route", node_ids(env.graph, o.nodes)},
                           {"edges", o.edges},
                           {"utility", o.utility},
                           {"paths", o.paths}});
  std::cout << "route";
  for (auto id : node_ids(env.graph, o.nodes)) std::cout << " " << id;
  std::cout << "\nutility " << format_number(o.utility) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AoI-aware fog/cloud route planning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out = ".";
  app.add_option("--config", config, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "random seed")->required();
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");

  const std::map<std::string, std::pair<std::string, void (*)(Context&)>> commands{
      {"synth", {"generate synthetic traces from a scenario", run_synth}},
      {"ingest", {"bin traces into per-cell latency distributions", run_ingest}},
      {"cluster", {"segment cells into regions", run_cluster}},
      {"simulate", {"AoI confidence for one configuration", run_simulate}},
      {"sweep", {"AoI confidence along one parameter axis", run_sweep}},
      {"train", {"train a route planner", run_train}},
      {"plan", {"greedy route from a trained planner", run_plan}},
      {"fleet", {"capacity-aware multi-vehicle planning", run_fleet}},
      {"eval", {"evaluate a trained planner against a random baseline", run_eval}},
      {"oracle", {"exhaustive best route", run_oracle}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Context ctx(command, config, seed, threads, out);
    commands.at(command).second(ctx);
    ctx.commit();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::usage ? kExitUsage : kExitData;
  } catch (const json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
