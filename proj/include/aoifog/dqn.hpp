#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "route_mdp.hpp"
#include "tabular.hpp"

namespace aoifog {

struct Transition {
  std::size_t state = 0;  // node index
  std::size_t action = 0;
  double reward = 0.0;
  std::size_t next_state = 0;
  bool terminal = false;
};

/// Fixed-capacity ring buffer of transitions; the oldest entry is evicted
/// first.
class ReplayPool {
 public:
  explicit ReplayPool(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error("replay capacity must be positive", ErrorKind::usage);
    data_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }
  bool full() const { return data_.size() == capacity_; }
  std::size_t inserted() const { return inserted_; }

  void push(const Transition& t) {
    if (data_.size() < capacity_)
      data_.push_back(t);
    else
      data_[head_] = t;
    head_ = (head_ + 1) % capacity_;
    ++inserted_;
  }

  /// i-th stored transition, oldest first.
  const Transition& at(std::size_t i) const {
    if (i >= data_.size()) throw Error("replay index out of range");
    return full() ? data_[(head_ + i) % capacity_] : data_[i];
  }

  /// Uniform sample of `count` distinct slots (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    if (count > data_.size()) throw Error("minibatch larger than pool", ErrorKind::usage);
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(count);
    return idx;
  }

  const Transition& slot(std::size_t k) const { return data_.at(k); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::size_t inserted_ = 0;
  std::vector<Transition> data_;
};

struct TrainerConfig {
  double gamma = 0.9;
  EpsilonSchedule epsilon;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t sync_period = 100;  // target network copy every C environment steps
  std::size_t episodes = 5000;
  std::size_t capacity = 1000;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t seed = 0;
  double floor = kRewardFloor;
  std::size_t gradient_check_every = 0;  // test mode; 0 disables

  void validate() const {
    validate_gamma(gamma);
    epsilon.validate();
    if (!(learning_rate > 0.0) || batch_size == 0 || sync_period == 0 || episodes == 0 || capacity == 0)
      throw Error("trainer parameters must be positive", ErrorKind::usage);
    if (batch_size > capacity) throw Error("minibatch larger than replay capacity", ErrorKind::usage);
  }
};

inline nlohmann::json to_json(const TrainerConfig& c) {
  return {{"gamma", c.gamma},
          {"epsilon_start", c.epsilon.start},
          {"epsilon_end", c.epsilon.end},
          {"epsilon_decay_fraction", c.epsilon.decay_fraction},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"sync_period", c.sync_period},
          {"episodes", c.episodes},
          {"capacity", c.capacity},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

inline TrainerConfig trainer_config_from_json(const nlohmann::json& j, TrainerConfig c = {}) {
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon.start = j.value("epsilon_start", c.epsilon.start);
  c.epsilon.end = j.value("epsilon_end", c.epsilon.end);
  c.epsilon.decay_fraction = j.value("epsilon_decay_fraction", c.epsilon.decay_fraction);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.sync_period = j.value("sync_period", c.sync_period);
  c.episodes = j.value("episodes", c.episodes);
  c.capacity = j.value("capacity", c.capacity);
  if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<std::size_t>>();
  c.seed = j.value("seed", c.seed);
  return c;
}

inline std::vector<double> one_hot(std::size_t index, std::size_t size) {
  if (index >= size) throw Error("shape error");
  std::vector<double> v(size, 0.0);
  v[index] = 1.0;
  return v;
}

/// Q-heads of the network for a node; the input must be a one-hot vector.
inline std::vector<double> q_values(const Mlp& net, std::span<const double> state) {
  if (state.size() != net.input_size()) throw Error("shape error");
  std::size_t hot = 0;
  for (double x : state) {
    if (x == 1.0)
      ++hot;
    else if (x != 0.0)
      throw Error("shape error");
  }
  if (hot != 1) throw Error("shape error");
  return net.forward(state);
}

/// Greedy action over the node's legal heads, ties to the lowest index.
inline std::size_t greedy_action(const Mlp& net, const RoadGraph& g, std::size_t node) {
  const auto q = net.forward(one_hot(node, g.num_nodes()));
  std::size_t best = 0;
  for (std::size_t a = 1; a < g.out_degree(node); ++a)
    if (q[a] > q[best]) best = a;
  return best;
}

inline Policy greedy_policy(const Mlp& net, const RoadGraph& g) {
  return [net, g](const RouteState& s) { return greedy_action(net, g, s.node); };
}

/// clamp(max_legal Q(node; target), floor, 1)^gamma; a dead end counts as floor.
inline double bootstrap_tail(const Mlp& target_net, const RoadGraph& g, std::size_t node, double gamma,
                             double floor) {
  double best = floor;
  const std::size_t legal = g.out_degree(node);
  if (legal > 0) {
    const auto q = target_net.forward(one_hot(node, g.num_nodes()));
    best = *std::max_element(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(legal));
  }
  return std::pow(std::clamp(best, floor, 1.0), gamma);
}

/// Training target y = r * clamp(max_legal Q(s'; target), floor, 1)^gamma,
/// or y = r when s' terminates.
inline double dqn_target(const Mlp& target_net, const RoadGraph& g, const Transition& t, double gamma,
                         double floor) {
  if (t.terminal) return t.reward;
  return t.reward * bootstrap_tail(target_net, g, t.next_state, gamma, floor);
}

struct LossRecord {
  std::size_t step;
  double loss;
  double epsilon;
};

struct TrainResult {
  Mlp net;
  Mlp target_net;
  std::vector<LossRecord> losses;
  std::vector<double> curve;  // per-episode utility
  EpisodeResult greedy_route;
  std::size_t steps = 0;
  double max_gradient_error = 0.0;  // only with gradient_check_every
};

/// DQN with experience replay and a periodically synchronised target
/// network. RNG draws per step, in order: exploration test, random action
/// (when exploring), minibatch indices (once the pool is full).
inline TrainResult train(const RouteEnv& env, const TrainerConfig& cfg) {
  cfg.validate();
  const auto& g = env.graph();
  const std::size_t actions = std::max<std::size_t>(1, g.max_out_degree());
  std::vector<std::size_t> sizes{g.num_nodes()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(actions);

  Rng rng(splitmix64(cfg.seed));
  TrainResult res{Mlp(sizes, rng), Mlp(), {}, {}, {}, 0, 0.0};
  res.target_net = res.net;
  ReplayPool pool(cfg.capacity);
  std::vector<HeadTarget> batch(cfg.batch_size);
  std::vector<std::optional<double>> target_cache(g.num_nodes());  // bootstrap tails under the current target

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
        a = greedy_action(res.net, g, s.node);
      const auto st = episode_env.step(s, a);
      utility *= st.reward;
      pool.push({s.node, a, st.reward, st.next.node, st.terminal});

      if (pool.full()) {
        const auto idx = pool.sample_indices(cfg.batch_size, rng);
        for (std::size_t b = 0; b < idx.size(); ++b) {
          const auto& t = pool.slot(idx[b]);
          double y = t.reward;
          if (!t.terminal) {
            auto& tail = target_cache[t.next_state];
            if (!tail) tail = bootstrap_tail(res.target_net, g, t.next_state, cfg.gamma, cfg.floor);
            y *= *tail;
          }
          batch[b] = {one_hot(t.state, g.num_nodes()), t.action, y};
        }
        if (cfg.gradient_check_every > 0 && res.steps % cfg.gradient_check_every == 0)
          res.max_gradient_error = std::max(res.max_gradient_error, gradient_check(res.net, batch).relative_error);
        const auto bw = backward(res.net, batch);
        sgd_step(res.net, bw.grads, cfg.learning_rate);
        if (!res.net.finite()) throw Error("non-finite network parameters at step " + std::to_string(res.steps));
        res.losses.push_back({res.steps, bw.loss, eps});
      }
      ++res.steps;
      if (res.steps % cfg.sync_period == 0) {
        res.target_net = res.net;
        std::fill(target_cache.begin(), target_cache.end(), std::nullopt);
      }
      s = st.next;
    }
    res.curve.push_back(utility);
  }
  res.greedy_route = rollout(env, greedy_policy(res.net, g), env.max_steps());
  return res;
}

struct EvaluationResult {
  double mean_utility = 0.0;
  std::map<std::vector<std::int64_t>, std::size_t> routes;  // node-id sequence -> count
  double random_mean_utility = 0.0;
  double random_std_err = 0.0;
  std::size_t episodes = 0;
};

/// Greedy rollouts of `policy` and a uniform-random baseline on matched
/// per-episode seeds.
inline EvaluationResult evaluate_policy(const RouteEnv& env, const Policy& policy, std::size_t episodes,
                                        std::uint64_t seed) {
  if (episodes == 0) throw Error("need at least one evaluation episode", ErrorKind::usage);
  EvaluationResult out;
  out.episodes = episodes;
  const auto& g = env.graph();
  std::vector<double> random_u(episodes);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    const RouteEnv e = env.for_episode(ep);
    const auto r = rollout(e, policy, e.max_steps());
    out.mean_utility += r.utility;
    ++out.routes[node_ids(g, r.nodes)];
    Rng rng = substream(seed, ep);
    const auto b = rollout(
        e, [&](const RouteState& s) { return uniform_index(rng, g.out_degree(s.node)); }, e.max_steps());
    random_u[ep] = b.utility;
  }
  const double n = static_cast<double>(episodes);
  out.mean_utility /= n;
  for (double u : random_u) out.random_mean_utility += u;
  out.random_mean_utility /= n;
  if (episodes > 1) {
    double ss = 0.0;
    for (double u : random_u) ss += (u - out.random_mean_utility) * (u - out.random_mean_utility);
    out.random_std_err = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

inline EvaluationResult evaluate(const Mlp& net, const RouteEnv& env, std::size_t episodes, std::uint64_t seed) {
  return evaluate_policy(env, greedy_policy(net, env.graph()), episodes, seed);
}

inline nlohmann::json to_json(const EvaluationResult& r, const RoadGraph&) {
  nlohmann::json routes = nlohmann::json::array();
  for (const auto& [ids, count] : r.routes) routes.push_back({{"route", ids}, {"count", count}});
  return {{"mean_utility", r.mean_utility},
          {"random_mean_utility", r.random_mean_utility},
          {"random_std_err", r.random_std_err},
          {"episodes", r.episodes},
          {"routes", routes}};
}

inline nlohmann::json checkpoint_json(const TrainResult& r, const TrainerConfig& cfg) {
  auto j = to_json(r.net);
  j["kind"] = "dqn";
  j["config"] = to_json(cfg);
  j["step"] = r.steps;
  return j;
}

inline std::string loss_csv(std::span<const LossRecord> losses) {
  std::string out = "step,loss,epsilon\n";
  for (const auto& l : losses)
    out += std::to_string(l.step) + "," + format_number(l.loss) + "," + format_number(l.epsilon) + "\n";
  return out;
}

}  // namespace aoifog
