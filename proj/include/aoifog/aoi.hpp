#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distribution.hpp"
#include "error.hpp"
#include "format.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace aoifog {

enum class Server { fog, cloud };

inline std::string_view to_string(Server s) { return s == Server::fog ? "fog" : "cloud"; }

/// One status update: generated at `generation`, answered after RTT plus the
/// chosen server's processing delay.
struct Update {
  double generation = 0.0;
  Server server = Server::fog;
  double rtt = 0.0;
  double processing = 0.0;

  double service() const { return rtt + processing; }
  double delivery() const { return generation + service(); }
};

using UpdateLog = std::vector<Update>;

/// Bootstrap update delivered exactly at t = 0, so that A(0) equals its
/// service time.
inline Update bootstrap_update(Server server, double rtt, double processing) {
  return Update{-(rtt + processing), server, rtt, processing};
}

/// Piecewise-linear age process A(t) = t - W(t) on [0, H].
///
/// Segment k covers [start_k, start_{k+1}) and carries the generation time
/// W of the freshest delivered update; the age grows with slope one inside a
/// segment and drops only where a fresher result arrives.
class AoITrajectory {
 public:
  struct Segment {
    double start;
    double reference;
  };

  AoITrajectory(double horizon, std::vector<Segment> segments)
      : horizon_(horizon), segments_(std::move(segments)) {}

  double horizon() const { return horizon_; }
  const std::vector<Segment>& segments() const { return segments_; }
  double initial_age() const { return -segments_.front().reference; }

  double age_at(double t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double v, const Segment& s) { return v < s.start; });
    if (it != segments_.begin()) --it;
    return t - it->reference;
  }

  /// (t, age just after t) at 0 and at every reset.
  std::vector<std::pair<double, double>> breakpoints() const {
    std::vector<std::pair<double, double>> out;
    out.reserve(segments_.size());
    for (const auto& s : segments_) out.emplace_back(s.start, s.start - s.reference);
    return out;
  }

  /// Applies fn(a, b, W) to every segment piece clipped to [from, to].
  template <typename Fn>
  void for_each_piece(double from, double to, Fn&& fn) const {
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      const double a = std::max(from, segments_[k].start);
      const double b = std::min(to, k + 1 < segments_.size() ? segments_[k + 1].start : horizon_);
      if (b > a) fn(a, b, segments_[k].reference);
    }
  }

  /// Integral of A(t) over [from, to].
  double area(double from, double to) const {
    double total = 0.0;
    for_each_piece(from, to, [&](double a, double b, double w) {
      total += 0.5 * ((b - w) * (b - w) - (a - w) * (a - w));
    });
    return total;
  }

  /// Integral of A(t)^2 over [from, to].
  double area_squared(double from, double to) const {
    double total = 0.0;
    for_each_piece(from, to, [&](double a, double b, double w) {
      const double hb = b - w, ha = a - w;
      total += (hb * hb * hb - ha * ha * ha) / 3.0;
    });
    return total;
  }

  /// Measure of {t in [from, to] : A(t) <= a_max}.
  double time_within(double a_max, double from, double to) const {
    double total = 0.0;
    for_each_piece(from, to, [&](double a, double b, double w) {
      total += std::max(0.0, std::min(b, w + a_max) - a);
    });
    return total;
  }

 private:
  double horizon_;
  std::vector<Segment> segments_;
};

inline void validate_log(const UpdateLog& log) {
  if (log.empty()) throw Error("empty update log");
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& u = log[i];
    if (!std::isfinite(u.generation) || !std::isfinite(u.rtt) || !std::isfinite(u.processing))
      throw Error("non-finite update");
    if (u.rtt < 0.0 || u.processing < 0.0) throw Error("invalid latency");
    if (!(u.service() > 0.0)) throw Error("non-positive service time");
    if (i > 0 && !(u.generation > log[i - 1].generation))
      throw Error("generation times must be strictly increasing");
  }
}

/// Exact A(t) = t - max{G_i : D_i <= t} over [0, H]. Some update must be
/// delivered by t = 0 (the bootstrap convention G_0 = -T_0).
inline AoITrajectory compute_trajectory(const UpdateLog& log, double horizon) {
  if (!(horizon > 0.0)) throw Error("empty horizon");
  validate_log(log);

  bool have_initial = false;
  double reference = 0.0;
  std::vector<std::pair<double, double>> events;  // (delivery, generation)
  events.reserve(log.size());
  for (const auto& u : log) {
    const double d = u.delivery();
    if (d <= 0.0) {
      if (!have_initial || u.generation > reference) reference = u.generation;
      have_initial = true;
    } else if (d <= horizon) {
      events.emplace_back(d, u.generation);
    }
  }
  if (!have_initial) throw Error("no update delivered by t=0 (missing bootstrap update)");

  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<AoITrajectory::Segment> segments{{0.0, reference}};
  for (const auto& [d, g] : events) {
    if (g <= reference) continue;  // stale result
    reference = g;
    if (segments.back().start == d)
      segments.back().reference = g;
    else
      segments.push_back({d, g});
  }
  return AoITrajectory(horizon, std::move(segments));
}

struct Confidence {
  double value = 0.0;
  bool nonpositive_tolerance = false;
};

/// Time-average of the event {A(t) <= a_max} over [window_start, H].
inline Confidence confidence(const AoITrajectory& traj, double a_max, double window_start = 0.0) {
  if (!(window_start < traj.horizon())) throw Error("empty measurement window");
  if (!(a_max > 0.0)) return {0.0, true};
  const double len = traj.horizon() - window_start;
  const double c = traj.time_within(a_max, window_start, traj.horizon()) / len;
  return {std::clamp(c, 0.0, 1.0), false};
}

/// Trajectory export: `t_ms,age_ms` at 0, every reset, and the horizon.
inline std::string trajectory_csv(const AoITrajectory& traj) {
  std::string out = "t_ms,age_ms\n";
  for (const auto& [t, a] : traj.breakpoints())
    out += format_number(t) + "," + format_number(a) + "\n";
  out += format_number(traj.horizon()) + "," + format_number(traj.age_at(traj.horizon())) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo confidence under i.i.d. bootstrap RTTs

/// Server choice per update index (index 0 is the bootstrap update).
using ServerPolicy = std::function<Server(std::size_t)>;

inline ServerPolicy always(Server s) {
  return [s](std::size_t) { return s; };
}

struct AoiParams {
  double interval = 20.0;           // generation interval, ms
  double processing_fog = 0.0;      // ms
  double processing_cloud = 0.0;    // ms
  double a_max = 40.0;              // AoI tolerance, ms
  double horizon = 1000.0;          // measured window length, ms
  std::optional<double> warmup;     // default: 10 * max(interval, mean service)
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline double default_warmup(const AoiParams& p, const EmpiricalDistribution& fog,
                             const EmpiricalDistribution& cloud) {
  return 10.0 * std::max({p.interval, fog.mean() + p.processing_fog,
                          cloud.mean() + p.processing_cloud});
}

struct SimulationResult {
  double confidence = 0.0;
  double std_err = 0.0;
  std::size_t replications = 0;
  double mean_age = 0.0;      // time-average age, averaged over replications
  double age_variance = 0.0;  // time-average variance of A(t), averaged over replications
  double warmup = 0.0;
  bool nonpositive_tolerance = false;
};

namespace detail {

struct ReplicationOutcome {
  double confidence;
  double mean_age;
  double age_variance;
};

inline UpdateLog sample_periodic_log(const EmpiricalDistribution& fog,
                                     const EmpiricalDistribution& cloud, const ServerPolicy& policy,
                                     const AoiParams& p, double end, Rng& rng) {
  UpdateLog log;
  auto draw = [&](std::size_t i, double generation, bool bootstrap) {
    const Server s = policy(i);
    const double rtt = sample(s == Server::fog ? fog : cloud, rng);
    const double proc = s == Server::fog ? p.processing_fog : p.processing_cloud;
    log.push_back(bootstrap ? bootstrap_update(s, rtt, proc) : Update{generation, s, rtt, proc});
  };
  draw(0, 0.0, true);
  for (std::size_t i = 1;; ++i) {
    const double g = static_cast<double>(i - 1) * p.interval;
    if (g > end) break;
    draw(i, g, false);
  }
  return log;
}

}  // namespace detail

inline SimulationResult simulate_confidence(const EmpiricalDistribution& fog,
                                            const EmpiricalDistribution& cloud,
                                            const ServerPolicy& policy, const AoiParams& p) {
  if (p.replications < 1) throw Error("need at least one replication", ErrorKind::usage);
  if (!(p.interval > 0.0)) throw Error("generation interval must be positive", ErrorKind::usage);
  if (!(p.horizon > 0.0)) throw Error("empty horizon");
  if (p.processing_fog < 0.0 || p.processing_cloud < 0.0)
    throw Error("processing delay must be non-negative", ErrorKind::usage);
  const double warmup = p.warmup.value_or(default_warmup(p, fog, cloud));
  if (warmup < 0.0) throw Error("warmup must be non-negative", ErrorKind::usage);
  const double end = warmup + p.horizon;

  std::vector<detail::ReplicationOutcome> outcomes(p.replications);
  std::atomic<bool> warn = false;
  parallel_for(p.replications, p.threads, [&](std::size_t r) {
    Rng rng = substream(p.seed, r);
    const auto log = detail::sample_periodic_log(fog, cloud, policy, p, end, rng);
    const auto traj = compute_trajectory(log, end);
    const auto c = confidence(traj, p.a_max, warmup);
    if (c.nonpositive_tolerance) warn = true;
    const double m = traj.area(warmup, end) / p.horizon;
    const double m2 = traj.area_squared(warmup, end) / p.horizon;
    outcomes[r] = {c.value, m, std::max(0.0, m2 - m * m)};
  });

  SimulationResult res;
  res.replications = p.replications;
  res.warmup = warmup;
  res.nonpositive_tolerance = warn.load();
  const double n = static_cast<double>(p.replications);
  for (const auto& o : outcomes) {
    res.confidence += o.confidence;
    res.mean_age += o.mean_age;
    res.age_variance += o.age_variance;
  }
  res.confidence /= n;
  res.mean_age /= n;
  res.age_variance /= n;
  if (p.replications > 1) {
    double ss = 0.0;
    for (const auto& o : outcomes) ss += (o.confidence - res.confidence) * (o.confidence - res.confidence);
    res.std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Parameter sweeps

enum class SweepAxis { generation_interval, processing_delay, a_max };

inline SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "generation_interval") return SweepAxis::generation_interval;
  if (name == "processing_delay") return SweepAxis::processing_delay;
  if (name == "a_max") return SweepAxis::a_max;
  throw Error("invalid sweep axis", ErrorKind::usage);
}

struct SweepRow {
  double axis_value;
  double confidence;
  double std_err;
  std::size_t replications;
  double mean_age;
  double age_variance;
};

inline AoiParams with_axis(AoiParams p, SweepAxis axis, double v) {
  switch (axis) {
    case SweepAxis::generation_interval: p.interval = v; break;
    case SweepAxis::processing_delay: p.processing_fog = p.processing_cloud = v; break;
    case SweepAxis::a_max: p.a_max = v; break;
  }
  return p;
}

/// One simulate_confidence run per axis value, all with the same base seed.
/// The warm-up is resolved once (over the whole range) so every point shares
/// the same measurement window.
inline std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values,
                                   const AoiParams& base, const EmpiricalDistribution& fog,
                                   const EmpiricalDistribution& cloud, const ServerPolicy& policy) {
  if (values.empty() || !std::is_sorted(values.begin(), values.end()))
    throw Error("invalid sweep range", ErrorKind::usage);
  AoiParams pinned = base;
  if (!pinned.warmup) {
    double w = 0.0;
    for (double v : values) w = std::max(w, default_warmup(with_axis(base, axis, v), fog, cloud));
    pinned.warmup = w;
  }
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    const auto r = simulate_confidence(fog, cloud, policy, with_axis(pinned, axis, v));
    rows.push_back({v, r.confidence, r.std_err, r.replications, r.mean_age, r.age_variance});
  }
  return rows;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "axis_value,confidence,std_err,n_replications\n";
  for (const auto& r : rows)
    out += format_number(r.axis_value) + "," + format_number(r.confidence) + "," +
           format_number(r.std_err) + "," + std::to_string(r.replications) + "\n";
  return out;
}

struct CoupledIntervalRow {
  double interval;
  double mean_age;
  double std_err;
};

/// Shrinking the generation interval under superset coupling: every interval
/// must be an integer multiple of the next (sorted descending); all
/// schedules share the finest schedule's service-time draws, so a finer
/// schedule's deliveries are a superset of any coarser one's.
inline std::vector<CoupledIntervalRow> coupled_interval_sweep(
    const EmpiricalDistribution& dist, double processing, std::span<const double> intervals,
    double horizon, double warmup, std::size_t replications, std::uint64_t seed) {
  if (intervals.empty()) throw Error("invalid sweep range", ErrorKind::usage);
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    if (!(intervals[k] > 0.0)) throw Error("invalid sweep range", ErrorKind::usage);
    if (k > 0) {
      const double q = intervals[k - 1] / intervals[k];
      if (q < 1.0 - 1e-12 || std::abs(q - std::round(q)) > 1e-9)
        throw Error("intervals must be nested multiples", ErrorKind::usage);
    }
  }
  const double finest = intervals.back();
  const double end = warmup + horizon;
  const auto slots = static_cast<std::size_t>(std::floor(end / finest)) + 1;

  std::vector<std::vector<double>> ages(intervals.size(), std::vector<double>(replications));
  for (std::size_t r = 0; r < replications; ++r) {
    Rng rng = substream(seed, r);
    const double t0 = sample(dist, rng) + processing;
    std::vector<double> service(slots);
    for (auto& s : service) s = sample(dist, rng) + processing;
    for (std::size_t k = 0; k < intervals.size(); ++k) {
      const auto stride = static_cast<std::size_t>(std::llround(intervals[k] / finest));
      UpdateLog log{Update{-t0, Server::fog, t0, 0.0}};
      for (std::size_t m = 0; m < slots; m += stride)
        log.push_back({static_cast<double>(m) * finest, Server::fog, service[m], 0.0});
      const auto traj = compute_trajectory(log, end);
      ages[k][r] = traj.area(warmup, end) / horizon;
    }
  }
  std::vector<CoupledIntervalRow> rows;
  const double n = static_cast<double>(replications);
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    double m = 0.0;
    for (double a : ages[k]) m += a;
    m /= n;
    double ss = 0.0;
    for (double a : ages[k]) ss += (a - m) * (a - m);
    rows.push_back({intervals[k], m, replications > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Cloud-to-fog switching of a single update

struct SwitchingResult {
  double area_delta;             // ms^2 of age removed by the switch
  double single_parallelogram;   // interval * (T_cloud - T_fog)
  bool overtaking;               // switched update arrives before its predecessor
};

/// Age area removed by sending one update to fog instead of cloud, with all
/// other updates on cloud. Computed by differencing two exact trajectories.
inline SwitchingResult switching_delta(double t_fog, double t_cloud, double interval) {
  if (!(t_fog > 0.0) || !(interval > 0.0)) throw Error("invalid switching parameters", ErrorKind::usage);
  if (t_fog >= t_cloud) throw Error("no switching gain");

  const auto lag = static_cast<std::size_t>(std::ceil(t_cloud / interval));
  const std::size_t switched = lag + 2;
  const std::size_t last = switched + lag + 2;
  auto build = [&](bool use_fog) {
    UpdateLog log{bootstrap_update(Server::cloud, t_cloud, 0.0)};
    for (std::size_t i = 1; i <= last; ++i) {
      const bool fog = use_fog && i == switched;
      log.push_back({static_cast<double>(i - 1) * interval, fog ? Server::fog : Server::cloud,
                     fog ? t_fog : t_cloud, 0.0});
    }
    return log;
  };
  const double horizon = static_cast<double>(last - 1) * interval + t_cloud;
  const auto base = compute_trajectory(build(false), horizon);
  const auto moved = compute_trajectory(build(true), horizon);

  const double g = static_cast<double>(switched - 1) * interval;
  return {base.area(0.0, horizon) - moved.area(0.0, horizon), interval * (t_cloud - t_fog),
          g + t_fog < g - interval + t_cloud};
}

}  // namespace aoifog
