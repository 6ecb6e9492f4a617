#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "distribution.hpp"
#include "error.hpp"
#include "format.hpp"
#include "rng.hpp"

namespace aoifog {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr std::int64_t kDefaultPayloadBytes = 996;
inline constexpr std::string_view kTraceHeader =
    "timestamp_ms,lat,lon,speed_mps,rtt_fog_ms,rtt_cloud_ms,payload_bytes";

struct CellIndex {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Local equirectangular projection around an origin, plus cell binning.
struct Projection {
  GeoPoint origin;
  double cell_size_m = 50.0;

  static double rad(double deg) { return deg * std::numbers::pi / 180.0; }

  std::pair<double, double> to_local(double lat, double lon) const {
    return {kEarthRadiusM * rad(lon - origin.lon) * std::cos(rad(origin.lat)),
            kEarthRadiusM * rad(lat - origin.lat)};
  }

  GeoPoint to_geo(double x, double y) const {
    const double deg = 180.0 / std::numbers::pi;
    return {origin.lat + y / kEarthRadiusM * deg,
            origin.lon + x / (kEarthRadiusM * std::cos(rad(origin.lat))) * deg};
  }

  CellIndex cell_of(double lat, double lon) const {
    const auto [x, y] = to_local(lat, lon);
    return {static_cast<std::int64_t>(std::floor(x / cell_size_m)),
            static_cast<std::int64_t>(std::floor(y / cell_size_m))};
  }
};

struct TraceRecord {
  std::int64_t timestamp_ms = 0;
  double lat = 0.0;
  double lon = 0.0;
  double speed_mps = 0.0;
  std::optional<double> rtt_fog_ms;    // absent on ping loss
  std::optional<double> rtt_cloud_ms;
  std::int64_t payload_bytes = kDefaultPayloadBytes;
};

struct CellSamples {
  std::vector<double> fog;
  std::vector<double> cloud;
  std::size_t record_count = 0;
};

struct CellTable {
  Projection projection;
  std::map<CellIndex, CellSamples> cells;
};

struct IngestReport {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected;  // reason -> count
  std::size_t cells = 0;
  std::size_t clipped = 0;

  std::size_t rejected_total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : rejected) n += c;
    return n;
  }
};

inline nlohmann::json to_json(const IngestReport& r) {
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& [reason, count] : r.rejected)
    rejected.push_back({{"reason", reason}, {"count", count}});
  return {{"accepted", r.accepted}, {"rejected", rejected}, {"cells", r.cells}, {"clipped", r.clipped}};
}

struct IngestOptions {
  double cell_size_m = 50.0;
  std::optional<GeoPoint> origin;  // default: first accepted record
  Grid grid;                       // used to count samples that will be clipped
};

struct IngestResult {
  CellTable table;
  IngestReport report;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

/// Reads a trace CSV and bins accepted records into cells. Bad rows are
/// rejected with a reason and never abort the file.
inline IngestResult ingest_csv(std::istream& in, const IngestOptions& opts) {
  if (!(opts.cell_size_m > 0.0)) throw Error("cell size must be positive", ErrorKind::usage);
  std::string line;
  if (!std::getline(in, line)) throw Error("schema error: missing header");

  const auto header = detail::split_csv(line);
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  std::size_t idx[6];
  const char* mandatory[6] = {"timestamp_ms", "lat", "lon", "speed_mps", "rtt_fog_ms", "rtt_cloud_ms"};
  for (int k = 0; k < 6; ++k) {
    auto c = column(mandatory[k]);
    if (!c) throw Error(std::string("schema error: missing column ") + mandatory[k]);
    idx[k] = *c;
  }
  const auto payload_col = column("payload_bytes");

  IngestResult result;
  auto& report = result.report;
  result.table.projection.cell_size_m = opts.cell_size_m;
  std::optional<GeoPoint> origin = opts.origin;
  if (origin) result.table.projection.origin = *origin;
  std::optional<std::int64_t> last_ts;

  auto reject = [&](const char* reason) { ++report.rejected[reason]; };
  auto clip = [&](double v) {
    if (v > opts.grid.max || v < opts.grid.min) ++report.clipped;
  };

  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++report.total;
    const auto f = detail::split_csv(line);
    if (f.size() < header.size()) {
      reject("unparseable row");
      continue;
    }
    TraceRecord r;
    bool ok = detail::parse_number(f[idx[0]], r.timestamp_ms) && detail::parse_number(f[idx[1]], r.lat) &&
              detail::parse_number(f[idx[2]], r.lon) && detail::parse_number(f[idx[3]], r.speed_mps);
    double v;
    for (int k : {4, 5}) {
      if (f[idx[k]].empty()) continue;
      if (!detail::parse_number(f[idx[k]], v)) {
        ok = false;
        break;
      }
      (k == 4 ? r.rtt_fog_ms : r.rtt_cloud_ms) = v;
    }
    if (ok && payload_col && !f[*payload_col].empty())
      ok = detail::parse_number(f[*payload_col], r.payload_bytes);
    if (!ok) {
      reject("unparseable row");
      continue;
    }
    if (!std::isfinite(r.lat) || !std::isfinite(r.lon) || r.lat < -90.0 || r.lat > 90.0 ||
        r.lon < -180.0 || r.lon > 180.0) {
      reject("invalid coordinates");
      continue;
    }
    if (!std::isfinite(r.speed_mps) || r.speed_mps < 0.0) {
      reject("invalid speed");
      continue;
    }
    auto bad_rtt = [](const std::optional<double>& x) { return x && !(std::isfinite(*x) && *x > 0.0); };
    if (bad_rtt(r.rtt_fog_ms) || bad_rtt(r.rtt_cloud_ms)) {
      reject("invalid latency");
      continue;
    }
    if (last_ts && r.timestamp_ms < *last_ts) {
      reject("timestamp out of order");
      continue;
    }
    last_ts = r.timestamp_ms;
    if (!origin) {
      origin = GeoPoint{r.lat, r.lon};
      result.table.projection.origin = *origin;
    }
    ++report.accepted;
    auto& cell = result.table.cells[result.table.projection.cell_of(r.lat, r.lon)];
    ++cell.record_count;
    if (r.rtt_fog_ms) {
      cell.fog.push_back(*r.rtt_fog_ms);
      clip(*r.rtt_fog_ms);
    }
    if (r.rtt_cloud_ms) {
      cell.cloud.push_back(*r.rtt_cloud_ms);
      clip(*r.rtt_cloud_ms);
    }
  }
  report.cells = result.table.cells.size();
  return result;
}

inline IngestResult ingest_csv(const std::string& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file " + path);
  return ingest_csv(in, opts);
}

struct CellPair {
  EmpiricalDistribution fog;
  EmpiricalDistribution cloud;
};

struct ExcludedCell {
  CellIndex cell;
  std::size_t fog_samples;
  std::size_t cloud_samples;
};

struct CellDistributions {
  Projection projection;
  std::map<CellIndex, CellPair> cells;
  std::vector<ExcludedCell> excluded;
};

/// Per-cell fog/cloud distributions; cells short of `min_samples` for
/// either server are excluded and listed.
inline CellDistributions build_cell_distributions(const CellTable& table, std::size_t min_samples,
                                                  const Grid& grid = {}) {
  CellDistributions out;
  out.projection = table.projection;
  for (const auto& [cell, s] : table.cells) {
    if (s.fog.size() < min_samples || s.cloud.size() < min_samples || s.fog.empty() || s.cloud.empty()) {
      out.excluded.push_back({cell, s.fog.size(), s.cloud.size()});
      continue;
    }
    out.cells.emplace(cell, CellPair{EmpiricalDistribution::from_samples(s.fog, grid),
                                     EmpiricalDistribution::from_samples(s.cloud, grid)});
  }
  if (out.cells.empty()) throw Error("no coverage");
  return out;
}

inline nlohmann::json to_json(const CellDistributions& cd) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [c, p] : cd.cells)
    cells.push_back({{"ix", c.ix}, {"iy", c.iy}, {"fog", to_json(p.fog)}, {"cloud", to_json(p.cloud)}});
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& e : cd.excluded)
    excluded.push_back({{"ix", e.cell.ix}, {"iy", e.cell.iy}, {"fog_samples", e.fog_samples},
                        {"cloud_samples", e.cloud_samples}});
  return {{"cell_size_m", cd.projection.cell_size_m},
          {"origin", {{"lat", cd.projection.origin.lat}, {"lon", cd.projection.origin.lon}}},
          {"cells", cells},
          {"excluded", excluded}};
}

inline CellDistributions cell_distributions_from_json(const nlohmann::json& j) {
  try {
    CellDistributions cd;
    cd.projection.cell_size_m = j.at("cell_size_m").get<double>();
    cd.projection.origin = {j.at("origin").at("lat").get<double>(), j.at("origin").at("lon").get<double>()};
    for (const auto& c : j.at("cells"))
      cd.cells.emplace(CellIndex{c.at("ix").get<std::int64_t>(), c.at("iy").get<std::int64_t>()},
                       CellPair{distribution_from_json(c.at("fog")), distribution_from_json(c.at("cloud"))});
    if (j.contains("excluded"))
      for (const auto& e : j.at("excluded"))
        cd.excluded.push_back({{e.at("ix").get<std::int64_t>(), e.at("iy").get<std::int64_t>()},
                               e.at("fog_samples").get<std::size_t>(), e.at("cloud_samples").get<std::size_t>()});
    if (cd.cells.empty()) throw Error("no coverage");
    return cd;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed cell document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic traces

/// Shifted lognormal latency: shift + exp(mu + sigma * Z), in ms.
struct LatencyModel {
  double shift_ms = 0.0;
  double mu = 0.0;
  double sigma = 1.0;

  double mean() const { return shift_ms + std::exp(mu + 0.5 * sigma * sigma); }
  double variance() const {
    const double s2 = sigma * sigma;
    return (std::exp(s2) - 1.0) * std::exp(2.0 * mu + s2);
  }
  double draw(Rng& rng) const { return shift_ms + std::exp(mu + sigma * standard_normal(rng)); }
};

struct CellRect {
  std::int64_t ix0, iy0, ix1, iy1;  // inclusive bounds
  bool contains(CellIndex c) const { return c.ix >= ix0 && c.ix <= ix1 && c.iy >= iy0 && c.iy <= iy1; }
};

struct ScenarioRegion {
  LatencyModel fog;
  LatencyModel cloud;
  std::vector<CellRect> cells;
};

/// Synthetic measurement campaign. JSON keys:
///   origin {lat, lon}, cell_size_m, sample_rate_hz, start_timestamp_ms,
///   payload_bytes, loss_probability, default_region,
///   regions [{fog {shift_ms, mu, sigma}, cloud {...}, cells [[ix0,iy0,ix1,iy1]...]}],
///   path {waypoints_m [[x,y]...], speed_mps, laps}
struct ScenarioConfig {
  GeoPoint origin{30.5, 114.4};
  double cell_size_m = 50.0;
  double sample_rate_hz = 10.0;
  std::int64_t start_timestamp_ms = 1'600'000'000'000;
  std::int64_t payload_bytes = kDefaultPayloadBytes;
  double loss_probability = 0.0;
  std::size_t default_region = 0;
  std::vector<ScenarioRegion> regions;
  std::vector<std::pair<double, double>> waypoints_m;
  double speed_mps = 5.0;
  std::size_t laps = 1;

  Projection projection() const { return {origin, cell_size_m}; }

  std::size_t region_of(CellIndex c) const {
    for (std::size_t r = 0; r < regions.size(); ++r)
      for (const auto& rect : regions[r].cells)
        if (rect.contains(c)) return r;
    return default_region;
  }

  void validate() const {
    auto bad = [](const LatencyModel& m) { return !(m.shift_ms >= 0.0) || !(m.sigma > 0.0) || !std::isfinite(m.mu); };
    if (regions.empty() || default_region >= regions.size()) throw Error("invalid scenario");
    for (const auto& r : regions)
      if (bad(r.fog) || bad(r.cloud)) throw Error("invalid scenario");
    if (!(cell_size_m > 0.0) || !(sample_rate_hz > 0.0) || !(speed_mps > 0.0) ||
        !(loss_probability >= 0.0 && loss_probability < 1.0))
      throw Error("invalid scenario");
  }
};

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  try {
    ScenarioConfig s;
    if (j.contains("origin")) s.origin = {j["origin"].at("lat").get<double>(), j["origin"].at("lon").get<double>()};
    s.cell_size_m = j.value("cell_size_m", s.cell_size_m);
    s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
    s.start_timestamp_ms = j.value("start_timestamp_ms", s.start_timestamp_ms);
    s.payload_bytes = j.value("payload_bytes", s.payload_bytes);
    s.loss_probability = j.value("loss_probability", s.loss_probability);
    s.default_region = j.value("default_region", s.default_region);
    auto model = [](const nlohmann::json& m) {
      return LatencyModel{m.at("shift_ms").get<double>(), m.at("mu").get<double>(), m.at("sigma").get<double>()};
    };
    for (const auto& r : j.at("regions")) {
      ScenarioRegion region{model(r.at("fog")), model(r.at("cloud")), {}};
      if (r.contains("cells"))
        for (const auto& c : r["cells"])
          region.cells.push_back({c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>(),
                                  c.at(2).get<std::int64_t>(), c.at(3).get<std::int64_t>()});
      s.regions.push_back(std::move(region));
    }
    const auto& path = j.at("path");
    for (const auto& w : path.at("waypoints_m")) s.waypoints_m.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
    s.speed_mps = path.value("speed_mps", s.speed_mps);
    s.laps = path.value("laps", s.laps);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid scenario: ") + e.what());
  }
}

/// Writes a trace CSV for a vehicle driving the scenario path. Region
/// membership is decided on the coordinates exactly as printed, so ingestion
/// bins every row into the cell whose model produced it.
inline std::string generate_synthetic_traces(const ScenarioConfig& sc, std::uint64_t seed) {
  sc.validate();
  std::string out(kTraceHeader);
  out += '\n';

  double lap_length = 0.0;
  for (std::size_t i = 1; i < sc.waypoints_m.size(); ++i)
    lap_length += std::hypot(sc.waypoints_m[i].first - sc.waypoints_m[i - 1].first,
                             sc.waypoints_m[i].second - sc.waypoints_m[i - 1].second);
  const double duration_s = lap_length * static_cast<double>(sc.laps) / sc.speed_mps;
  if (!(duration_s > 0.0)) return out;

  const auto proj = sc.projection();
  auto position = [&](double dist) {
    dist = std::fmod(dist, lap_length);
    for (std::size_t i = 1; i < sc.waypoints_m.size(); ++i) {
      const auto [x0, y0] = sc.waypoints_m[i - 1];
      const auto [x1, y1] = sc.waypoints_m[i];
      const double seg = std::hypot(x1 - x0, y1 - y0);
      if (dist <= seg && seg > 0.0) return std::pair{x0 + (x1 - x0) * dist / seg, y0 + (y1 - y0) * dist / seg};
      dist -= seg;
    }
    return sc.waypoints_m.back();
  };
  auto fixed9 = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return std::string(buf);
  };

  Rng rng(splitmix64(seed));
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) / sc.sample_rate_hz;
    if (t >= duration_s) break;
    const auto [x, y] = position(t * sc.speed_mps);
    const GeoPoint g = proj.to_geo(x, y);
    const std::string lat = fixed9(g.lat), lon = fixed9(g.lon);
    double plat = 0.0, plon = 0.0;
    detail::parse_number(lat, plat);
    detail::parse_number(lon, plon);
    const auto& region = sc.regions[sc.region_of(proj.cell_of(plat, plon))];
    const double fog = region.fog.draw(rng);
    const double cloud = region.cloud.draw(rng);
    bool fog_lost = false, cloud_lost = false;
    if (sc.loss_probability > 0.0) {
      fog_lost = uniform01(rng) < sc.loss_probability;
      cloud_lost = uniform01(rng) < sc.loss_probability;
    }
    out += std::to_string(sc.start_timestamp_ms + std::llround(t * 1000.0)) + "," + lat + "," + lon + "," +
           format_number(sc.speed_mps) + "," + (fog_lost ? "" : format_number(fog)) + "," +
           (cloud_lost ? "" : format_number(cloud)) + "," + std::to_string(sc.payload_bytes) + "\n";
  }
  return out;
}

}  // namespace aoifog
