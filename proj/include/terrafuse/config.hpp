#pragma once

// Scenario configuration: an INI-style document with dotted section names
// ([zone.sand], [device.gps1], [group.13]) and `key = value` entries.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/fusion/runner.hpp"
#include "terrafuse/geo.hpp"
#include "terrafuse/sensors.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

/// Geodetic anchor of the odom frame: the vehicle's initial pose.
struct SiteDatum {
  double lat = 49.0;
  double lon = 8.4;
  double alt = 115.0;
  double yaw_deg = 0.0;
};

/// One row of the sensor-configuration matrix.
struct StudyGroup {
  int id = 0;
  FilterKind filter = FilterKind::ukf;
  std::vector<std::string> devices;
};

struct OutputConfig {
  std::string directory = "runs";
  bool csv = true;
  bool pgm = true;
  bool bin = true;
};

struct ScenarioConfig {
  std::string source_text;
  GroundTruthMap world = default_site();
  double map_resolution = 1.0;
  SiteDatum site;
  WaypointScript script;
  double sim_dt = 0.01;
  std::vector<SensorDevice> devices;
  FilterConfig filter;
  double gate_quantile = 0.999;
  std::vector<StudyGroup> groups;
  std::vector<std::uint64_t> seeds;
  OutputConfig outputs;
  unsigned workers = 0;  // 0 = available parallelism

  const SensorDevice* device(const std::string& name) const {
    for (const auto& d : devices)
      if (d.name == name) return &d;
    return nullptr;
  }

  const StudyGroup* group(int id) const {
    for (const auto& g : groups)
      if (g.id == id) return &g;
    return nullptr;
  }

  OdomFrame odom_frame() const {
    UtmPose pose;
    pose.origin = latlon_to_utm(site.lat, site.lon, site.alt);
    pose.yaw = deg2rad(site.yaw_deg);
    return build_utm_transform(pose);
  }
};

struct GroupSensorCounts {
  int gps = 0, imu = 0, encoder = 0;
};

inline GroupSensorCounts count_sensors(const ScenarioConfig& cfg, const StudyGroup& g) {
  GroupSensorCounts c;
  for (const auto& name : g.devices) {
    const auto* d = cfg.device(name);
    if (!d) continue;
    switch (d->kind()) {
      case SensorKind::gps_position: ++c.gps; break;
      case SensorKind::imu_bundle: ++c.imu; break;
      case SensorKind::encoder_velocity: ++c.encoder; break;
    }
  }
  return c;
}

namespace detail {

using boost::property_tree::ptree;

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) return std::nullopt;
  return v;
}

/// Reads one section, recording violations instead of throwing.
class SectionReader {
 public:
  SectionReader(const ptree& sec, std::string name, std::vector<std::string>& violations)
      : sec_(sec), name_(std::move(name)), violations_(violations) {}

  std::string path(const std::string& key) const { return name_ + "." + key; }
  void fail(const std::string& key, const std::string& msg) { violations_.push_back(path(key) + ": " + msg); }

  bool has(const std::string& key) const { return sec_.find(key) != sec_.not_found(); }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto it = sec_.find(key);
    if (it == sec_.not_found()) return std::nullopt;
    return trim(it->second.data());
  }

  std::string str(const std::string& key, const std::string& def) { return raw(key).value_or(def); }

  std::string required_str(const std::string& key) {
    auto r = raw(key);
    if (!r) fail(key, "missing");
    return r.value_or("");
  }

  double num(const std::string& key, double def) {
    auto r = raw(key);
    if (!r) return def;
    if (auto v = to_double(*r)) return *v;
    fail(key, "expected a number, got '" + *r + "'");
    return def;
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    auto r = raw(key);
    if (!r) return out;
    std::string s = *r;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
      if (auto v = to_double(tok)) {
        out.push_back(*v);
      } else {
        fail(key, "expected numbers, got '" + tok + "'");
        return {};
      }
    }
    return out;
  }

  /// "x y, x y, ..." pairs.
  std::vector<Eigen::Vector2d> points(const std::string& key) {
    std::vector<Eigen::Vector2d> out;
    auto r = raw(key);
    if (!r) return out;
    for (const auto& pair : split(*r, ',')) {
      std::istringstream in(pair);
      std::string a, b, extra;
      in >> a >> b;
      auto x = to_double(a), y = to_double(b);
      if (!x || !y || (in >> extra)) {
        fail(key, "expected 'x y' pairs separated by commas, got '" + pair + "'");
        return {};
      }
      out.emplace_back(*x, *y);
    }
    return out;
  }

  Eigen::Vector3d vec3(const std::string& key, const Eigen::Vector3d& def) {
    if (!has(key)) {
      used_.insert(key);
      return def;
    }
    auto v = numbers(key);
    if (v.size() != 3) {
      fail(key, "expected three numbers");
      return def;
    }
    return {v[0], v[1], v[2]};
  }

  bool flag(const std::string& key, bool def) {
    auto r = raw(key);
    if (!r) return def;
    if (*r == "true" || *r == "1" || *r == "yes") return true;
    if (*r == "false" || *r == "0" || *r == "no") return false;
    fail(key, "expected true/false, got '" + *r + "'");
    return def;
  }

  void reject_unknown_keys() {
    for (const auto& [k, v] : sec_) {
      if (!used_.count(k)) violations_.push_back(path(k) + ": unknown key");
    }
  }

 private:
  const ptree& sec_;
  std::string name_;
  std::vector<std::string>& violations_;
  std::set<std::string> used_;
};

inline void require(bool ok, SectionReader& r, const std::string& key, const std::string& msg) {
  if (!ok) r.fail(key, msg);
}

}  // namespace detail

/// Parses and validates a scenario. Every violation is collected and thrown
/// together as a ValidationError.
inline ScenarioConfig parse_config(const std::string& text) {
  using detail::ptree;
  using detail::SectionReader;
  std::vector<std::string> v;

  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError({"syntax: line " + std::to_string(e.line()) + ": " + e.message()});
  }

  ScenarioConfig cfg;
  cfg.source_text = text;
  const ptree empty;
  auto section = [&](const std::string& name) -> const ptree& {
    auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  // [site]
  {
    SectionReader r(section("site"), "site", v);
    cfg.site.lat = r.num("lat", cfg.site.lat);
    cfg.site.lon = r.num("lon", cfg.site.lon);
    cfg.site.alt = r.num("alt", cfg.site.alt);
    cfg.site.yaw_deg = r.num("yaw_deg", cfg.site.yaw_deg);
    detail::require(cfg.site.lat >= -84.0 && cfg.site.lat <= 84.0, r, "lat", "must lie in [-84, 84]");
    detail::require(cfg.site.lon >= -180.0 && cfg.site.lon < 180.0, r, "lon", "must lie in [-180, 180)");
    r.reject_unknown_keys();
  }

  // [world] and [zone.*]
  Rect extent{-20, -20, 180, 180};
  double default_resistance = 0.02, default_slope = 0.0;
  {
    SectionReader r(section("world"), "world", v);
    if (r.has("extent")) {
      auto e = r.numbers("extent");
      if (e.size() == 4 && e[2] > e[0] && e[3] > e[1]) {
        extent = {e[0], e[1], e[2], e[3]};
      } else {
        r.fail("extent", "expected 'min_x min_y max_x max_y' with max > min");
      }
    }
    default_resistance = r.num("default_resistance", default_resistance);
    default_slope = r.num("default_slope", default_slope);
    cfg.map_resolution = r.num("resolution", cfg.map_resolution);
    detail::require(default_resistance > 0.0 && default_resistance < 1.0, r, "default_resistance",
                    "must lie in (0, 1)");
    detail::require(default_slope >= 0.0 && default_slope < 90.0, r, "default_slope", "must lie in [0, 90)");
    detail::require(cfg.map_resolution > 0.0, r, "resolution", "must be positive");
    r.reject_unknown_keys();
  }
  std::vector<TerrainZone> resistance_zones, slope_zones;
  bool zones_declared = false;

  // [device.*]
  std::uint16_t next_id = 0;
  int gps_index = 0;
  std::set<std::string> device_names;

  for (const auto& [name, sec] : tree) {
    if (name.rfind("zone.", 0) == 0) {
      zones_declared = true;
      SectionReader r(sec, name, v);
      TerrainZone z;
      z.name = name.substr(5);
      const auto layer = r.required_str("layer");
      z.value = r.num("value", 0.0);
      z.boundary = r.points("polygon");
      if (z.boundary.size() < 3) {
        r.fail("polygon", "needs at least three vertices");
      } else if (!polygon_is_simple(z.boundary)) {
        r.fail("polygon", "must be a simple polygon");
      } else {
        for (const auto& p : z.boundary) {
          if (!extent.contains_closed(p.x(), p.y())) {
            r.fail("polygon", "vertex outside the world extent");
            break;
          }
        }
      }
      if (layer == "resistance") {
        detail::require(z.value > 0.0 && z.value < 1.0, r, "value", "resistance must lie in (0, 1)");
        resistance_zones.push_back(z);
      } else if (layer == "slope") {
        detail::require(z.value >= 0.0 && z.value < 90.0, r, "value", "slope must lie in [0, 90)");
        slope_zones.push_back(z);
      } else if (!layer.empty()) {
        r.fail("layer", "expected 'resistance' or 'slope'");
      }
      r.reject_unknown_keys();
    } else if (name.rfind("device.", 0) == 0) {
      SectionReader r(sec, name, v);
      SensorDevice d;
      d.name = name.substr(7);
      d.id = next_id++;
      if (!device_names.insert(d.name).second) r.fail("kind", "device defined more than once");
      const auto kind = r.required_str("kind");
      if (kind == "gps") {
        GpsModel m;
        m.sigma_xy = r.num("sigma_xy", m.sigma_xy);
        m.sigma_z = r.num("sigma_z", m.sigma_z);
        m.rate_hz = r.num("rate_hz", m.rate_hz);
        m.mount_offset = r.vec3("mount", m.mount_offset);
        m.dropout.period = r.num("dropout_period", m.dropout.period);
        m.dropout.outage = r.num("dropout_outage", m.dropout.outage);
        m.dropout.phase = r.num("dropout_phase", 3.3 * gps_index++);
        m.outlier_probability = r.num("outlier_probability", m.outlier_probability);
        m.outlier_offset = r.num("outlier_offset", m.outlier_offset);
        detail::require(m.sigma_xy > 0.0, r, "sigma_xy", "must be positive");
        detail::require(m.sigma_z >= 0.0, r, "sigma_z", "must be non-negative");
        detail::require(m.rate_hz > 0.0, r, "rate_hz", "must be positive");
        detail::require(m.dropout.period > 0.0, r, "dropout_period", "must be positive");
        detail::require(m.dropout.outage >= 0.0 && m.dropout.outage < m.dropout.period, r, "dropout_outage",
                        "must satisfy 0 <= outage < period");
        detail::require(m.outlier_probability >= 0.0 && m.outlier_probability <= 1.0, r, "outlier_probability",
                        "must lie in [0, 1]");
        d.model = m;
      } else if (kind == "imu") {
        ImuModel m;
        m.sigma_orientation = r.num("sigma_orientation", m.sigma_orientation);
        m.sigma_gyro = r.num("sigma_gyro", m.sigma_gyro);
        m.sigma_accel = r.num("sigma_accel", m.sigma_accel);
        m.gyro_bias_walk = r.num("gyro_bias_walk", m.gyro_bias_walk);
        m.accel_bias_walk = r.num("accel_bias_walk", m.accel_bias_walk);
        m.rate_hz = r.num("rate_hz", m.rate_hz);
        m.mount_offset = r.vec3("mount", m.mount_offset);
        detail::require(m.sigma_orientation >= 0.0 && m.sigma_gyro >= 0.0 && m.sigma_accel >= 0.0, r, "sigma_gyro",
                        "noise sigmas must be non-negative");
        detail::require(m.gyro_bias_walk >= 0.0 && m.accel_bias_walk >= 0.0, r, "gyro_bias_walk",
                        "bias walks must be non-negative");
        detail::require(m.rate_hz > 0.0, r, "rate_hz", "must be positive");
        d.model = m;
      } else if (kind == "encoder") {
        EncoderModel m;
        m.sigma_speed_rel = r.num("sigma_speed_rel", m.sigma_speed_rel);
        m.sigma_speed_abs = r.num("sigma_speed_abs", m.sigma_speed_abs);
        m.rate_hz = r.num("rate_hz", m.rate_hz);
        detail::require(m.sigma_speed_rel >= 0.0, r, "sigma_speed_rel", "must be non-negative");
        detail::require(m.sigma_speed_abs >= 0.0, r, "sigma_speed_abs", "must be non-negative");
        detail::require(m.rate_hz > 0.0, r, "rate_hz", "must be positive");
        d.model = m;
      } else if (!kind.empty()) {
        r.fail("kind", "expected gps, imu or encoder, got '" + kind + "'");
      }
      r.reject_unknown_keys();
      cfg.devices.push_back(std::move(d));
    }
  }

  // Without [world] or any zone the built-in site is used.
  if (zones_declared || tree.find("world") != tree.not_found()) {
    try {
      cfg.world = GroundTruthMap(extent, default_resistance, default_slope, resistance_zones, slope_zones);
    } catch (const InvalidArgument& e) {
      v.push_back(std::string("world: ") + e.what());
    }
  }

  // [script]
  {
    SectionReader r(section("script"), "script", v);
    cfg.script.waypoints = r.points("waypoints");
    cfg.script.cruise_speed = r.num("cruise_speed", cfg.script.cruise_speed);
    cfg.script.max_yaw_rate = r.num("max_yaw_rate", cfg.script.max_yaw_rate);
    cfg.script.max_accel = r.num("max_accel", cfg.script.max_accel);
    cfg.script.max_yaw_accel = r.num("max_yaw_accel", cfg.script.max_yaw_accel);
    cfg.script.reach_radius = r.num("reach_radius", cfg.script.reach_radius);
    cfg.script.time_cap = r.num("time_cap", cfg.script.time_cap);
    cfg.sim_dt = r.num("dt", cfg.sim_dt);
    detail::require(cfg.script.waypoints.size() >= 2, r, "waypoints", "needs at least two waypoints");
    for (const auto& w : cfg.script.waypoints) {
      if (!cfg.world.extent().contains(w.x(), w.y())) {
        r.fail("waypoints", "waypoint outside the world extent");
        break;
      }
    }
    detail::require(cfg.script.cruise_speed > 0.0, r, "cruise_speed", "must be positive");
    detail::require(cfg.script.max_yaw_rate >= 0.0, r, "max_yaw_rate", "must be non-negative");
    detail::require(cfg.script.max_accel > 0.0, r, "max_accel", "must be positive");
    detail::require(cfg.script.max_yaw_accel > 0.0, r, "max_yaw_accel", "must be positive");
    detail::require(cfg.sim_dt > 0.0 && cfg.sim_dt <= kMaxVehicleStep, r, "dt", "must lie in (0, 0.1]");
    r.reject_unknown_keys();
  }

  // [filter]
  {
    SectionReader r(section("filter"), "filter", v);
    auto& q = cfg.filter.noise.q_diag;
    const StateVector d = NoiseConfig::defaults();
    const double qp = r.num("q_position", d[kX]);
    const double qa = r.num("q_angle", d[kRoll]);
    const double qv = r.num("q_velocity", d[kVx]);
    const double qw = r.num("q_rate", d[kWx]);
    const double qacc = r.num("q_accel", d[kAx]);
    q << qp, qp, qp, qa, qa, qa, qv, qv, qv, qw, qw, qw, qacc, qacc, qacc;
    if (r.has("q_diag")) {
      auto full = r.numbers("q_diag");
      if (full.size() == kStateDim) {
        for (int i = 0; i < kStateDim; ++i) q[i] = full[static_cast<std::size_t>(i)];
      } else {
        r.fail("q_diag", "expected 15 numbers");
      }
    }
    if ((q.array() < 0.0).any()) r.fail("q_diag", "process noise entries must be non-negative");
    cfg.gate_quantile = r.num("gate_quantile", cfg.gate_quantile);
    if (cfg.gate_quantile > 0.0 && cfg.gate_quantile < 1.0) {
      cfg.filter.gate = GateConfig::chi_square(cfg.gate_quantile);
    } else if (cfg.gate_quantile == 1.0) {
      cfg.filter.gate = GateConfig::disabled();
    } else {
      r.fail("gate_quantile", "must lie in (0, 1], 1 disables gating");
    }
    cfg.filter.output_rate_hz = r.num("output_rate_hz", cfg.filter.output_rate_hz);
    cfg.filter.init.position_var = r.num("init_position_var", cfg.filter.init.position_var);
    cfg.filter.init.angle_var = r.num("init_angle_var", cfg.filter.init.angle_var);
    cfg.filter.init.rate_var = r.num("init_rate_var", cfg.filter.init.rate_var);
    detail::require(cfg.filter.output_rate_hz > 0.0, r, "output_rate_hz", "must be positive");
    detail::require(cfg.filter.init.position_var > 0.0 && cfg.filter.init.angle_var > 0.0 &&
                        cfg.filter.init.rate_var > 0.0,
                    r, "init_position_var", "initial variances must be positive");
    r.reject_unknown_keys();
  }

  // [study] and [group.*]
  {
    SectionReader r(section("study"), "study", v);
    for (double s : r.numbers("seeds")) {
      if (s < 0.0 || s != std::floor(s)) {
        r.fail("seeds", "seeds must be non-negative integers");
        break;
      }
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    detail::require(!cfg.seeds.empty(), r, "seeds", "seed list must not be empty");
    const double workers = r.num("workers", 0.0);
    detail::require(workers >= 0.0, r, "workers", "must be non-negative");
    cfg.workers = static_cast<unsigned>(std::max(0.0, workers));
    r.reject_unknown_keys();
  }
  for (const auto& [name, sec] : tree) {
    if (name.rfind("group.", 0) != 0) continue;
    SectionReader r(sec, name, v);
    StudyGroup g;
    const auto id = detail::to_double(name.substr(6));
    if (!id || *id < 1 || *id != std::floor(*id)) {
      v.push_back(name + ": group id must be a positive integer");
      continue;
    }
    g.id = static_cast<int>(*id);
    const auto kind = r.required_str("filter");
    if (kind == "ekf" || kind == "ukf") {
      g.filter = parse_filter_kind(kind);
    } else if (!kind.empty()) {
      r.fail("filter", "expected ekf or ukf");
    }
    g.devices = detail::split(r.str("devices", ""), ',');
    std::set<std::string> seen;
    for (const auto& dname : g.devices) {
      if (!device_names.count(dname)) r.fail("devices", "unknown device id '" + dname + "'");
      if (!seen.insert(dname).second) r.fail("devices", "device '" + dname + "' listed twice");
    }
    cfg.groups.push_back(g);
    const auto c = count_sensors(cfg, g);
    if (c.gps > 3) r.fail("devices", "at most 3 GPS devices per group");
    if (c.imu > 3) r.fail("devices", "at most 3 IMU devices per group");
    if (c.encoder > 1) r.fail("devices", "at most 1 encoder per group");
    r.reject_unknown_keys();
  }
  std::sort(cfg.groups.begin(), cfg.groups.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  // [outputs]
  {
    SectionReader r(section("outputs"), "outputs", v);
    cfg.outputs.directory = r.str("directory", cfg.outputs.directory);
    cfg.outputs.csv = r.flag("csv", cfg.outputs.csv);
    cfg.outputs.pgm = r.flag("pgm", cfg.outputs.pgm);
    cfg.outputs.bin = r.flag("bin", cfg.outputs.bin);
    r.reject_unknown_keys();
  }

  static const std::set<std::string> known = {"site", "world", "script", "filter", "study", "outputs"};
  for (const auto& [name, sec] : tree) {
    const bool prefixed = name.rfind("zone.", 0) == 0 || name.rfind("device.", 0) == 0 || name.rfind("group.", 0) == 0;
    if (!prefixed && !known.count(name)) v.push_back(name + ": unknown section");
  }

  if (!v.empty()) throw ValidationError(std::move(v));
  return cfg;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ScenarioConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

}  // namespace terrafuse
