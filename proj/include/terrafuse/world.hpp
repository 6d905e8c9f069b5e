#pragma once

// Ground-truth terrain (resistance and slope zones) and the kinematic vehicle
// that produces ground-truth trajectories from waypoint scripts.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/geo.hpp"

namespace terrafuse {

using Polygon = std::vector<Eigen::Vector2d>;

struct Rect {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  bool contains(double x, double y) const { return x >= min_x && x < max_x && y >= min_y && y < max_y; }
  bool contains_closed(double x, double y) const { return x >= min_x && x <= max_x && y >= min_y && y <= max_y; }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

/// Crossing-number test. Edges are half-open, so for an axis-aligned
/// rectangle the covered set is [min_x, max_x) x [min_y, max_y) and two zones
/// sharing an edge never both claim a point on it.
inline bool point_in_polygon(const Polygon& poly, double x, double y) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > y) != (b.y() > y)) {
      const double x_cross = (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x();
      if (x < x_cross) inside = !inside;
    }
  }
  return inside;
}

namespace detail {

inline double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

inline bool on_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
  return std::min(p.x(), r.x()) <= q.x() && q.x() <= std::max(p.x(), r.x()) && std::min(p.y(), r.y()) <= q.y() &&
         q.y() <= std::max(p.y(), r.y());
}

inline bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                               const Eigen::Vector2d& q2) {
  const double d1 = cross2(q1, q2, p1), d2 = cross2(q1, q2, p2);
  const double d3 = cross2(p1, p2, q1), d4 = cross2(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(q1, p1, q2)) return true;
  if (d2 == 0 && on_segment(q1, p2, q2)) return true;
  if (d3 == 0 && on_segment(p1, q1, p2)) return true;
  if (d4 == 0 && on_segment(p1, q2, p2)) return true;
  return false;
}

}  // namespace detail

/// True when no two non-adjacent edges touch.
inline bool polygon_is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (detail::segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

/// One terrain region. `value` is a rolling-resistance coefficient on the
/// resistance layer and a slope in degrees on the slope layer.
struct TerrainZone {
  std::string name;
  Polygon boundary;
  double value = 0.0;
};

struct GroundSample {
  double resistance = 0.0;
  double slope_deg = 0.0;
};

class GroundTruthMap {
 public:
  GroundTruthMap(Rect extent, double default_resistance, double default_slope,
                 std::vector<TerrainZone> resistance_zones, std::vector<TerrainZone> slope_zones)
      : extent_(extent),
        default_resistance_(default_resistance),
        default_slope_(default_slope),
        resistance_zones_(std::move(resistance_zones)),
        slope_zones_(std::move(slope_zones)) {
    validate();
  }

  const Rect& extent() const { return extent_; }
  double default_resistance() const { return default_resistance_; }
  double default_slope() const { return default_slope_; }
  const std::vector<TerrainZone>& resistance_zones() const { return resistance_zones_; }
  const std::vector<TerrainZone>& slope_zones() const { return slope_zones_; }

  /// First zone in list order wins, independently per layer.
  GroundSample sample(double x, double y) const {
    GroundSample s{default_resistance_, default_slope_};
    if (!extent_.contains(x, y)) return s;
    if (const auto* z = first_containing(resistance_zones_, x, y)) s.resistance = z->value;
    if (const auto* z = first_containing(slope_zones_, x, y)) s.slope_deg = z->value;
    return s;
  }

 private:
  static const TerrainZone* first_containing(const std::vector<TerrainZone>& zones, double x, double y) {
    for (const auto& z : zones) {
      if (point_in_polygon(z.boundary, x, y)) return &z;
    }
    return nullptr;
  }

  void validate() const {
    if (!(extent_.max_x > extent_.min_x && extent_.max_y > extent_.min_y)) throw InvalidArgument("empty map extent");
    auto check = [&](const TerrainZone& z, bool resistance) {
      if (!polygon_is_simple(z.boundary)) throw InvalidArgument("zone '" + z.name + "' is not a simple polygon");
      for (const auto& p : z.boundary) {
        if (!extent_.contains_closed(p.x(), p.y())) throw InvalidArgument("zone '" + z.name + "' leaves the map extent");
      }
      if (resistance && !(z.value > 0.0 && z.value < 1.0))
        throw InvalidArgument("zone '" + z.name + "': resistance coefficient must lie in (0, 1)");
      if (!resistance && !(z.value >= 0.0 && z.value < 90.0))
        throw InvalidArgument("zone '" + z.name + "': slope must lie in [0, 90) degrees");
    };
    for (const auto& z : resistance_zones_) check(z, true);
    for (const auto& z : slope_zones_) check(z, false);
  }

  Rect extent_;
  double default_resistance_;
  double default_slope_;
  std::vector<TerrainZone> resistance_zones_;
  std::vector<TerrainZone> slope_zones_;
};

inline GroundSample sample_ground(const GroundTruthMap& map, double x, double y) { return map.sample(x, y); }

inline Polygon rectangle(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

/// Representative construction site: five surfaces and one 15 degree slope
/// over 200 m x 200 m, origin at the vehicle's start.
inline GroundTruthMap default_site() {
  std::vector<TerrainZone> resistance = {
      {"dry_concrete", rectangle(-20, -20, 180, 20), 0.008},
      {"gravel", rectangle(-20, 20, 80, 100), 0.02},
      {"sand", rectangle(80, 20, 180, 80), 0.250},
      {"dry_dirt", rectangle(-20, 100, 80, 180), 0.040},
      {"wet_dirt", {{80, 80}, {180, 80}, {180, 180}, {80, 180}, {80, 100}}, 0.060},
  };
  std::vector<TerrainZone> slope = {{"slope_15", rectangle(110, 110, 150, 160), 15.0}};
  return GroundTruthMap({-20, -20, 180, 180}, 0.02, 0.0, std::move(resistance), std::move(slope));
}

/// Rigid-body state of the simulated machine. Velocity and acceleration are in
/// the body frame, `w` holds body angular rates.
struct VehicleState {
  Pose3 pose;
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  double t = 0.0;
};

struct VehicleLimits {
  double max_accel = 0.5;      // m/s^2
  double max_yaw_rate = 0.4;   // rad/s
  double max_yaw_accel = 1.0;  // rad/s^2
};

struct DriveCommand {
  double target_speed = 0.0;
  double target_yaw_rate = 0.0;
};

/// Maps body rates to Euler angle rates for R = Rz*Ry*Rx.
inline Eigen::Matrix3d euler_rate_matrix(double roll, double pitch) {
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), tp = std::tan(pitch);
  Eigen::Matrix3d e;
  e << 1.0, sr * tp, cr * tp,
       0.0, cr, -sr,
       0.0, sr / cp, cr / cp;
  return e;
}

inline constexpr double kMaxVehicleStep = 0.1;

/// Advances the kinematic vehicle by dt. Forward speed and yaw rate slew
/// toward the command; pitch follows the slope layer under the vehicle.
inline VehicleState step_vehicle(const GroundTruthMap& map, const VehicleLimits& limits, const VehicleState& s,
                                 const DriveCommand& cmd, double dt) {
  if (!(dt > 0.0 && dt <= kMaxVehicleStep)) throw InvalidArgument("step_vehicle: dt must lie in (0, 0.1] s");

  const double speed = s.v.x();
  const double accel = std::clamp((cmd.target_speed - speed) / dt, -limits.max_accel, limits.max_accel);

  const double yaw_rate = (euler_rate_matrix(s.pose.roll, s.pose.pitch) * s.w).z();
  const double max_dyaw = limits.max_yaw_accel * dt;
  double new_yaw_rate = yaw_rate + std::clamp(cmd.target_yaw_rate - yaw_rate, -max_dyaw, max_dyaw);
  new_yaw_rate = std::clamp(new_yaw_rate, -limits.max_yaw_rate, limits.max_yaw_rate);

  VehicleState n = s;
  const Eigen::Vector3d body_v(speed, 0.0, 0.0);
  const Eigen::Vector3d body_a(accel, 0.0, 0.0);
  const Eigen::Matrix3d r = rotation_rpy(s.pose.roll, s.pose.pitch, s.pose.yaw);
  const Eigen::Vector3d dp = r * (body_v * dt + 0.5 * body_a * dt * dt);
  n.pose.x += dp.x();
  n.pose.y += dp.y();
  n.pose.z += dp.z();
  n.pose.yaw = wrap_angle(s.pose.yaw + new_yaw_rate * dt);
  n.pose.roll = 0.0;
  n.pose.pitch = deg2rad(map.sample(n.pose.x, n.pose.y).slope_deg);

  n.v = Eigen::Vector3d(speed + accel * dt, 0.0, 0.0);
  n.a = body_a;
  // Body rates that produce a pure yaw-rate Euler motion at the new attitude.
  n.w = euler_rate_matrix(n.pose.roll, n.pose.pitch).inverse() * Eigen::Vector3d(0.0, 0.0, new_yaw_rate);
  n.t = s.t + dt;
  return n;
}

struct WaypointScript {
  std::vector<Eigen::Vector2d> waypoints;
  double cruise_speed = 2.0;
  double max_yaw_rate = 0.4;
  double max_accel = 0.5;
  double max_yaw_accel = 1.0;
  double reach_radius = 1.0;
  double time_cap = 0.0;  // seconds; 0 selects 3x the nominal drive time plus 30 s
};

struct DriveResult {
  std::vector<VehicleState> states;
  bool truncated = false;
};

inline double path_length(const std::vector<Eigen::Vector2d>& wps) {
  double len = 0.0;
  for (std::size_t i = 1; i < wps.size(); ++i) len += (wps[i] - wps[i - 1]).norm();
  return len;
}

inline constexpr double kPursuitLookahead = 2.0;  // seconds of travel at cruise speed

/// Drives the waypoint script with pure-pursuit steering. The trajectory
/// starts at rest on the first waypoint facing the second one.
inline DriveResult drive_waypoints(const GroundTruthMap& map, const WaypointScript& script, double dt) {
  if (!(dt > 0.0 && dt <= kMaxVehicleStep)) throw InvalidArgument("drive_waypoints: dt must lie in (0, 0.1] s");
  if (script.waypoints.size() < 2) throw InvalidArgument("drive_waypoints: need at least two waypoints");
  if (!(script.cruise_speed > 0.0)) throw InvalidArgument("drive_waypoints: cruise_speed must be positive");
  for (const auto& w : script.waypoints) {
    if (!map.extent().contains(w.x(), w.y())) throw InvalidArgument("drive_waypoints: waypoint outside map extent");
  }

  const VehicleLimits limits{script.max_accel, script.max_yaw_rate, script.max_yaw_accel};
  const double cap = script.time_cap > 0.0
                         ? script.time_cap
                         : 3.0 * path_length(script.waypoints) / script.cruise_speed + 30.0;
  const auto max_steps = static_cast<long>(std::ceil(cap / dt));

  VehicleState s;
  const Eigen::Vector2d first = script.waypoints[0];
  const Eigen::Vector2d heading = script.waypoints[1] - first;
  s.pose.x = first.x();
  s.pose.y = first.y();
  s.pose.yaw = std::atan2(heading.y(), heading.x());
  s.pose.pitch = deg2rad(map.sample(first.x(), first.y()).slope_deg);

  DriveResult out;
  out.states.push_back(s);
  std::size_t target = 1;
  for (long k = 1; k <= max_steps; ++k) {
    const Eigen::Vector2d to_wp = script.waypoints[target] - Eigen::Vector2d(s.pose.x, s.pose.y);
    const double dist = to_wp.norm();
    const double err = wrap_angle(std::atan2(to_wp.y(), to_wp.x()) - s.pose.yaw);
    const double speed_cmd = script.cruise_speed * std::max(0.25, std::cos(err));
    // Chord capped at a short lookahead so corners are taken tightly instead of
    // as one wide arc spanning the whole next leg.
    const double chord = std::min(dist, std::max(1.0, kPursuitLookahead * script.cruise_speed));
    const double curvature = 2.0 * std::sin(err) / std::max(chord, 1e-6);
    const DriveCommand cmd{speed_cmd, std::max(s.v.x(), 0.5) * curvature};

    s = step_vehicle(map, limits, s, cmd, dt);
    s.t = static_cast<double>(k) * dt;
    out.states.push_back(s);

    if ((script.waypoints[target] - Eigen::Vector2d(s.pose.x, s.pose.y)).norm() <= script.reach_radius) {
      if (++target == script.waypoints.size()) return out;
    }
  }
  out.truncated = true;
  return out;
}

}  // namespace terrafuse
