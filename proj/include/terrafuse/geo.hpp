#pragma once

// Coordinate frames: angle wrapping, fixed-axis Euler rotations, WGS-84 UTM
// projection and the UTM <-> odom homogeneous transform.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "terrafuse/errors.hpp"

namespace terrafuse {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Maps an angle onto (-pi, pi].
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) throw InvalidArgument("wrap_angle: non-finite angle");
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Position plus fixed-axis roll/pitch/yaw.
struct Pose3 {
  double x = 0.0, y = 0.0, z = 0.0;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;

  Eigen::Vector3d position() const { return {x, y, z}; }
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Eigen::Matrix3d rotation_rpy(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  Eigen::Matrix3d r;
  r << cp * cy, cy * sr * sp - cr * sy, cr * cy * sp + sr * sy,
       cp * sy, cr * cy + sr * sp * sy, -cy * sr + cr * sp * sy,
       -sp, cp * sr, cr * cp;
  return r;
}

/// Partial derivatives of rotation_rpy with respect to roll, pitch and yaw.
inline std::array<Eigen::Matrix3d, 3> rotation_rpy_derivatives(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  Eigen::Matrix3d d_roll, d_pitch, d_yaw;
  d_roll << 0.0, cy * cr * sp + sr * sy, -sr * cy * sp + cr * sy,
            0.0, -sr * cy + cr * sp * sy, -cy * cr - sr * sp * sy,
            0.0, cp * cr, -sr * cp;
  d_pitch << -sp * cy, cy * sr * cp, cr * cy * cp,
             -sp * sy, sr * cp * sy, cr * cp * sy,
             -cp, -sp * sr, -cr * sp;
  d_yaw << -cp * sy, -sy * sr * sp - cr * cy, -cr * sy * sp + sr * cy,
           cp * cy, -cr * sy + sr * sp * cy, sy * sr + cr * sp * cy,
           0.0, 0.0, 0.0;
  return {d_roll, d_pitch, d_yaw};
}

/// Rigid 4x4 transform. The rotation block is kept orthonormal by construction.
class HomogeneousTransform {
 public:
  HomogeneousTransform() : m_(Eigen::Matrix4d::Identity()) {}

  HomogeneousTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : m_(Eigen::Matrix4d::Identity()) {
    m_.topLeftCorner<3, 3>() = rotation;
    m_.topRightCorner<3, 1>() = translation;
  }

  const Eigen::Matrix4d& matrix() const { return m_; }
  Eigen::Matrix3d rotation() const { return m_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return m_.topRightCorner<3, 1>(); }

  HomogeneousTransform inverse() const {
    const Eigen::Matrix3d rt = rotation().transpose();
    return {rt, -rt * translation()};
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation(); }

  HomogeneousTransform operator*(const HomogeneousTransform& o) const {
    HomogeneousTransform out;
    out.m_ = m_ * o.m_;
    return out;
  }

 private:
  Eigen::Matrix4d m_;
};

struct UtmZone {
  int number = 31;
  bool north = true;

  bool operator==(const UtmZone&) const = default;
};

struct UtmPoint {
  double easting = 0.0;
  double northing = 0.0;
  double altitude = 0.0;
  UtmZone zone;
};

struct LatLon {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
  double alt = 0.0;  // meters
};

namespace detail {

// WGS-84 transverse Mercator in Krueger's n-series (6th order). The series
// truncation is a few nanometres inside a zone; latitude is recovered from
// the conformal latitude by Newton iteration.
struct TransverseMercator {
  static constexpr double a = 6378137.0;
  static constexpr double f = 1.0 / 298.257223563;
  static constexpr double k0 = 0.9996;
  static constexpr double false_easting = 500000.0;
  static constexpr double false_northing_south = 10000000.0;

  double n, e, e2, big_a;
  std::array<double, 6> alpha, beta;

  TransverseMercator() {
    n = f / (2.0 - f);
    e2 = f * (2.0 - f);
    e = std::sqrt(e2);
    const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
    big_a = a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    alpha = {n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 +
                 7891.0 * n6 / 37800.0,
             13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0 -
                 1983433.0 * n6 / 1935360.0,
             61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167603.0 * n6 / 181440.0,
             49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
             34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
             212378941.0 * n6 / 319334400.0};
    beta = {n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0 + 96199.0 * n6 / 604800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1118711.0 * n6 / 3870720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
            4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
            20648693.0 * n6 / 638668800.0};
  }

  /// tan(conformal latitude) from tan(latitude).
  double taupf(double tau) const {
    const double tau1 = std::hypot(1.0, tau);
    const double sig = std::sinh(e * std::atanh(e * tau / tau1));
    return std::hypot(1.0, sig) * tau - sig * tau1;
  }

  /// Inverse of taupf.
  double tauf(double taup) const {
    double tau = taup / (1.0 - e2);
    for (int k = 0; k < 8; ++k) {
      const double tp = taupf(tau);
      const double tau1 = std::hypot(1.0, tau);
      const double dtau =
          (taup - tp) / std::hypot(1.0, tp) * (1.0 + (1.0 - e2) * tau * tau) / ((1.0 - e2) * tau1);
      tau += dtau;
      if (std::abs(dtau) < 1e-15 * std::max(1.0, std::abs(tau))) break;
    }
    return tau;
  }

  static const TransverseMercator& instance() {
    static const TransverseMercator tm;
    return tm;
  }
};

}  // namespace detail

inline int utm_zone_for(double lon_deg) {
  int zone = static_cast<int>(std::floor((lon_deg + 180.0) / 6.0)) + 1;
  return zone > 60 ? 60 : zone;
}

inline double utm_central_meridian(int zone) { return -183.0 + 6.0 * zone; }

/// Projects WGS-84 latitude/longitude into a UTM zone. The natural zone is
/// used unless `forced_zone` is in [1, 60].
inline UtmPoint latlon_to_utm(double lat, double lon, double alt, int forced_zone = 0) {
  if (!(lat >= -84.0 && lat <= 84.0)) throw UnsupportedRegion("latitude outside the UTM band [-84, 84]");
  if (!(lon >= -180.0 && lon < 180.0)) throw UnsupportedRegion("longitude outside [-180, 180)");
  const auto& tm = detail::TransverseMercator::instance();
  const int zone = (forced_zone >= 1 && forced_zone <= 60) ? forced_zone : utm_zone_for(lon);

  const double phi = deg2rad(lat);
  const double lam = deg2rad(lon - utm_central_meridian(zone));
  const double t = tm.taupf(std::tan(phi));
  const double xi_p = std::atan2(t, std::cos(lam));
  const double eta_p = std::atanh(std::sin(lam) / std::sqrt(1.0 + t * t));

  double xi = xi_p, eta = eta_p;
  for (int j = 1; j <= 6; ++j) {
    xi += tm.alpha[j - 1] * std::sin(2.0 * j * xi_p) * std::cosh(2.0 * j * eta_p);
    eta += tm.alpha[j - 1] * std::cos(2.0 * j * xi_p) * std::sinh(2.0 * j * eta_p);
  }

  UtmPoint p;
  p.zone = {zone, lat >= 0.0};
  p.easting = tm.false_easting + tm.k0 * tm.big_a * eta;
  p.northing = tm.k0 * tm.big_a * xi + (p.zone.north ? 0.0 : tm.false_northing_south);
  p.altitude = alt;
  return p;
}

inline LatLon utm_to_latlon(const UtmPoint& p) {
  if (p.zone.number < 1 || p.zone.number > 60) throw InvalidArgument("UTM zone outside [1, 60]");
  const auto& tm = detail::TransverseMercator::instance();
  const double xi = (p.northing - (p.zone.north ? 0.0 : tm.false_northing_south)) / (tm.k0 * tm.big_a);
  const double eta = (p.easting - tm.false_easting) / (tm.k0 * tm.big_a);

  double xi_p = xi, eta_p = eta;
  for (int j = 1; j <= 6; ++j) {
    xi_p -= tm.beta[j - 1] * std::sin(2.0 * j * xi) * std::cosh(2.0 * j * eta);
    eta_p -= tm.beta[j - 1] * std::cos(2.0 * j * xi) * std::sinh(2.0 * j * eta);
  }
  const double taup = std::sin(xi_p) / std::hypot(std::sinh(eta_p), std::cos(xi_p));
  const double phi = std::atan(tm.tauf(taup));
  const double lam = std::atan2(std::sinh(eta_p), std::cos(xi_p));

  return {rad2deg(phi), utm_central_meridian(p.zone.number) + rad2deg(lam), p.altitude};
}

/// Vehicle pose expressed in a UTM zone (position = easting, northing, altitude).
struct UtmPose {
  UtmPoint origin;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
};

/// odom -> UTM transform anchored in one zone.
struct OdomFrame {
  HomogeneousTransform odom_to_utm;
  UtmZone zone;
};

inline OdomFrame build_utm_transform(const UtmPose& pose) {
  const Eigen::Vector3d t(pose.origin.easting, pose.origin.northing, pose.origin.altitude);
  return {HomogeneousTransform(rotation_rpy(pose.roll, pose.pitch, pose.yaw), t), pose.origin.zone};
}

inline Eigen::Vector3d utm_to_odom(const OdomFrame& frame, const UtmPoint& p) {
  if (!(p.zone == frame.zone)) {
    throw FrameMismatch("UTM point in zone " + std::to_string(p.zone.number) + (p.zone.north ? "N" : "S") +
                        " but odom frame anchored in zone " + std::to_string(frame.zone.number) +
                        (frame.zone.north ? "N" : "S"));
  }
  // Subtract before rotating so nearby points lose nothing to the large offsets.
  const auto& t = frame.odom_to_utm;
  return t.rotation().transpose() * (Eigen::Vector3d(p.easting, p.northing, p.altitude) - t.translation());
}

inline UtmPoint odom_to_utm(const OdomFrame& frame, const Eigen::Vector3d& q) {
  const Eigen::Vector3d u = frame.odom_to_utm.apply(q);
  return {u.x(), u.y(), u.z(), frame.zone};
}

}  // namespace terrafuse
