#pragma once

// Synthetic GPS, IMU and wheel-encoder devices with seeded Gaussian noise,
// scheduled GPS dropouts and an optional GPS outlier process.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/geo.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

/// Order doubles as the tie-break priority when streams are merged.
enum class SensorKind : std::uint8_t { gps_position = 0, imu_bundle = 1, encoder_velocity = 2 };

inline int measurement_dim(SensorKind k) {
  switch (k) {
    case SensorKind::gps_position: return 3;
    case SensorKind::imu_bundle: return 9;
    case SensorKind::encoder_velocity: return 1;
  }
  return 0;
}

inline const char* to_string(SensorKind k) {
  switch (k) {
    case SensorKind::gps_position: return "gps";
    case SensorKind::imu_bundle: return "imu";
    case SensorKind::encoder_velocity: return "encoder";
  }
  return "?";
}

struct SensorReading {
  std::uint16_t device_id = 0;
  double t = 0.0;
  SensorKind kind = SensorKind::gps_position;
  Eigen::VectorXd value;
  Eigen::MatrixXd noise_cov;
  /// GPS antenna lever arm in the body frame; zero for other kinds.
  Eigen::Vector3d mount_offset = Eigen::Vector3d::Zero();
  /// Set by the outlier process; never visible to the filters.
  bool injected_outlier = false;
};

struct DropoutSchedule {
  double period = 10.0;
  double outage = 1.0;
  double phase = 0.0;
};

/// False during the last `outage` seconds of every period.
inline bool gps_available(const DropoutSchedule& d, double t) {
  if (d.outage <= 0.0) return true;
  double u = std::fmod(t - d.phase, d.period);
  if (u < 0.0) u += d.period;
  return !(u >= d.period - d.outage && u < d.period);
}

struct GpsModel {
  double sigma_xy = 2.0;
  double sigma_z = 3.0;
  double rate_hz = 1.0;
  DropoutSchedule dropout;
  Eigen::Vector3d mount_offset = Eigen::Vector3d::Zero();
  double outlier_probability = 0.0;
  double outlier_offset = 50.0;
};

struct ImuModel {
  double sigma_orientation = 0.01;
  double sigma_gyro = 0.005;
  double sigma_accel = 0.05;
  double gyro_bias_walk = 0.0;
  double accel_bias_walk = 0.0;
  double rate_hz = 100.0;
  Eigen::Vector3d mount_offset = Eigen::Vector3d::Zero();
};

struct EncoderModel {
  double sigma_speed_rel = 0.02;
  double sigma_speed_abs = 0.01;
  double rate_hz = 50.0;
};

using Rng = std::mt19937_64;

/// Independent substream per (master seed, device id).
inline Rng device_rng(std::uint64_t master_seed, std::uint16_t device_id) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return Rng(mix(mix(master_seed) ^ (static_cast<std::uint64_t>(device_id) + 1)));
}

inline double gaussian(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  return n(rng);
}

inline Eigen::Vector3d antenna_position(const VehicleState& truth, const Eigen::Vector3d& mount) {
  return truth.pose.position() + rotation_rpy(truth.pose.roll, truth.pose.pitch, truth.pose.yaw) * mount;
}

/// One GPS fix, produced in UTM and converted back into the odom frame.
/// Absent while the dropout schedule says the signal is lost.
inline std::optional<SensorReading> measure_gps(const GpsModel& model, const OdomFrame& frame,
                                                const VehicleState& truth, double t, Rng& rng,
                                                std::uint16_t device_id = 0) {
  if (!gps_available(model.dropout, t)) return std::nullopt;

  UtmPoint fix = odom_to_utm(frame, antenna_position(truth, model.mount_offset));
  fix.easting += gaussian(rng, model.sigma_xy);
  fix.northing += gaussian(rng, model.sigma_xy);
  fix.altitude += gaussian(rng, model.sigma_z);

  SensorReading r;
  if (model.outlier_probability > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < model.outlier_probability) {
      const double dir = u(rng) * kTwoPi;
      fix.easting += model.outlier_offset * std::cos(dir);
      fix.northing += model.outlier_offset * std::sin(dir);
      r.injected_outlier = true;
    }
  }

  r.device_id = device_id;
  r.t = t;
  r.kind = SensorKind::gps_position;
  r.value = utm_to_odom(frame, fix);
  const Eigen::Vector3d var(model.sigma_xy * model.sigma_xy, model.sigma_xy * model.sigma_xy,
                            model.sigma_z * model.sigma_z);
  const Eigen::Matrix3d rot = frame.odom_to_utm.rotation();
  r.noise_cov = rot.transpose() * var.asDiagonal() * rot;
  r.mount_offset = model.mount_offset;
  return r;
}

/// Random-walk bias state carried by an IMU between samples. The reported
/// heading drifts by the integral of the z gyro bias.
struct ImuBiasState {
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  double heading_drift = 0.0;
  double last_t = 0.0;
  bool started = false;
};

inline SensorReading measure_imu(const ImuModel& model, ImuBiasState& bias, const VehicleState& truth, double t,
                                 Rng& rng, std::uint16_t device_id = 0) {
  if (bias.started) {
    const double dt = t - bias.last_t;
    if (dt > 0.0) {
      bias.heading_drift += bias.gyro_bias.z() * dt;
      const double sg = model.gyro_bias_walk * std::sqrt(dt);
      const double sa = model.accel_bias_walk * std::sqrt(dt);
      for (int i = 0; i < 3; ++i) bias.gyro_bias[i] += gaussian(rng, sg);
      for (int i = 0; i < 3; ++i) bias.accel_bias[i] += gaussian(rng, sa);
    }
  }
  bias.started = true;
  bias.last_t = t;

  SensorReading r;
  r.device_id = device_id;
  r.t = t;
  r.kind = SensorKind::imu_bundle;
  r.value.resize(9);
  r.value[0] = wrap_angle(truth.pose.roll + gaussian(rng, model.sigma_orientation));
  r.value[1] = wrap_angle(truth.pose.pitch + gaussian(rng, model.sigma_orientation));
  r.value[2] = wrap_angle(truth.pose.yaw + bias.heading_drift + gaussian(rng, model.sigma_orientation));
  for (int i = 0; i < 3; ++i) r.value[3 + i] = truth.w[i] + bias.gyro_bias[i] + gaussian(rng, model.sigma_gyro);
  for (int i = 0; i < 3; ++i) r.value[6 + i] = truth.a[i] + bias.accel_bias[i] + gaussian(rng, model.sigma_accel);

  Eigen::VectorXd var(9);
  var << Eigen::Vector3d::Constant(model.sigma_orientation * model.sigma_orientation),
      Eigen::Vector3d::Constant(model.sigma_gyro * model.sigma_gyro),
      Eigen::Vector3d::Constant(model.sigma_accel * model.sigma_accel);
  r.noise_cov = var.asDiagonal();
  return r;
}

inline SensorReading measure_encoder(const EncoderModel& model, const VehicleState& truth, double t, Rng& rng,
                                     std::uint16_t device_id = 0) {
  const double speed = std::abs(truth.v.x());
  const double eps_rel = gaussian(rng, model.sigma_speed_rel);
  const double eps_abs = gaussian(rng, model.sigma_speed_abs);
  SensorReading r;
  r.device_id = device_id;
  r.t = t;
  r.kind = SensorKind::encoder_velocity;
  r.value = Eigen::VectorXd::Constant(1, speed * (1.0 + eps_rel) + eps_abs);
  const double rel = model.sigma_speed_rel * r.value[0];
  r.noise_cov = Eigen::MatrixXd::Constant(1, 1, rel * rel + model.sigma_speed_abs * model.sigma_speed_abs);
  return r;
}

/// Orders by time, then kind (gps < imu < encoder), then device id. Stable.
inline bool reading_before(const SensorReading& a, const SensorReading& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.kind != b.kind) return a.kind < b.kind;
  return a.device_id < b.device_id;
}

inline std::vector<SensorReading> merge_streams(const std::vector<std::vector<SensorReading>>& streams) {
  std::vector<SensorReading> out;
  std::size_t total = 0;
  for (const auto& s : streams) total += s.size();
  out.reserve(total);
  for (const auto& s : streams) out.insert(out.end(), s.begin(), s.end());
  std::stable_sort(out.begin(), out.end(), reading_before);
  return out;
}

/// A configured device on the vehicle.
struct SensorDevice {
  std::string name;
  std::uint16_t id = 0;
  std::variant<GpsModel, ImuModel, EncoderModel> model;

  SensorKind kind() const { return static_cast<SensorKind>(model.index()); }

  double rate_hz() const {
    return std::visit([](const auto& m) { return m.rate_hz; }, model);
  }

  Eigen::Vector3d lever_arm() const {
    if (const auto* g = std::get_if<GpsModel>(&model)) return g->mount_offset;
    return Eigen::Vector3d::Zero();
  }
};

/// Truth state nearest to time t on a uniformly sampled trajectory.
inline const VehicleState& truth_at(const std::vector<VehicleState>& truth, double truth_dt, double t) {
  auto idx = static_cast<long>(std::llround(t / truth_dt));
  idx = std::clamp<long>(idx, 0, static_cast<long>(truth.size()) - 1);
  return truth[static_cast<std::size_t>(idx)];
}

/// Samples one device over the whole trajectory on its own time grid
/// t_k = k / rate_hz.
inline std::vector<SensorReading> simulate_device(const SensorDevice& dev, const std::vector<VehicleState>& truth,
                                                  double truth_dt, const OdomFrame& frame,
                                                  std::uint64_t master_seed) {
  std::vector<SensorReading> out;
  if (truth.empty()) return out;
  Rng rng = device_rng(master_seed, dev.id);
  const double rate = dev.rate_hz();
  if (!(rate > 0.0)) throw InvalidArgument("device '" + dev.name + "': rate must be positive");
  const double t_end = truth.back().t;
  ImuBiasState bias;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) / rate;
    if (t > t_end + 1e-9) break;
    const VehicleState& s = truth_at(truth, truth_dt, t);
    if (const auto* g = std::get_if<GpsModel>(&dev.model)) {
      if (auto r = measure_gps(*g, frame, s, t, rng, dev.id)) out.push_back(std::move(*r));
    } else if (const auto* m = std::get_if<ImuModel>(&dev.model)) {
      out.push_back(measure_imu(*m, bias, s, t, rng, dev.id));
    } else {
      out.push_back(measure_encoder(std::get<EncoderModel>(dev.model), s, t, rng, dev.id));
    }
  }
  return out;
}

}  // namespace terrafuse
