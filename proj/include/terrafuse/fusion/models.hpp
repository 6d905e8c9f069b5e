#pragma once

// Constant-acceleration 3D kinematic process model and the per-sensor
// measurement models shared by the EKF and the UKF.

#include <Eigen/Dense>

#include <cmath>
#include <span>

#include "terrafuse/errors.hpp"
#include "terrafuse/fusion/gate.hpp"
#include "terrafuse/fusion/state.hpp"
#include "terrafuse/geo.hpp"
#include "terrafuse/sensors.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

inline constexpr double kGimbalTolerance = 1e-6;
inline constexpr double kMaxProcessStep = 1.0;

inline void check_gimbal(double pitch) {
  if (std::abs(std::abs(pitch) - kPi / 2.0) < kGimbalTolerance)
    throw GimbalSingularity("pitch at +-pi/2: Euler rates undefined");
}

/// position += R (v dt + a dt^2 / 2); euler += E w dt; v += a dt; w, a held.
inline StateVector process_model(const StateVector& x, double dt) {
  if (!(dt > 0.0 && dt <= kMaxProcessStep)) throw InvalidArgument("process_model: dt must lie in (0, 1] s");
  check_gimbal(x[kPitch]);

  const Eigen::Vector3d v = x.segment<3>(kVx);
  const Eigen::Vector3d w = x.segment<3>(kWx);
  const Eigen::Vector3d a = x.segment<3>(kAx);
  const Eigen::Matrix3d r = rotation_rpy(x[kRoll], x[kPitch], x[kYaw]);
  const Eigen::Matrix3d e = euler_rate_matrix(x[kRoll], x[kPitch]);

  StateVector out = x;
  out.segment<3>(kX) += r * (v * dt + 0.5 * a * dt * dt);
  out.segment<3>(kRoll) += e * w * dt;
  out.segment<3>(kVx) += a * dt;
  wrap_state_angles(out);
  return out;
}

/// Propagates over an arbitrary positive interval in steps of at most 1 s.
inline StateVector propagate(StateVector x, double dt) {
  while (dt > 0.0) {
    const double h = std::min(dt, kMaxProcessStep);
    x = process_model(x, h);
    dt -= h;
  }
  return x;
}

/// Analytic Jacobian of process_model with respect to the state.
inline StateMatrix process_jacobian(const StateVector& x, double dt) {
  if (!(dt > 0.0 && dt <= kMaxProcessStep)) throw InvalidArgument("process_jacobian: dt must lie in (0, 1] s");
  check_gimbal(x[kPitch]);

  const double roll = x[kRoll], pitch = x[kPitch], yaw = x[kYaw];
  const Eigen::Vector3d v = x.segment<3>(kVx);
  const Eigen::Vector3d w = x.segment<3>(kWx);
  const Eigen::Vector3d a = x.segment<3>(kAx);
  const Eigen::Vector3d u = v * dt + 0.5 * a * dt * dt;
  const Eigen::Matrix3d r = rotation_rpy(roll, pitch, yaw);
  const auto dr = rotation_rpy_derivatives(roll, pitch, yaw);

  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), sp = std::sin(pitch), tp = std::tan(pitch);
  Eigen::Matrix3d de_droll, de_dpitch;
  de_droll << 0.0, cr * tp, -sr * tp,
              0.0, -sr, -cr,
              0.0, cr / cp, -sr / cp;
  de_dpitch << 0.0, sr / (cp * cp), cr / (cp * cp),
               0.0, 0.0, 0.0,
               0.0, sr * sp / (cp * cp), cr * sp / (cp * cp);

  StateMatrix j = StateMatrix::Identity();
  for (int k = 0; k < 3; ++k) j.block<3, 1>(kX, kRoll + k) = dr[k] * u;
  j.block<3, 3>(kX, kVx) = r * dt;
  j.block<3, 3>(kX, kAx) = 0.5 * r * dt * dt;

  j.block<3, 1>(kRoll, kRoll) += de_droll * w * dt;
  j.block<3, 1>(kRoll, kPitch) += de_dpitch * w * dt;
  j.block<3, 3>(kRoll, kWx) = euler_rate_matrix(roll, pitch) * dt;

  j.block<3, 3>(kVx, kAx) = Eigen::Matrix3d::Identity() * dt;
  return j;
}

/// Measurement-sized vectors and matrices with a fixed capacity (no heap).
using MeasVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxMeasurementDim, 1>;
using MeasMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxMeasurementDim, kMaxMeasurementDim>;
using MeasJacobian = Eigen::Matrix<double, Eigen::Dynamic, kStateDim, 0, kMaxMeasurementDim, kStateDim>;
using GainMatrix = Eigen::Matrix<double, kStateDim, Eigen::Dynamic, 0, kStateDim, kMaxMeasurementDim>;

inline constexpr int kImuAngleIndices[3] = {0, 1, 2};

/// Indices of angle-valued components inside a measurement vector.
inline std::span<const int> measurement_angle_indices(SensorKind kind) {
  if (kind == SensorKind::imu_bundle) return kImuAngleIndices;
  return {};
}

inline constexpr int kImuStateIndices[9] = {kRoll, kPitch, kYaw, kWx, kWy, kWz, kAx, kAy, kAz};

/// Predicted measurement. GPS sees the antenna at position + R * lever arm.
inline MeasVector measurement_model(SensorKind kind, const StateVector& x,
                                    const Eigen::Vector3d& lever_arm = Eigen::Vector3d::Zero()) {
  switch (kind) {
    case SensorKind::gps_position: {
      Eigen::Vector3d p = x.segment<3>(kX);
      if (!lever_arm.isZero(0.0)) p += rotation_rpy(x[kRoll], x[kPitch], x[kYaw]) * lever_arm;
      return p;
    }
    case SensorKind::imu_bundle: {
      MeasVector z(9);
      for (int i = 0; i < 9; ++i) z[i] = x[kImuStateIndices[i]];
      return z;
    }
    case SensorKind::encoder_velocity:
      return MeasVector::Constant(1, x[kVx]);
  }
  throw InvalidArgument("measurement_model: unknown sensor kind");
}

inline MeasJacobian measurement_jacobian(SensorKind kind, const StateVector& x,
                                         const Eigen::Vector3d& lever_arm = Eigen::Vector3d::Zero()) {
  const int m = measurement_dim(kind);
  MeasJacobian h = MeasJacobian::Zero(m, kStateDim);
  switch (kind) {
    case SensorKind::gps_position: {
      h.block<3, 3>(0, kX).setIdentity();
      const auto dr = rotation_rpy_derivatives(x[kRoll], x[kPitch], x[kYaw]);
      for (int k = 0; k < 3; ++k) h.block<3, 1>(0, kRoll + k) = dr[k] * lever_arm;
      break;
    }
    case SensorKind::imu_bundle:
      for (int i = 0; i < 9; ++i) h(i, kImuStateIndices[i]) = 1.0;
      break;
    case SensorKind::encoder_velocity:
      h(0, kVx) = 1.0;
      break;
  }
  return h;
}

template <typename Vec>
void wrap_measurement_angles(SensorKind kind, Vec& v) {
  for (int i : measurement_angle_indices(kind)) v[i] = wrap_angle(v[i]);
}

}  // namespace terrafuse
