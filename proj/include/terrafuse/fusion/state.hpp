#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "terrafuse/geo.hpp"

namespace terrafuse {

inline constexpr int kStateDim = 15;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Layout of the state vector: pose, body twist, body acceleration.
enum StateIndex : int {
  kX = 0, kY, kZ,
  kRoll, kPitch, kYaw,
  kVx, kVy, kVz,
  kWx, kWy, kWz,
  kAx, kAy, kAz,
};

inline bool is_angle_index(int i) { return i == kRoll || i == kPitch || i == kYaw; }

inline void wrap_state_angles(StateVector& x) {
  x[kRoll] = wrap_angle(x[kRoll]);
  x[kPitch] = wrap_angle(x[kPitch]);
  x[kYaw] = wrap_angle(x[kYaw]);
}

/// a - b with the Euler components wrapped.
inline StateVector state_residual(const StateVector& a, const StateVector& b) {
  StateVector d = a - b;
  d[kRoll] = wrap_angle(d[kRoll]);
  d[kPitch] = wrap_angle(d[kPitch]);
  d[kYaw] = wrap_angle(d[kYaw]);
  return d;
}

struct StateEstimate {
  StateVector x = StateVector::Zero();
  StateMatrix P = StateMatrix::Identity();
  double t = 0.0;
};

inline void symmetrize(StateMatrix& p) { p = 0.5 * (p + p.transpose()).eval(); }

/// Symmetric within `tol` and smallest eigenvalue >= -tol.
inline bool covariance_healthy(const StateMatrix& p, double tol = 1e-9) {
  if (!p.allFinite()) return false;
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<StateMatrix> es(p, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

/// Diagonal per-second process noise; the filters add Q * dt on every predict.
struct NoiseConfig {
  StateVector q_diag = defaults();

  static StateVector defaults() {
    StateVector q;
    q << 0.05, 0.05, 0.05,
         0.03, 0.03, 0.03,
         0.1, 0.1, 0.1,
         0.05, 0.05, 0.05,
         0.5, 0.5, 0.5;
    return q;
  }

  StateMatrix Q() const { return q_diag.asDiagonal(); }
};

/// Initial covariance diagonal: positions, angles, then rates.
struct InitConfig {
  double position_var = 100.0;
  double angle_var = 0.25;
  double rate_var = 1.0;

  StateMatrix P0() const {
    StateVector d;
    d << Eigen::Vector3d::Constant(position_var), Eigen::Vector3d::Constant(angle_var),
        Eigen::Matrix<double, 9, 1>::Constant(rate_var);
    return d.asDiagonal();
  }
};

}  // namespace terrafuse
