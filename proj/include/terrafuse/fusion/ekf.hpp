#pragma once

#include <Eigen/Dense>

#include "terrafuse/fusion/gate.hpp"
#include "terrafuse/fusion/models.hpp"
#include "terrafuse/fusion/state.hpp"

namespace terrafuse {

inline StateEstimate ekf_predict(const StateEstimate& e, const NoiseConfig& q, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("ekf_predict: dt must be positive");
  StateEstimate out = e;
  double remaining = dt;
  while (remaining > 0.0) {
    const double h = std::min(remaining, kMaxProcessStep);
    const StateMatrix a = process_jacobian(out.x, h);
    out.x = process_model(out.x, h);
    out.P = a * out.P * a.transpose();
    out.P.diagonal() += q.q_diag * h;
    symmetrize(out.P);
    remaining -= h;
  }
  out.t = e.t + dt;
  return out;
}

/// Gated EKF correction with a Joseph-form covariance update. A rejected
/// reading returns the estimate unchanged.
inline StateEstimate ekf_update(const StateEstimate& e, const SensorReading& r, const GateConfig& g,
                                FilterDiagnostics* diag = nullptr) {
  const MeasJacobian h = measurement_jacobian(r.kind, e.x, r.mount_offset);
  MeasVector nu = r.value - measurement_model(r.kind, e.x, r.mount_offset);
  wrap_measurement_angles(r.kind, nu);

  const GainMatrix ph = e.P * h.transpose();
  const MeasMatrix s = h * ph + r.noise_cov;

  const GateResult gate = mahalanobis_gate(nu, s, g);
  if (diag) {
    diag->last_gate = gate;
    ++diag->updates;
  }
  if (gate.decision == GateDecision::rejected) {
    if (diag) ++diag->gate_rejections;
    return e;
  }

  GainMatrix k;
  if (gate.decision == GateDecision::bypassed) {
    if (diag) {
      ++diag->gate_bypasses;
      diag->log("ekf: singular innovation covariance at t=" + std::to_string(r.t) + ", gate bypassed");
    }
    k = ph * Eigen::MatrixXd(s).completeOrthogonalDecomposition().pseudoInverse();
  } else {
    k = s.ldlt().solve(ph.transpose()).transpose();
  }

  StateEstimate out = e;
  out.x += k * nu;
  wrap_state_angles(out.x);
  const StateMatrix ikh = StateMatrix::Identity() - k * h;
  out.P = ikh * e.P * ikh.transpose() + k * r.noise_cov * k.transpose();
  symmetrize(out.P);
  return out;
}

}  // namespace terrafuse
