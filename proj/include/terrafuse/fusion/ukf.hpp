#pragma once

// Unscented Kalman filter with 2L+1 symmetric sigma points and
// lambda = 3 - L. Angle components are averaged on the circle.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/fusion/gate.hpp"
#include "terrafuse/fusion/models.hpp"
#include "terrafuse/fusion/state.hpp"

namespace terrafuse {

inline constexpr double kSigmaJitter = 1e-12;
inline constexpr int kStateAngleIndices[3] = {kRoll, kPitch, kYaw};

inline double default_lambda(int l) { return 3.0 - l; }

/// a^0 = lambda / (L + lambda), a^i = 1 / (2 (L + lambda)).
inline Eigen::VectorXd ukf_weights(int l, double lambda) {
  if (l < 1) throw InvalidArgument("ukf_weights: L must be >= 1");
  if (l + lambda == 0.0) throw InvalidArgument("ukf_weights: L + lambda must be non-zero");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(2 * l + 1, 1.0 / (2.0 * (l + lambda)));
  w[0] = lambda / (l + lambda);
  return w;
}

inline Eigen::VectorXd ukf_weights(int l) { return ukf_weights(l, default_lambda(l)); }

inline constexpr int sigma_count(int l) { return l == Eigen::Dynamic ? Eigen::Dynamic : 2 * l + 1; }

/// Sigma points (one per column) and their weights; L may be fixed or dynamic.
template <int L = Eigen::Dynamic>
struct BasicSigmaSet {
  Eigen::Matrix<double, L, sigma_count(L)> points;
  Eigen::Matrix<double, sigma_count(L), 1> weights;
};
using SigmaSet = BasicSigmaSet<>;

/// X0 = mean, X(i) = mean + col_i(sqrt((L + lambda) P)), X(i+L) = mean - col_i.
/// The square root is the Cholesky factor of P + 1e-12 I.
template <int L = Eigen::Dynamic>
BasicSigmaSet<L> ukf_sigma_points(const Eigen::Matrix<double, L, 1>& mean, const Eigen::Matrix<double, L, L>& p,
                                  double lambda, std::span<const int> angle_indices = {}) {
  using Cov = Eigen::Matrix<double, L, L>;
  const auto l = static_cast<int>(mean.size());
  if (p.rows() != l || p.cols() != l) throw InvalidArgument("ukf_sigma_points: covariance shape mismatch");
  if (!(l + lambda > 0.0)) throw InvalidArgument("ukf_sigma_points: L + lambda must be positive");
  const Cov jittered = p + kSigmaJitter * Cov::Identity(l, l);
  Eigen::LLT<Cov> llt(jittered);
  if (llt.info() != Eigen::Success) throw CovarianceDegenerate("ukf_sigma_points: Cholesky failed on P + eps I");
  const Cov root = std::sqrt(l + lambda) * Cov(llt.matrixL());

  BasicSigmaSet<L> s;
  s.weights = ukf_weights(l, lambda);
  s.points.resize(l, 2 * l + 1);
  s.points.col(0) = mean;
  for (int i = 0; i < l; ++i) {
    s.points.col(1 + i) = mean + root.col(i);
    s.points.col(1 + l + i) = mean - root.col(i);
  }
  for (int a : angle_indices) {
    for (int c = 0; c < s.points.cols(); ++c) s.points(a, c) = wrap_angle(s.points(a, c));
  }
  return s;
}

template <typename Pts>
using ColumnOf = Eigen::Matrix<double, Pts::RowsAtCompileTime, 1, 0, Pts::MaxRowsAtCompileTime, 1>;

/// Weighted mean of column vectors; listed components are averaged as angles.
template <typename Pts, typename W>
ColumnOf<Pts> weighted_mean(const Eigen::MatrixBase<Pts>& pts, const Eigen::MatrixBase<W>& w,
                            std::span<const int> angle_indices = {}) {
  ColumnOf<Pts> m = pts * w;
  for (int a : angle_indices) {
    double s = 0.0, c = 0.0;
    for (int i = 0; i < pts.cols(); ++i) {
      s += w[i] * std::sin(pts(a, i));
      c += w[i] * std::cos(pts(a, i));
    }
    m[a] = std::atan2(s, c);
  }
  return m;
}

/// Column-wise pts - mean with the listed components wrapped.
template <typename Pts, typename Mean>
typename Pts::PlainObject deviations(const Eigen::MatrixBase<Pts>& pts, const Eigen::MatrixBase<Mean>& mean,
                                     std::span<const int> angle_indices = {}) {
  typename Pts::PlainObject d = pts.colwise() - mean;
  for (int a : angle_indices) {
    for (int i = 0; i < d.cols(); ++i) d(a, i) = wrap_angle(d(a, i));
  }
  return d;
}

template <typename Mat>
bool positive_definite(const Eigen::MatrixBase<Mat>& m) {
  using Square = typename Mat::PlainObject;
  Eigen::LLT<Square> llt(m + kSigmaJitter * Square::Identity(m.rows(), m.cols()));
  return llt.info() == Eigen::Success;
}

namespace detail {

inline StateEstimate ukf_predict_step(const StateEstimate& e, const NoiseConfig& q, double dt, double lambda) {
  auto s = ukf_sigma_points<kStateDim>(e.x, e.P, lambda, kStateAngleIndices);
  for (int i = 0; i < s.points.cols(); ++i) {
    s.points.col(i) = process_model(StateVector(s.points.col(i)), dt);
  }
  const StateVector mean = weighted_mean(s.points, s.weights, kStateAngleIndices);
  const auto d = deviations(s.points, mean, kStateAngleIndices);
  StateEstimate out;
  out.x = mean;
  out.P = d * s.weights.asDiagonal() * d.transpose();
  out.P.diagonal() += q.q_diag * dt;
  symmetrize(out.P);
  out.t = e.t + dt;
  return out;
}

struct UkfCorrection {
  StateEstimate estimate;
  GateResult gate;
};

// nullopt when P_y or the posterior covariance is not positive definite.
inline std::optional<UkfCorrection> ukf_update_step(const StateEstimate& e, const SensorReading& r,
                                                    const GateConfig& g, double lambda, bool force) {
  constexpr int kPoints = 2 * kStateDim + 1;
  using MeasSigma = Eigen::Matrix<double, Eigen::Dynamic, kPoints, 0, kMaxMeasurementDim, kPoints>;
  const auto s = ukf_sigma_points<kStateDim>(e.x, e.P, lambda, kStateAngleIndices);
  const int m = measurement_dim(r.kind);
  const auto angle_idx = measurement_angle_indices(r.kind);

  MeasSigma y(m, kPoints);
  for (int i = 0; i < kPoints; ++i) {
    y.col(i) = measurement_model(r.kind, StateVector(s.points.col(i)), r.mount_offset);
  }
  const MeasVector y_mean = weighted_mean(y, s.weights, angle_idx);
  const MeasSigma dy = deviations(y, y_mean, angle_idx);
  const auto dx = deviations(s.points, e.x, kStateAngleIndices);
  const MeasMatrix p_y = dy * s.weights.asDiagonal() * dy.transpose() + r.noise_cov;
  const GainMatrix p_xy = dx * s.weights.asDiagonal() * dy.transpose();

  MeasVector nu = r.value - y_mean;
  wrap_measurement_angles(r.kind, nu);

  const GateResult gate = mahalanobis_gate(nu, p_y, g);
  if (gate.decision == GateDecision::bypassed && !force) return std::nullopt;
  if (gate.decision == GateDecision::rejected) return UkfCorrection{e, gate};

  const GainMatrix k =
      gate.decision == GateDecision::bypassed
          ? GainMatrix(p_xy * Eigen::MatrixXd(p_y).completeOrthogonalDecomposition().pseudoInverse())
          : GainMatrix(p_y.ldlt().solve(p_xy.transpose()).transpose());
  StateEstimate out = e;
  out.x += k * nu;
  wrap_state_angles(out.x);
  out.P = e.P - k * p_y * k.transpose();
  symmetrize(out.P);
  if (!force && !positive_definite(out.P)) return std::nullopt;
  return UkfCorrection{out, gate};
}

}  // namespace detail

/// Sigma points pushed through the process model; falls back to lambda = 0
/// for this step when the negative centre weight leaves the predicted
/// covariance indefinite.
inline StateEstimate ukf_predict(const StateEstimate& e, const NoiseConfig& q, double dt,
                                 FilterDiagnostics* diag = nullptr) {
  if (!(dt > 0.0)) throw InvalidArgument("ukf_predict: dt must be positive");
  StateEstimate out = e;
  double remaining = dt;
  while (remaining > 0.0) {
    const double h = std::min(remaining, kMaxProcessStep);
    StateEstimate next = detail::ukf_predict_step(out, q, h, default_lambda(kStateDim));
    if (!positive_definite(next.P)) {
      if (diag) {
        ++diag->lambda_fallbacks;
        diag->log("ukf: indefinite predicted covariance at t=" + std::to_string(next.t) + ", lambda -> 0");
      }
      next = detail::ukf_predict_step(out, q, h, 0.0);
    }
    out = next;
    remaining -= h;
  }
  out.t = e.t + dt;
  return out;
}

inline StateEstimate ukf_update(const StateEstimate& e, const SensorReading& r, const GateConfig& g,
                                FilterDiagnostics* diag = nullptr) {
  auto c = detail::ukf_update_step(e, r, g, default_lambda(kStateDim), false);
  if (!c) {
    if (diag) {
      ++diag->lambda_fallbacks;
      diag->log("ukf: indefinite innovation or posterior covariance at t=" + std::to_string(r.t) + ", lambda -> 0");
    }
    c = detail::ukf_update_step(e, r, g, 0.0, true);
  }
  if (diag) {
    ++diag->updates;
    diag->last_gate = c->gate;
    if (c->gate.decision == GateDecision::rejected) ++diag->gate_rejections;
    if (c->gate.decision == GateDecision::bypassed) {
      ++diag->gate_bypasses;
      diag->log("ukf: singular innovation covariance at t=" + std::to_string(r.t) + ", gate bypassed");
    }
  }
  return c->estimate;
}

}  // namespace terrafuse
