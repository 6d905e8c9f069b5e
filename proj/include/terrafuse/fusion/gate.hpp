#pragma once

// Mahalanobis outlier gate on the innovation and its covariance.

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "terrafuse/errors.hpp"

namespace terrafuse {

inline constexpr int kMaxMeasurementDim = 9;

/// Distance cutoff per measurement dimension (index = dimension).
struct GateConfig {
  std::array<double, kMaxMeasurementDim + 1> threshold;

  GateConfig() { threshold.fill(std::numeric_limits<double>::infinity()); }

  /// sqrt of the chi-square quantile with `dim` degrees of freedom.
  static GateConfig chi_square(double quantile) {
    if (!(quantile > 0.0 && quantile < 1.0)) throw InvalidArgument("gate quantile must lie in (0, 1)");
    GateConfig g;
    for (int d = 1; d <= kMaxMeasurementDim; ++d) {
      boost::math::chi_squared dist(d);
      g.threshold[d] = std::sqrt(boost::math::quantile(dist, quantile));
    }
    return g;
  }

  static GateConfig disabled() { return {}; }

  double cutoff(int dim) const {
    if (dim < 1 || dim > kMaxMeasurementDim) throw InvalidArgument("gate: unsupported measurement dimension");
    return threshold[static_cast<std::size_t>(dim)];
  }
};

enum class GateDecision { accepted, rejected, bypassed };

struct GateResult {
  GateDecision decision = GateDecision::accepted;
  double distance = 0.0;  // NaN when bypassed
};

/// D_M = sqrt(nu^T S^-1 nu). A singular or indefinite S bypasses the gate.
/// Angle components of `innovation` must already be wrapped.
template <typename Vec, typename Mat>
GateResult mahalanobis_gate(const Eigen::MatrixBase<Vec>& innovation, const Eigen::MatrixBase<Mat>& s,
                            const GateConfig& g) {
  using Square = Eigen::Matrix<double, Mat::RowsAtCompileTime, Mat::ColsAtCompileTime, 0,
                               Mat::MaxRowsAtCompileTime, Mat::MaxColsAtCompileTime>;
  using Column = Eigen::Matrix<double, Vec::RowsAtCompileTime, 1, 0, Vec::MaxRowsAtCompileTime, 1>;
  Eigen::LLT<Square> llt{Square(s)};
  if (llt.info() != Eigen::Success) return {GateDecision::bypassed, std::numeric_limits<double>::quiet_NaN()};
  const Column y = llt.matrixL().solve(Column(innovation));
  const double d = std::sqrt(y.squaredNorm());
  const auto dim = static_cast<int>(innovation.size());
  return {d <= g.cutoff(dim) ? GateDecision::accepted : GateDecision::rejected, d};
}

/// Counters kept by a filter instance.
struct FilterDiagnostics {
  std::size_t updates = 0;
  std::size_t gate_rejections = 0;
  std::size_t gate_bypasses = 0;
  std::size_t lambda_fallbacks = 0;
  GateResult last_gate;
  std::vector<std::string> events;

  void log(std::string e) {
    if (events.size() < 1000) events.push_back(std::move(e));
  }
};

}  // namespace terrafuse
