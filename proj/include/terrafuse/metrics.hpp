#pragma once

// Trajectory RMSE and grid-map error rates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/gridmap.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

struct TrajectoryError {
  std::vector<double> euclidean;
  double rmse_x = 0.0;
  double rmse_y = 0.0;
  double net_rmse = 0.0;
  double max_error = 0.0;
};

inline double net_rmse(double rmse_x, double rmse_y) { return std::hypot(rmse_x, rmse_y); }

/// Linear interpolation of `truth` at time t (clamped to the ends).
inline PlanarSample interpolate(const std::vector<PlanarSample>& truth, double t) {
  if (truth.empty()) throw EvaluationError("interpolate: empty truth trajectory");
  if (t <= truth.front().t) return {t, truth.front().x, truth.front().y};
  if (t >= truth.back().t) return {t, truth.back().x, truth.back().y};
  const auto it = std::lower_bound(truth.begin(), truth.end(), t,
                                   [](const PlanarSample& s, double v) { return s.t < v; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  if (b.t == t) return b;
  const double u = (t - a.t) / (b.t - a.t);
  return {t, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
}

inline std::vector<PlanarSample> align_truth(const std::vector<PlanarSample>& truth,
                                             const std::vector<PlanarSample>& est) {
  std::vector<PlanarSample> out;
  out.reserve(est.size());
  for (const auto& e : est) out.push_back(interpolate(truth, e.t));
  return out;
}

/// Per-axis RMSE over all samples; samples must already be paired one-to-one.
inline TrajectoryError trajectory_error(const std::vector<PlanarSample>& est, const std::vector<PlanarSample>& truth) {
  if (est.size() != truth.size()) throw EvaluationError("trajectory_error: estimate and truth lengths differ");
  TrajectoryError e;
  if (est.empty()) return e;
  double sx = 0.0, sy = 0.0;
  e.euclidean.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double dx = est[i].x - truth[i].x;
    const double dy = est[i].y - truth[i].y;
    sx += dx * dx;
    sy += dy * dy;
    const double d = std::sqrt(dx * dx + dy * dy);
    e.euclidean.push_back(d);
    e.max_error = std::max(e.max_error, d);
  }
  const auto n = static_cast<double>(est.size());
  e.rmse_x = std::sqrt(sx / n);
  e.rmse_y = std::sqrt(sy / n);
  e.net_rmse = net_rmse(e.rmse_x, e.rmse_y);
  return e;
}

inline constexpr double kMapValueTolerance = 1e-9;

struct LayerErrorCount {
  std::uint64_t errors = 0;
  std::uint64_t total = 0;
  std::vector<bool> mask;  // row-major like the map layer
};

inline double truth_value(const GroundTruthMap& truth, LayerKind kind, double x, double y) {
  const GroundSample g = truth.sample(x, y);
  return kind == LayerKind::grade ? g.slope_deg : g.resistance;
}

/// Compares every populated cell with the ground truth at the cell centre.
inline LayerErrorCount layer_errors(const MultiLayerGridMap& est, LayerKind kind, const GroundTruthMap& truth) {
  LayerErrorCount c;
  const auto* l = est.layer(kind);
  if (!l) return c;
  c.mask.assign(l->cells.size(), false);
  for (std::size_t j = 0; j < est.n(); ++j) {
    for (std::size_t i = 0; i < est.m(); ++i) {
      const auto& cell = l->cells[j * est.m() + i];
      if (!cell.known()) continue;
      ++c.total;
      const auto centre = est.cell_center({i, j});
      if (std::abs(cell.value - truth_value(truth, kind, centre.x(), centre.y())) > kMapValueTolerance) {
        ++c.errors;
        c.mask[j * est.m() + i] = true;
      }
    }
  }
  return c;
}

struct MapErrorReport {
  std::uint64_t E_r = 0;
  std::uint64_t E_s = 0;
  std::uint64_t T = 0;
  double J_r = 0.0;
  double J_s = 0.0;
  bool empty = true;
};

/// J = E / T with T the populated-cell count; an empty map reports J = 0.
inline MapErrorReport map_error_rate(const MultiLayerGridMap& est, const GroundTruthMap& truth) {
  const auto r = layer_errors(est, LayerKind::resistance, truth);
  const auto s = layer_errors(est, LayerKind::grade, truth);
  MapErrorReport rep;
  rep.E_r = r.errors;
  rep.E_s = s.errors;
  rep.T = std::max(r.total, s.total);
  rep.empty = rep.T == 0;
  rep.J_r = r.total ? static_cast<double>(r.errors) / static_cast<double>(r.total) : 0.0;
  rep.J_s = s.total ? static_cast<double>(s.errors) / static_cast<double>(s.total) : 0.0;
  return rep;
}

/// True where map_error_rate counted an error, one mask per layer present.
inline std::vector<std::vector<bool>> mispredict_mask(const MultiLayerGridMap& est, const GroundTruthMap& truth) {
  std::vector<std::vector<bool>> out;
  for (const auto& l : est.layers()) out.push_back(layer_errors(est, l.kind, truth).mask);
  return out;
}

inline std::string mask_to_pgm(const MultiLayerGridMap& est, const std::vector<bool>& mask) {
  std::vector<std::uint8_t> px(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) px[i] = mask[i] ? 255 : 0;
  return gray_to_pgm(est.m(), est.n(), px);
}

/// Outcome of one (group, seed) run.
struct GroupResult {
  int group = 0;
  std::string filter;
  int gps_count = 0;
  int imu_count = 0;
  int encoder = 0;
  std::uint64_t seed = 0;
  TrajectoryError trajectory;
  MapErrorReport map;
};

struct SummaryRow {
  int group = 0;
  std::string filter;
  int gps_count = 0, imu_count = 0, encoder = 0;
  std::size_t seed_count = 0;
  double rmse_x_mean = 0.0, rmse_y_mean = 0.0;
  double net_rmse_mean = 0.0, net_rmse_std = 0.0;
  double max_err_mean = 0.0;
  double J_r = 0.0, J_s = 0.0;
};

/// One row per (group, filter, sensor counts), ordered by group id. The
/// standard deviation is the sample (n - 1) estimate, 0 for a single seed.
inline std::vector<SummaryRow> summarize_study(const std::vector<GroupResult>& results) {
  using Key = std::tuple<int, std::string, int, int, int>;
  std::map<Key, std::vector<const GroupResult*>> by_group;
  for (const auto& r : results) by_group[{r.group, r.filter, r.gps_count, r.imu_count, r.encoder}].push_back(&r);

  std::vector<SummaryRow> rows;
  for (const auto& [key, rs] : by_group) {
    SummaryRow row;
    std::tie(row.group, row.filter, row.gps_count, row.imu_count, row.encoder) = key;
    row.seed_count = rs.size();
    const auto n = static_cast<double>(rs.size());
    for (const auto* r : rs) {
      row.rmse_x_mean += r->trajectory.rmse_x / n;
      row.rmse_y_mean += r->trajectory.rmse_y / n;
      row.net_rmse_mean += r->trajectory.net_rmse / n;
      row.max_err_mean += r->trajectory.max_error / n;
      row.J_r += r->map.J_r / n;
      row.J_s += r->map.J_s / n;
    }
    if (rs.size() > 1) {
      double ss = 0.0;
      for (const auto* r : rs) ss += std::pow(r->trajectory.net_rmse - row.net_rmse_mean, 2);
      row.net_rmse_std = std::sqrt(ss / (n - 1.0));
    }
    rows.push_back(row);
  }
  return rows;
}

inline constexpr const char* kSummaryHeader =
    "group,filter,gps_count,imu_count,encoder,seed_count,rmse_x_mean,rmse_y_mean,net_rmse_mean,net_rmse_std,"
    "max_err_mean,J_r,J_s";

inline std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%d,%d,%d,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.group,
                  r.filter.c_str(), r.gps_count, r.imu_count, r.encoder, r.seed_count, r.rmse_x_mean, r.rmse_y_mean,
                  r.net_rmse_mean, r.net_rmse_std, r.max_err_mean, r.J_r, r.J_s);
    out += buf;
  }
  return out;
}

}  // namespace terrafuse
