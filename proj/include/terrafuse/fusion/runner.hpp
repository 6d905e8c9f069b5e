#pragma once

// Drives an EKF or UKF over a merged, time-ordered reading stream.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/fusion/ekf.hpp"
#include "terrafuse/fusion/gate.hpp"
#include "terrafuse/fusion/state.hpp"
#include "terrafuse/fusion/ukf.hpp"
#include "terrafuse/sensors.hpp"

namespace terrafuse {

enum class FilterKind { ekf, ukf };

inline const char* to_string(FilterKind k) { return k == FilterKind::ekf ? "ekf" : "ukf"; }

inline FilterKind parse_filter_kind(std::string_view s) {
  if (s == "ekf" || s == "EKF") return FilterKind::ekf;
  if (s == "ukf" || s == "UKF") return FilterKind::ukf;
  throw InvalidArgument("unknown filter kind '" + std::string(s) + "'");
}

struct FilterConfig {
  NoiseConfig noise;
  GateConfig gate = GateConfig::chi_square(0.999);
  InitConfig init;
  double output_rate_hz = 10.0;
};

/// Single-owner filter state machine.
class Filter {
 public:
  Filter(FilterKind kind, FilterConfig config, StateEstimate init)
      : kind_(kind), config_(std::move(config)), estimate_(std::move(init)) {}

  void predict_to(double t) {
    const double dt = t - estimate_.t;
    if (dt < 0.0) throw StreamOrderError("filter asked to predict backwards in time");
    if (dt == 0.0) return;
    estimate_ = kind_ == FilterKind::ekf ? ekf_predict(estimate_, config_.noise, dt)
                                         : ukf_predict(estimate_, config_.noise, dt, &diag_);
    estimate_.t = t;
  }

  void update(const SensorReading& r) {
    predict_to(r.t);
    estimate_ = kind_ == FilterKind::ekf ? ekf_update(estimate_, r, config_.gate, &diag_)
                                         : ukf_update(estimate_, r, config_.gate, &diag_);
  }

  const StateEstimate& estimate() const { return estimate_; }
  const FilterDiagnostics& diagnostics() const { return diag_; }
  FilterKind kind() const { return kind_; }

 private:
  FilterKind kind_;
  FilterConfig config_;
  StateEstimate estimate_;
  FilterDiagnostics diag_;
};

/// Starts from the first GPS fix when one arrives at the stream's first
/// timestamp, otherwise from the odom origin. Attitude and rates start at zero.
inline StateEstimate initial_estimate(const std::vector<SensorReading>& readings, const InitConfig& init,
                                      double t0 = 0.0) {
  StateEstimate e;
  e.P = init.P0();
  e.t = readings.empty() ? t0 : readings.front().t;
  for (const auto& r : readings) {
    if (r.t != e.t) break;
    if (r.kind == SensorKind::gps_position) {
      e.x.segment<3>(kX) = r.value - r.mount_offset;
      break;
    }
  }
  return e;
}

using EstimateSink = std::function<void(const StateEstimate&)>;

/// Emits the initial estimate, the posterior after every reading, and
/// predict-only estimates on the output grid wherever a full grid period
/// passes without any emission. Grid output continues to `end_time`.
inline FilterDiagnostics run_filter(FilterKind kind, const FilterConfig& config,
                                    const std::vector<SensorReading>& readings, const StateEstimate& init,
                                    double end_time, const EstimateSink& sink) {
  for (std::size_t i = 1; i < readings.size(); ++i) {
    if (readings[i].t < readings[i - 1].t) throw StreamOrderError("readings are not time-ordered");
  }
  if (!readings.empty() && readings.front().t < init.t) throw StreamOrderError("reading precedes the initial state");

  Filter f(kind, config, init);
  const double period = 1.0 / config.output_rate_hz;
  const double t0 = init.t;
  long next_grid = 1;
  double last_emit = t0;
  sink(f.estimate());

  auto emit_gap_grid = [&](double until, bool inclusive) {
    for (;;) {
      const double g = t0 + static_cast<double>(next_grid) / config.output_rate_hz;
      if (inclusive ? g > until + 1e-12 : g >= until) break;
      if (g - last_emit >= period - 1e-12 && g > f.estimate().t) {
        f.predict_to(g);
        sink(f.estimate());
        last_emit = g;
      }
      ++next_grid;
    }
  };

  for (const auto& r : readings) {
    emit_gap_grid(r.t, false);
    f.update(r);
    sink(f.estimate());
    last_emit = r.t;
  }
  emit_gap_grid(end_time, true);
  return f.diagnostics();
}

inline std::vector<StateEstimate> run_filter(FilterKind kind, const FilterConfig& config,
                                             const std::vector<SensorReading>& readings, const StateEstimate& init,
                                             double end_time) {
  std::vector<StateEstimate> out;
  run_filter(kind, config, readings, init, end_time, [&](const StateEstimate& e) { out.push_back(e); });
  return out;
}

/// Pose sample on the output grid.
struct GridSample {
  double t = 0.0;
  StateVector x = StateVector::Zero();
};

/// Sink adapter: for each grid time g takes the last estimate with t <= g
/// and dead-reckons its mean forward to g.
class GridResampler {
 public:
  GridResampler(double t0, double end_time, double rate_hz) : t0_(t0), end_(end_time), rate_(rate_hz) {}

  void operator()(const StateEstimate& e) {
    if (have_) flush_before(e.t);
    last_ = {e.t, e.x};
    have_ = true;
  }

  std::vector<GridSample> finish() {
    if (have_) flush_before(std::numeric_limits<double>::infinity());
    return std::move(out_);
  }

 private:
  void flush_before(double t) {
    for (;;) {
      const double g = t0_ + static_cast<double>(k_) / rate_;
      if (g > end_ + 1e-12 || g >= t) return;
      if (g >= last_.t) {
        GridSample s{g, g > last_.t ? propagate(last_.x, g - last_.t) : last_.x};
        out_.push_back(s);
      }
      ++k_;
    }
  }

  double t0_, end_, rate_;
  long k_ = 0;
  bool have_ = false;
  GridSample last_;
  std::vector<GridSample> out_;
};

}  // namespace terrafuse
