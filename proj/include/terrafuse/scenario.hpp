#pragma once

// Study orchestration: simulate each seed once, run every sensor group's
// filter over the shared recording, score it and write the artifacts.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "terrafuse/config.hpp"
#include "terrafuse/errors.hpp"
#include "terrafuse/fusion.hpp"
#include "terrafuse/gridmap.hpp"
#include "terrafuse/metrics.hpp"
#include "terrafuse/recording.hpp"
#include "terrafuse/sensors.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

/// Drives the scripted course and simulates every configured device.
inline Recording simulate_recording(const ScenarioConfig& cfg, std::uint64_t seed) {
  Recording rec;
  rec.seed = seed;
  rec.truth_dt = cfg.sim_dt;
  rec.config_text = cfg.source_text;
  rec.truth = drive_waypoints(cfg.world, cfg.script, cfg.sim_dt).states;
  const OdomFrame frame = cfg.odom_frame();
  for (const auto& d : cfg.devices) {
    rec.devices.push_back({d.id, d.kind(), d.name, d.lever_arm()});
    rec.streams.push_back(simulate_device(d, rec.truth, cfg.sim_dt, frame, seed));
  }
  return rec;
}

struct TruthSample {
  double t = 0.0, x = 0.0, y = 0.0, z = 0.0;
};

/// Linear interpolation on the uniformly sampled truth trajectory.
inline TruthSample truth_position(const Recording& rec, double t) {
  const auto& s = rec.truth;
  if (s.empty()) throw EvaluationError("recording has no truth trajectory");
  const double f = std::clamp(t / rec.truth_dt, 0.0, static_cast<double>(s.size() - 1));
  const auto k = std::min(static_cast<std::size_t>(f), s.size() - 1);
  if (k + 1 >= s.size()) return {t, s[k].pose.x, s[k].pose.y, s[k].pose.z};
  const double u = f - static_cast<double>(k);
  const auto& a = s[k].pose;
  const auto& b = s[k + 1].pose;
  return {t, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), a.z + u * (b.z - a.z)};
}

struct GroupRun {
  GroupResult result;
  std::vector<GridSample> estimate;
  std::vector<TruthSample> truth;
  MultiLayerGridMap map;
  FilterDiagnostics diagnostics;
};

/// Readings of the devices named by the group, merged into one ordered stream.
inline std::vector<SensorReading> group_readings(const Recording& rec, const StudyGroup& g) {
  std::vector<std::vector<SensorReading>> streams;
  for (const auto& name : g.devices) {
    const auto* d = rec.device(name);
    if (!d) throw InvalidArgument("group " + std::to_string(g.id) + ": device '" + name + "' not in recording");
    streams.push_back(*rec.stream(d->id));
  }
  return merge_streams(streams);
}

inline GroupRun run_group(const ScenarioConfig& cfg, const Recording& rec, const StudyGroup& g,
                          std::optional<FilterKind> filter_override = std::nullopt) {
  const FilterKind kind = filter_override.value_or(g.filter);
  const auto readings = group_readings(rec, g);
  const double end_time = rec.truth.back().t;
  const StateEstimate init = initial_estimate(readings, cfg.filter.init, 0.0);

  GridResampler grid(init.t, end_time, cfg.filter.output_rate_hz);
  const FilterDiagnostics diag =
      run_filter(kind, cfg.filter, readings, init, end_time, [&](const StateEstimate& e) { grid(e); });

  GroupRun run{.result = {},
               .estimate = grid.finish(),
               .truth = {},
               .map = MultiLayerGridMap::covering(cfg.world.extent(), cfg.map_resolution),
               .diagnostics = diag};
  std::vector<PlanarSample> est, truth;
  for (const auto& s : run.estimate) {
    run.truth.push_back(truth_position(rec, s.t));
    est.push_back({s.t, s.x[kX], s.x[kY]});
    truth.push_back({s.t, run.truth.back().x, run.truth.back().y});
  }
  run_plotter(truth, est, cfg.world, run.map);

  const auto counts = count_sensors(cfg, g);
  run.result.group = g.id;
  run.result.filter = to_string(kind);
  run.result.gps_count = counts.gps;
  run.result.imu_count = counts.imu;
  run.result.encoder = counts.encoder;
  run.result.seed = rec.seed;
  run.result.trajectory = trajectory_error(est, truth);
  run.result.map = map_error_rate(run.map, cfg.world);
  return run;
}

/// Re-runs one group from a recording, optionally with the other filter.
inline GroupRun replay_group(const Recording& rec, int group_id, std::optional<FilterKind> filter = std::nullopt) {
  const ScenarioConfig cfg = parse_config(rec.config_text);
  const auto* g = cfg.group(group_id);
  if (!g) throw InvalidArgument("recording's scenario has no group " + std::to_string(group_id));
  return run_group(cfg, rec, *g, filter);
}

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline std::string trajectory_csv(const GroupRun& run) {
  std::string out = "t,truth_x,truth_y,truth_z,est_x,est_y,est_z,eucl_err\n";
  for (std::size_t k = 0; k < run.estimate.size(); ++k) {
    const auto& e = run.estimate[k];
    const auto& t = run.truth[k];
    out += detail::fmt("%.3f", e.t);
    for (double v : {t.x, t.y, t.z, e.x[kX], e.x[kY], e.x[kZ]}) out += "," + detail::fmt("%.6f", v);
    out += "," + detail::fmt("%.6f", run.result.trajectory.euclidean[k]) + "\n";
  }
  return out;
}

inline std::string errors_csv(const GroupRun& run) {
  std::string out = "t,err_x,err_y,eucl_err,rmse_running\n";
  double ss = 0.0;
  for (std::size_t k = 0; k < run.estimate.size(); ++k) {
    const double ex = run.estimate[k].x[kX] - run.truth[k].x;
    const double ey = run.estimate[k].x[kY] - run.truth[k].y;
    ss += ex * ex + ey * ey;
    out += detail::fmt("%.3f", run.estimate[k].t);
    for (double v : {ex, ey, run.result.trajectory.euclidean[k], std::sqrt(ss / static_cast<double>(k + 1))})
      out += "," + detail::fmt("%.6f", v);
    out += "\n";
  }
  return out;
}

inline std::string diagnostics_text(const GroupRun& run) {
  const auto& d = run.diagnostics;
  std::string out;
  out += "filter " + run.result.filter + "\n";
  out += "updates " + std::to_string(d.updates) + "\n";
  out += "gate_rejections " + std::to_string(d.gate_rejections) + "\n";
  out += "gate_bypasses " + std::to_string(d.gate_bypasses) + "\n";
  out += "lambda_fallbacks " + std::to_string(d.lambda_fallbacks) + "\n";
  out += "map_skipped " + std::to_string(run.map.skipped()) + "\n";
  for (const auto& e : d.events) out += e + "\n";
  return out;
}

/// Writes every per-group artifact into `dir` (created if missing).
inline void write_group_artifacts(const std::filesystem::path& dir, const GroupRun& run, const OutputConfig& out,
                                  const GroundTruthMap& world) {
  std::filesystem::create_directories(dir);
  if (out.csv) {
    detail::write_bytes(dir / "trajectory.csv", trajectory_csv(run));
    detail::write_bytes(dir / "errors.csv", errors_csv(run));
  }
  detail::write_bytes(dir / "diagnostics.txt", diagnostics_text(run));
  for (auto [kind, stem, mask] : {std::tuple{LayerKind::resistance, "resistance", "mispredict_r.pgm"},
                                  std::tuple{LayerKind::grade, "grade", "mispredict_s.pgm"}}) {
    const std::string s = stem;
    if (out.bin) detail::write_bytes(dir / (s + ".bin"), serialize_map(run.map.only(kind)));
    if (out.csv) detail::write_bytes(dir / (s + ".csv"), layer_to_csv(run.map, kind));
    if (out.pgm) {
      detail::write_bytes(dir / (s + ".pgm"), layer_to_pgm(run.map, kind));
      detail::write_bytes(dir / mask, mask_to_pgm(run.map, layer_errors(run.map, kind, world).mask));
    }
  }
}

inline std::string group_dir_name(int group_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "group_%02d", group_id);
  return buf;
}

struct StudyOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_dir;  // overrides [outputs] directory
  bool write_artifacts = true;
  bool write_recordings = true;
  unsigned workers = 0;  // 0 = config value, then available parallelism
  std::function<void(const std::string&)> log;
};

struct StudyOutcome {
  std::vector<GroupResult> results;  // seed-major, groups in id order
  std::filesystem::path run_dir;
};

/// Fresh `run_<timestamp>_<config hash>` directory; never reuses an existing one.
inline std::filesystem::path make_run_dir(const std::filesystem::path& base, const std::string& config_text) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  char hash[24];
  std::snprintf(hash, sizeof hash, "%08llx",
                static_cast<unsigned long long>(detail::fnv1a(config_text) & 0xffffffffULL));
  std::filesystem::create_directories(base);
  const std::string stem = std::string("run_") + stamp + "_" + hash;
  for (int k = 0;; ++k) {
    auto dir = base / (k == 0 ? stem : stem + "_" + std::to_string(k));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

/// Runs items [0, n) on up to `workers` threads. All items run even if some
/// fail; the failures are returned by index.
inline std::vector<std::exception_ptr> parallel_for(std::size_t n, unsigned workers,
                                                    const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < count; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return errors;
}

inline std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

/// Runs every (seed, group) pair. Seeds run one after another so only one
/// recording is held in memory; groups of a seed run in parallel.
inline StudyOutcome run_study(const ScenarioConfig& cfg, const StudyOptions& opt = {}) {
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!opt.log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    opt.log(msg);
  };

  const std::vector<std::uint64_t> seeds =
      opt.seed_override ? std::vector<std::uint64_t>{*opt.seed_override} : cfg.seeds;
  unsigned workers = opt.workers ? opt.workers : cfg.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  StudyOutcome outcome;
  if (opt.write_artifacts) outcome.run_dir = make_run_dir(opt.out_dir.value_or(cfg.outputs.directory), cfg.source_text);

  std::vector<std::string> completed;
  std::vector<std::string> failures;
  for (const auto seed : seeds) {
    const auto seed_dir = outcome.run_dir / ("seed_" + std::to_string(seed));
    Recording rec;
    try {
      rec = simulate_recording(cfg, seed);
      if (opt.write_artifacts && opt.write_recordings) {
        std::filesystem::create_directories(seed_dir);
        detail::write_bytes(seed_dir / "recording.tfsr", encode_recording(rec));
        completed.push_back((seed_dir / "recording.tfsr").string());
      }
    } catch (const std::exception& e) {
      failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      log("seed " + std::to_string(seed) + " failed: " + e.what());
      continue;
    }
    log("seed " + std::to_string(seed) + ": simulated " + std::to_string(rec.truth.size()) + " truth states");

    std::vector<std::optional<GroupResult>> slots(cfg.groups.size());
    const auto errors = parallel_for(cfg.groups.size(), workers, [&](std::size_t i) {
      const auto& g = cfg.groups[i];
      GroupRun run = run_group(cfg, rec, g);
      if (opt.write_artifacts) write_group_artifacts(seed_dir / group_dir_name(g.id), run, cfg.outputs, cfg.world);
      log("seed " + std::to_string(seed) + " group " + std::to_string(g.id) + " (" + run.result.filter +
          "): net RMSE " + detail::fmt("%.3f", run.result.trajectory.net_rmse) + " m");
      slots[i] = std::move(run.result);
    });
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const std::string label = "seed " + std::to_string(seed) + " group " + std::to_string(cfg.groups[i].id);
      if (errors[i]) {
        failures.push_back(label + ": " + describe(errors[i]));
        log(label + " failed: " + describe(errors[i]));
      } else {
        outcome.results.push_back(*slots[i]);
        if (opt.write_artifacts) completed.push_back((seed_dir / group_dir_name(cfg.groups[i].id)).string());
      }
    }
  }

  if (opt.write_artifacts && !outcome.results.empty()) {
    detail::write_bytes(outcome.run_dir / "summary.csv", summary_to_csv(summarize_study(outcome.results)));
    completed.push_back((outcome.run_dir / "summary.csv").string());
  }
  if (!failures.empty()) {
    std::string what = std::to_string(failures.size()) + " item(s) failed:";
    for (const auto& f : failures) what += "\n  " + f;
    throw PartialArtifactError(what, completed);
  }
  return outcome;
}

}  // namespace terrafuse
