// terrafuse: run, replay and score sensor-fusion terrain-mapping studies.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "terrafuse/config.hpp"
#include "terrafuse/errors.hpp"
#include "terrafuse/metrics.hpp"
#include "terrafuse/recording.hpp"
#include "terrafuse/scenario.hpp"

namespace fs = std::filesystem;
using namespace terrafuse;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::optional<std::uint64_t> seed_override;
  std::string out_dir;
  bool quiet = false;
};

void print_summary(const std::vector<GroupResult>& results) {
  std::printf("%-6s %-4s %4s %4s %4s %10s %10s %8s %8s\n", "group", "filt", "gps", "imu", "enc", "net_rmse",
              "max_err", "J_r", "J_s");
  for (const auto& r : summarize_study(results)) {
    std::printf("%-6d %-4s %4d %4d %4d %10.3f %10.3f %8.4f %8.4f\n", r.group, r.filter.c_str(), r.gps_count,
                r.imu_count, r.encoder, r.net_rmse_mean, r.max_err_mean, r.J_r, r.J_s);
  }
}

int cmd_validate(const std::string& path) {
  const auto cfg = load_config(path);
  std::printf("%s: ok (%zu devices, %zu groups, %zu seeds)\n", path.c_str(), cfg.devices.size(), cfg.groups.size(),
              cfg.seeds.size());
  return 0;
}

int cmd_run(const std::string& path, const Globals& g) {
  const auto cfg = load_config(path);
  StudyOptions opt;
  opt.seed_override = g.seed_override;
  if (!g.out_dir.empty()) opt.out_dir = g.out_dir;
  if (!g.quiet) opt.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
  const auto outcome = run_study(cfg, opt);
  if (!g.quiet) print_summary(outcome.results);
  std::printf("%s\n", outcome.run_dir.string().c_str());
  return 0;
}

int cmd_replay(const std::string& path, int group, const std::string& filter, const Globals& g) {
  const Recording rec = decode_recording(read_file(path));
  std::optional<FilterKind> kind;
  if (!filter.empty()) kind = parse_filter_kind(filter);
  const GroupRun run = replay_group(rec, group, kind);
  const ScenarioConfig cfg = parse_config(rec.config_text);
  const fs::path base = g.out_dir.empty() ? fs::path(path).parent_path() : fs::path(g.out_dir);
  const fs::path dir = base / ("replay_" + group_dir_name(group) + "_" + run.result.filter);
  write_group_artifacts(dir, run, cfg.outputs, cfg.world);
  if (!g.quiet) {
    std::printf("group %d (%s) seed %llu: net RMSE %.3f m, max %.3f m, J_r %.4f, J_s %.4f\n", group,
                run.result.filter.c_str(), static_cast<unsigned long long>(rec.seed),
                run.result.trajectory.net_rmse, run.result.trajectory.max_error, run.result.map.J_r,
                run.result.map.J_s);
  }
  std::printf("%s\n", dir.string().c_str());
  return 0;
}

int cmd_map_diff(const std::string& map_path, const std::string& config_path, const Globals& g) {
  const auto cfg = load_config(config_path);
  const auto map = deserialize_map(read_file(map_path));
  const fs::path dir = g.out_dir.empty() ? fs::path(map_path).parent_path() : fs::path(g.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = fs::path(map_path).stem().string();
  for (const auto& layer : map.layers()) {
    const auto c = layer_errors(map, layer.kind, cfg.world);
    const double j = c.total ? static_cast<double>(c.errors) / static_cast<double>(c.total) : 0.0;
    std::printf("%s: E=%llu T=%llu J=%.6f\n", to_string(layer.kind), static_cast<unsigned long long>(c.errors),
                static_cast<unsigned long long>(c.total), j);
    detail::write_bytes(dir / (stem + "_mispredict_" + to_string(layer.kind) + ".pgm"), mask_to_pgm(map, c.mask));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sensor fusion and terrain-mapping study runner"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed-override", seed, "Run a single seed instead of the configured list");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  std::string config, recording, map_path, filter;
  int group = 0;
  auto* run = app.add_subcommand("run", "Run the full study described by a config file");
  run->add_option("config", config, "Scenario config")->required();
  auto* replay = app.add_subcommand("replay", "Re-run one group from a recording");
  replay->add_option("recording", recording, "Recording file (.tfsr)")->required();
  replay->add_option("--group", group, "Group id")->required();
  replay->add_option("--filter", filter, "ekf or ukf (default: the group's filter)")
      ->check(CLI::IsMember({"ekf", "ukf"}));
  auto* diff = app.add_subcommand("map-diff", "Score a saved grid map against a config's ground truth");
  diff->add_option("map", map_path, "Grid map (.bin)")->required();
  diff->add_option("config", config, "Scenario config")->required();
  auto* validate = app.add_subcommand("validate", "Check a config file and report every problem");
  validate->add_option("config", config, "Scenario config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }
  if (*seed_opt) g.seed_override = seed;

  try {
    if (*run) return cmd_run(config, g);
    if (*replay) return cmd_replay(recording, group, filter, g);
    if (*diff) return cmd_map_diff(map_path, config, g);
    if (*validate) return cmd_validate(config);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid configuration:\n");
    for (const auto& v : e.violations()) std::fprintf(stderr, "  %s\n", v.c_str());
    return kExitValidation;
  } catch (const PartialArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "completed artifacts:\n");
    for (const auto& c : e.completed()) std::fprintf(stderr, "  %s\n", c.c_str());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
