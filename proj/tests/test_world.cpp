#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "terrafuse/world.hpp"

using namespace terrafuse;

namespace {

GroundTruthMap flat_map(double half = 500.0) {
  return GroundTruthMap({-half, -half, half, half}, 0.02, 0.0, {}, {});
}

VehicleState moving(double speed, double yaw) {
  VehicleState s;
  s.pose.yaw = yaw;
  s.v = Eigen::Vector3d(speed, 0.0, 0.0);
  return s;
}

// Long intervals are covered in steps no larger than the allowed maximum.
VehicleState advance(const GroundTruthMap& map, VehicleState s, const DriveCommand& cmd, double seconds,
                     double dt) {
  const auto n = static_cast<int>(std::lround(seconds / dt));
  for (int k = 0; k < n; ++k) s = step_vehicle(map, VehicleLimits{}, s, cmd, dt);
  return s;
}

}  // namespace

TEST(SampleGround, DefaultSiteSurfaces) {
  const GroundTruthMap map = default_site();
  EXPECT_DOUBLE_EQ(sample_ground(map, 120.0, 50.0).resistance, 0.250);
  EXPECT_DOUBLE_EQ(sample_ground(map, 10.0, 0.0).resistance, 0.008);
  EXPECT_DOUBLE_EQ(sample_ground(map, 30.0, 60.0).resistance, 0.02);
  EXPECT_DOUBLE_EQ(sample_ground(map, 30.0, 140.0).resistance, 0.040);
  EXPECT_DOUBLE_EQ(sample_ground(map, 120.0, 120.0).resistance, 0.060);
  EXPECT_DOUBLE_EQ(sample_ground(map, 130.0, 130.0).slope_deg, 15.0);
  EXPECT_DOUBLE_EQ(sample_ground(map, 30.0, 130.0).slope_deg, 0.0);
}

TEST(SampleGround, OutsideZonesAndExtentUsesDefaults) {
  const GroundTruthMap map({0, 0, 100, 100}, 0.03, 2.0, {{"a", rectangle(10, 10, 20, 20), 0.1}}, {});
  EXPECT_DOUBLE_EQ(map.sample(50.0, 50.0).resistance, 0.03);
  EXPECT_DOUBLE_EQ(map.sample(50.0, 50.0).slope_deg, 2.0);
  EXPECT_DOUBLE_EQ(map.sample(15.0, 15.0).resistance, 0.1);
  EXPECT_DOUBLE_EQ(map.sample(15.0, 15.0).slope_deg, 2.0);
  EXPECT_DOUBLE_EQ(map.sample(-500.0, 15.0).resistance, 0.03);
}

TEST(SampleGround, FirstZoneInListOrderWins) {
  const GroundTruthMap map({0, 0, 100, 100}, 0.03, 0.0,
                           {{"first", rectangle(0, 0, 50, 50), 0.1}, {"second", rectangle(25, 25, 75, 75), 0.2}}, {});
  EXPECT_DOUBLE_EQ(map.sample(30.0, 30.0).resistance, 0.1);
  EXPECT_DOUBLE_EQ(map.sample(60.0, 60.0).resistance, 0.2);
}

TEST(SampleGround, SharedEdgesBelongToExactlyOneZone) {
  const GroundTruthMap map = default_site();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20.0, 180.0);
  for (int k = 0; k < 20000; ++k) {
    // Snap half the samples onto the 20 m lattice where zone borders lie.
    double x = u(rng), y = u(rng);
    if (k % 2 == 0) {
      x = 20.0 * std::round(x / 20.0);
      y = 20.0 * std::round(y / 20.0);
    }
    if (!map.extent().contains(x, y)) continue;
    int claims = 0;
    for (const auto& z : map.resistance_zones()) claims += point_in_polygon(z.boundary, x, y) ? 1 : 0;
    ASSERT_EQ(claims, 1) << x << " " << y;
  }
}

TEST(PointInPolygon, HalfOpenRectangle) {
  const Polygon r = rectangle(0, 0, 10, 10);
  EXPECT_TRUE(point_in_polygon(r, 0.0, 0.0));
  EXPECT_TRUE(point_in_polygon(r, 0.0, 5.0));
  EXPECT_TRUE(point_in_polygon(r, 5.0, 0.0));
  EXPECT_FALSE(point_in_polygon(r, 10.0, 5.0));
  EXPECT_FALSE(point_in_polygon(r, 5.0, 10.0));
  EXPECT_FALSE(point_in_polygon(r, -1e-9, 5.0));
  EXPECT_TRUE(point_in_polygon(r, 9.999999, 9.999999));
}

TEST(GroundTruthMap, RejectsInvalidZones) {
  const Rect ext{0, 0, 100, 100};
  const Polygon bowtie = {{0, 0}, {10, 10}, {10, 0}, {0, 10}};
  EXPECT_FALSE(polygon_is_simple(bowtie));
  EXPECT_THROW(GroundTruthMap(ext, 0.02, 0.0, {{"b", bowtie, 0.1}}, {}), InvalidArgument);
  EXPECT_THROW(GroundTruthMap(ext, 0.02, 0.0, {{"b", rectangle(0, 0, 10, 10), 1.0}}, {}), InvalidArgument);
  EXPECT_THROW(GroundTruthMap(ext, 0.02, 0.0, {}, {{"s", rectangle(0, 0, 10, 10), 90.0}}), InvalidArgument);
  EXPECT_THROW(GroundTruthMap(ext, 0.02, 0.0, {{"o", rectangle(50, 50, 150, 60), 0.1}}, {}), InvalidArgument);
  EXPECT_THROW(GroundTruthMap({0, 0, 0, 10}, 0.02, 0.0, {}, {}), InvalidArgument);
}

TEST(StepVehicle, StraightAheadOneSecond) {
  const auto map = flat_map();
  const VehicleState s = advance(map, moving(1.0, 0.0), {1.0, 0.0}, 1.0, 0.1);
  EXPECT_NEAR(s.pose.x, 1.0, 1e-12);
  EXPECT_NEAR(s.pose.y, 0.0, 1e-12);
  EXPECT_NEAR(s.t, 1.0, 1e-12);
}

TEST(StepVehicle, HeadingNorthMovesAlongY) {
  const auto map = flat_map();
  const VehicleState s = advance(map, moving(1.0, kPi / 2.0), {1.0, 0.0}, 1.0, 0.1);
  EXPECT_NEAR(s.pose.y, 1.0, 1e-12);
  EXPECT_NEAR(s.pose.x, 0.0, 1e-12);
}

TEST(StepVehicle, ConstantTurnTracesCircle) {
  const auto map = flat_map();
  VehicleState s = moving(1.0, 0.0);
  s.w = Eigen::Vector3d(0.0, 0.0, 0.1);
  const DriveCommand cmd{1.0, 0.1};
  for (int k = 0; k < 1000; ++k) {
    s = step_vehicle(map, VehicleLimits{}, s, cmd, 0.01);
    // Centre of the circle of radius v / w = 10 m is (0, 10).
    ASSERT_NEAR(std::hypot(s.pose.x, s.pose.y - 10.0), 10.0, 0.05);
  }
  EXPECT_NEAR(s.pose.yaw, 1.0, 1e-9);
  EXPECT_NEAR(s.pose.x, 10.0 * std::sin(1.0), 0.05);
  EXPECT_NEAR(s.pose.y, 10.0 * (1.0 - std::cos(1.0)), 0.05);
}

TEST(StepVehicle, AccelerationAndYawRateAreBounded) {
  const auto map = flat_map();
  const VehicleLimits lim{0.5, 0.4, 1.0};
  VehicleState s;
  for (int k = 0; k < 100; ++k) {
    const VehicleState n = step_vehicle(map, lim, s, {10.0, 5.0}, 0.05);
    ASSERT_LE(n.v.x() - s.v.x(), 0.5 * 0.05 + 1e-12);
    ASSERT_LE(std::abs(n.w.z()), 0.4 + 1e-12);
    s = n;
  }
  EXPECT_NEAR(s.v.x(), 2.5, 1e-9);
  EXPECT_NEAR(s.w.z(), 0.4, 1e-12);
}

TEST(StepVehicle, PitchFollowsSlopeLayer) {
  const GroundTruthMap map({-100, -100, 100, 100}, 0.02, 0.0, {}, {{"ramp", rectangle(5, -10, 50, 10), 15.0}});
  VehicleState s = advance(map, moving(1.0, 0.0), {1.0, 0.0}, 10.0, 0.1);
  EXPECT_NEAR(s.pose.pitch, deg2rad(15.0), 1e-12);
  EXPECT_NE(s.pose.z, 0.0);
  s = advance(map, moving(1.0, 0.0), {1.0, 0.0}, 4.0, 0.1);
  EXPECT_EQ(s.pose.pitch, 0.0);
  EXPECT_EQ(s.pose.z, 0.0);
}

TEST(StepVehicle, RejectsOutOfRangeDt) {
  const auto map = flat_map();
  EXPECT_THROW(step_vehicle(map, VehicleLimits{}, VehicleState{}, {}, 0.0), InvalidArgument);
  EXPECT_THROW(step_vehicle(map, VehicleLimits{}, VehicleState{}, {}, 0.11), InvalidArgument);
  EXPECT_THROW(step_vehicle(map, VehicleLimits{}, VehicleState{}, {}, -0.01), InvalidArgument);
  EXPECT_NO_THROW(step_vehicle(map, VehicleLimits{}, VehicleState{}, {}, 0.1));
}

TEST(DriveWaypoints, StraightHundredMetres) {
  WaypointScript script;
  script.waypoints = {{0, 0}, {100, 0}};
  const DriveResult r = drive_waypoints(flat_map(), script, 0.01);
  EXPECT_FALSE(r.truncated);
  EXPECT_NEAR(r.states.back().t, 50.0, 2.0);
}

TEST(DriveWaypoints, UnreachableWaypointTruncates) {
  WaypointScript script;
  // The start faces the first leg, so the lateral waypoint is the one that cannot be reached.
  script.waypoints = {{0, 0}, {20, 0}, {20, 50}};
  script.max_yaw_rate = 0.0;
  script.time_cap = 60.0;
  const DriveResult r = drive_waypoints(flat_map(), script, 0.1);
  EXPECT_TRUE(r.truncated);
  EXPECT_NEAR(r.states.back().t, 60.0, 1e-9);
}

TEST(DriveWaypoints, RejectsBadScripts) {
  WaypointScript script;
  script.waypoints = {{0, 0}};
  EXPECT_THROW(drive_waypoints(flat_map(), script, 0.01), InvalidArgument);
  script.waypoints = {{0, 0}, {1000, 0}};
  EXPECT_THROW(drive_waypoints(flat_map(), script, 0.01), InvalidArgument);
  script.waypoints = {{0, 0}, {10, 0}};
  script.cruise_speed = 0.0;
  EXPECT_THROW(drive_waypoints(flat_map(), script, 0.01), InvalidArgument);
  script.cruise_speed = 2.0;
  EXPECT_THROW(drive_waypoints(flat_map(), script, 0.2), InvalidArgument);
}

class DefaultCourse : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    script_.waypoints = {{0, 0}, {160, 0}, {160, 60}, {40, 60}, {40, 140}, {140, 140}};
    result_ = drive_waypoints(default_site(), script_, kDt);
  }
  static constexpr double kDt = 0.01;
  static inline WaypointScript script_;
  static inline DriveResult result_;
};

TEST_F(DefaultCourse, ReachesEveryWaypoint) {
  EXPECT_FALSE(result_.truncated);
  const auto& last = result_.states.back();
  EXPECT_LE(std::hypot(last.pose.x - 140.0, last.pose.y - 140.0), script_.reach_radius);
}

TEST_F(DefaultCourse, TimestampsAdvanceByExactlyDt) {
  const auto& st = result_.states;
  for (std::size_t k = 0; k < st.size(); ++k) ASSERT_EQ(st[k].t, static_cast<double>(k) * kDt);
}

TEST_F(DefaultCourse, SpeedAndYawRateLimits) {
  for (const auto& s : result_.states) {
    ASSERT_LE(s.v.norm(), script_.cruise_speed + script_.max_accel * kDt + 1e-12);
    const double yaw_rate = (euler_rate_matrix(s.pose.roll, s.pose.pitch) * s.w).z();
    ASSERT_LE(std::abs(yaw_rate), script_.max_yaw_rate + 1e-12);
    ASSERT_TRUE(s.pose.yaw > -kPi && s.pose.yaw <= kPi);
    ASSERT_TRUE(std::isfinite(s.pose.x) && std::isfinite(s.pose.y) && std::isfinite(s.pose.z));
  }
}

TEST_F(DefaultCourse, StaysInsideSite) {
  const auto map = default_site();
  for (const auto& s : result_.states) ASSERT_TRUE(map.extent().contains(s.pose.x, s.pose.y));
}

TEST_F(DefaultCourse, FlatGroundKeepsHeight) {
  // Before the ramp is ever entered z must not move.
  for (const auto& s : result_.states) {
    if (default_site().sample(s.pose.x, s.pose.y).slope_deg != 0.0) break;
    ASSERT_NEAR(s.pose.z, 0.0, 1e-9);
  }
}

TEST_F(DefaultCourse, Deterministic) {
  const DriveResult again = drive_waypoints(default_site(), script_, kDt);
  ASSERT_EQ(again.states.size(), result_.states.size());
  for (std::size_t k = 0; k < again.states.size(); ++k) {
    const auto& a = again.states[k].pose;
    const auto& b = result_.states[k].pose;
    ASSERT_EQ(a.x, b.x);
    ASSERT_EQ(a.y, b.y);
    ASSERT_EQ(a.z, b.z);
    ASSERT_EQ(a.yaw, b.yaw);
    ASSERT_EQ(a.pitch, b.pitch);
  }
}
