#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fbgrpo/geometry.hpp"

namespace fbgrpo {

inline constexpr int kHorizonSteps = 8;
inline constexpr double kStepSeconds = 0.5;
inline constexpr int kHistorySteps = 3;
inline constexpr Vec2 kEgoHalfExtent{2.25, 1.0};
inline constexpr double kMaxAbsAcceleration = 8.0;
inline constexpr double kMaxPedestrianSpeed = 3.0;
inline constexpr double kMaxStepDisplacement = 12.0;

struct EgoState {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  double acceleration = 0.0;
};

enum class ObstacleKind { vehicle, pedestrian, static_object };

struct Obstacle {
  ObstacleKind kind = ObstacleKind::vehicle;
  Vec2 position;
  Vec2 velocity;
  Vec2 half_extent{2.25, 1.0};
  double heading = 0.0;

  Vec2 position_at(double t) const { return position + velocity * t; }
  OrientedBox box_at(double t) const { return {position_at(t), half_extent, heading}; }
};

struct StopLine {
  double arc_position = 0.0;  // along the centerline, meters
  bool active = false;
};

struct CorridorPoint {
  double arc_length = 0.0;
  double lateral = 0.0;  // signed, positive to the left of the direction of travel
  Vec2 tangent{1.0, 0.0};
  Vec2 foot;
};

// Lane corridor. Build through make_corridor so the arc-length table is filled.
struct Corridor {
  std::vector<Vec2> centerline;
  double half_width = 2.0;
  std::vector<Vec2> direction_tangents;
  std::optional<StopLine> stop_line;
  double speed_limit = 10.0;  // m/s, the expert never plans above it

  std::vector<double> arc;  // cumulative arc length per centerline point

  CorridorPoint project(Vec2 p) const;
  Vec2 point_at(double arc_length) const;
  Vec2 tangent_at(double arc_length) const;
  double length() const { return arc.empty() ? 0.0 : arc.back(); }
};

// Validates the invariants (>= 2 points, spacing <= 2 m, strictly increasing arc
// length, half width in [1.5, 6]) and fills tangents and the arc table.
Corridor make_corridor(std::vector<Vec2> centerline, double half_width, double speed_limit,
                       std::optional<StopLine> stop_line = std::nullopt);

enum class NavCommand { MoveForward, TurnLeft, TurnRight };

struct Scene {
  EgoState ego;
  std::vector<Obstacle> obstacles;
  Corridor corridor;
  Vec2 goal;
  NavCommand command = NavCommand::MoveForward;
  // Past ego positions at t-1.5 s, t-1.0 s, t-0.5 s.
  std::array<Vec2, kHistorySteps> history{};
  std::uint64_t seed = 0;
  // Centerline progress of the expert plan; the denominator of ego progress.
  std::optional<double> reference_progress;

  Pose2 ego_pose() const { return {ego.position, ego.heading}; }
};

struct Trajectory {
  std::array<Vec2, kHorizonSteps> waypoints{};

  Vec2 endpoint() const { return waypoints.back(); }
  bool operator==(const Trajectory&) const = default;
};

enum class Longitudinal { Accelerate, Decelerate, MaintainSpeed, Stop };
enum class Lateral { KeepLane, TurnLeft, TurnRight, ChangeLeft, ChangeRight };

inline constexpr int kLongitudinalCount = 4;
inline constexpr int kLateralCount = 5;

struct MetaAction {
  Longitudinal longitudinal = Longitudinal::MaintainSpeed;
  Lateral lateral = Lateral::KeepLane;
  bool operator==(const MetaAction&) const = default;
};

enum class Family { straight, lead_vehicle, cut_in, crossing_pedestrian, unprotected_turn, stop_line };
inline constexpr int kFamilyCount = 6;
inline constexpr std::array<Family, kFamilyCount> kAllFamilies{
    Family::straight,         Family::lead_vehicle, Family::cut_in, Family::crossing_pedestrian,
    Family::unprotected_turn, Family::stop_line};

struct ScenarioRecord {
  Scene scene;
  Trajectory gt_trajectory;
  MetaAction gt_meta;
  std::string scenario_id;
  Family family = Family::straight;
};

std::string_view to_string(ObstacleKind k);
std::string_view to_string(NavCommand c);
std::string_view to_string(Longitudinal l);
std::string_view to_string(Lateral l);
std::string_view to_string(Family f);
Family family_from_string(std::string_view s);
NavCommand command_from_string(std::string_view s);
Longitudinal longitudinal_from_string(std::string_view s);
Lateral lateral_from_string(std::string_view s);
ObstacleKind obstacle_kind_from_string(std::string_view s);

// Throws std::invalid_argument when a trajectory breaks the 8-point / 12 m-per-step contract
// or contains non-finite values.
void validate_trajectory(const Trajectory& traj);

// Applies a rigid transform to every spatial quantity of the scene.
Scene transform_scene(const Scene& scene, const Pose2& pose);
Trajectory transform_trajectory(const Trajectory& traj, const Pose2& pose);

}  // namespace fbgrpo
