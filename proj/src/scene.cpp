#include "fbgrpo/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fbgrpo {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table,
             const char* what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": " + std::string(s));
}

template <typename E, std::size_t N>
std::string_view enum_name(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<ObstacleKind, std::string_view>, 3> kKindNames{{
    {ObstacleKind::vehicle, "vehicle"},
    {ObstacleKind::pedestrian, "pedestrian"},
    {ObstacleKind::static_object, "static"},
}};
constexpr std::array<std::pair<NavCommand, std::string_view>, 3> kCommandNames{{
    {NavCommand::MoveForward, "MoveForward"},
    {NavCommand::TurnLeft, "TurnLeft"},
    {NavCommand::TurnRight, "TurnRight"},
}};
constexpr std::array<std::pair<Longitudinal, std::string_view>, 4> kLongNames{{
    {Longitudinal::Accelerate, "Accelerate"},
    {Longitudinal::Decelerate, "Decelerate"},
    {Longitudinal::MaintainSpeed, "MaintainSpeed"},
    {Longitudinal::Stop, "Stop"},
}};
constexpr std::array<std::pair<Lateral, std::string_view>, 5> kLatNames{{
    {Lateral::KeepLane, "KeepLane"},
    {Lateral::TurnLeft, "TurnLeft"},
    {Lateral::TurnRight, "TurnRight"},
    {Lateral::ChangeLeft, "ChangeLeft"},
    {Lateral::ChangeRight, "ChangeRight"},
}};
constexpr std::array<std::pair<Family, std::string_view>, 6> kFamilyNames{{
    {Family::straight, "straight"},
    {Family::lead_vehicle, "lead_vehicle"},
    {Family::cut_in, "cut_in"},
    {Family::crossing_pedestrian, "crossing_pedestrian"},
    {Family::unprotected_turn, "unprotected_turn"},
    {Family::stop_line, "stop_line"},
}};

}  // namespace

std::string_view to_string(ObstacleKind k) { return enum_name(k, kKindNames); }
std::string_view to_string(NavCommand c) { return enum_name(c, kCommandNames); }
std::string_view to_string(Longitudinal l) { return enum_name(l, kLongNames); }
std::string_view to_string(Lateral l) { return enum_name(l, kLatNames); }
std::string_view to_string(Family f) { return enum_name(f, kFamilyNames); }
Family family_from_string(std::string_view s) { return parse_enum(s, kFamilyNames, "family"); }
NavCommand command_from_string(std::string_view s) { return parse_enum(s, kCommandNames, "command"); }
Longitudinal longitudinal_from_string(std::string_view s) { return parse_enum(s, kLongNames, "longitudinal"); }
Lateral lateral_from_string(std::string_view s) { return parse_enum(s, kLatNames, "lateral"); }
ObstacleKind obstacle_kind_from_string(std::string_view s) { return parse_enum(s, kKindNames, "obstacle kind"); }

Corridor make_corridor(std::vector<Vec2> centerline, double half_width, double speed_limit,
                       std::optional<StopLine> stop_line) {
  if (centerline.size() < 2) throw std::invalid_argument("corridor needs at least 2 centerline points");
  if (!(half_width >= 1.5 && half_width <= 6.0)) throw std::invalid_argument("corridor half_width outside [1.5, 6]");
  if (!(speed_limit >= 0.0)) throw std::invalid_argument("corridor speed_limit must be non-negative");
  Corridor c;
  c.centerline = std::move(centerline);
  c.half_width = half_width;
  c.speed_limit = speed_limit;
  c.stop_line = stop_line;
  c.arc.resize(c.centerline.size());
  c.arc[0] = 0.0;
  for (std::size_t i = 1; i < c.centerline.size(); ++i) {
    const double seg = norm(c.centerline[i] - c.centerline[i - 1]);
    if (!(seg > 0.0)) throw std::invalid_argument("corridor centerline arc length must strictly increase");
    if (seg > 2.0 + 1e-9) throw std::invalid_argument("corridor centerline spacing exceeds 2 m");
    c.arc[i] = c.arc[i - 1] + seg;
  }
  c.direction_tangents.resize(c.centerline.size());
  for (std::size_t i = 0; i < c.centerline.size(); ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 < c.centerline.size() ? i + 1 : i;
    const Vec2 d = c.centerline[b] - c.centerline[a];
    c.direction_tangents[i] = d / norm(d);
  }
  return c;
}

CorridorPoint Corridor::project(Vec2 p) const {
  CorridorPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < centerline.size(); ++i) {
    const Vec2 a = centerline[i];
    const Vec2 seg = centerline[i + 1] - a;
    const double len2 = dot(seg, seg);
    double t = dot(p - a, seg) / len2;
    // Extrapolate past the ends so points beyond the polyline still get an arc length.
    if (i != 0) t = std::max(t, 0.0);
    if (i + 2 != centerline.size()) t = std::min(t, 1.0);
    const Vec2 foot = a + seg * t;
    const Vec2 off = p - foot;
    const double d2 = dot(off, off);
    if (d2 < best_d2 - 1e-12) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      best.tangent = seg / len;
      best.arc_length = arc[i] + t * len;
      best.foot = foot;
      best.lateral = cross(best.tangent, off) >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
    }
  }
  return best;
}

Vec2 Corridor::point_at(double s) const {
  if (s <= arc.front()) {
    const Vec2 t = centerline[1] - centerline[0];
    return centerline[0] + t * ((s - arc[0]) / norm(t));
  }
  if (s >= arc.back()) {
    const std::size_t n = centerline.size();
    const Vec2 t = centerline[n - 1] - centerline[n - 2];
    return centerline[n - 1] + t * ((s - arc[n - 1]) / norm(t));
  }
  const auto it = std::upper_bound(arc.begin(), arc.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - arc.begin()) - 1;
  const double f = (s - arc[i]) / (arc[i + 1] - arc[i]);
  return centerline[i] + (centerline[i + 1] - centerline[i]) * f;
}

Vec2 Corridor::tangent_at(double s) const {
  std::size_t i = 0;
  if (s >= arc.back()) {
    i = centerline.size() - 2;
  } else if (s > arc.front()) {
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    i = static_cast<std::size_t>(it - arc.begin()) - 1;
  }
  const Vec2 d = centerline[i + 1] - centerline[i];
  return d / norm(d);
}

void validate_trajectory(const Trajectory& traj) {
  for (const Vec2& p : traj.waypoints) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("trajectory has non-finite waypoint");
  }
  for (int k = 1; k < kHorizonSteps; ++k) {
    if (norm(traj.waypoints[k] - traj.waypoints[k - 1]) > kMaxStepDisplacement + 1e-9) {
      throw std::invalid_argument("trajectory step displacement exceeds 12 m");
    }
  }
}

Scene transform_scene(const Scene& scene, const Pose2& pose) {
  Scene out = scene;
  out.ego.position = pose.apply(scene.ego.position);
  out.ego.heading = wrap_angle(scene.ego.heading + pose.heading);
  for (Obstacle& o : out.obstacles) {
    o.position = pose.apply(o.position);
    o.velocity = pose.apply_direction(o.velocity);
    o.heading = wrap_angle(o.heading + pose.heading);
  }
  std::vector<Vec2> centerline;
  centerline.reserve(scene.corridor.centerline.size());
  for (const Vec2& p : scene.corridor.centerline) centerline.push_back(pose.apply(p));
  out.corridor = make_corridor(std::move(centerline), scene.corridor.half_width, scene.corridor.speed_limit,
                               scene.corridor.stop_line);
  out.goal = pose.apply(scene.goal);
  for (Vec2& h : out.history) h = pose.apply(h);
  return out;
}

Trajectory transform_trajectory(const Trajectory& traj, const Pose2& pose) {
  Trajectory out;
  for (int k = 0; k < kHorizonSteps; ++k) out.waypoints[k] = pose.apply(traj.waypoints[k]);
  return out;
}

}  // namespace fbgrpo
