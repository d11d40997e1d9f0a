#include "fbgrpo/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fbgrpo/response.hpp"

namespace fbgrpo::features {

namespace {

constexpr std::array<double, 6> kCenterlineProbe{5.0, 10.0, 15.0, 20.0, 30.0, 40.0};
constexpr std::array<double, 4> kTangentProbe{10.0, 20.0, 30.0, 40.0};

std::vector<FeatureScale> build_table() {
  std::vector<FeatureScale> t{{"ego_speed", 10.0},      {"ego_acceleration", 4.0}, {"speed_limit", 10.0},
                              {"speed_headroom", 5.0},  {"cmd_forward", 1.0},      {"cmd_left", 1.0},
                              {"cmd_right", 1.0},       {"goal_x", 60.0},          {"goal_y", 30.0},
                              {"goal_distance", 60.0},  {"goal_cos", 1.0},         {"goal_sin", 1.0},
                              {"half_width", 4.0},      {"ego_lateral_offset", 2.0}};
  for (double s : kCenterlineProbe) t.push_back({"centerline_y_at_" + std::to_string(static_cast<int>(s)), 20.0});
  for (double s : kTangentProbe) t.push_back({"tangent_sin_at_" + std::to_string(static_cast<int>(s)), 1.0});
  t.push_back({"stop_line_active", 1.0});
  t.push_back({"stop_line_distance", 30.0});
  for (int h = 0; h < kHistorySteps; ++h) {
    t.push_back({"history_dx_" + std::to_string(h), 5.0});
    t.push_back({"history_dy_" + std::to_string(h), 2.0});
  }
  const char* slot_fields[kObstacleSlotDim] = {"present", "x", "y", "vx", "vy", "x_2s", "y_2s",
                                               "vehicle", "pedestrian", "interacting"};
  const double slot_scales[kObstacleSlotDim] = {1.0, 30.0, 10.0, 10.0, 5.0, 30.0, 10.0, 1.0, 1.0, 1.0};
  for (int o = 0; o < kObstacleSlots; ++o) {
    for (int f = 0; f < kObstacleSlotDim; ++f) {
      t.push_back({"obstacle" + std::to_string(o) + "_" + slot_fields[f], slot_scales[f]});
    }
  }
  t.push_back({"stop_margin", 10.0});
  t.push_back({"bias", 1.0});
  return t;
}

}  // namespace

const std::vector<FeatureScale>& scale_table() {
  static const std::vector<FeatureScale> table = build_table();
  return table;
}

nlohmann::json scale_table_json() {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : scale_table()) j.push_back({{"name", s.name}, {"scale", s.scale}});
  return j;
}

FeatureVector base_features(const Scene& scene) {
  const auto& table = scale_table();
  FeatureVector f = FeatureVector::Zero(kFeatureDim);
  std::vector<double> raw;
  raw.reserve(kBaseDim);
  const Pose2 pose = scene.ego_pose();
  const Corridor& cor = scene.corridor;
  const CorridorPoint start = cor.project(scene.ego.position);

  raw.push_back(scene.ego.speed);
  raw.push_back(scene.ego.acceleration);
  raw.push_back(cor.speed_limit);
  raw.push_back(cor.speed_limit - scene.ego.speed);
  raw.push_back(scene.command == NavCommand::MoveForward);
  raw.push_back(scene.command == NavCommand::TurnLeft);
  raw.push_back(scene.command == NavCommand::TurnRight);
  const Vec2 goal = pose.to_local(scene.goal);
  const double goal_dist = norm(goal);
  raw.push_back(goal.x);
  raw.push_back(goal.y);
  raw.push_back(goal_dist);
  raw.push_back(goal_dist > 1e-9 ? goal.x / goal_dist : 1.0);
  raw.push_back(goal_dist > 1e-9 ? goal.y / goal_dist : 0.0);
  raw.push_back(cor.half_width);
  raw.push_back(start.lateral);
  for (double s : kCenterlineProbe) raw.push_back(pose.to_local(cor.point_at(start.arc_length + s)).y);
  for (double s : kTangentProbe) raw.push_back(pose.direction_to_local(cor.tangent_at(start.arc_length + s)).y);

  const bool line_ahead = cor.stop_line && cor.stop_line->active && cor.stop_line->arc_position > start.arc_length;
  const double line_dist = line_ahead ? cor.stop_line->arc_position - start.arc_length : 0.0;
  raw.push_back(line_ahead ? 1.0 : 0.0);
  raw.push_back(line_ahead ? std::min(line_dist, 60.0) : 0.0);

  std::array<Vec2, kHistorySteps + 1> hist{scene.history[0], scene.history[1], scene.history[2], scene.ego.position};
  for (int h = 0; h < kHistorySteps; ++h) {
    const Vec2 d = pose.direction_to_local(hist[h + 1] - hist[h]);
    raw.push_back(d.x);
    raw.push_back(d.y);
  }

  std::vector<std::size_t> order(scene.obstacles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norm(scene.obstacles[a].position - scene.ego.position) < norm(scene.obstacles[b].position - scene.ego.position);
  });
  const auto interacting = response::interacting_obstacle(scene);
  for (int slot = 0; slot < kObstacleSlots; ++slot) {
    if (static_cast<std::size_t>(slot) >= order.size()) {
      raw.insert(raw.end(), kObstacleSlotDim, 0.0);
      continue;
    }
    const std::size_t idx = order[slot];
    const Obstacle& o = scene.obstacles[idx];
    const Vec2 p = pose.to_local(o.position);
    const Vec2 v = pose.direction_to_local(o.velocity);
    const Vec2 p2 = pose.to_local(o.position_at(2.0));
    raw.push_back(1.0);
    raw.push_back(std::clamp(p.x, -60.0, 60.0));
    raw.push_back(std::clamp(p.y, -30.0, 30.0));
    raw.push_back(v.x);
    raw.push_back(v.y);
    raw.push_back(std::clamp(p2.x, -60.0, 60.0));
    raw.push_back(std::clamp(p2.y, -30.0, 30.0));
    raw.push_back(o.kind == ObstacleKind::vehicle);
    raw.push_back(o.kind == ObstacleKind::pedestrian);
    raw.push_back(interacting && *interacting == idx);
  }

  // Room left before the stop line after braking at 2 m/s^2 from the current speed.
  raw.push_back(line_ahead ? std::clamp(line_dist - scene.ego.speed * scene.ego.speed / 4.0, -20.0, 20.0) : 0.0);
  raw.push_back(1.0);

  if (raw.size() != static_cast<std::size_t>(kBaseDim) || table.size() != raw.size()) {
    throw std::logic_error("feature layout does not match the scale table");
  }
  for (int i = 0; i < kBaseDim; ++i) f[i] = raw[i] / table[i].scale;
  return f;
}

}  // namespace fbgrpo::features
