#include "fbgrpo/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fbgrpo::response {

bool is_longitudinal(Token t) { return t >= kLongBase && t < kLongBase + kLongitudinalCount; }
bool is_lateral(Token t) { return t >= kLatBase && t < kLatBase + kLateralCount; }
bool is_obstacle(Token t) { return t >= kObstacleBase && t <= kNoObstacle; }
bool is_waypoint(Token t) { return t >= kWaypointBase && t < kVocabSize; }

Token longitudinal_token(Longitudinal l) { return kLongBase + static_cast<int>(l); }
Token lateral_token(Lateral l) { return kLatBase + static_cast<int>(l); }
Token obstacle_token(int cell) { return cell == kNoCell ? kNoObstacle : kObstacleBase + cell; }
Token waypoint_token(int ix, int iy) { return kWaypointBase + ix * kDyCount + iy; }

Vec2 waypoint_displacement(Token t) {
  const int idx = t - kWaypointBase;
  return {kGridStep * (idx / kDyCount), kDyMin + kGridStep * (idx % kDyCount)};
}

Token quantize_displacement(Vec2 d, bool* clamped) {
  const long ix = std::lround(d.x / kGridStep);
  const long iy = std::lround((d.y - kDyMin) / kGridStep);
  const long cx = std::clamp<long>(ix, 0, kDxCount - 1);
  const long cy = std::clamp<long>(iy, 0, kDyCount - 1);
  if (clamped && (cx != ix || cy != iy)) *clamped = true;
  return waypoint_token(static_cast<int>(cx), static_cast<int>(cy));
}

std::string token_name(Token t) {
  switch (t) {
    case kThinkOpen: return "THINK_OPEN";
    case kThinkClose: return "THINK_CLOSE";
    case kAnsOpen: return "ANS_OPEN";
    case kAnsClose: return "ANS_CLOSE";
    case kEnd: return "END";
    case kNoObstacle: return "NO_OBSTACLE";
    default: break;
  }
  if (is_longitudinal(t)) return std::string(to_string(static_cast<Longitudinal>(t - kLongBase)));
  if (is_lateral(t)) return std::string(to_string(static_cast<Lateral>(t - kLatBase)));
  if (is_obstacle(t)) {
    const int cell = t - kObstacleBase;
    return "CELL_F" + std::to_string(forward_band(cell)) + "_L" + std::to_string(lateral_band(cell));
  }
  if (is_waypoint(t)) {
    const Vec2 d = waypoint_displacement(t);
    char buf[48];
    std::snprintf(buf, sizeof buf, "WP_%+.1f_%+.1f", d.x, d.y);
    return buf;
  }
  return "INVALID";
}

nlohmann::json vocabulary_json() {
  nlohmann::json names = nlohmann::json::array();
  for (Token t = 0; t < kVocabSize; ++t) names.push_back(token_name(t));
  return {{"size", kVocabSize}, {"tokens", names}};
}

int obstacle_cell(Vec2 local) {
  if (!(local.x >= 0.0 && local.x < kObstacleBands * kObstacleBandLength)) return kNoCell;
  if (!(local.y >= -10.0 && local.y <= 10.0)) return kNoCell;
  const int fwd = static_cast<int>(local.x / kObstacleBandLength);
  int lat;
  if (local.y < -6.0) {
    lat = 0;
  } else if (local.y < -2.0) {
    lat = 1;
  } else if (local.y <= 2.0) {
    lat = 2;
  } else if (local.y <= 6.0) {
    lat = 3;
  } else {
    lat = 4;
  }
  return fwd * kObstacleBands + lat;
}

std::optional<std::size_t> interacting_obstacle(const Scene& scene) {
  const Pose2 pose = scene.ego_pose();
  const double ego_arc = scene.corridor.project(scene.ego.position).arc_length;
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    const Obstacle& o = scene.obstacles[i];
    if (obstacle_cell(pose.to_local(o.position)) == kNoCell) continue;
    bool enters = false;
    for (int k = 0; k <= kHorizonSteps && !enters; ++k) {
      const CorridorPoint cp = scene.corridor.project(o.position_at(kStepSeconds * k));
      enters = std::abs(cp.lateral) <= scene.corridor.half_width && cp.arc_length > ego_arc;
    }
    if (!enters) continue;
    const double d = norm(o.position - scene.ego.position);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

int interacting_cell(const Scene& scene) {
  const auto idx = interacting_obstacle(scene);
  if (!idx) return kNoCell;
  return obstacle_cell(scene.ego_pose().to_local(scene.obstacles[*idx].position));
}

ParsedResponse parse(std::span<const Token> tokens) {
  ParsedResponse out;
  const std::size_t n = tokens.size();
  auto at = [&](std::size_t i) { return i < n ? tokens[i] : -1; };

  if (is_longitudinal(at(1))) out.meta.longitudinal = static_cast<Longitudinal>(at(1) - kLongBase);
  if (is_lateral(at(2))) out.meta.lateral = static_cast<Lateral>(at(2) - kLatBase);
  if (is_obstacle(at(3))) out.obstacle_cell = at(3) - kObstacleBase;

  const auto ans_open = std::find(tokens.begin(), tokens.end(), kAnsOpen);
  const std::size_t ans_begin = ans_open == tokens.end() ? 0 : static_cast<std::size_t>(ans_open - tokens.begin()) + 1;
  std::size_t ans_close = n;
  for (std::size_t i = ans_begin; i < n; ++i) {
    if (tokens[i] == kAnsClose) {
      ans_close = i;
      break;
    }
  }

  const bool think_ok = at(0) == kThinkOpen && is_longitudinal(at(1)) && is_lateral(at(2)) && is_obstacle(at(3)) &&
                        at(4) == kThinkClose && at(5) == kAnsOpen;
  const bool closed = ans_open != tokens.end() && ans_close < n;
  const bool tail_ok = closed && (ans_close + 1 == n || (ans_close + 2 == n && tokens[ans_close + 1] == kEnd));
  out.well_formed_structure = think_ok && tail_ok;

  std::vector<Vec2> steps;
  std::size_t count_between = 0;
  bool only_waypoints = true;
  for (std::size_t i = ans_begin; i < std::min(ans_close, n); ++i) {
    if (is_waypoint(tokens[i])) {
      if (steps.size() < static_cast<std::size_t>(kHorizonSteps)) steps.push_back(waypoint_displacement(tokens[i]));
      ++count_between;
    } else {
      only_waypoints = false;
    }
  }
  out.well_formed_trajectory = closed && only_waypoints && count_between == static_cast<std::size_t>(kHorizonSteps);

  Vec2 pos;
  for (int k = 0; k < kHorizonSteps; ++k) {
    if (static_cast<std::size_t>(k) < steps.size()) pos += steps[k];
    out.trajectory.waypoints[k] = pos;
  }
  return out;
}

TokenSeq encode_response(const MetaAction& meta, int cell, const Trajectory& local_traj, bool* clamped) {
  TokenSeq t{kThinkOpen, longitudinal_token(meta.longitudinal), lateral_token(meta.lateral), obstacle_token(cell),
             kThinkClose, kAnsOpen};
  Vec2 reached;
  for (const Vec2& p : local_traj.waypoints) {
    const Token tok = quantize_displacement(p - reached, clamped);
    t.push_back(tok);
    reached += waypoint_displacement(tok);
  }
  t.push_back(kAnsClose);
  t.push_back(kEnd);
  return t;
}

GtEncoding encode_gt_checked(const ScenarioRecord& record) {
  const Pose2 pose = record.scene.ego_pose();
  Trajectory local;
  for (int k = 0; k < kHorizonSteps; ++k) local.waypoints[k] = pose.to_local(record.gt_trajectory.waypoints[k]);
  GtEncoding out;
  out.tokens = encode_response(record.gt_meta, interacting_cell(record.scene), local, &out.clamped);
  return out;
}

TokenSeq encode_gt(const ScenarioRecord& record) { return encode_gt_checked(record).tokens; }

}  // namespace fbgrpo::response
