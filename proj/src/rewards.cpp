#include "fbgrpo/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace fbgrpo::rewards {

bool scorable(const Trajectory& t) {
  try {
    validate_trajectory(t);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

double trajectory_reward(const Scene& scene, const response::ParsedResponse& resp, const metrics::MetricConfig& cfg) {
  if (!resp.well_formed_trajectory || !scorable(resp.trajectory)) return 0.0;
  return metrics::pdms(metrics::sub_scores(scene, resp.trajectory, cfg));
}

double format_reward(const response::ParsedResponse& resp) {
  return 0.5 * (resp.well_formed_structure ? 1.0 : 0.0) + 0.5 * (resp.well_formed_trajectory ? 1.0 : 0.0);
}

double goal_reward_for_distance(double dis) {
  if (dis < 2.0) return 1.0;
  if (dis < 4.0) return 0.8;
  if (dis < 6.0) return 0.6;
  if (dis < 10.0) return 0.4;
  if (dis <= 15.0) return 0.2;
  return 0.0;
}

double goal_reward(const response::ParsedResponse& resp, const Trajectory& gt) {
  if (!resp.well_formed_trajectory) return 0.0;
  const Vec2 d = resp.trajectory.endpoint() - gt.endpoint();
  return goal_reward_for_distance(std::abs(d.x) + std::abs(d.y));
}

RewardBreakdown total_reward(const Scene& scene, const response::ParsedResponse& resp, const Trajectory& gt,
                             const metrics::MetricConfig& cfg) {
  RewardBreakdown r;
  if (resp.well_formed_trajectory && scorable(resp.trajectory)) {
    r.scores = metrics::sub_scores(scene, resp.trajectory, cfg);
    r.scored = true;
    r.r_traj = metrics::pdms(r.scores);
  }
  r.r_fmt = format_reward(resp);
  r.r_goal = goal_reward(resp, gt);
  r.total = r.r_traj + r.r_fmt + r.r_goal;
  return r;
}

}  // namespace fbgrpo::rewards
