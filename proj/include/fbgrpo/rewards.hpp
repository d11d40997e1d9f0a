#pragma once

#include "fbgrpo/metrics.hpp"
#include "fbgrpo/response.hpp"

namespace fbgrpo::rewards {

struct RewardBreakdown {
  double r_traj = 0.0;
  double r_fmt = 0.0;
  double r_goal = 0.0;
  double total = 0.0;
  // Sub-scores behind r_traj; `scored` is false when the trajectory could not be scored.
  bool scored = false;
  metrics::SubScores scores;
};

// 0 for a malformed trajectory or one whose steps break the 12 m contract, otherwise PDMS.
double trajectory_reward(const Scene& scene, const response::ParsedResponse& resp, const metrics::MetricConfig& cfg);
// False when a waypoint step exceeds the 12 m bound; such plans score r_traj = 0.
bool scorable(const Trajectory& t);

double format_reward(const response::ParsedResponse& resp);
// Tiered on the L1 endpoint distance.
double goal_reward_for_distance(double dis);
double goal_reward(const response::ParsedResponse& resp, const Trajectory& gt);

RewardBreakdown total_reward(const Scene& scene, const response::ParsedResponse& resp, const Trajectory& gt,
                             const metrics::MetricConfig& cfg);

}  // namespace fbgrpo::rewards
