#pragma once

#include <optional>
#include <span>

#include "fbgrpo/scene.hpp"

namespace fbgrpo::metrics {

// Thresholds behind the binary sub-metrics. All must be positive.
struct MetricConfig {
  double ttc_threshold = 1.0;      // s
  double comfort_accel_max = 3.0;  // m/s^2
  double comfort_jerk_max = 5.0;   // m/s^3
  double lk_max_offset = 1.0;      // m
  double ec_max_delta = 1.0;       // m

  void validate() const;
};

struct SubScores {
  double nc = 0.0;
  double dac = 0.0;
  double ttc = 0.0;
  double comfort = 0.0;
  double ep = 0.0;

  bool valid() const;
};

struct ExtendedSubScores {
  double nc = 0.0;
  double dac = 0.0;
  double ddc = 0.0;
  double tlc = 0.0;
  double ep = 0.0;
  double ttc = 0.0;
  double lk = 0.0;
  double hc = 0.0;
  double ec = 0.0;

  bool valid() const;
};

inline constexpr int kNoViolation = -1;

// Raw per-plan checks with the first offending waypoint index (0-based, time
// 0.5 * (index + 1) s). Shared by the scorer, the expert and the teacher.
struct PlanChecks {
  bool collision_free = true;
  int collision_step = kNoViolation;
  int collision_obstacle = kNoViolation;
  bool in_corridor = true;
  int corridor_step = kNoViolation;
  bool ttc_ok = true;
  int ttc_step = kNoViolation;
  bool comfortable = true;
  double progress = 0.0;  // centerline arc length gained by the final waypoint
};

PlanChecks check_plan(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg);

// ep = clip(progress / expert_progress, 0, 1), and 1 when the expert barely moves.
double ego_progress(double progress, double expert_progress);

SubScores sub_scores(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg,
                     double expert_progress);
// Uses scene.reference_progress; throws std::invalid_argument when it is unset.
SubScores sub_scores(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg);

double pdms(const SubScores& s);
double epdms(const ExtendedSubScores& s);

ExtendedSubScores extended_sub_scores(const Scene& scene, const Trajectory& traj,
                                      const std::optional<Trajectory>& prev_traj,
                                      const MetricConfig& cfg);

// True when no waypoint passes an active stop line the ego has not yet reached.
bool respects_stop_line(const Scene& scene, const Trajectory& traj);

// Comfort over plan-internal accelerations and jerks.
bool is_comfortable(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg);
// Comfort including the junction with the last history segment.
bool is_history_comfortable(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg);

struct PlanningAccuracy {
  double speed = 0.0;
  double path = 0.0;
  double overall = 0.0;
};

// Strict joint accuracy; throws std::invalid_argument on empty or mismatched inputs.
PlanningAccuracy planning_accuracy(std::span<const MetaAction> pred, std::span<const MetaAction> gt);

}  // namespace fbgrpo::metrics
