#include "fbgrpo/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fbgrpo::teacher {

namespace {

using response::kNoCell;

int bucket(double value) {
  return static_cast<int>(std::clamp<long>(std::lround(value), -kMaxBucket, kMaxBucket));
}

double mean_speed(const Scene& scene, const Trajectory& t) {
  double length = 0.0;
  Vec2 prev = scene.ego.position;
  for (const Vec2& p : t.waypoints) {
    length += norm(p - prev);
    prev = p;
  }
  return length / (kHorizonSteps * kStepSeconds);
}

int side_group(int lateral_band) {
  if (lateral_band <= 1) return 0;
  if (lateral_band == 2) return 1;
  return 2;
}

template <int N>
int one_hot_index(const FeedbackEncoding& e, int offset) {
  for (int i = 0; i < N; ++i) {
    if (e[offset + i] == 1.0) return i;
  }
  return -1;
}

std::string_view safety_name(SafetyKind k) {
  switch (k) {
    case SafetyKind::none: return "none";
    case SafetyKind::collision: return "collision";
    case SafetyKind::corridor_violation: return "corridor_violation";
    case SafetyKind::ttc_violation: return "ttc_violation";
  }
  return "none";
}

std::string_view efficiency_name(EfficiencyKind k) {
  switch (k) {
    case EfficiencyKind::none: return "none";
    case EfficiencyKind::progress_deficit: return "progress_deficit";
    case EfficiencyKind::discomfort: return "discomfort";
  }
  return "none";
}

nlohmann::json cell_json(int cell) {
  if (cell == kNoCell) return "NO_OBSTACLE";
  return {{"forward_band", response::forward_band(cell)}, {"lateral_band", response::lateral_band(cell)}};
}

nlohmann::json meta_json(const MetaAction& m) {
  return {{"longitudinal", std::string(to_string(m.longitudinal))}, {"lateral", std::string(to_string(m.lateral))}};
}

}  // namespace

Verdict classify(const rewards::RewardBreakdown& reward, double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("threshold s must lie in (0, 1)");
  return reward.r_traj > s ? Verdict::correct : Verdict::wrong;
}

DiagnosticReport diagnose(const Scene& scene, const response::ParsedResponse& resp, const Trajectory& gt,
                          const MetaAction& gt_meta, const metrics::SubScores& scores, double s,
                          const metrics::MetricConfig& cfg) {
  DiagnosticReport r;
  r.meta_action_analysis = {resp.meta, gt_meta};
  r.think_process_analysis = {resp.obstacle_cell, response::interacting_cell(scene)};

  const Corridor& cor = scene.corridor;
  r.actionable_correction.lateral = bucket(cor.project(gt.endpoint()).lateral - cor.project(resp.trajectory.endpoint()).lateral);
  r.actionable_correction.longitudinal = bucket(mean_speed(scene, gt) - mean_speed(scene, resp.trajectory));

  if (!resp.well_formed_trajectory || !rewards::scorable(resp.trajectory)) {
    r.efficiency_failure = {EfficiencyKind::progress_deficit, 0.0};
    return r;
  }
  if (metrics::pdms(scores) > s) throw std::logic_error("diagnose called on a correct response");

  const metrics::PlanChecks checks = metrics::check_plan(scene, resp.trajectory, cfg);
  if (scores.nc == 0.0) {
    r.safety_failure = {SafetyKind::collision, checks.collision_obstacle, checks.collision_step};
  } else if (scores.dac == 0.0) {
    r.safety_failure = {SafetyKind::corridor_violation, metrics::kNoViolation, checks.corridor_step};
  } else if (scores.ttc == 0.0) {
    r.safety_failure = {SafetyKind::ttc_violation, metrics::kNoViolation, checks.ttc_step};
  }
  if (scores.ep < kProgressDeficitEp) {
    r.efficiency_failure = {EfficiencyKind::progress_deficit, scores.ep};
  } else if (scores.comfort == 0.0) {
    r.efficiency_failure = {EfficiencyKind::discomfort, 0.0};
  }
  // A threshold close to 1 can fail a plan that trips none of the rules above.
  if (r.safety_failure.kind == SafetyKind::none && r.efficiency_failure.kind == EfficiencyKind::none) {
    r.efficiency_failure = {EfficiencyKind::progress_deficit, scores.ep};
  }
  return r;
}

nlohmann::json report_to_json(const DiagnosticReport& r) {
  nlohmann::json safety = {{"type", std::string(safety_name(r.safety_failure.kind))}};
  if (r.safety_failure.kind == SafetyKind::collision) safety["obstacle"] = r.safety_failure.obstacle;
  if (r.safety_failure.kind != SafetyKind::none) safety["step"] = r.safety_failure.step;
  nlohmann::json efficiency = {{"type", std::string(efficiency_name(r.efficiency_failure.kind))}};
  if (r.efficiency_failure.kind == EfficiencyKind::progress_deficit) efficiency["ep"] = r.efficiency_failure.ep;
  return {
      {"Meta Action Analysis",
       {{"predicted", meta_json(r.meta_action_analysis.predicted)},
        {"corrected", meta_json(r.meta_action_analysis.corrected)}}},
      {"Think Process Analysis",
       {{"predicted_obstacle", cell_json(r.think_process_analysis.predicted_cell)},
        {"true_obstacle", cell_json(r.think_process_analysis.true_cell)},
        {"matches", r.think_process_analysis.matches()}}},
      {"Safety Failure Analysis", safety},
      {"Efficiency Failure Analysis", efficiency},
      {"Actionable Correction",
       {{"lateral_m", r.actionable_correction.lateral}, {"longitudinal_mps", r.actionable_correction.longitudinal}}},
  };
}

FeedbackEncoding encode_report(const DiagnosticReport& r) {
  using namespace block;
  FeedbackEncoding e = FeedbackEncoding::Zero(features::kFeedbackDim);
  e[kCorrectedLong + static_cast<int>(r.meta_action_analysis.corrected.longitudinal)] = 1.0;
  e[kCorrectedLat + static_cast<int>(r.meta_action_analysis.corrected.lateral)] = 1.0;
  const int cell = r.think_process_analysis.true_cell;
  if (cell != kNoCell) {
    e[kObstacleBand + response::forward_band(cell)] = 1.0;
    e[kObstacleSide + side_group(response::lateral_band(cell))] = 1.0;
  }
  if (r.safety_failure.kind != SafetyKind::none) e[kSafety + static_cast<int>(r.safety_failure.kind) - 1] = 1.0;
  if (r.efficiency_failure.kind != EfficiencyKind::none) {
    e[kEfficiency + static_cast<int>(r.efficiency_failure.kind) - 1] = 1.0;
  }
  if (r.efficiency_failure.kind == EfficiencyKind::progress_deficit) e[kEp] = r.efficiency_failure.ep;
  e[kLateralBucket] = r.actionable_correction.lateral / static_cast<double>(kMaxBucket);
  e[kLongitudinalBucket] = r.actionable_correction.longitudinal / static_cast<double>(kMaxBucket);
  return e;
}

FeedbackEncoding encode_positive() {
  FeedbackEncoding e = FeedbackEncoding::Zero(features::kFeedbackDim);
  e[block::kPositiveFlag] = 1.0;
  return e;
}

DecodedFeedback decode(const FeedbackEncoding& e) {
  using namespace block;
  if (e.size() != features::kFeedbackDim) throw std::invalid_argument("feedback encoding must have 32 entries");
  DecodedFeedback d;
  d.positive = e[kPositiveFlag] > 0.5;
  d.negative_flag = e[kPositiveFlag] < -0.5;
  const int lon = one_hot_index<kLongitudinalCount>(e, kCorrectedLong);
  const int lat = one_hot_index<kLateralCount>(e, kCorrectedLat);
  if (lon >= 0 && lat >= 0) d.corrected = MetaAction{static_cast<Longitudinal>(lon), static_cast<Lateral>(lat)};
  const int band = one_hot_index<response::kObstacleBands>(e, kObstacleBand);
  const int side = one_hot_index<3>(e, kObstacleSide);
  if (band >= 0) d.obstacle_band = band;
  if (side >= 0) d.obstacle_side = side;
  const int safety = one_hot_index<3>(e, kSafety);
  if (safety >= 0) d.safety = static_cast<SafetyKind>(safety + 1);
  const int eff = one_hot_index<2>(e, kEfficiency);
  if (eff >= 0) d.efficiency = static_cast<EfficiencyKind>(eff + 1);
  d.ep = e[kEp];
  d.lateral_bucket = static_cast<int>(std::lround(e[kLateralBucket] * kMaxBucket));
  d.longitudinal_bucket = static_cast<int>(std::lround(e[kLongitudinalBucket] * kMaxBucket));
  return d;
}

Eigen::VectorXd response_fold(const response::ParsedResponse& resp) {
  Eigen::VectorXd f(block::kResponseFoldDims);
  const Vec2 end = resp.trajectory.endpoint();
  f[0] = end.x / 20.0;
  f[1] = end.y / 10.0;
  f[2] = static_cast<double>(resp.meta.longitudinal) / (kLongitudinalCount - 1);
  f[3] = static_cast<double>(resp.meta.lateral) / (kLateralCount - 1);
  f[4] = static_cast<double>(resp.obstacle_cell) / response::kObstacleCells;
  f[5] = resp.well_formed_structure && resp.well_formed_trajectory ? 1.0 : 0.0;
  return f;
}

FeatureVector build_feedback_query(const FeatureVector& base, const response::ParsedResponse& resp,
                                   const std::optional<DiagnosticReport>& report) {
  if (base.size() != features::kFeatureDim) throw std::invalid_argument("base features must have 96 entries");
  FeatureVector q = base;
  FeedbackEncoding e = report ? encode_report(*report) : encode_positive();
  e.segment(block::kResponseFold, block::kResponseFoldDims) = response_fold(resp);
  q.tail(features::kFeedbackDim) = e;
  return q;
}

FeatureVector build_rule_query(const FeatureVector& base, const response::ParsedResponse& resp, bool correct) {
  if (base.size() != features::kFeatureDim) throw std::invalid_argument("base features must have 96 entries");
  FeatureVector q = base;
  FeedbackEncoding e = FeedbackEncoding::Zero(features::kFeedbackDim);
  e[block::kPositiveFlag] = correct ? 1.0 : -1.0;
  e.segment(block::kResponseFold, block::kResponseFoldDims) = response_fold(resp);
  q.tail(features::kFeedbackDim) = e;
  return q;
}

}  // namespace fbgrpo::teacher
