#pragma once

#include <optional>

#include "json.hpp"

#include "fbgrpo/features.hpp"
#include "fbgrpo/metrics.hpp"
#include "fbgrpo/response.hpp"
#include "fbgrpo/rewards.hpp"

namespace fbgrpo::teacher {

using features::FeatureVector;

enum class Verdict { correct, wrong };

// Correct iff r_traj strictly exceeds s. Throws std::invalid_argument unless s is in (0, 1).
Verdict classify(const rewards::RewardBreakdown& reward, double s);

struct MetaActionAnalysis {
  MetaAction predicted;
  MetaAction corrected;
};

struct ThinkProcessAnalysis {
  int predicted_cell = response::kNoCell;
  int true_cell = response::kNoCell;
  bool matches() const { return predicted_cell == true_cell; }
};

enum class SafetyKind { none, collision, corridor_violation, ttc_violation };

struct SafetyFailure {
  SafetyKind kind = SafetyKind::none;
  int obstacle = metrics::kNoViolation;  // collision only
  int step = metrics::kNoViolation;
};

enum class EfficiencyKind { none, progress_deficit, discomfort };

struct EfficiencyFailure {
  EfficiencyKind kind = EfficiencyKind::none;
  double ep = 0.0;  // progress_deficit only
};

inline constexpr int kMaxBucket = 3;

struct ActionableCorrection {
  int lateral = 0;       // meters, positive moves the endpoint left
  int longitudinal = 0;  // m/s change of mean speed
};

struct DiagnosticReport {
  MetaActionAnalysis meta_action_analysis;
  ThinkProcessAnalysis think_process_analysis;
  SafetyFailure safety_failure;
  EfficiencyFailure efficiency_failure;
  ActionableCorrection actionable_correction;
};

inline constexpr double kProgressDeficitEp = 0.9;

// Structured failure analysis of a wrong response. Throws std::logic_error when
// the response is well formed and scores above s.
DiagnosticReport diagnose(const Scene& scene, const response::ParsedResponse& resp, const Trajectory& gt,
                          const MetaAction& gt_meta, const metrics::SubScores& scores, double s = 0.8,
                          const metrics::MetricConfig& cfg = {});

nlohmann::json report_to_json(const DiagnosticReport& report);

// Layout of the 32-dim feedback block.
namespace block {
inline constexpr int kCorrectedLong = 0;  // 4
inline constexpr int kCorrectedLat = 4;   // 5
inline constexpr int kObstacleBand = 9;   // 5 forward bands
inline constexpr int kObstacleSide = 14;  // right / center / left
inline constexpr int kSafety = 17;        // collision, corridor, ttc
inline constexpr int kEfficiency = 20;    // progress deficit, discomfort
inline constexpr int kEp = 22;
inline constexpr int kLateralBucket = 23;
inline constexpr int kLongitudinalBucket = 24;
inline constexpr int kPositiveFlag = 25;
inline constexpr int kResponseFold = 26;  // 6 dims describing the response itself
inline constexpr int kResponseFoldDims = 6;
}  // namespace block

using FeedbackEncoding = Eigen::VectorXd;

// Encodes a report (response fold excluded).
FeedbackEncoding encode_report(const DiagnosticReport& report);
// Rule-based positive feedback: only the flag is set.
FeedbackEncoding encode_positive();

struct DecodedFeedback {
  bool positive = false;
  bool negative_flag = false;
  std::optional<MetaAction> corrected;
  std::optional<int> obstacle_band;
  std::optional<int> obstacle_side;  // 0 right, 1 center, 2 left
  SafetyKind safety = SafetyKind::none;
  EfficiencyKind efficiency = EfficiencyKind::none;
  double ep = 0.0;
  int lateral_bucket = 0;
  int longitudinal_bucket = 0;
};

DecodedFeedback decode(const FeedbackEncoding& encoding);

// The six dims that make the conditioning depend on the response itself.
Eigen::VectorXd response_fold(const response::ParsedResponse& resp);

// Base features plus the feedback block: the report's encoding for a wrong
// response, the positive flag when `report` is empty.
FeatureVector build_feedback_query(const FeatureVector& base, const response::ParsedResponse& resp,
                                   const std::optional<DiagnosticReport>& report);

// Binary feedback only: +1 for a correct response, -1 for a wrong one, plus the response fold.
FeatureVector build_rule_query(const FeatureVector& base, const response::ParsedResponse& resp, bool correct);

}  // namespace fbgrpo::teacher
