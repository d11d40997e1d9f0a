#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/teacher.hpp"

using namespace fbgrpo;
using namespace fbgrpo::testing;
using namespace fbgrpo::teacher;

namespace {

response::ParsedResponse parsed_plan(const Trajectory& t, int cell = response::kNoCell) {
  response::ParsedResponse p;
  p.trajectory = t;
  p.obstacle_cell = cell;
  p.well_formed_structure = true;
  p.well_formed_trajectory = true;
  return p;
}

rewards::RewardBreakdown with_traj(double r) {
  rewards::RewardBreakdown b;
  b.r_traj = r;
  return b;
}

const MetaAction kKeep{Longitudinal::MaintainSpeed, Lateral::KeepLane};

}  // namespace

TEST_CASE("classification is a strict threshold") {
  CHECK(classify(with_traj(0.85), 0.8) == Verdict::correct);
  CHECK(classify(with_traj(0.8), 0.8) == Verdict::wrong);
  CHECK(classify(with_traj(0.0), 0.8) == Verdict::wrong);
  CHECK_THROWS_AS(classify(with_traj(0.5), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(classify(with_traj(0.5), 0.0), std::invalid_argument);
}

TEST_CASE("a plan into a parked car reports the first colliding step and obstacle") {
  Scene s = open_road(4.0);
  s.reference_progress = 32.0;
  s.obstacles.push_back(parked_car({12.0, 0.0}));
  const Trajectory t = straight_plan(4.0);

  int oracle = -1;
  for (int k = 0; k < kHorizonSteps && oracle < 0; ++k) {
    const Vec2 step = k == 0 ? t.waypoints[0] : t.waypoints[k] - t.waypoints[k - 1];
    const OrientedBox ego{t.waypoints[k], kEgoHalfExtent, heading_of(step)};
    if (overlaps(ego, s.obstacles[0].box_at(kStepSeconds * (k + 1)))) oracle = k;
  }
  REQUIRE(oracle == 3);

  const auto scores = metrics::sub_scores(s, t, {});
  const auto rep = diagnose(s, parsed_plan(t), straight_plan(4.0), kKeep, scores);
  CHECK(rep.safety_failure.kind == SafetyKind::collision);
  CHECK(rep.safety_failure.obstacle == 0);
  CHECK(rep.safety_failure.step == oracle);
}

TEST_CASE("a slow plan on the right path reports only a progress deficit") {
  Scene s = open_road(4.0);
  s.reference_progress = 40.0;
  const Trajectory t = straight_plan(4.0);
  const auto scores = metrics::sub_scores(s, t, {});
  REQUIRE(scores.ep == doctest::Approx(0.4));
  const auto rep = diagnose(s, parsed_plan(t), straight_plan(10.0), kKeep, scores);
  CHECK(rep.safety_failure.kind == SafetyKind::none);
  CHECK(rep.efficiency_failure.kind == EfficiencyKind::progress_deficit);
  CHECK(rep.efficiency_failure.ep == doctest::Approx(0.4));
  CHECK(rep.actionable_correction.longitudinal == 3);
}

TEST_CASE("missing a lead vehicle is flagged in the think analysis") {
  Scene s = open_road(4.0);
  s.reference_progress = 40.0;
  Obstacle lead;
  lead.position = {12.0, 0.0};
  lead.velocity = {4.0, 0.0};
  s.obstacles.push_back(lead);
  const Trajectory t = straight_plan(4.0);
  const auto rep = diagnose(s, parsed_plan(t), straight_plan(4.0), kKeep, metrics::sub_scores(s, t, {}));
  CHECK(rep.think_process_analysis.predicted_cell == response::kNoCell);
  CHECK(response::forward_band(rep.think_process_analysis.true_cell) == 1);
  CHECK(response::lateral_band(rep.think_process_analysis.true_cell) == 2);
  CHECK_FALSE(rep.think_process_analysis.matches());
}

TEST_CASE("a plan that leaves the corridor reports a corridor violation") {
  Scene s = open_road(4.0);
  s.reference_progress = 16.0;
  Trajectory t = straight_plan(4.0);
  for (int k = 5; k < kHorizonSteps; ++k) t.waypoints[k].y = 3.0;
  const auto scores = metrics::sub_scores(s, t, {});
  REQUIRE(scores.nc == 1.0);
  REQUIRE(scores.dac == 0.0);
  const auto rep = diagnose(s, parsed_plan(t), straight_plan(4.0), kKeep, scores);
  CHECK(rep.safety_failure.kind == SafetyKind::corridor_violation);
  CHECK(rep.safety_failure.step == 5);
  CHECK(rep.actionable_correction.lateral == -3);
}

TEST_CASE("diagnosing a correct response is a contract violation") {
  Scene s = open_road(4.0);
  s.reference_progress = 16.0;
  const Trajectory t = straight_plan(4.0);
  CHECK_THROWS_AS(diagnose(s, parsed_plan(t), t, kKeep, metrics::sub_scores(s, t, {})), std::logic_error);
}

TEST_CASE("malformed responses get a zero progress deficit") {
  Scene s = open_road(4.0);
  s.reference_progress = 16.0;
  response::ParsedResponse p = parsed_plan(straight_plan(4.0));
  p.well_formed_trajectory = false;
  const auto rep = diagnose(s, p, straight_plan(4.0), kKeep, {});
  CHECK(rep.efficiency_failure.kind == EfficiencyKind::progress_deficit);
  CHECK(rep.efficiency_failure.ep == 0.0);
}

TEST_CASE("report JSON uses the five section names") {
  Scene s = open_road(4.0);
  s.reference_progress = 40.0;
  const Trajectory t = straight_plan(4.0);
  const auto j = report_to_json(diagnose(s, parsed_plan(t), t, kKeep, metrics::sub_scores(s, t, {})));
  for (const char* key : {"Meta Action Analysis", "Think Process Analysis", "Safety Failure Analysis",
                          "Efficiency Failure Analysis", "Actionable Correction"})
    CHECK(j.contains(key));
}

TEST_CASE("feedback queries") {
  Rng rng(1);
  FeatureVector base(features::kFeatureDim);
  for (Eigen::Index i = 0; i < base.size(); ++i) base[i] = i < features::kBaseDim ? rng.uniform(-1, 1) : 0.0;
  const auto resp = parsed_plan(straight_plan(4.0));

  SUBCASE("positive feedback sets the flag only") {
    const FeatureVector q = build_feedback_query(base, resp, std::nullopt);
    CHECK(q.head(features::kBaseDim) == base.head(features::kBaseDim));
    const Eigen::VectorXd blockv = q.tail(features::kFeedbackDim);
    CHECK(blockv[block::kPositiveFlag] == 1.0);
    for (int i = block::kSafety; i < block::kEfficiency + 2; ++i) CHECK(blockv[i] == 0.0);
  }
  SUBCASE("a +2 m lateral correction encodes as 2/3") {
    DiagnosticReport rep;
    rep.meta_action_analysis.corrected = kKeep;
    rep.efficiency_failure = {EfficiencyKind::discomfort, 0.0};
    rep.actionable_correction.lateral = 2;
    const FeatureVector q = build_feedback_query(base, resp, rep);
    CHECK(q[features::kBaseDim + block::kLateralBucket] == doctest::Approx(2.0 / 3.0));
    CHECK(q[features::kBaseDim + block::kPositiveFlag] == 0.0);
  }
  SUBCASE("different wrong endpoints give different blocks") {
    DiagnosticReport rep;
    rep.efficiency_failure = {EfficiencyKind::progress_deficit, 0.3};
    auto other = resp;
    other.trajectory.waypoints.back().x += 1.0;
    CHECK(build_feedback_query(base, resp, rep) != build_feedback_query(base, other, rep));
  }
  SUBCASE("rule queries carry a signed flag") {
    const FeatureVector good = build_rule_query(base, resp, true);
    const FeatureVector bad = build_rule_query(base, resp, false);
    CHECK(good[features::kBaseDim + block::kPositiveFlag] == 1.0);
    CHECK(bad[features::kBaseDim + block::kPositiveFlag] == -1.0);
  }
  SUBCASE("no feedback means a zero block") {
    CHECK(base.tail(features::kFeedbackDim).norm() == 0.0);
  }
}

TEST_CASE("reports on generated wrong responses are complete and decode losslessly") {
  const auto corpus = scenario::generate_corpus(36, scenario::FamilyMix::uniform(), 17);
  Rng rng(23);
  int checked = 0;
  for (const auto& r : corpus) {
    for (int trial = 0; trial < 6; ++trial) {
      Trajectory t = r.gt_trajectory;
      const double stretch = rng.uniform(0.2, 1.6), shift = rng.uniform(-2.5, 2.5);
      for (int k = 0; k < kHorizonSteps; ++k) {
        t.waypoints[k].x *= stretch;
        t.waypoints[k].y += shift * (k + 1) / kHorizonSteps;
      }
      const auto p = parsed_plan(t, static_cast<int>(rng.uniform_int(0, response::kNoCell)));
      const auto reward = rewards::total_reward(r.scene, p, r.gt_trajectory, {});
      if (classify(reward, 0.8) == Verdict::correct) continue;
      ++checked;
      const auto rep = diagnose(r.scene, p, r.gt_trajectory, r.gt_meta, reward.scores);
      CHECK(rep.meta_action_analysis.corrected == r.gt_meta);
      CHECK((rep.safety_failure.kind != SafetyKind::none || rep.efficiency_failure.kind != EfficiencyKind::none));
      if (reward.scores.nc == 0.0) CHECK(rep.safety_failure.kind == SafetyKind::collision);
      if (reward.scores.nc == 1.0 && reward.scores.dac == 0.0)
        CHECK(rep.safety_failure.kind == SafetyKind::corridor_violation);
      CHECK(report_to_json(rep) ==
            report_to_json(diagnose(r.scene, p, r.gt_trajectory, r.gt_meta, reward.scores)));

      const DecodedFeedback d = decode(encode_report(rep));
      CHECK_FALSE(d.positive);
      REQUIRE(d.corrected.has_value());
      CHECK(*d.corrected == rep.meta_action_analysis.corrected);
      CHECK(d.safety == rep.safety_failure.kind);
      CHECK(d.efficiency == rep.efficiency_failure.kind);
      CHECK(d.lateral_bucket == rep.actionable_correction.lateral);
      CHECK(d.longitudinal_bucket == rep.actionable_correction.longitudinal);
      if (rep.think_process_analysis.true_cell != response::kNoCell) {
        REQUIRE(d.obstacle_band.has_value());
        CHECK(*d.obstacle_band == response::forward_band(rep.think_process_analysis.true_cell));
      }
      if (rep.efficiency_failure.kind == EfficiencyKind::progress_deficit)
        CHECK(d.ep == doctest::Approx(rep.efficiency_failure.ep));
    }
  }
  CHECK(checked > 50);
  CHECK(decode(encode_positive()).positive);
}
