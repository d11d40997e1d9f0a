#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/response.hpp"

using namespace fbgrpo;
using namespace fbgrpo::testing;
using namespace fbgrpo::response;

namespace {

ScenarioRecord straight_record(double speed) {
  ScenarioRecord r;
  r.scene = open_road(speed);
  r.gt_trajectory = straight_plan(speed);
  r.gt_meta = {Longitudinal::MaintainSpeed, Lateral::KeepLane};
  r.scenario_id = "manual";
  return r;
}

TokenSeq canonical(int waypoints, bool close_think = true) {
  TokenSeq t{kThinkOpen, longitudinal_token(Longitudinal::Accelerate), lateral_token(Lateral::KeepLane),
             obstacle_token(kNoCell)};
  if (close_think) t.push_back(kThinkClose);
  t.push_back(kAnsOpen);
  for (int i = 0; i < waypoints; ++i) t.push_back(quantize_displacement({2.0, 0.0}));
  t.push_back(kAnsClose);
  t.push_back(kEnd);
  return t;
}

}  // namespace

TEST_CASE("vocabulary has 365 dense tokens with unique names") {
  CHECK(kVocabSize == 365);
  std::set<std::string> names;
  for (Token t = 0; t < kVocabSize; ++t) names.insert(token_name(t));
  CHECK(names.size() == static_cast<std::size_t>(kVocabSize));
  const auto v = vocabulary_json();
  CHECK(v.dump().find("THINK_OPEN") != std::string::npos);
}

TEST_CASE("canonical sequence parses with both flags and cumulative waypoints") {
  const ParsedResponse p = parse(canonical(8));
  CHECK(p.well_formed_structure);
  CHECK(p.well_formed_trajectory);
  CHECK(p.meta.longitudinal == Longitudinal::Accelerate);
  CHECK(p.obstacle_cell == kNoCell);
  for (int k = 0; k < kHorizonSteps; ++k) {
    CHECK(p.trajectory.waypoints[k].x == doctest::Approx(2.0 * (k + 1)));
    CHECK(p.trajectory.waypoints[k].y == doctest::Approx(0.0));
  }
}

TEST_CASE("missing THINK_CLOSE breaks the structure flag") {
  const ParsedResponse p = parse(canonical(8, false));
  CHECK_FALSE(p.well_formed_structure);
}

TEST_CASE("seven waypoint tokens break the trajectory flag") {
  const ParsedResponse p = parse(canonical(7));
  CHECK_FALSE(p.well_formed_trajectory);
  CHECK(p.well_formed_structure);
}

TEST_CASE("parse is total on random sequences") {
  Rng rng(77);
  for (int i = 0; i < 5000; ++i) {
    const int len = static_cast<int>(rng.uniform_int(0, kMaxLength));
    TokenSeq t(len);
    for (auto& tok : t) tok = static_cast<Token>(rng.uniform_int(0, kVocabSize - 1));
    ParsedResponse p;
    CHECK_NOTHROW(p = parse(t));
    if (p.well_formed_trajectory) {
      int wp = 0;
      for (Token tok : t) wp += is_waypoint(tok) ? 1 : 0;
      CHECK(wp >= kHorizonSteps);
    }
  }
  // Out-of-range ids are data too.
  const TokenSeq junk{-5, 9999, kThinkOpen, 400};
  CHECK_NOTHROW(parse(junk));
}

TEST_CASE("straight 4 m/s ground truth quantizes to dx 2.0 and dy 0") {
  const TokenSeq t = encode_gt(straight_record(4.0));
  int wp = 0;
  for (Token tok : t) {
    if (!is_waypoint(tok)) continue;
    ++wp;
    const Vec2 d = waypoint_displacement(tok);
    CHECK(d.x == 2.0);
    CHECK(d.y == 0.0);
  }
  CHECK(wp == kHorizonSteps);
  CHECK(t.back() == kEnd);
}

TEST_CASE("an in-lane lead vehicle 10 m ahead lands in the 8-16 m forward band and the centre lateral band") {
  ScenarioRecord r = straight_record(4.0);
  Obstacle lead;
  lead.position = {10.0, 0.0};
  lead.velocity = {1.0, 0.0};
  r.scene.obstacles.push_back(lead);
  const int cell = interacting_cell(r.scene);
  CHECK(forward_band(cell) == 1);
  CHECK(lateral_band(cell) == 2);
  const ParsedResponse p = parse(encode_gt(r));
  CHECK(p.obstacle_cell == cell);
  CHECK(obstacle_cell({10.0, 0.0}) == cell);
  CHECK(obstacle_cell({-1.0, 0.0}) == kNoCell);
  CHECK(obstacle_cell({41.0, 0.0}) == kNoCell);
}

TEST_CASE("encode_gt round-trips on generated records") {
  const auto corpus = scenario::generate_corpus(60, scenario::FamilyMix::uniform(), 5);
  for (const auto& r : corpus) {
    const GtEncoding enc = encode_gt_checked(r);
    const ParsedResponse p = parse(enc.tokens);
    CHECK(p.well_formed_structure);
    CHECK(p.well_formed_trajectory);
    CHECK(p.meta == r.gt_meta);
    CHECK(p.obstacle_cell == interacting_cell(r.scene));
    if (enc.clamped) continue;
    for (int k = 0; k < kHorizonSteps; ++k) {
      CHECK(std::abs(p.trajectory.waypoints[k].x - r.gt_trajectory.waypoints[k].x) <= 0.25 + 1e-9);
      CHECK(std::abs(p.trajectory.waypoints[k].y - r.gt_trajectory.waypoints[k].y) <= 0.25 + 1e-9);
    }
  }
}

TEST_CASE("quantization clamps out-of-range displacements") {
  bool clamped = false;
  const Token t = quantize_displacement({15.0, -7.0}, &clamped);
  CHECK(clamped);
  CHECK(waypoint_displacement(t).x == 12.0);
  CHECK(waypoint_displacement(t).y == -3.0);
  clamped = false;
  quantize_displacement({3.2, 0.7}, &clamped);
  CHECK_FALSE(clamped);
}

TEST_CASE("token class predicates partition the vocabulary") {
  for (Token t = 0; t < kVocabSize; ++t) {
    const int classes = int(is_longitudinal(t)) + int(is_lateral(t)) + int(is_obstacle(t)) + int(is_waypoint(t));
    CHECK(classes == (t < kLongBase ? 0 : 1));
  }
}
