#pragma once

#include <cmath>

#include "fbgrpo/scenario.hpp"

namespace fbgrpo::testing {

// Empty straight road with the ego at the origin holding `speed` along +x.
inline Scene open_road(double speed, double half_width = 2.0, double speed_limit = 10.0) {
  Scene s;
  s.ego.speed = speed;
  s.corridor = scenario::straight_corridor(half_width, speed_limit);
  s.history = scenario::constant_speed_history(speed);
  s.goal = {50.0, 0.0};
  return s;
}

// Waypoints at constant speed along +x with an optional constant lateral offset.
inline Trajectory straight_plan(double speed, double y = 0.0) {
  Trajectory t;
  for (int k = 0; k < kHorizonSteps; ++k) t.waypoints[k] = {speed * kStepSeconds * (k + 1), y};
  return t;
}

// Waypoints from per-step speeds along +x.
inline Trajectory plan_from_speeds(const std::array<double, kHorizonSteps>& speeds) {
  Trajectory t;
  double x = 0.0;
  for (int k = 0; k < kHorizonSteps; ++k) {
    x += speeds[k] * kStepSeconds;
    t.waypoints[k] = {x, 0.0};
  }
  return t;
}

inline Obstacle parked_car(Vec2 at) {
  Obstacle o;
  o.kind = ObstacleKind::static_object;
  o.position = at;
  o.half_extent = {2.25, 1.0};
  return o;
}

}  // namespace fbgrpo::testing

#include "fbgrpo/sft.hpp"

namespace fbgrpo::testing {

// A small corpus and a policy fitted to it, shared by the trainer and curation tests.
struct Fitted {
  std::vector<ScenarioRecord> corpus;
  policy::PolicyParams params;
};

inline const Fitted& fitted_policy() {
  static const Fitted f = [] {
    Fitted out;
    out.corpus = scenario::generate_corpus(12, scenario::FamilyMix::uniform(), 41);
    out.params.theta = policy::init_params(1);
    sft::SftConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 5e-3;
    cfg.feedback_pairs_per_record = 1;
    sft::train_sft(out.params, out.corpus, cfg, 2);
    return out;
  }();
  return f;
}

}  // namespace fbgrpo::testing
